"""Time evolution, stationary states and consistency checks for GKSL generators."""
import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import LinearOperator, spsolve, svds

from .models import Dissipator, ModelSpec
from .opcore import dagger, hermitian_eigh

TRACE_TOL = 1e-10
POSITIVITY_FLOOR = -1e-8


class IntegrationError(RuntimeError):
    """The adaptive integrator failed (e.g. step-size underflow)."""


class InvariantViolation(RuntimeError):
    """A trajectory left the set of density matrices beyond tolerance."""


@dataclass(frozen=True)
class Protocol:
    """Control schedule lam(s) on rescaled time s = t/tau in [0, 1]."""

    tau: float
    schedule: Callable[[float], float]
    schedule_derivative: Callable[[float], float]
    name: str = "custom"

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"protocol duration must be positive, got {self.tau}")

    def value(self, t):
        return self.schedule(np.clip(t / self.tau, 0.0, 1.0))

    def rate(self, t):
        """d lam / dt at physical time t."""
        return self.schedule_derivative(np.clip(t / self.tau, 0.0, 1.0)) / self.tau

    @property
    def start(self):
        return float(self.schedule(0.0))

    @property
    def end(self):
        return float(self.schedule(1.0))

    def check_derivative(self, n=11, h=1e-6, tol=1e-6):
        """Compare the derivative with central differences of the schedule."""
        worst = 0.0
        for s in np.linspace(0, 1, n):
            f = self.schedule
            if s - h < 0:
                fd = (-3 * f(s) + 4 * f(s + h) - f(s + 2 * h)) / (2 * h)
            elif s + h > 1:
                fd = (3 * f(s) - 4 * f(s - h) + f(s - 2 * h)) / (2 * h)
            else:
                fd = (f(s + h) - f(s - h)) / (2 * h)
            scale = max(1.0, abs(self.schedule_derivative(s)))
            worst = max(worst, abs(fd - self.schedule_derivative(s)) / scale)
        if worst > tol:
            raise ValueError(f"schedule derivative inconsistent with schedule (error {worst:.2e})")
        return worst


def static_protocol(value, tau):
    return Protocol(tau, lambda s: value + 0.0 * s, lambda s: 0.0 * s, name="static")


def linear_protocol(start, end, tau):
    return Protocol(tau, lambda s: start + (end - start) * s, lambda s: (end - start) + 0.0 * s, "linear")


def exponential_protocol(start, end, tau):
    """start (end/start)^s."""
    g = np.log(end / start)
    return Protocol(tau, lambda s: start * np.exp(g * s), lambda s: g * start * np.exp(g * s), "exponential")


def generator_pieces(model: ModelSpec, lam):
    """(G_L, G_R, jumps) with L[rho] = G_L rho + rho G_R + sum_k c_k A_k rho A_k^dagger."""
    H = model.hamiltonian(lam)
    gl = -1j * H
    gr = 1j * H
    jumps = []
    for d in model.dissipators(lam):
        AdA = dagger(d.A) @ d.A
        c = 0.5 * d.rate
        gl = gl + c * (-1j * d.K - 0.5 * AdA)
        gr = gr + c * (1j * d.K - 0.5 * AdA)
        if c != 0.0:
            jumps.append((c, d.A, dagger(d.A)))
    return gl, gr, jumps


def _apply_pieces(pieces, rho):
    gl, gr, jumps = pieces
    out = gl @ rho + rho @ gr
    for c, A, Ad in jumps:
        out += c * (A @ rho @ Ad)
    return out


def apply_sparse_pieces(pieces, rho):
    """Apply (G_L, G_R^T, [(c, A_L, A_R^T)]) from ``sparse_pieces`` to a dense matrix."""
    gl, gr_t, jumps = pieces
    out = gl @ rho + (gr_t @ rho.T).T
    for c, AL, AR_t in jumps:
        out += c * (AL @ (AR_t @ rho.T).T)
    return out


def generator_apply(model: ModelSpec, lam, rho):
    """-i[H, rho] + sum_nu D_nu[rho] at control value ``lam``."""
    rho = np.asarray(rho)
    if rho.shape != (model.dim, model.dim):
        raise ValueError(f"state has shape {rho.shape}, model dimension is {model.dim}")
    return _apply_pieces(generator_pieces(model, lam), rho)


@dataclass
class Trajectory:
    times: np.ndarray
    controls: np.ndarray
    states: Optional[np.ndarray]
    observables: dict = field(default_factory=dict)
    final_state: Optional[np.ndarray] = None

    def to_csv(self, path, float_format="%.12e"):
        """Write one row per sample; QBM and qubit trajectories have different columns."""
        obs = self.observables
        if "x2" in obs:
            cols = [("t", self.times), ("tr_rho", obs["tr_rho"]), ("min_eig", obs["min_eig"]),
                    ("<x2>", obs["x2"]), ("<xp>", obs["xp"]), ("<p2>", obs["p2"]),
                    ("energy", obs["energy"])]
        else:
            cols = [("t", self.times), ("tr_rho", obs["tr_rho"]), ("sz", obs["sz"])]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([c for c, _ in cols])
            for row in zip(*[v for _, v in cols]):
                w.writerow([float_format % float(np.real(v)) for v in row])


def _expect(op, rho):
    return np.einsum("ij,ji->", op, rho)


def _check_state(rho, t, herm_tol=1e-10):
    tr = np.trace(rho)
    herm = np.max(np.abs(rho - dagger(rho)))
    if abs(tr - 1) > TRACE_TOL:
        raise InvariantViolation(f"trace drifted to {tr.real:.12f} at t={t:.6g}")
    if herm > herm_tol:
        raise InvariantViolation(f"state lost Hermiticity ({herm:.2e}) at t={t:.6g}")
    mineig = float(np.linalg.eigvalsh(0.5 * (rho + dagger(rho)))[0])
    if mineig < POSITIVITY_FLOOR:
        raise InvariantViolation(f"negative eigenvalue {mineig:.3e} at t={t:.6g}")
    return tr.real, mineig


@dataclass(frozen=True)
class SampledSolution:
    t: np.ndarray
    y: np.ndarray


def integrate_sampled(rhs, times, y0, method="DOP853", rtol=1e-10, atol=1e-13) -> SampledSolution:
    """Adaptive integration that lands a step exactly on every sample instant.

    Interpolated dense output carries a larger error than the accepted steps
    and can dip a near-singular state below zero, so each segment is its own
    integration ending exactly on the sample.
    """
    ys = np.empty((len(y0), len(times)), dtype=np.asarray(y0).dtype)
    ys[:, 0] = y = y0
    for i in range(1, len(times)):
        # t_eval at the segment end only: nothing but the final state is stored
        sol = solve_ivp(rhs, (times[i - 1], times[i]), y, method=method, rtol=rtol, atol=atol,
                        t_eval=[times[i]])
        if sol.status != 0:
            raise IntegrationError(f"integration failed in [{times[i - 1]:.6g}, {times[i]:.6g}]: {sol.message}")
        y = sol.y[:, -1]
        ys[:, i] = y
    return SampledSolution(np.asarray(times), ys)


def evolve(model: ModelSpec, protocol: Protocol, rho0, n_samples=101, rtol=1e-10,
           atol=None, keep_states=False, method="DOP853", check=True,
           frame: Optional[Protocol] = None) -> Trajectory:
    """Integrate d rho/dt = L_{lam(t)}[rho] over [0, tau] with an adaptive RK pair.

    The integrator steps exactly onto ``n_samples`` uniform instants; every
    sample is checked for unit trace, Hermiticity and positivity, with the
    Hermiticity check scaled by ``rtol``.

    ``frame`` (oscillator models only) is a schedule omega_r(t) for a
    co-moving Fock basis; ``rho0`` and all returned states are then matrices
    in that basis.
    """
    n = model.dim
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (n, n):
        raise ValueError(f"initial state has shape {rho0.shape}, expected {(n, n)}")
    if check:
        _check_state(rho0, 0.0)
    atol = rtol * 1e-3 if atol is None else atol

    if frame is not None and not hasattr(model, "frame_observables"):
        raise ValueError("a moving frame needs an oscillator model")
    if frame is not None and not np.isclose(frame.tau, protocol.tau):
        raise ValueError("frame and protocol durations differ")

    def frame_at(t):
        return None if frame is None else (frame.value(t), frame.rate(t))

    if hasattr(model, "sparse_pieces"):
        def rhs(t, y):
            pieces = model.sparse_pieces(protocol.value(t), frame=frame_at(t))
            return apply_sparse_pieces(pieces, y.reshape(n, n)).ravel()
    else:
        def rhs(t, y):
            return _apply_pieces(generator_pieces(model, protocol.value(t)), y.reshape(n, n)).ravel()

    times = np.linspace(0.0, protocol.tau, n_samples)
    sol = integrate_sampled(rhs, times, rho0.ravel(), method, rtol, atol)
    ops = model.observables()
    obs = {k: np.empty(len(times)) for k in list(ops) + ["tr_rho", "min_eig", "energy"]}
    if frame is not None:
        frame_w = [frame.value(t) for t in times]
    states = np.empty((len(times), n, n), complex) if keep_states else None
    controls = np.array([protocol.value(t) for t in times])
    for i, t in enumerate(sol.t):
        rho = sol.y[:, i].reshape(n, n)
        if check:
            tr, mineig = _check_state(rho, t, max(1e-10, 100 * rtol))
        else:
            tr, mineig = np.trace(rho).real, np.nan
        obs["tr_rho"][i] = tr
        obs["min_eig"][i] = mineig
        if frame is not None:
            ops = model.frame_observables(frame_w[i])
            obs["energy"][i] = _expect(model.frame_hamiltonian(controls[i], frame_w[i]), rho).real
        else:
            obs["energy"][i] = _expect(model.hamiltonian(controls[i]), rho).real
        for k, op in ops.items():
            obs[k][i] = _expect(op, rho).real
        if keep_states:
            states[i] = rho
    return Trajectory(times, controls, states, obs, sol.y[:, -1].reshape(n, n))


# --------------------------------------------------------------------------
# vectorized generators and stationary states


def _sparse(op, tol=0.0):
    op = np.asarray(op)
    op = np.where(np.abs(op) > tol, op, 0)
    return sp.csr_matrix(op)


def generator_superop(model: ModelSpec, lam, sparse=True):
    """Column-stacked matrix of L_lam, so that vec(L[rho]) = M vec(rho)."""
    gl, gr, jumps = generator_pieces(model, lam)
    if sparse:
        eye = sp.identity(model.dim, dtype=complex, format="csr")
        m = sp.kron(eye, _sparse(gl)) + sp.kron(_sparse(gr.T), eye)
        for c, A, _ in jumps:
            m = m + c * sp.kron(_sparse(A.conj()), _sparse(A))
        return m.tocsc()
    eye = np.eye(model.dim)
    m = np.kron(eye, gl) + np.kron(gr.T, eye)
    for c, A, _ in jumps:
        m += c * np.kron(A.conj(), A)
    return m


class DegenerateSteadyState(RuntimeError):
    pass


def steady_state(model: ModelSpec, lam, residual_tol=1e-10, max_vec_dim=40_000):
    """Unit-trace null vector of the vectorized generator at fixed ``lam``.

    Uses a dense SVD for small systems (reporting null-space multiplicity), a
    sparse bordered solve up to ``max_vec_dim`` unknowns, and long-time
    integration beyond that.
    """
    n = model.dim
    if n * n > max_vec_dim:
        return _steady_state_by_integration(model, lam)
    if n * n <= 1600:
        m = generator_superop(model, lam, sparse=False)
        _, s, vh = np.linalg.svd(m)
        null = np.sum(s < 1e-10 * max(s[0], 1.0))
        if null > 1:
            raise DegenerateSteadyState(f"generator has a {null}-dimensional null space")
        rho = vh[-1].conj().reshape(n, n, order="F")
    else:
        m = generator_superop(model, lam, sparse=True).tolil()
        rhs = np.zeros(n * n, complex)
        # replace the first equation by the trace constraint
        m[0, :] = 0
        m[0, [i * n + i for i in range(n)]] = 1.0
        rhs[0] = 1.0
        rho = spsolve(m.tocsc(), rhs).reshape(n, n, order="F")
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + dagger(rho))
    res = np.linalg.norm(generator_apply(model, lam, rho), 2)
    if res > residual_tol * max(1.0, np.linalg.norm(rho, 2)) * 1e3:
        raise RuntimeError(f"steady-state residual {res:.2e} too large")
    return rho


def _steady_state_by_integration(model, lam, tol=1e-9, chunk=20.0, max_chunks=200):
    rates = [d.rate for d in model.dissipators(lam) if d.rate > 0]
    T = chunk / min(rates)
    rho = np.eye(model.dim, dtype=complex) / model.dim
    proto = Protocol(T, lambda s: lam + 0.0 * s, lambda s: 0.0 * s, "static")
    for _ in range(max_chunks):
        rho = evolve(model, proto, rho, n_samples=2, rtol=1e-10).final_state
        if np.linalg.norm(generator_apply(model, lam, rho), 2) <= tol:
            return rho
    raise RuntimeError("long-time integration did not reach stationarity")


# --------------------------------------------------------------------------
# detailed balance


def adjoint_apply(dissipator: Dissipator, X):
    """Hilbert-Schmidt adjoint D^sharp[X] = rate/2 (i[K, X] + A^dag X A - {A^dag A, X}/2)."""
    K, A, r = dissipator.K, dissipator.A, dissipator.rate
    AdA = dagger(A) @ A
    return 0.5 * r * (1j * (K @ X - X @ K) + dagger(A) @ X @ A - 0.5 * (AdA @ X + X @ AdA))


def _superop_norm(terms, m):
    if m <= 24:
        mat = sum(np.kron(R.T, L) for L, R in terms)
        return float(np.linalg.norm(mat, 2))

    def mv(v):
        X = v.reshape(m, m, order="F")
        return sum(L @ X @ R for L, R in terms).reshape(-1, order="F")

    def rmv(v):
        Y = v.reshape(m, m, order="F")
        return sum(dagger(L) @ Y @ dagger(R) for L, R in terms).reshape(-1, order="F")

    op = LinearOperator((m * m, m * m), matvec=mv, rmatvec=rmv, dtype=complex)
    s = svds(op, k=1, return_singular_vectors=False, tol=1e-6, random_state=0)
    return float(s[0])


def detailed_balance_residual(dissipator, rho_beta, keep_fraction=0.9, floor=1e-280,
                              restrict_to: Optional[int] = None) -> float:
    """Relative violation of D^sharp = Gamma^{-1} D Gamma, Gamma(X) = rho^{1/2} X rho^{1/2}.

    Both sides are compared after a similarity by Gamma^{1/2}, i.e. as
    Gamma^{1/2} D^sharp Gamma^{-1/2} against Gamma^{-1/2} D Gamma^{1/2}; the
    condition is unchanged while the population ratios entering the matrix
    elements are only rho^{+-1/4}, which keeps round-off bounded at large
    beta. Evaluated on the span of the ``keep_fraction`` most populated
    eigenvectors of ``rho_beta`` (Fock truncation defects live elsewhere).
    ``dissipator`` may be a single term or the list of terms of one bath.
    """
    terms = [dissipator] if isinstance(dissipator, Dissipator) else list(dissipator)
    evals, vecs = hermitian_eigh(rho_beta)
    order = np.argsort(evals, kind="stable")[::-1]
    n = len(evals)
    m = restrict_to if restrict_to is not None else int(np.ceil(keep_fraction * n))
    m = max(1, min(n, m))
    r = evals[order[:m]]
    if r[-1] <= 0 or r[-1] < floor * r[0]:
        raise ValueError(
            f"reference state is numerically singular on the kept subspace (smallest population "
            f"{r[-1]:.2e}); reduce beta or the basis dimension"
        )
    sub = vecs[:, order[:m]]
    idx = np.ix_(order[:m], order[:m])
    q = r ** 0.25
    up = q[None, :] / q[:, None]
    dn = q[:, None] / q[None, :]
    eye = np.eye(m)
    adj, con = [], []
    for d in terms:
        A_full = dagger(vecs) @ d.A @ vecs
        K_s = dagger(sub) @ d.K @ sub
        A_s = A_full[idx]
        AdA_s = (dagger(A_full) @ A_full)[idx]
        c = 0.5 * d.rate
        adj += [(c * (1j * K_s - 0.5 * AdA_s) * dn, eye), (eye, c * (-1j * K_s - 0.5 * AdA_s) * up),
                (c * dagger(A_s) * dn, A_s * up)]
        con += [(c * (-1j * K_s - 0.5 * AdA_s) * up, eye), (eye, c * (1j * K_s - 0.5 * AdA_s) * dn),
                (c * A_s * up, dagger(A_s) * dn)]
    den = _superop_norm(adj, m)
    if den == 0.0:
        return 0.0
    return _superop_norm(adj + [(-L, R) for L, R in con], m) / den


def stationarity_residual(dissipator, rho_beta, keep_fraction=0.9) -> float:
    """Spectral norm of D[rho_beta] on the most populated eigen-subspace of rho_beta."""
    from .opcore import apply_gksl_dissipator

    terms = [dissipator] if isinstance(dissipator, Dissipator) else list(dissipator)
    out = sum(apply_gksl_dissipator(d.K, d.A, d.rate, rho_beta) for d in terms)
    evals, vecs = hermitian_eigh(rho_beta)
    order = np.argsort(evals)[::-1][: int(np.ceil(keep_fraction * len(evals)))]
    U = vecs[:, order]
    return float(np.linalg.norm(dagger(U) @ out @ U, 2))


def dissipators_by_bath(model: ModelSpec, lam) -> dict:
    """Group the model's dissipator terms by bath index."""
    out = {}
    for d in model.dissipators(lam):
        out.setdefault(d.bath, []).append(d)
    return out


def jump_choi_min_eig(model: ModelSpec, lam) -> float:
    """Smallest eigenvalue of the Choi matrix of X -> sum_k c_k A_k X A_k^dagger."""
    if model.dim > 8:
        raise ValueError("Choi check is limited to dimension <= 8")
    n = model.dim
    _, _, jumps = generator_pieces(model, lam)
    choi = np.zeros((n * n, n * n), complex)
    for c, A, _ in jumps:
        v = A.reshape(-1, order="F")
        choi += c * np.outer(v, v.conj())
    return float(np.linalg.eigvalsh(choi)[0])
