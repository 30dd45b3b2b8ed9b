"""Physical models whose dissipators obey local quantum detailed balance.

Two models are provided: the refined quantum Brownian oscillator (the
control parameter is the trap frequency) and a thermal two-level system
coupled to one or more baths (the control parameter is the level splitting).
"""
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import hyperbolic as hyp
from .opcore import BasisSpec, dagger, fock_operators, hermitian_eigh

# bound on |alpha| * spread(H) for the imaginary-time conjugations e^{alpha H}
EXPONENT_GUARD = 200.0


def _positive(name, value):
    if not (np.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class Dissipator:
    """One GKSL term rate/2 (-i[K, .] + A . A^dagger - {A^dagger A, .}/2)."""

    K: np.ndarray
    A: np.ndarray
    rate: float
    beta: float
    bath: int = 0


@dataclass(frozen=True)
class TiltedDissipator:
    """Counting-field dressed dissipator e^{vH/2} D[e^{-vH/2} . e^{-vH/2}] e^{vH/2}.

    Acts as rate/2 (-i(KL e - e KR) + AL e AR - (NL e + e NR)/2).
    """

    KL: np.ndarray
    KR: np.ndarray
    AL: np.ndarray
    AR: np.ndarray
    NL: np.ndarray
    NR: np.ndarray
    rate: float
    bath: int = 0


def gibbs_state(H, beta):
    """Thermal state e^{-beta H}/Z and log Z, with a ground-energy shift.

    Returns ``(rho, log_Z)``.
    """
    _positive("beta", beta)
    evals, vecs = hermitian_eigh(H)
    e0 = evals[0]
    w = np.exp(-beta * (evals - e0))
    z_shift = w.sum()
    rho = (vecs * (w / z_shift)) @ dagger(vecs)
    rho = 0.5 * (rho + dagger(rho))
    return rho, float(np.log(z_shift) - beta * e0)


def _phi(z):
    """expm1(z)/z, equal to 1 at z = 0."""
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(np.abs(z) < 1e-12, 1.0, np.expm1(z) / z)


class ModelSpec:
    """Hamiltonian family H(lam) with a list of per-bath dissipators.

    Subclasses provide ``hamiltonian``, ``hamiltonian_derivative`` and
    ``dissipators``. The imaginary-time conjugations used by the counting
    statistics default to eigendecompositions of H; models with closed forms
    override :meth:`tilted_dissipators` and :meth:`work_kernel`.
    """

    dim: int
    n_baths: int = 1

    def hamiltonian(self, lam):
        raise NotImplementedError

    def hamiltonian_derivative(self, lam):
        raise NotImplementedError

    def dissipators(self, lam) -> list:
        raise NotImplementedError

    def observables(self) -> dict:
        return {}

    def bath_betas(self) -> list:
        raise NotImplementedError

    def gibbs(self, lam, beta):
        return gibbs_state(self.hamiltonian(lam), beta)

    def _conjugators(self, lam, alpha):
        evals, vecs = hermitian_eigh(self.hamiltonian(lam))
        spread = alpha * (evals - evals[0])
        if np.max(np.abs(spread)) > EXPONENT_GUARD:
            raise OverflowError(
                f"counting field too large: |alpha| * spread(H) = {np.max(np.abs(spread)):.1f} "
                f"exceeds {EXPONENT_GUARD}; reduce the field or the truncation"
            )
        e = (vecs * np.exp(spread)) @ dagger(vecs)
        einv = (vecs * np.exp(-spread)) @ dagger(vecs)
        return e, einv

    def tilted_dissipators(self, lam, v: Sequence[float]) -> list:
        """Dissipators dressed by the heat counting fields ``v`` (one per bath)."""
        out = []
        cache = {}
        for d in self.dissipators(lam):
            alpha = 0.5 * float(v[d.bath]) if len(v) else 0.0
            AdA = dagger(d.A) @ d.A
            if alpha == 0.0:
                out.append(TiltedDissipator(d.K, d.K, d.A, dagger(d.A), AdA, AdA, d.rate, d.bath))
                continue
            if alpha not in cache:
                cache[alpha] = self._conjugators(lam, alpha)
            e, einv = cache[alpha]
            out.append(
                TiltedDissipator(
                    KL=e @ d.K @ einv,
                    KR=einv @ d.K @ e,
                    AL=e @ d.A @ einv,
                    AR=einv @ dagger(d.A) @ e,
                    NL=e @ AdA @ einv,
                    NR=einv @ AdA @ e,
                    rate=d.rate,
                    bath=d.bath,
                )
            )
        return out

    def work_kernel(self, lam, lam_dot, u):
        """(d_t e^{uH/2}) e^{-uH/2} and e^{-uH/2} d_t e^{uH/2} along a drive.

        Computed with the Daleckii-Krein formula in the eigenbasis of H.
        """
        n = self.dim
        if u == 0.0 or lam_dot == 0.0:
            z = np.zeros((n, n), complex)
            return z, z
        evals, vecs = hermitian_eigh(self.hamiltonian(lam))
        hdot = dagger(vecs) @ (lam_dot * self.hamiltonian_derivative(lam)) @ vecs
        diff = evals[:, None] - evals[None, :]
        z = 0.5 * u * diff
        if np.max(np.abs(z)) > EXPONENT_GUARD:
            raise OverflowError("work counting field too large for this truncation")
        b = vecs @ (hdot * (0.5 * u) * _phi(z)) @ dagger(vecs)
        bt = vecs @ (hdot * (0.5 * u) * _phi(-z)) @ dagger(vecs)
        return b, bt


# --------------------------------------------------------------------------
# refined quantum Brownian motion


@dataclass(frozen=True)
class QBMParams:
    m: float = 1.0
    kappa: float = 1.0
    beta: float = 1.0
    omega: float = 1.0

    def __post_init__(self):
        for name in ("m", "kappa", "beta", "omega"):
            _positive(name, getattr(self, name))


def qbm_coefficients(omega, beta, m):
    """Scalar coefficients of K = k (xp + px) and A = a_x x + i a_p p.

    Returns ``(k, a_x, a_p)`` with k = 1/(2 cosh(beta omega/2)),
    a_x = sqrt(m omega coth(beta omega/4)), a_p = sqrt(tanh(beta omega/4)/(m omega)).
    """
    y = beta * omega / 4
    k = 0.5 * hyp.sech(2 * y)
    a_x = np.sqrt(m * omega * hyp.coth(y))
    a_p = np.sqrt(hyp.tanh(y) / (m * omega))
    return float(k), float(a_x), float(a_p)


class _QuadraticOps:
    """x, p and the exactly projected quadratics x^2, p^2, xp+px of a basis."""

    def __init__(self, basis: BasisSpec):
        self.basis = basis
        ops = fock_operators(basis)
        self.a, self.ad, self.x, self.p = ops.a, ops.a_dagger, ops.x, ops.p
        big = fock_operators(BasisSpec(basis.dim + 2, basis.m, basis.omega_ref))
        n = basis.dim
        self.x2 = (big.x @ big.x)[:n, :n]
        self.p2 = (big.p @ big.p)[:n, :n]
        self.s = (big.x @ big.p + big.p @ big.x)[:n, :n]


def qbm_hamiltonian(params: QBMParams, basis: BasisSpec):
    """p^2/(2m) + m omega^2 x^2/2 in the truncated Fock basis."""
    if not np.isclose(params.m, basis.m, rtol=1e-14, atol=0):
        raise ValueError(f"mass mismatch: params.m={params.m}, basis.m={basis.m}")
    q = _QuadraticOps(basis)
    return q.p2 / (2 * params.m) + 0.5 * params.m * params.omega**2 * q.x2


def _ladder_jump(q: _QuadraticOps, omega, beta, m):
    """A = a_x x + i a_p p written on a, a^dagger without cancellation."""
    wr = q.basis.omega_ref
    y = beta * omega / 4
    r1 = np.sqrt(hyp.coth(y) * omega / wr)
    r2 = np.sqrt(hyp.tanh(y) * wr / omega)
    # r1^2 - r2^2 = [(omega^2 - wr^2) coth + wr^2 (coth - tanh)] / (omega wr)
    num = (omega**2 - wr**2) * hyp.coth(y) + wr**2 * hyp.coth_minus_tanh(y)
    diff = num / (omega * wr) / (r1 + r2)
    return ((r1 + r2) * q.a + diff * q.ad) / np.sqrt(2)


def qbm_dissipator_ops(params: QBMParams, basis: BasisSpec):
    """(K, A) of the refined Brownian dissipator in ``basis``."""
    if not np.isclose(params.m, basis.m, rtol=1e-14, atol=0):
        raise ValueError(f"mass mismatch: params.m={params.m}, basis.m={basis.m}")
    q = _QuadraticOps(basis)
    k, _, _ = qbm_coefficients(params.omega, params.beta, params.m)
    return k * q.s, _ladder_jump(q, params.omega, params.beta, params.m)


class BandedAlgebra:
    """Fixed banded operators whose linear combinations share one CSR pattern.

    A combination costs one small matrix-vector product over the stacked
    nonzeros, so generators can be rebuilt at every integrator stage.
    """

    def __init__(self, ops: dict, width: int):
        n = next(iter(ops.values())).shape[0]
        i, j = np.nonzero(np.abs(np.subtract.outer(np.arange(n), np.arange(n))) <= width)
        self.n, self.rows, self.cols = n, i, j
        self.names = list(ops)
        self.index = {k: q for q, k in enumerate(self.names)}
        mask = np.ones((n, n), bool)
        mask[i, j] = False
        for k, op in ops.items():
            if np.any(op[mask] != 0):
                raise ValueError(f"operator {k!r} is not {width}-banded")
        self.data = np.array([ops[k][i, j] for k in self.names], dtype=complex)
        self.data_t = np.array([ops[k].T[i, j] for k in self.names], dtype=complex)
        proto = sp.csr_matrix((np.ones(len(i)), (i, j)), shape=(n, n))
        proto.sort_indices()
        self._indices, self._indptr = proto.indices, proto.indptr
        # csr order of the (i, j) list
        order = np.lexsort((j, i))
        self.data, self.data_t = self.data[:, order], self.data_t[:, order]

    def combine(self, coeffs: dict, transpose=False):
        w = np.zeros(len(self.names), complex)
        for k, c in coeffs.items():
            w[self.index[k]] += c
        data = w @ (self.data_t if transpose else self.data)
        return sp.csr_matrix((data, self._indices, self._indptr), shape=(self.n, self.n))


class QBMModel(ModelSpec):
    """Refined quantum Brownian oscillator driven through its frequency."""

    def __init__(self, m=1.0, kappa=1.0, beta=1.0, dim=60, omega_ref=1.0):
        QBMParams(m=m, kappa=kappa, beta=beta, omega=omega_ref)
        self.m, self.kappa, self.beta = float(m), float(kappa), float(beta)
        self.basis = BasisSpec(int(dim), self.m, float(omega_ref))
        self.dim = self.basis.dim
        self.n_baths = 1
        self.q = _QuadraticOps(self.basis)
        q = self.q
        self.band = BandedAlgebra({
            "x2": q.x2, "p2": q.p2, "s": q.s, "x": q.x, "p": q.p,
            "xx": q.x @ q.x, "xp": q.x @ q.p, "px": q.p @ q.x, "pp": q.p @ q.p,
        }, width=2)

    def __repr__(self):
        return (f"QBMModel(m={self.m}, kappa={self.kappa}, beta={self.beta}, "
                f"dim={self.dim}, omega_ref={self.basis.omega_ref})")

    def params(self, omega) -> QBMParams:
        return QBMParams(self.m, self.kappa, self.beta, omega)

    def bath_betas(self):
        return [self.beta]

    def hamiltonian(self, omega):
        return self.q.p2 / (2 * self.m) + 0.5 * self.m * omega**2 * self.q.x2

    def hamiltonian_derivative(self, omega):
        return self.m * omega * self.q.x2

    def dissipators(self, omega):
        _positive("omega", omega)
        k, _, _ = qbm_coefficients(omega, self.beta, self.m)
        A = _ladder_jump(self.q, omega, self.beta, self.m)
        return [Dissipator(k * self.q.s, A, self.kappa, self.beta, 0)]

    def observables(self):
        return {"x2": self.q.x2, "xp": 0.5 * self.q.s, "p2": self.q.p2}

    def _heisenberg(self, omega, alpha):
        """e^{alpha H} x e^{-alpha H} and the same for p, as combinations of x, p."""
        t = alpha * omega
        if abs(t) > EXPONENT_GUARD:
            raise OverflowError(f"|alpha omega| = {abs(t):.1f} exceeds the guard {EXPONENT_GUARD}")
        ch, sh = np.cosh(t), np.sinh(t)
        mw = self.m * omega
        cx = ch * self.q.x - 1j * sh / mw * self.q.p
        cp = ch * self.q.p + 1j * mw * sh * self.q.x
        return cx, cp

    def tilted_dissipators(self, omega, v):
        alpha = 0.5 * float(v[0]) if len(v) else 0.0
        if alpha == 0.0:
            return super().tilted_dissipators(omega, v)
        k, _, _ = qbm_coefficients(omega, self.beta, self.m)
        cx_l, cp_l = self._heisenberg(omega, alpha)
        cx_r, cp_r = self._heisenberg(omega, -alpha)
        ax, ap = self._jump_xp_coefficients(omega)
        mw = self.m * omega
        ch2, sh2 = np.cosh(2 * alpha * omega), np.sinh(2 * alpha * omega)
        quad = mw * self.q.x2 - self.q.p2 / mw
        KL = k * (ch2 * self.q.s + 1j * sh2 * quad)
        KR = k * (ch2 * self.q.s - 1j * sh2 * quad)
        AL = ax * cx_l + ap * cp_l
        AdL = np.conj(ax) * cx_l + np.conj(ap) * cp_l
        AR = np.conj(ax) * cx_r + np.conj(ap) * cp_r
        Ar = ax * cx_r + ap * cp_r
        return [TiltedDissipator(KL, KR, AL, AR, AdL @ AL, AR @ Ar, self.kappa, 0)]

    def frame_factor(self, omega_r):
        """g = omega_ref / omega_r; in the omega_r basis x -> sqrt(g) x, p -> p / sqrt(g)."""
        return 1.0 if omega_r is None else self.basis.omega_ref / omega_r

    def frame_observables(self, omega_r=None):
        g = self.frame_factor(omega_r)
        return {"x2": g * self.q.x2, "xp": 0.5 * self.q.s, "p2": self.q.p2 / g}

    def frame_hamiltonian(self, omega, omega_r=None):
        g = self.frame_factor(omega_r)
        return self.q.p2 / (2 * self.m * g) + 0.5 * self.m * omega**2 * g * self.q.x2

    def sparse_pieces(self, omega, omega_dot=0.0, u=0.0, v=(), frame=None):
        """Tilted generator as (G_L, G_R^T, [(c, A_L, A_R^T)]) in CSR form.

        Same operator content as the dense ``tilted_pieces`` route, with the
        jump written as a_x x + i a_p p and A^dagger A kept as the product of
        truncated factors so the trace is conserved exactly at u = v = 0.

        ``frame = (omega_r, omega_r_dot)`` writes the generator in the Fock
        basis of frequency omega_r(t) (a time-dependent squeeze of the fixed
        basis). That adds the exact term i phi_dot [(xp + px)/2, .] with
        phi = ln(omega_ref / omega_r) / 2; everything stays pentadiagonal.
        """
        m, mw = self.m, self.m * omega
        alpha = 0.5 * float(v[0]) if len(v) else 0.0
        t = alpha * omega
        if abs(2 * t) > EXPONENT_GUARD:
            raise OverflowError(f"|v omega| = {abs(2 * t):.1f} exceeds the guard {EXPONENT_GUARD}")
        ch, sh = np.cosh(t), np.sinh(t)
        ch2, sh2 = np.cosh(2 * t), np.sinh(2 * t)
        k, a_x, a_p = qbm_coefficients(omega, self.beta, m)
        ax, ap = a_x, 1j * a_p
        c = 0.5 * self.kappa

        def heis(a1, a2, sgn):
            # a1 C(x) + a2 C(p) at conjugation sign sgn, as (x, p) coefficients
            s_ = sgn * sh
            return a1 * ch + a2 * 1j * mw * s_, -a1 * 1j * s_ / mw + a2 * ch

        l1, l2 = heis(ax, ap, 1)
        d1, d2 = heis(np.conj(ax), np.conj(ap), 1)
        r1, r2 = heis(np.conj(ax), np.conj(ap), -1)
        q1, q2 = heis(ax, ap, -1)
        H = {"p2": 1 / (2 * m), "x2": 0.5 * m * omega**2}
        left = {key: -1j * val for key, val in H.items()}
        right = {key: 1j * val for key, val in H.items()}
        if u != 0.0 and omega_dot != 0.0:
            th = 0.5 * u * omega
            if abs(th) > EXPONENT_GUARD:
                raise OverflowError(f"|u omega / 2| = {abs(th):.1f} exceeds the guard {EXPONENT_GUARD}")
            i1 = 0.5 * (1 + hyp.shc(2 * th))
            i2 = 0.5 * th * hyp.shc(th) ** 2
            i3 = (th**2 / 3 + th**4 / 15) if abs(th) < 1e-3 else 0.5 * (hyp.shc(2 * th) - 1)
            cb = 0.5 * u * omega_dot * mw
            for side, sgn in ((left, -1), (right, 1)):
                side["x2"] += cb * i1
                side["p2"] += -cb * i3 / mw**2
                side["s"] = side.get("s", 0) + sgn * cb * 1j * i2 / mw
        # -i c K_L and +i c K_R
        left["s"] = left.get("s", 0) - 1j * c * k * ch2
        left["x2"] += c * k * sh2 * mw
        left["p2"] += -c * k * sh2 / mw
        right["s"] = right.get("s", 0) + 1j * c * k * ch2
        right["x2"] += c * k * sh2 * mw
        right["p2"] += -c * k * sh2 / mw
        # -c/2 N_L and -c/2 N_R
        for side, (a1, a2, b1, b2) in ((left, (d1, d2, l1, l2)), (right, (r1, r2, q1, q2))):
            for key, val in (("xx", a1 * b1), ("xp", a1 * b2), ("px", a2 * b1), ("pp", a2 * b2)):
                side[key] = side.get(key, 0) - 0.5 * c * val
        AL = {"x": l1, "p": l2}
        AR = {"x": r1, "p": r2}
        if frame is not None:
            w_r, w_r_dot = frame
            g = self.frame_factor(w_r)
            scale = {"x2": g, "xx": g, "p2": 1 / g, "pp": 1 / g, "x": np.sqrt(g), "p": 1 / np.sqrt(g)}
            for d in (left, right, AL, AR):
                for key in d:
                    d[key] *= scale.get(key, 1.0)
            phi_dot = -0.5 * w_r_dot / w_r
            left["s"] = left.get("s", 0) + 0.5j * phi_dot
            right["s"] = right.get("s", 0) - 0.5j * phi_dot
        gl = self.band.combine(left)
        gr_t = self.band.combine(right, transpose=True)
        return gl, gr_t, [(c, self.band.combine(AL), self.band.combine(AR, transpose=True))]

    def _jump_xp_coefficients(self, omega):
        _, a_x, a_p = qbm_coefficients(omega, self.beta, self.m)
        return a_x, 1j * a_p

    def work_kernel(self, omega, omega_dot, u):
        n = self.dim
        if u == 0.0 or omega_dot == 0.0:
            z = np.zeros((n, n), complex)
            return z, z
        th = 0.5 * u * omega
        if abs(th) > EXPONENT_GUARD:
            raise OverflowError(f"|u omega / 2| = {abs(th):.1f} exceeds the guard {EXPONENT_GUARD}")
        i1 = 0.5 * (1 + hyp.shc(2 * th))
        i2 = 0.5 * th * hyp.shc(th) ** 2
        i3 = (th**2 / 3 + th**4 / 15) if abs(th) < 1e-3 else 0.5 * (hyp.shc(2 * th) - 1)
        mw = self.m * omega
        c = 0.5 * u * omega_dot * mw
        base = c * (i1 * self.q.x2 - i3 * self.q.p2 / mw**2)
        cross = c * 1j * i2 / mw * self.q.s
        return base - cross, base + cross


# --------------------------------------------------------------------------
# thermal two-level system


@dataclass(frozen=True)
class QubitParams:
    omega: float = 1.0
    gamma: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        _positive("omega", self.omega)
        _positive("gamma", self.gamma)
        if not (self.beta > 0):
            raise ValueError(f"beta must be positive, got {self.beta!r}")


SIGMA_Z = np.diag([-1.0, 1.0]).astype(complex)  # basis order (ground, excited)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.T.copy()


def qubit_occupation(omega, beta):
    """Bose factor 1/(e^{beta omega} - 1); zero for beta = inf."""
    if np.isinf(beta):
        return 0.0
    return float(1.0 / np.expm1(beta * omega)) if beta * omega < 700 else 0.0


def qubit_thermal_dissipators(params: QubitParams, bath: int = 0) -> list:
    """Emission and absorption terms at rates gamma(n+1) and gamma n.

    The template carries rate/2, so the jump operators are scaled by sqrt(2).
    """
    n = qubit_occupation(params.omega, params.beta)
    z = np.zeros((2, 2), complex)
    return [
        Dissipator(z, np.sqrt(2) * SIGMA_MINUS, params.gamma * (n + 1), params.beta, bath),
        Dissipator(z, np.sqrt(2) * SIGMA_PLUS, params.gamma * n, params.beta, bath),
    ]


class QubitModel(ModelSpec):
    """Two-level system with splitting lam coupled to baths at ``betas``."""

    def __init__(self, gammas: Sequence[float] = (1.0,), betas: Sequence[float] = (1.0,)):
        if len(gammas) != len(betas) or not len(gammas):
            raise ValueError("need one coupling rate per bath")
        self.gammas = [float(g) for g in gammas]
        self.betas = [float(b) for b in betas]
        for g, b in zip(self.gammas, self.betas):
            QubitParams(1.0, g, b)
        self.dim = 2
        self.n_baths = len(self.betas)

    def __repr__(self):
        return f"QubitModel(gammas={self.gammas}, betas={self.betas})"

    def bath_betas(self):
        return list(self.betas)

    def hamiltonian(self, omega):
        return 0.5 * omega * SIGMA_Z

    def hamiltonian_derivative(self, omega):
        return 0.5 * SIGMA_Z

    def dissipators(self, omega):
        out = []
        for nu, (g, b) in enumerate(zip(self.gammas, self.betas)):
            out += qubit_thermal_dissipators(QubitParams(omega, g, b), bath=nu)
        return out

    def observables(self):
        return {"sz": SIGMA_Z}


def reference_frequency(omegas, beta, m=1.0):
    """Basis frequency balancing the quadrature spread of the endpoint Gibbs states.

    The largest quadrature variance, in units of the reference vacuum, is
    coth(beta w/2) w_ref/w in position and coth(beta w/2) w/w_ref in
    momentum; the returned value equalises the worst of the two.
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    c = hyp.coth(beta * omegas / 2)
    i_lo = np.argmax(c / omegas)
    i_hi = np.argmax(c * omegas)
    return float(np.sqrt(c[i_hi] * omegas[i_hi] * omegas[i_lo] / c[i_lo]))


def suggest_dim(omegas, beta, omega_ref, tail=1e-12, minimum=8, maximum=400):
    """Truncation size at which Gaussian equilibrium tails fall below ``tail``."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    c = hyp.coth(beta * omegas / 2)
    v = np.max(np.maximum(c * omega_ref / omegas, c * omegas / omega_ref))
    if v <= 1 + 1e-12:
        return minimum
    ratio = (v - 1) / (v + 1)
    n = int(np.ceil(np.log(tail) / np.log(ratio)))
    return int(min(max(n, minimum), maximum))
