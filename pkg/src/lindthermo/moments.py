"""Reduced dynamics of the Brownian oscillator's second moments.

Observable ordering throughout: (x^2, (xp + px)/2, p^2). The three moments
close exactly under the refined generator, d Gamma/dt = L_omega Gamma + f.
"""
import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import BarycentricInterpolator, CubicSpline

from . import hyperbolic as hyp
from .lindblad import IntegrationError, Protocol

UNCERTAINTY_SLACK = 1e-10


@dataclass(frozen=True)
class MomentState:
    x2: float
    xp: float
    p2: float

    @classmethod
    def from_array(cls, g):
        return cls(float(g[0]), float(g[1]), float(g[2]))

    def as_array(self):
        return np.array([self.x2, self.xp, self.p2])

    @property
    def uncertainty(self):
        return self.x2 * self.p2 - self.xp**2

    def validate(self):
        if not (self.x2 > 0 and self.p2 > 0):
            raise ValueError(f"moments must be positive: {self}")
        if self.uncertainty < 0.25 - UNCERTAINTY_SLACK:
            raise ValueError(f"uncertainty product {self.uncertainty:.6g} below 1/4")
        return self


@dataclass(frozen=True)
class MomentGenerator:
    L: np.ndarray
    f: np.ndarray

    def __call__(self, gamma):
        return self.L @ gamma + self.f


def moment_generator(omega, beta, m=1.0, kappa=1.0) -> MomentGenerator:
    """Linear part and noise term of d Gamma/dt for the refined oscillator."""
    for name, val in (("omega", omega), ("beta", beta), ("m", m), ("kappa", kappa)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")
    se = hyp.sech(beta * omega / 2)
    L = np.array([
        [-kappa * hyp.one_minus_sech(beta * omega / 2), 2 / m, 0.0],
        [-m * omega**2, -kappa, 1 / m],
        [0.0, -2 * m * omega**2, -kappa * (1 + se)],
    ])
    y = beta * omega / 4
    f = np.array([kappa * hyp.tanh(y) / (2 * m * omega), 0.0, kappa * m * omega * hyp.coth(y) / 2])
    return MomentGenerator(L, f)


def classical_moment_generator(omega, beta, m=1.0, kappa=1.0) -> MomentGenerator:
    """Kramers (classical underdamped Langevin) moment equations."""
    L = np.array([
        [0.0, 2 / m, 0.0],
        [-m * omega**2, -kappa, 1 / m],
        [0.0, -2 * m * omega**2, -2 * kappa],
    ])
    return MomentGenerator(L, np.array([0.0, 0.0, 2 * kappa * m / beta]))


def gamma_equilibrium(omega, beta, m=1.0) -> MomentState:
    c = hyp.coth(beta * omega / 2)
    return MomentState(c / (2 * m * omega), 0.0, m * omega * c / 2)


def classical_equilibrium(omega, beta, m=1.0) -> MomentState:
    return MomentState(1 / (beta * m * omega**2), 0.0, m / beta)


def free_energy_change(omega_i, omega_f, beta):
    """Analytic Delta F of the untruncated oscillator, (1/beta) ln[sinh(beta w_f/2)/sinh(beta w_i/2)]."""
    return float((hyp.log_sinh(beta * omega_f / 2) - hyp.log_sinh(beta * omega_i / 2)) / beta)


@dataclass
class MomentTrajectory:
    times: np.ndarray
    omega: np.ndarray
    omega_dot: np.ndarray
    gamma: np.ndarray
    tau: float
    beta: float
    m: float = 1.0

    @property
    def s(self):
        return self.times / self.tau

    @property
    def gamma_eq(self):
        return np.array([gamma_equilibrium(w, self.beta, self.m).as_array() for w in self.omega])

    @property
    def wdot_ex(self):
        return self.omega_dot * self.m * self.omega * (self.gamma[:, 0] - self.gamma_eq[:, 0])

    def to_csv(self, path, float_format="%.12e"):
        cols = ["s", "omega", "G_x2", "G_xp", "G_p2", "Wdot_ex"]
        data = np.column_stack([self.s, self.omega, self.gamma, self.wdot_ex])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in data:
                w.writerow([float_format % v for v in row])


def _gen(classical):
    return classical_moment_generator if classical else moment_generator


def evolve_gamma(protocol: Protocol, gamma0, beta, m=1.0, kappa=1.0, n_samples=2001, rtol=1e-11,
                 atol=1e-14, classical=False) -> MomentTrajectory:
    """Integrate d Gamma/dt = L_{omega(t)} Gamma + f(omega(t)) on a uniform sample grid."""
    gamma0 = gamma0.as_array() if isinstance(gamma0, MomentState) else np.asarray(gamma0, float)
    gen = _gen(classical)

    def rhs(t, g):
        return gen(protocol.value(t), beta, m, kappa)(g)

    def jac(t, g):
        return gen(protocol.value(t), beta, m, kappa).L

    times = np.linspace(0, protocol.tau, n_samples)
    sol = solve_ivp(rhs, (0, protocol.tau), gamma0, method="DOP853", t_eval=times, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise IntegrationError(f"moment integration failed: {sol.message}")
    omega = np.array([protocol.value(t) for t in times])
    omega_dot = np.array([protocol.rate(t) for t in times])
    return MomentTrajectory(times, omega, omega_dot, sol.y.T, protocol.tau, beta, m)


def work_functionals(traj: MomentTrajectory, protocol: Protocol, beta=None, m=None):
    """(W, W_eq, W_ex) with W = int omega_dot m omega <x^2> dt by composite Simpson."""
    beta = traj.beta if beta is None else beta
    m = traj.m if m is None else m
    if len(traj.times) % 2 == 0:
        raise ValueError("Simpson quadrature needs an odd number of samples")
    if not np.isclose(traj.times[-1], protocol.tau):
        raise ValueError("trajectory and protocol durations differ")
    integrand = traj.omega_dot * m * traj.omega * traj.gamma[:, 0]
    W = float(simpson(integrand, x=traj.times))
    W_eq = free_energy_change(protocol.start, protocol.end, beta)
    return W, W_eq, W - W_eq


def balanced_frame(protocol: Protocol, beta, m=1.0, kappa=1.0, n_samples=401, gamma0=None) -> Protocol:
    """Frequency schedule sqrt(<p^2>/<x^2>)/m along the moment trajectory.

    A Fock basis that follows this frequency sees a state with equal x and p
    widths, which keeps the number-state tail as short as the state's
    mixedness allows. Only the basis depends on it, not the dynamics.
    """
    if gamma0 is None:
        gamma0 = gamma_equilibrium(protocol.start, beta, m)
    traj = evolve_gamma(protocol, gamma0, beta, m, kappa, n_samples=n_samples)
    w = np.sqrt(traj.gamma[:, 2] / traj.gamma[:, 0]) / m
    spline = CubicSpline(traj.s, w)
    d = spline.derivative()
    return Protocol(protocol.tau, lambda s: float(spline(s)), lambda s: float(d(s)), name="balanced frame")


def summary_json(traj, protocol, path=None):
    W, W_eq, W_ex = work_functionals(traj, protocol)
    out = {"W": W, "W_eq": W_eq, "W_ex": W_ex}
    if path is not None:
        with open(path, "w") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
    return out


# --------------------------------------------------------------------------
# slow-driving expansion


def chebyshev_grid(n):
    """n + 1 Chebyshev-Lobatto points on s in [0, 1] (clustered at both ends)."""
    return 0.5 * (1 - np.cos(np.pi * np.arange(n + 1) / n))


def chebyshev_diff_matrix(n):
    """d/ds on :func:`chebyshev_grid` (spectral collocation)."""
    x = np.cos(np.pi * np.arange(n + 1) / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2
    c *= (-1) ** np.arange(n + 1)
    X = np.tile(x, (n + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1 / c) / (dX + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return -2 * D  # x = 1 - 2s


@dataclass
class Expansion:
    s: np.ndarray
    orders: list  # orders[k] has shape (len(s), 3)

    def partial_sum(self, n):
        return sum(self.orders[: n + 1])

    def interpolant(self, n):
        return BarycentricInterpolator(self.s, self.partial_sum(n), axis=0)


def perturbative_expansion(protocol: Protocol, beta, order=1, m=1.0, kappa=1.0, n_grid=96,
                           tail_tol=1e-9) -> Expansion:
    """Order-by-order slow-driving solution Gamma^(k), k = 0..order.

    Gamma^(0) is the instantaneous equilibrium and, because the reduced
    dynamics is affine, Gamma^(k) = L^{-1} d Gamma^(k-1)/dt for k >= 1.
    """
    s = chebyshev_grid(n_grid)
    D = chebyshev_diff_matrix(n_grid)
    omega = np.array([protocol.schedule(x) for x in s])
    gens = [moment_generator(w, beta, m, kappa) for w in omega]
    g0 = np.array([gamma_equilibrium(w, beta, m).as_array() for w in omega])
    orders = [g0]
    for _ in range(order):
        dg = D @ orders[-1] / protocol.tau
        orders.append(np.array([np.linalg.solve(g.L, d) for g, d in zip(gens, dg)]))
    # resolution check: Chebyshev coefficients of the highest order must decay
    top = orders[-1]
    coeffs = np.polynomial.chebyshev.chebfit(1 - 2 * s, top, n_grid)
    scale = np.max(np.abs(coeffs)) + 1e-300
    if np.max(np.abs(coeffs[-4:])) > tail_tol * scale:
        raise ValueError("Chebyshev grid too coarse for the requested expansion order")
    return Expansion(s, orders)


# --------------------------------------------------------------------------
# classical work statistics oracle


def classical_work_moments(protocol: Protocol, beta, m=1.0, kappa=1.0, n_grid=2001):
    """First two work moments of the classical Kramers oscillator.

    Work w = int omega_dot m omega x^2 dt is a quadratic functional of a
    zero-mean Gaussian process, so <w>  = int a <x^2> and
    Var w = 2 int int a(t) a(t') C_xx(t, t')^2, with the two-time covariance
    from the regression C(t, t') = Phi(t, t') Sigma(t') (t >= t').
    """
    if n_grid % 2 == 0:
        raise ValueError("n_grid must be odd")
    t = np.linspace(0, protocol.tau, n_grid)
    g0 = classical_equilibrium(protocol.start, beta, m).as_array()
    traj = evolve_gamma(protocol, g0, beta, m, kappa, n_samples=n_grid, classical=True)

    def drift(tt):
        w = protocol.value(tt)
        return np.array([[0.0, 1 / m], [-m * w * w, -kappa]])

    sol = solve_ivp(lambda tt, y: (drift(tt) @ y.reshape(2, 2)).ravel(), (0, protocol.tau),
                    np.eye(2).ravel(), method="DOP853", t_eval=t, rtol=1e-12, atol=1e-14)
    phi = sol.y.T.reshape(-1, 2, 2)
    phi_inv = np.linalg.inv(phi)
    sig = np.empty((n_grid, 2, 2))
    sig[:, 0, 0], sig[:, 0, 1], sig[:, 1, 0], sig[:, 1, 1] = (
        traj.gamma[:, 0], traj.gamma[:, 1], traj.gamma[:, 1], traj.gamma[:, 2])
    # C_xx(t_i, t_j) for i >= j: [Phi_i Phi_j^{-1} Sigma_j]_00
    right = np.einsum("jab,jbc->jac", phi_inv, sig)[:, :, 0]  # (j, a)
    cxx = np.einsum("ia,ja->ij", phi[:, 0, :], right)
    cxx = np.tril(cxx) + np.tril(cxx, -1).T
    a = traj.omega_dot * m * traj.omega
    mean = float(simpson(a * traj.gamma[:, 0], x=t))
    inner = simpson(a[None, :] * 2 * cxx**2, x=t, axis=1)
    var = float(simpson(a * inner, x=t))
    return mean, var + mean**2
