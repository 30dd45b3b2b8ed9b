"""Thermodynamic metric, length and constant-speed optimal protocols for the oscillator."""
import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson, quad
from scipy.interpolate import CubicSpline, PchipInterpolator

from . import hyperbolic as hyp
from .lindblad import Protocol
from .moments import moment_generator

INVERSION_TOL = 1e-8


def response_theta(omega, m=1.0):
    """Coefficients of dH/domega = m omega x^2 in the (x^2, xp, p^2) ordering."""
    return np.array([m * omega, 0.0, 0.0])


def xi_vector(omega, beta, m=1.0):
    """d Gamma_eq / d omega, computed analytically."""
    y = beta * omega / 2
    c = hyp.coth(y)
    # both terms of d/dw [coth(y)/(2 m w)] are negative, so no cancellation there
    xi1 = -(c + y * hyp.csch2(y)) / (2 * m * omega**2)
    return np.array([xi1, 0.0, m * hyp.d_ycoth(y) / 2])


@dataclass(frozen=True)
class MetricSample:
    omega: float
    g: float

    @property
    def sqrt_g(self):
        return float(np.sqrt(self.g))


def metric_by_solve(omega, beta, m=1.0, kappa=1.0) -> float:
    """Theta . L^{-1} Xi from a direct 3x3 solve (ill-conditioned as kappa/omega -> 0)."""
    # linear response: Gamma - Gamma_eq ~ L^{-1} Xi omega_dot, so W_ex rate = omega_dot^2 Theta.L^{-1}Xi
    L = moment_generator(omega, beta, m, kappa).L
    return float(response_theta(omega, m) @ np.linalg.solve(L, xi_vector(omega, beta, m)))


def metric_value(omega, beta, m=1.0, kappa=1.0) -> float:
    """Theta . L^{-1} Xi in closed form.

    Eliminating the 3x3 system by hand leaves the combination
    m^2 w^2 Xi_1 + Xi_3 = -m y csch(y)^2 (y = beta w / 2), which is where the
    direct solve loses its digits; here every term is positive.
    """
    y = beta * omega / 2
    a = kappa * hyp.one_minus_sech(y)
    b = kappa * (1 + hyp.sech(y))
    xi1 = xi_vector(omega, beta, m)[0]
    num = 2 * m * y * hyp.csch2(y) - xi1 * b * kappa * m**2
    den = m * (a * b * kappa + 4 * kappa * omega**2)
    g = float(omega * num / den)
    if not g > 0:
        raise ArithmeticError(f"non-positive metric {g} at omega={omega}")
    return g


def metric(omega, beta, m=1.0, kappa=1.0) -> MetricSample:
    return MetricSample(float(omega), metric_value(omega, beta, m, kappa))


@dataclass
class LengthResult:
    length: float
    omega_grid: np.ndarray
    arclength: np.ndarray  # signed so that arclength[-1] == length >= 0
    sqrt_g: np.ndarray


def thermodynamic_length(omega0, omega_tau, beta, m=1.0, kappa=1.0, n_grid=2001) -> LengthResult:
    for name, val in (("omega0", omega0), ("omega_tau", omega_tau)):
        if not val > 0:
            raise ValueError(f"{name} must be positive")
    if n_grid % 2 == 0:
        n_grid += 1
    if omega0 == omega_tau:
        return LengthResult(0.0, np.array([omega0]), np.zeros(1), np.array([np.sqrt(metric_value(omega0, beta, m, kappa))]))

    def integrand(w):
        return np.sqrt(metric_value(w, beta, m, kappa))

    lo, hi = sorted((omega0, omega_tau))
    # break points on a log grid keep quad honest when g spans decades
    pts = np.geomspace(lo, hi, 9)
    total, err = 0.0, 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, e, info = quad(integrand, a, b, epsabs=0, epsrel=1e-12, limit=200, full_output=True)[:3]
        total += val
        err += e
    if err > 1e-9 * total:
        raise ArithmeticError(f"length quadrature did not converge (error estimate {err:.3g})")
    ws = np.geomspace(lo, hi, n_grid)
    sg = np.array([integrand(w) for w in ws])
    # integrate in log omega where the grid is uniform
    ell = cumulative_simpson(sg * ws, x=np.log(ws), initial=0)
    if abs(ell[-1] - total) > 1e-6 * total:
        raise ArithmeticError("cumulative arclength table disagrees with adaptive quadrature")
    ell *= total / ell[-1]
    if omega0 > omega_tau:
        ws, sg, ell = ws[::-1], sg[::-1], (ell[-1] - ell)[::-1]
        ell[0] = 0.0
    return LengthResult(float(total), ws, ell, sg)


def optimal_protocol(omega0, omega_tau, beta, tau, m=1.0, kappa=1.0, n_grid=4001) -> Protocol:
    """Constant thermodynamic speed schedule from inverting the arclength table."""
    if omega0 == omega_tau:
        raise ValueError("optimal protocol needs distinct endpoints")
    res = thermodynamic_length(omega0, omega_tau, beta, m, kappa, n_grid)
    s_tab = res.arclength / res.length
    s_tab[-1] = 1.0
    inverse = PchipInterpolator(s_tab, res.omega_grid)
    forward = CubicSpline(res.omega_grid if omega0 < omega_tau else res.omega_grid[::-1],
                          s_tab if omega0 < omega_tau else s_tab[::-1])
    mid = 0.5 * (s_tab[1:] + s_tab[:-1])
    resid = np.max(np.abs(forward(inverse(mid)) - mid))
    if resid > INVERSION_TOL:
        raise ArithmeticError(f"arclength table too coarse (inversion residual {resid:.2e})")
    L = res.length

    def schedule(s):
        if s <= 0:
            return float(omega0)
        if s >= 1:
            return float(omega_tau)
        w = float(inverse(s))
        # one Newton step on the spline arclength; d s / d omega = sqrt(g) / L
        w -= (float(forward(w)) - s) * L / np.sqrt(metric_value(w, beta, m, kappa)) * np.sign(omega_tau - omega0)
        return w

    def derivative(s):
        w = schedule(s)
        return float(np.sign(omega_tau - omega0) * L / np.sqrt(metric_value(w, beta, m, kappa)))

    return Protocol(tau, schedule, derivative, name="optimal")


TABLE1_CASES = ("high-T underdamped", "high-T overdamped", "low-T underdamped", "low-T overdamped")


def _table1_forms(case, w0, w1):
    if case == "high-T underdamped":
        r = np.log(w1 / w0)
        return (lambda s: w0 * np.exp(r * s)), (lambda s: w0 * r * np.exp(r * s))
    if case == "high-T overdamped":
        c = w0 / w1 - 1
        return (lambda s: w0 / (c * s + 1)), (lambda s: -w0 * c / (c * s + 1) ** 2)
    if case == "low-T underdamped":
        c = np.sqrt(w0 / w1) - 1
        return (lambda s: w0 / (1 + c * s) ** 2), (lambda s: -2 * w0 * c / (1 + c * s) ** 3)
    if case == "low-T overdamped":
        c = np.sqrt(w1 / w0) - 1
        return (lambda s: w0 * (1 + c * s) ** 2), (lambda s: 2 * w0 * c * (1 + c * s))
    raise ValueError(f"unknown case {case!r}; expected one of {TABLE1_CASES}")


def table1_protocol(case, omega0, omega_tau, tau=1.0) -> Protocol:
    """Closed-form asymptotic optimal protocols in the four temperature/damping limits."""
    if not (omega0 > 0 and omega_tau > 0):
        raise ValueError("frequencies must be positive")
    f, df = _table1_forms(case, omega0, omega_tau)

    def schedule(s):
        if s <= 0:
            return float(omega0)
        if s >= 1:
            return float(omega_tau)
        return float(f(s))

    return Protocol(tau, schedule, lambda s: float(df(s)), name=case)


def table1_limit_parameters(case, omega0, omega_tau, push=0):
    """(beta, kappa) placing the oscillator in the given limit; push sharpens it by decades."""
    lo, hi = min(omega0, omega_tau), max(omega0, omega_tau)
    f = 10.0**push
    return {
        "high-T underdamped": (1e-4 / f, 1e-3 * lo / f),
        "high-T overdamped": (1e-4 / hi / f, 100 * hi * f),
        "low-T underdamped": (50 / lo * f, 1e-3 * lo / f),
        "low-T overdamped": (50 / lo * f, 100 * hi * f),
    }[case]


def write_metric_csv(path, omegas, beta, m=1.0, kappa=1.0):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["omega", "g", "sqrt_g"])
        for om in omegas:
            ms = metric(om, beta, m, kappa)
            w.writerow([f"{ms.omega:.12e}", f"{ms.g:.12e}", f"{ms.sqrt_g:.12e}"])


def write_protocol_csv(path, optimal: Protocol, reference: Protocol, n=201):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "omega_opt", "omega_table1_case"])
        for s in np.linspace(0, 1, n):
            w.writerow([f"{s:.12e}", f"{optimal.schedule(s):.12e}", f"{reference.schedule(s):.12e}"])
