"""Overflow-safe hyperbolic helpers for arguments from 0 to very large.

Arguments below ``SMALL`` use series branches; above ``LARGE`` the
exponent-shifted forms are used.
"""
import numpy as np

SMALL = 1e-6
LARGE = 50.0


def sech(y):
    y = np.abs(np.asarray(y, dtype=float))
    e = np.exp(-y)
    return 2 * e / (1 + e * e)


def tanh(y):
    return np.tanh(np.asarray(y, dtype=float))


def coth(y):
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(np.abs(y) < SMALL, 1 / y + y / 3, 1 / np.tanh(y))
    return out[()] if out.ndim == 0 else out


def coth_minus_tanh(y):
    """coth(y) - tanh(y) = 2 / sinh(2y), without cancellation."""
    y = np.asarray(y, dtype=float)
    a = np.abs(2 * y)
    with np.errstate(divide="ignore", over="ignore"):
        out = np.where(a > LARGE, 4 * np.exp(-a), 2 / np.sinh(a)) * np.sign(y)
    return out[()] if out.ndim == 0 else out


def shc(z):
    """sinh(z)/z with the removable singularity filled in."""
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(np.abs(z) < 1e-4, 1 + z * z / 6, np.sinh(z) / z)
    return out[()] if out.ndim == 0 else out


def log_sinh(y):
    """log(sinh(y)) for y > 0."""
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(y > LARGE, y - np.log(2.0), np.log(np.sinh(np.minimum(y, LARGE))))
    return out[()] if out.ndim == 0 else out


def csch2(y):
    """1/sinh(y)^2 for y > 0."""
    y = np.abs(np.asarray(y, dtype=float))
    with np.errstate(divide="ignore", over="ignore"):
        out = np.where(
            y < SMALL, 1 / (y * y) - 1 / 3,
            np.where(y > LARGE, 4 * np.exp(-2 * y), 1 / np.sinh(np.minimum(y, LARGE)) ** 2),
        )
    return out[()] if out.ndim == 0 else out


def one_minus_sech(y):
    """1 - sech(y) = 2 sinh(y/2)^2 / cosh(y), accurate as y -> 0."""
    y = np.abs(np.asarray(y, dtype=float))
    with np.errstate(over="ignore"):
        small = 2 * np.sinh(np.minimum(y, LARGE) / 2) ** 2 / np.cosh(np.minimum(y, LARGE))
    out = np.where(y > LARGE, 1 - sech(y), small)
    return out[()] if out.ndim == 0 else out


def d_ycoth(y):
    """d/dy [y coth(y)] = coth(y) - y csch(y)^2 for y > 0."""
    y = np.abs(np.asarray(y, dtype=float))
    y2 = y * y
    series = y * (2 / 3 + y2 * (-4 / 45 + y2 * (12 / 945 - y2 * 8 / 4725)))
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = coth(np.maximum(y, 0.05)) - y * csch2(np.maximum(y, 0.05))
    out = np.where(y < 0.05, series, direct)
    return out[()] if out.ndim == 0 else out
