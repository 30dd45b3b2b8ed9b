"""Dense operator algebra in truncated Fock and qubit bases.

Natural units are used throughout (hbar = k_B = 1).
"""
from dataclasses import dataclass

import numpy as np

HERMITIAN_TOL = 1e-10


@dataclass(frozen=True)
class BasisSpec:
    """Truncated Fock basis of an oscillator with mass ``m``.

    ``omega_ref`` fixes the ladder operators; x and p are built once at this
    frequency and are never rebuilt while the trap frequency is driven.
    """

    dim: int
    m: float = 1.0
    omega_ref: float = 1.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"basis dimension must be an integer >= 2, got {self.dim}")
        if not (self.m > 0 and np.isfinite(self.m)):
            raise ValueError(f"mass must be positive, got {self.m}")
        if not (self.omega_ref > 0 and np.isfinite(self.omega_ref)):
            raise ValueError(f"reference frequency must be positive, got {self.omega_ref}")


@dataclass(frozen=True)
class FockOperators:
    x: np.ndarray
    p: np.ndarray
    a: np.ndarray
    a_dagger: np.ndarray


def fock_operators(basis: BasisSpec) -> FockOperators:
    """Ladder, position and momentum operators of ``basis``."""
    n = basis.dim
    a = np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)
    ad = a.conj().T.copy()
    x = (a + ad) / np.sqrt(2 * basis.m * basis.omega_ref)
    p = 1j * np.sqrt(basis.m * basis.omega_ref / 2) * (ad - a)
    return FockOperators(x=x, p=p, a=a, a_dagger=ad)


def dagger(op):
    return op.conj().T


def commutator(a, b):
    return a @ b - b @ a


def anticommutator(a, b):
    return a @ b + b @ a


def is_hermitian(op, tol=HERMITIAN_TOL) -> bool:
    op = np.asarray(op)
    return op.ndim == 2 and op.shape[0] == op.shape[1] and np.max(np.abs(op - dagger(op)), initial=0.0) <= tol


def _check_square(*ops):
    shapes = {np.shape(o) for o in ops}
    if len(shapes) != 1:
        raise ValueError(f"dimension mismatch between operators: {sorted(shapes)}")
    (shape,) = shapes
    if len(shape) != 2 or shape[0] != shape[1]:
        raise ValueError(f"operators must be square matrices, got shape {shape}")


def hermitian_eigh(m):
    """Eigendecomposition of a Hermitian matrix, symmetrizing away round-off."""
    m = np.asarray(m)
    _check_square(m)
    if not is_hermitian(m):
        raise ValueError("matrix is not Hermitian within 1e-10")
    d = np.real(np.diag(m))
    off = m - np.diag(np.diag(m))
    if np.max(np.abs(off), initial=0.0) <= 1e-15 * max(np.max(np.abs(d), initial=0.0), 1e-300):
        # diagonal up to round-off: keep the computational basis exactly
        order = np.argsort(d, kind="stable")
        return d[order], np.eye(len(d), dtype=complex)[:, order]
    return np.linalg.eigh(0.5 * (m + dagger(m)))


def hermitian_function(m, f):
    """Apply the scalar map ``f`` to a Hermitian matrix via U f(Lambda) U^dagger."""
    evals, vecs = hermitian_eigh(m)
    with np.errstate(all="ignore"):
        fvals = np.asarray(f(evals))
    if fvals.shape != evals.shape or not np.all(np.isfinite(fvals)):
        raise ValueError("function is undefined on the spectrum of the matrix")
    return (vecs * fvals) @ dagger(vecs)


def apply_gksl_dissipator(K, A, rate, rho):
    """kappa/2 (-i[K, rho] + A rho A^dagger - {A^dagger A, rho}/2)."""
    _check_square(K, A, rho)
    AdA = dagger(A) @ A
    return 0.5 * rate * (
        -1j * commutator(K, rho) + A @ rho @ dagger(A) - 0.5 * anticommutator(AdA, rho)
    )


def vec(op):
    """Column-stacking vectorization, vec(A X B) = (B^T kron A) vec(X)."""
    return np.asarray(op).reshape(-1, order="F")


def unvec(v, dim):
    return np.asarray(v).reshape(dim, dim, order="F")


def left_right_superop(left, right):
    """Matrix of X -> left @ X @ right acting on column-stacked vectors."""
    return np.kron(np.asarray(right).T, np.asarray(left))


def gksl_superop(K, A, rate):
    """N^2 x N^2 matrix of :func:`apply_gksl_dissipator` at fixed (K, A, rate)."""
    _check_square(K, A)
    eye = np.eye(K.shape[0])
    AdA = dagger(A) @ A
    heff = -1j * K - 0.5 * AdA
    return 0.5 * rate * (
        left_right_superop(heff, eye)
        + left_right_superop(eye, 1j * K - 0.5 * AdA)
        + left_right_superop(A, dagger(A))
    )


def trace_distance(rho, sigma) -> float:
    d = np.asarray(rho) - np.asarray(sigma)
    d = 0.5 * (d + dagger(d))
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(d))))
