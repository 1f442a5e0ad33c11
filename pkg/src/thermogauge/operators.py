"""Dense complex-matrix primitives.

Hermitian operators, unitaries and density matrices are plain ``numpy``
arrays of shape ``(d, d)``; the ``as_*`` / ``validate_*`` helpers enforce the
invariants of each role and return cleaned copies.
"""

from __future__ import annotations

import numpy as np

HERMITIAN_RTOL = 1e-12
UNITARY_TOL = 1e-10
DENSITY_TOL = 1e-10
ENTROPY_CUTOFF = 1e-14
IMAG_TOL = 1e-10

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

PAULI = {"I": SIGMA_I, "X": SIGMA_X, "Y": SIGMA_Y, "Z": SIGMA_Z}


class ThermoGaugeError(Exception):
    """Base class for all errors raised by the package."""


class InvariantError(ThermoGaugeError, ValueError):
    """A value violates an invariant of the type it is meant to represent."""


class DimensionError(ThermoGaugeError, ValueError):
    pass


def scale(M) -> float:
    """``max(1, ||M||_F)``, the reference magnitude for relative tolerances."""
    return max(1.0, float(np.linalg.norm(M)))


def as_matrix(M) -> np.ndarray:
    A = np.asarray(M, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvariantError("matrix has non-finite entries")
    return A


def _same_dim(X: np.ndarray, Y: np.ndarray) -> None:
    if X.shape != Y.shape:
        raise DimensionError(f"dimension mismatch: {X.shape} vs {Y.shape}")


def as_hermitian(M, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    A = as_matrix(M)
    dev = float(np.linalg.norm(A - A.conj().T))
    if dev > rtol * scale(A):
        raise InvariantError(f"matrix is not Hermitian: ||M - M^dag||_F = {dev:.3e}")
    return 0.5 * (A + A.conj().T)


def as_unitary(M, tol: float = UNITARY_TOL) -> np.ndarray:
    A = as_matrix(M)
    dev = float(np.linalg.norm(A.conj().T @ A - np.eye(A.shape[0])))
    if dev > tol:
        raise InvariantError(f"matrix is not unitary: ||U^dag U - I||_F = {dev:.3e}")
    return A


def validate_density(M, tol: float = DENSITY_TOL) -> np.ndarray:
    """Check that ``M`` is a density matrix and return a cleaned copy.

    Eigenvalues in ``[-tol, 0)`` are clipped to zero and the trace is
    renormalised. Anything further from a valid state raises
    :class:`InvariantError` naming the broken invariant.
    """
    A = as_matrix(M)
    herm_dev = float(np.linalg.norm(A - A.conj().T))
    if herm_dev > tol * scale(A):
        raise InvariantError(f"density matrix is not Hermitian: ||M - M^dag||_F = {herm_dev:.3e}")
    A = 0.5 * (A + A.conj().T)
    tr = float(np.trace(A).real)
    if abs(tr - 1.0) > tol:
        raise InvariantError(f"density matrix has trace {tr:.12g}, expected 1")
    w, v = np.linalg.eigh(A)
    if w[0] < -tol:
        raise InvariantError(f"density matrix is not positive semidefinite: min eigenvalue {w[0]:.3e}")
    if w[0] < 0:
        w = np.clip(w, 0.0, None)
        w = w / w.sum()
        A = (v * w) @ v.conj().T
        A = 0.5 * (A + A.conj().T)
    return A


def commutator(X, Y) -> np.ndarray:
    X = np.asarray(X, dtype=complex)
    Y = np.asarray(Y, dtype=complex)
    _same_dim(X, Y)
    return X @ Y - Y @ X


def trace_pairing(X, Y) -> complex:
    """``Tr(X Y)`` without forming the product."""
    return complex(np.einsum("ij,ji->", X, Y))


def expectation(rho, X) -> float:
    """Real part of ``Tr(rho X)``; the imaginary residue must be negligible."""
    rho = np.asarray(rho, dtype=complex)
    X = np.asarray(X, dtype=complex)
    _same_dim(rho, X)
    value = trace_pairing(rho, X)
    if abs(value.imag) > IMAG_TOL * max(1.0, float(np.linalg.norm(rho) * np.linalg.norm(X))):
        raise InvariantError(f"Tr(rho X) has imaginary part {value.imag:.3e}")
    return value.real


def skew_exp(H, s: float) -> np.ndarray:
    """``exp(-i s H)`` for Hermitian ``H`` via its spectral decomposition."""
    if not np.isfinite(s):
        raise ValueError(f"time step must be finite, got {s}")
    w, v = np.linalg.eigh(as_matrix(H))
    return (v * np.exp(-1j * s * w)) @ v.conj().T


def von_neumann_entropy(rho) -> float:
    """``-Tr rho ln rho`` in nats."""
    p = np.linalg.eigvalsh(np.asarray(rho, dtype=complex))
    p = p[p > ENTROPY_CUTOFF]
    s = float(-np.sum(p * np.log(p)))
    return min(max(s, 0.0), float(np.log(len(rho))))


def purity(rho) -> float:
    rho = np.asarray(rho, dtype=complex)
    return trace_pairing(rho, rho).real


def trace_distance(rho, sigma) -> float:
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(np.asarray(rho) - np.asarray(sigma)))))


def ket_projector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())
