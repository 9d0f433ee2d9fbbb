"""Dense real-matrix kernel used for readout training and reservoir scaling.

Matrices are plain 2-D ``float64`` numpy arrays. The SVD and the eigenvalue
solver come from LAPACK through numpy; everything layered on top of them
(cutoff handling, ridge path selection, validation) lives here.
"""

import numpy as np

from .errors import ContractViolation, NumericalFailure

__all__ = ["as_matrix", "pinv", "spectral_radius", "ridge_solve"]


def as_matrix(a, name="A"):
    """Validate ``a`` as a finite 2-D real matrix and return it as float64."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ContractViolation(f"{name} must be a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ContractViolation(f"{name} contains non-finite entries")
    return m


def pinv(a, rcond=None):
    """Moore-Penrose pseudo-inverse via the SVD.

    Singular values at or below ``rcond * s_max`` are treated as zero. The
    default cutoff ``max(m, n) * eps`` is the same one MATLAB's ``pinv`` uses
    (numpy's own default of 1e-15 is different).
    """
    a = as_matrix(a)
    m, n = a.shape
    if rcond is None:
        rcond = max(m, n) * np.finfo(np.float64).eps
    if rcond < 0:
        raise ContractViolation("rcond must be non-negative")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((n, m))
    keep = s > rcond * s[0]
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (vt.T * s_inv) @ u.T


def spectral_radius(a, tol=1e-6):
    """Largest eigenvalue modulus of a square matrix.

    Uses the full Hessenberg-QR eigensolver, so complex-conjugate dominant
    pairs are handled without special casing. ``tol`` is accepted for
    interface compatibility; the dense solver is accurate well beyond it.
    """
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ContractViolation(f"spectral radius needs a square matrix, got {a.shape}")
    if tol <= 0:
        raise ContractViolation("tol must be positive")
    try:
        eig = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigenvalue iteration did not converge: {exc}") from exc
    rho = float(np.max(np.abs(eig)))
    if not np.isfinite(rho):
        raise NumericalFailure("eigensolver returned non-finite eigenvalues")
    return rho


def ridge_solve(x, y, gamma=0.0):
    """Readout weights mapping the rows of ``x`` onto the rows of ``y``.

    ``gamma > 0`` solves ``(X^T X + gamma^2 I) W = X^T Y``; ``gamma == 0``
    returns the minimum-norm least-squares solution ``pinv(X) @ Y``.
    Returns a ``features x targets`` matrix.
    """
    x = as_matrix(x, "X")
    y = as_matrix(y, "Y")
    if x.shape[0] != y.shape[0]:
        raise ContractViolation(
            f"X and Y need the same number of rows, got {x.shape[0]} and {y.shape[0]}"
        )
    if gamma < 0:
        raise ContractViolation("gamma must be non-negative")
    if gamma == 0:
        return pinv(x) @ y
    gram = x.T @ x
    gram[np.diag_indices_from(gram)] += gamma * gamma
    try:
        return np.linalg.solve(gram, x.T @ y)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"ridge system is singular: {exc}") from exc
