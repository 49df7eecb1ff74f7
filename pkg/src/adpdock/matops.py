"""Matrix and vectorization utilities.

Conventions used throughout the toolkit:

* ``vec`` stacks matrix columns (Fortran order), so that
  ``vec(A X B) = kron(B.T, A) @ vec(X)``.
* ``vecs`` maps a symmetric matrix to its upper triangle scanned row by
  row with off-diagonal entries doubled:
  ``vecs(P) = [p11, 2 p12, ..., 2 p1n, p22, 2 p23, ..., pnn]``.
* ``vecv`` maps a vector to its ordered pairwise products:
  ``vecv(x) = [x1^2, x1 x2, ..., x1 xn, x2^2, ..., xn^2]``.

The pairing of the two is the quadratic-form identity

    x' P x == dot(vecs(P), vecv(x))

which the regression machinery in :mod:`adpdock.adp` relies on; both
orderings are frozen because they define regression column layouts.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import block_diag

from .errors import RankDeficiencyError

__all__ = [
    "kron",
    "vec",
    "unvec",
    "vecs",
    "unvecs",
    "vecv",
    "bdiag",
    "lstsq",
    "is_hurwitz",
]

#: Tolerance under which a nominally symmetric matrix is accepted and
#: symmetrized by averaging. VI updates accumulate roundoff asymmetry.
SYMMETRY_ATOL = 1e-10


def _as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def kron(a, b):
    """Kronecker product of two matrices.

    Parameters
    ----------
    a, b : array_like
        Real matrices.

    Returns
    -------
    ndarray
        Matrix of shape ``(a.rows * b.rows, a.cols * b.cols)``.
    """
    return np.kron(_as_matrix(a, "a"), _as_matrix(b, "b"))


def vec(a):
    """Column-stacking vectorization, ``vec(A X B) = kron(B.T, A) vec(X)``."""
    return _as_matrix(a).flatten(order="F")


def unvec(s, rows, cols):
    """Inverse of :func:`vec` for a known shape."""
    s = np.asarray(s, dtype=float)
    if s.size != rows * cols:
        raise ValueError(f"cannot reshape length {s.size} into {rows}x{cols}")
    return s.reshape((rows, cols), order="F")


def vecs(p, atol=SYMMETRY_ATOL):
    """Half-vectorization of a symmetric matrix with doubled off-diagonals.

    Parameters
    ----------
    p : array_like
        Square matrix, symmetric within ``atol``. It is symmetrized by
        averaging before extraction.
    atol : float
        Largest tolerated asymmetry ``max|p - p.T|``.

    Returns
    -------
    ndarray
        Vector of length ``n(n+1)/2`` in row-scan upper-triangular order.

    Raises
    ------
    ValueError
        If ``p`` is not square or exceeds the symmetry tolerance.
    """
    p = _as_matrix(p, "p")
    n = p.shape[0]
    if p.shape[1] != n:
        raise ValueError(f"p must be square, got {p.shape}")
    skew = np.abs(p - p.T).max()
    if skew > atol:
        raise ValueError(f"p asymmetric beyond tolerance: max|p - p.T| = {skew:.3e}")
    p = 0.5 * (p + p.T)
    iu, ju = np.triu_indices(n)
    weights = np.where(iu == ju, 1.0, 2.0)
    return p[iu, ju] * weights


def unvecs(s):
    """Rebuild the symmetric matrix encoded by :func:`vecs`.

    Off-diagonal entries are halved to undo the doubling.
    """
    s = np.asarray(s, dtype=float)
    # n(n+1)/2 = len  =>  n = (sqrt(8 len + 1) - 1) / 2
    n = int(round((np.sqrt(8 * s.size + 1) - 1) / 2))
    if n * (n + 1) // 2 != s.size:
        raise ValueError(f"length {s.size} is not a triangular number")
    iu, ju = np.triu_indices(n)
    m = np.zeros((n, n))
    m[iu, ju] = s * np.where(iu == ju, 1.0, 0.5)
    return m + np.triu(m, 1).T


def vecv(v):
    """Ordered pairwise products of a vector's entries.

    ``vecv([a, b]) == [a^2, ab, b^2]``; length ``n(n+1)/2``. Accepts a
    single vector or a batch of row vectors (2-D input, one vector per
    row), in which case one ``vecv`` row is produced per input row.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        outer = np.outer(v, v)
        iu, ju = np.triu_indices(v.size)
        return outer[iu, ju]
    if v.ndim == 2:
        iu, ju = np.triu_indices(v.shape[1])
        return v[:, iu] * v[:, ju]
    raise ValueError(f"v must be 1-D or 2-D, got shape {v.shape}")


def bdiag(blocks):
    """Block-diagonal composition of a nonempty list of matrices."""
    blocks = list(blocks)
    if not blocks:
        raise ValueError("bdiag requires at least one block")
    return block_diag(*[_as_matrix(b, "block") for b in blocks])


def lstsq(theta, rhs):
    """Least-squares solve with an explicit full-column-rank requirement.

    Parameters
    ----------
    theta : array_like, shape (rows, cols)
        Regression matrix, ``rows >= cols``.
    rhs : array_like
        Right-hand side vector or matrix with ``rows`` rows.

    Returns
    -------
    solution : ndarray
        Minimum-residual solution (unique under the rank precondition).
    residual_norm : float
        ``|theta @ solution - rhs|`` in the Frobenius/2-norm.

    Raises
    ------
    RankDeficiencyError
        If the numerical rank of ``theta`` falls below its column count.
        The threshold is ``max(rows, cols) * eps * sigma_max``.
    """
    theta = _as_matrix(theta, "theta")
    rhs = np.asarray(rhs, dtype=float)
    rows, cols = theta.shape
    if rows < cols:
        raise ValueError(f"theta has {rows} rows < {cols} cols; system is underdetermined")
    # Column equilibration: rescaling columns to comparable norms does not
    # change the unique full-rank solution but sharpens the rank decision
    # when column scales span several orders of magnitude.
    col_scale = np.linalg.norm(theta, axis=0)
    col_scale[col_scale == 0.0] = 1.0
    scaled = theta / col_scale
    solution, _, rank, _ = np.linalg.lstsq(scaled, rhs, rcond=None)
    if rank < cols:
        raise RankDeficiencyError(
            f"regression matrix rank {rank} < {cols} columns", rank=rank, required=cols
        )
    solution = (solution.T / col_scale).T
    residual_norm = float(np.linalg.norm(theta @ solution - rhs))
    return solution, residual_norm


def numerical_rank(a):
    """Numerical rank via SVD with the standard threshold."""
    a = _as_matrix(a, "a")
    sv = np.linalg.svd(a, compute_uv=False)
    if sv.size == 0:
        return 0
    threshold = max(a.shape) * np.finfo(float).eps * sv[0]
    return int(np.sum(sv > threshold))


def is_hurwitz(a, margin=0.0):
    """True iff every eigenvalue of ``a`` has real part below ``-margin``.

    Parameters
    ----------
    a : array_like
        Square matrix.
    margin : float
        Nonnegative stability margin.
    """
    a = _as_matrix(a, "a")
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"a must be square, got {a.shape}")
    if margin < 0:
        raise ValueError("margin must be >= 0")
    return bool(np.all(np.linalg.eigvals(a).real < -margin))
