"""Dense subspace primitives.

Orthonormal bases, subspace recovery error (sine of the largest principal
angle), symmetric eigendecomposition, the computable sin-theta perturbation
bound, and row-incoherence. All operations are pure functions on immutable
inputs and are safe to call concurrently.
"""

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidRank,
    NoComplement,
    NotSymmetric,
    RankDeficient,
)

# Tolerances at double-precision comfort margin.
ORTHONORMALITY_TOL = 1e-10
RECONSTRUCTION_TOL = 1e-8
RANK_TOL = 1e-12


class BasisMatrix:
    """Tall matrix with orthonormal columns spanning an r-dim subspace of R^n.

    Parameters
    ----------
    entries : (n, r) array_like
        Columns must be orthonormal to within 1e-10 in max norm; a 1-d
        array is treated as a single column.

    Attributes
    ----------
    entries : (n, r) ndarray
    n, r : int
        Ambient and subspace dimensions, 1 <= r <= n.
    """

    __slots__ = ("entries", "n", "r")

    def __init__(self, entries):
        entries = np.atleast_1d(np.asarray(entries, dtype=float))
        if entries.ndim == 1:
            entries = entries[:, None]
        if entries.ndim != 2:
            raise ValueError("basis entries must be a vector or a 2-d matrix")
        n, r = entries.shape
        if not 1 <= r <= n:
            raise InvalidRank(f"need 1 <= r <= n, got r={r}, n={n}")
        gram_defect = np.max(np.abs(entries.T @ entries - np.eye(r)))
        if gram_defect > ORTHONORMALITY_TOL:
            raise ValueError(
                f"columns not orthonormal: max |P'P - I| = {gram_defect:.3e}"
            )
        self.entries = entries
        self.n = n
        self.r = r

    def projector(self):
        """Orthogonal projector P P' onto the spanned subspace."""
        return self.entries @ self.entries.T

    def __repr__(self):
        return f"BasisMatrix(n={self.n}, r={self.r})"


class SymmetricEig:
    """Full eigendecomposition of a symmetric matrix, eigenvalues descending."""

    __slots__ = ("eigenvalues", "eigenvectors")

    def __init__(self, eigenvalues, eigenvectors):
        eigenvalues = np.asarray(eigenvalues, dtype=float)
        if np.any(np.diff(eigenvalues) > 0):
            raise ValueError("eigenvalues must be non-increasing")
        self.eigenvalues = eigenvalues
        self.eigenvectors = eigenvectors  # BasisMatrix with r == n

    def reconstruct(self):
        """V diag(lambda) V'."""
        v = self.eigenvectors.entries
        return (v * self.eigenvalues) @ v.T


def orthonormalize(m):
    """Orthonormal basis for the column space of a full-column-rank matrix.

    Uses a QR factorization with the sign convention diag(R) >= 0, so an
    input that is already orthonormal (up to column scaling) is returned
    with unchanged column directions.

    Parameters
    ----------
    m : (n, r) array_like
        Must have numerical rank r (smallest singular value greater than
        1e-12 times the largest).

    Returns
    -------
    BasisMatrix

    Raises
    ------
    RankDeficient
        If the input does not have full numerical column rank.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    svals = np.linalg.svd(m, compute_uv=False)
    if svals[-1] <= RANK_TOL * svals[0]:
        raise RankDeficient(
            f"singular values span {svals[0]:.3e}..{svals[-1]:.3e}"
        )
    q, rmat = np.linalg.qr(m)
    signs = np.sign(np.diag(rmat))
    signs[signs == 0] = 1.0
    return BasisMatrix(q * signs)


def subspace_error(phat, p):
    """sin of the largest principal angle: || (I - Phat Phat') P ||_2.

    Symmetric in its arguments whenever both bases have the same dimension.
    Value lies in [0, 1] up to floating-point slack.
    """
    if phat.n != p.n:
        raise DimensionMismatch(f"ambient dims differ: {phat.n} vs {p.n}")
    a = phat.entries
    b = p.entries
    residual = b - a @ (a.T @ b)
    return float(np.linalg.norm(residual, 2))


def symmetric_eig(s):
    """Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.

    Eigenvector signs and the ordering of exactly tied eigenvalues are
    unconstrained. Raises NotSymmetric if max |S - S'| exceeds 1e-10 times
    max |S|.
    """
    s = np.asarray(s, dtype=float)
    smax = np.max(np.abs(s)) if s.size else 0.0
    if np.max(np.abs(s - s.T)) > 1e-10 * smax:
        raise NotSymmetric("input fails symmetry tolerance")
    w, v = np.linalg.eigh(s)
    return SymmetricEig(w[::-1], BasisMatrix(v[:, ::-1]))


def top_r_eigvecs(s, r):
    """Basis for the invariant subspace of the r largest eigenvalues of S.

    When eigenvalue r ties eigenvalue r+1 exactly, any valid invariant
    subspace may be returned.
    """
    s = np.asarray(s, dtype=float)
    n = s.shape[0]
    if not 1 <= r <= n:
        raise InvalidRank(f"need 1 <= r <= n, got r={r}, n={n}")
    eig = symmetric_eig(s)
    return BasisMatrix(eig.eigenvectors.entries[:, :r])


def orthogonal_complement(p):
    """Basis P_perp with P P' + P_perp P_perp' = I.

    Raises NoComplement when r == n.
    """
    if p.r >= p.n:
        raise NoComplement("basis already spans the full space")
    u, _, _ = np.linalg.svd(p.entries, full_matrices=True)
    comp = u[:, p.r:]
    # Deterministic sign convention: largest-magnitude entry positive.
    lead = comp[np.argmax(np.abs(comp), axis=0), np.arange(comp.shape[1])]
    signs = np.sign(lead)
    signs[signs == 0] = 1.0
    return BasisMatrix(comp * signs)


def davis_kahan_bound(d, d0, p):
    """Computable sin-theta bound on the subspace error of top-r PCA.

    Returns ||(D - D0) P||_2 / (lambda_r(D0) - lambda_{r+1}(D0)
    - lambda_max(D - D0)), valid whenever the denominator is positive;
    returns inf otherwise. The caller is responsible for P spanning the
    top-r eigenspace of D0.
    """
    d = np.asarray(d, dtype=float)
    d0 = np.asarray(d0, dtype=float)
    if d.shape != d0.shape or d.shape[0] != p.n:
        raise DimensionMismatch("D, D0 and P must share the ambient dimension")
    delta = d - d0
    numerator = np.linalg.norm(delta @ p.entries, 2)
    w0 = np.linalg.eigvalsh(d0)[::-1]
    lam_r = w0[p.r - 1]
    lam_r1 = w0[p.r] if p.r < p.n else -np.inf
    gap = lam_r - lam_r1 - np.max(np.linalg.eigvalsh(delta))
    if gap <= 0:
        return float("inf")
    return float(numerator / gap)


def incoherence(p):
    """Row-denseness parameter mu = sqrt(n/r * max_i ||row_i(P)||_2^2).

    mu = 1 for a maximally dense basis and sqrt(n) for a standard basis
    vector; always in [1, sqrt(n)].
    """
    row_sq = np.sum(p.entries**2, axis=1)
    return float(np.sqrt(p.n / p.r * np.max(row_sq)))
