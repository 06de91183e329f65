"""Eigenstructure of small dense matrices with paired left/right vectors.

Right eigenvectors are the columns of P, left eigenvectors the rows of
P^-1, so that w_i . e_j = delta_ij (biorthogonal gauge).  The right
vectors are gauged by scaling the first significant component to +1,
making decompositions reproducible and matching the usual hand-written
normalizations (e.g. (1, sqrt(eta)) for shallow water).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotHyperbolicError, NotStrictlyHyperbolicError

__all__ = ["EigenSystem", "decompose", "strict_hyperbolicity_margin"]

# Components smaller than this fraction of the largest one are treated as
# zero when picking the gauge-fixing component.
GAUGE_THRESHOLD = 1e-6

# Relative eigenvalue gap below which the matrix is rejected as not
# strictly hyperbolic.
GAP_TOLERANCE = 1e-9


@dataclass(frozen=True)
class EigenSystem:
    """Real eigenvalues (ascending) with biorthogonal right/left vectors."""

    eigenvalues: np.ndarray   # (N,)
    right_vectors: np.ndarray  # (N, N), column a is e^(a)
    left_vectors: np.ndarray   # (N, N), row a is w^(a)
    gap: float                 # smallest pairwise eigenvalue distance

    @property
    def dimension(self) -> int:
        return len(self.eigenvalues)

    def right(self, family: int) -> np.ndarray:
        return self.right_vectors[:, family]

    def left(self, family: int) -> np.ndarray:
        """Left vector with w . M = lambda w and w . e = 1 exactly in gauge."""
        return self.left_vectors[family]


def _matrix_scale(m: np.ndarray) -> float:
    return float(np.linalg.norm(m, 2))


def _raw_eigensystem(m: np.ndarray):
    """Eigenvalues & right vectors; complex parts reported, not discarded."""
    n = m.shape[0]
    if n == 1:
        return np.array([m[0, 0]]), np.array([[1.0]])
    if n == 2:
        a, b = m[0, 0], m[0, 1]
        c, d = m[1, 0], m[1, 1]
        mean = 0.5 * (a + d)
        disc = 0.25 * (a - d) ** 2 + b * c
        if disc < 0:
            raise NotHyperbolicError(
                f"complex eigenvalue pair {mean:g} +/- {np.sqrt(-disc):g}i"
            )
        root = np.sqrt(disc)
        lams = np.array([mean - root, mean + root])
        vecs = np.empty((2, 2))
        for idx, lam in enumerate(lams):
            # Pick the better-conditioned row of (M - lam I) to solve from.
            r1 = np.array([a - lam, b])
            r2 = np.array([c, d - lam])
            row = r1 if np.linalg.norm(r1) >= np.linalg.norm(r2) else r2
            if np.linalg.norm(row) == 0.0:  # lam repeated with full kernel
                vecs[:, idx] = np.eye(2)[:, idx]
            else:
                vecs[:, idx] = np.array([-row[1], row[0]])
        return lams, vecs
    lams, vecs = np.linalg.eig(m)
    scale = _matrix_scale(m)
    imag = np.max(np.abs(lams.imag))
    if imag > GAP_TOLERANCE * (1.0 + scale):
        raise NotHyperbolicError(
            f"complex eigenvalues detected (max imaginary part {imag:g})"
        )
    return lams.real, vecs.real


def decompose(matrix: np.ndarray) -> EigenSystem:
    """Eigen-decompose a real strictly hyperbolic matrix (N <= 8).

    Raises NotHyperbolicError for complex spectra and
    NotStrictlyHyperbolicError when the smallest eigenvalue gap falls
    below GAP_TOLERANCE relative to the matrix scale.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    n = m.shape[0]
    if n > 8:
        raise ValueError("decompose supports N <= 8")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")

    lams, vecs = _raw_eigensystem(m)
    order = np.argsort(lams)
    lams = lams[order]
    vecs = vecs[:, order]

    scale = _matrix_scale(m)
    gap = np.inf if n == 1 else float(np.min(np.diff(lams)))
    if n > 1 and gap < GAP_TOLERANCE * (1.0 + scale):
        raise NotStrictlyHyperbolicError(
            f"eigenvalue gap {gap:g} below tolerance for matrix scale {scale:g}"
        )

    # Gauge: first component above threshold is scaled to exactly +1.
    for a in range(n):
        v = vecs[:, a]
        big = np.abs(v) >= GAUGE_THRESHOLD * np.max(np.abs(v))
        pivot = int(np.argmax(big))
        vecs[:, a] = v / v[pivot]

    left = np.linalg.inv(vecs)

    resid = np.max(np.abs(m @ vecs - vecs * lams))
    resid = max(resid, np.max(np.abs(left @ m - lams[:, None] * left)))
    if resid > 1e-10 * (1.0 + scale):
        raise NotStrictlyHyperbolicError(
            f"eigenvector residual {resid:g} too large; matrix is near-defective"
        )
    return EigenSystem(
        eigenvalues=lams, right_vectors=vecs, left_vectors=left, gap=gap
    )


def strict_hyperbolicity_margin(matrix: np.ndarray) -> float:
    """Smallest eigenvalue gap over (1 + ||M||); <= 0 encodes failure.

    A complex pair yields the negative margin -(max imaginary part)/(1+||M||).
    """
    m = np.asarray(matrix, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    lams = np.linalg.eigvals(m)
    scale = 1.0 + _matrix_scale(m)
    imag = float(np.max(np.abs(lams.imag)))
    if imag > 0.0:
        return -imag / scale
    if m.shape[0] == 1:
        return np.inf
    real = np.sort(lams.real)
    return float(np.min(np.diff(real))) / scale
