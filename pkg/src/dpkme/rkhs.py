"""Weighted kernel expansions and finite-dimensional RKHS subspaces.

An element ``h = sum_m w_m k(z_m, .)`` of the RKHS is stored as the pair of
arrays ``(points, weights)``. Inner products reduce to weighted double sums of
kernel evaluations, so every quantity here is exact up to floating point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from dpkme.kernel import KernelSpec, as_points, gram, kernel_matvec, kernel_sum

__all__ = [
    "SubspaceBasis",
    "WeightedExpansion",
    "build_subspace_basis",
    "coeffs_to_expansion",
    "distance_from_inners",
    "empirical_kme",
    "inner",
    "mmd",
    "project_coeffs",
    "rkhs_distance",
]

# Relative eigenvalue cutoff; 1e-10 leaves basis orthonormality errors near 1e-7
# on clustered points, 1e-8 keeps them below 1e-8.
DEFAULT_TRUNC_TOL = 1e-8

# Radicands below this are a bug, not round-off.
_NEGATIVE_RADICAND_TOL = -1e-6


@dataclass(frozen=True, eq=False)
class WeightedExpansion:
    """RKHS element ``sum_m weights[m] * k(points[m], .)``.

    ``l1_bound`` is set when the producer guarantees
    ``sum(abs(weights)) <= l1_bound``; push-forward style downstream use
    requires it.
    """

    points: np.ndarray
    weights: np.ndarray
    kernel: KernelSpec
    l1_bound: Optional[float] = None

    def __post_init__(self):
        pts = as_points(self.points)
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.shape[0] != pts.shape[0]:
            raise ValueError(
                f"{pts.shape[0]} points but {w.shape[0]} weights"
            )
        if not np.all(np.isfinite(w)):
            raise ValueError("non-finite weights")
        if self.l1_bound is not None and np.abs(w).sum() > self.l1_bound + 1e-9:
            raise ValueError(
                f"weights have L1 norm {np.abs(w).sum()} > bound {self.l1_bound}"
            )
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def l1_norm(self) -> float:
        return float(np.abs(self.weights).sum())

    def norm(self) -> float:
        return float(np.sqrt(max(inner(self, self), 0.0)))

    def __call__(self, x) -> np.ndarray:
        """Evaluate the function at the rows of ``x``."""
        return kernel_matvec(self.kernel, x, self.points, self.weights)

    def __add__(self, other: "WeightedExpansion") -> "WeightedExpansion":
        _check_kernels(self, other)
        return WeightedExpansion(
            np.vstack([self.points, other.points]),
            np.concatenate([self.weights, other.weights]),
            self.kernel,
        )

    def scaled(self, c: float) -> "WeightedExpansion":
        return WeightedExpansion(self.points, c * self.weights, self.kernel)


def _check_kernels(a: WeightedExpansion, b: WeightedExpansion) -> None:
    if a.kernel != b.kernel:
        raise ValueError(f"kernel mismatch: {a.kernel} vs {b.kernel}")
    if a.dim != b.dim:
        raise ValueError("dim mismatch")


def empirical_kme(data, kernel: KernelSpec) -> WeightedExpansion:
    """Uniformly weighted expansion ``(1/N) sum_n k(x_n, .)``."""
    pts = np.asarray(data, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("empirical KME of an empty dataset")
    n = pts.shape[0]
    return WeightedExpansion(pts, np.full(n, 1.0 / n), kernel, l1_bound=1.0)


def inner(a: WeightedExpansion, b: WeightedExpansion) -> float:
    _check_kernels(a, b)
    return kernel_sum(a.kernel, a.points, b.points, a.weights, b.weights)


def distance_from_inners(aa: float, ab: float, bb: float) -> float:
    """``sqrt(aa - 2 ab + bb)`` with tiny negative round-off clamped to zero."""
    sq = aa - 2.0 * ab + bb
    if sq < _NEGATIVE_RADICAND_TOL:
        raise ArithmeticError(f"negative squared RKHS distance {sq}")
    return float(np.sqrt(max(sq, 0.0)))


def rkhs_distance(
    a: WeightedExpansion, b: WeightedExpansion, aa: Optional[float] = None
) -> float:
    """RKHS norm of ``a - b``.

    ``aa`` may carry a precomputed ``inner(a, a)``, which saves the quadratic
    cost when ``a`` is a large empirical embedding compared many times.
    """
    _check_kernels(a, b)
    if aa is None:
        aa = inner(a, a)
    return distance_from_inners(aa, inner(a, b), inner(b, b))


def mmd(sample_a: WeightedExpansion, sample_b: WeightedExpansion) -> float:
    """Maximum mean discrepancy between two (weighted) samples."""
    return rkhs_distance(sample_a, sample_b)


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """Orthonormal basis ``b_f = sum_m coeff[f, m] k(z_m, .)`` of span{k(z_m, .)}.

    Built from the eigendecomposition ``K = U diag(lam) U^T`` of the Gram
    matrix as ``coeff = diag(lam)^(-1/2) U^T``, keeping only eigenvalues above
    ``trunc_tol * max(lam)``.
    """

    span_points: np.ndarray
    coeff: np.ndarray
    kernel: KernelSpec
    eigenvalues: np.ndarray = field(repr=False)

    @property
    def rank(self) -> int:
        return self.coeff.shape[0]

    @property
    def size(self) -> int:
        return self.span_points.shape[0]


def build_subspace_basis(
    span_points, kernel: KernelSpec, trunc_tol: float = DEFAULT_TRUNC_TOL
) -> SubspaceBasis:
    if not trunc_tol > 0:
        raise ValueError("trunc_tol must be positive")
    pts = as_points(span_points, "span_points")
    lam, U = np.linalg.eigh(gram(kernel, pts))
    keep = lam > trunc_tol * lam[-1]
    # Descending order so the leading coordinates carry the most energy.
    lam = lam[keep][::-1]
    U = U[:, keep][:, ::-1]
    coeff = (U / np.sqrt(lam)).T
    return SubspaceBasis(pts, np.ascontiguousarray(coeff), kernel, lam)


def project_coeffs(target: WeightedExpansion, basis: SubspaceBasis) -> np.ndarray:
    """Coordinates ``alpha_f = <b_f, target>`` of the orthogonal projection."""
    if target.kernel != basis.kernel:
        raise ValueError(f"kernel mismatch: {target.kernel} vs {basis.kernel}")
    evals = kernel_matvec(basis.kernel, basis.span_points, target.points, target.weights)
    return basis.coeff @ evals


def coeffs_to_expansion(beta, basis: SubspaceBasis) -> WeightedExpansion:
    """Re-express ``sum_f beta_f b_f`` over the span points."""
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape[0] != basis.rank:
        raise ValueError(f"expected {basis.rank} coefficients, got {beta.shape[0]}")
    return WeightedExpansion(basis.span_points, basis.coeff.T @ beta, basis.kernel)
