"""Exponentiated quadratic kernel and Gram-matrix construction."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "KernelFamily",
    "KernelSpec",
    "as_points",
    "cross_gram",
    "eval_kernel",
    "gram",
    "kernel_matvec",
    "kernel_sum",
]

# Rows per block when reducing over large cross-Gram matrices.
_BLOCK_ROWS = 2048


class KernelFamily(str, enum.Enum):
    EXP_QUADRATIC = "exp_quadratic"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel ``k(x, y) = exp(-gamma * ||x - y||^2)``.

    ``gamma`` is the inverse squared length-scale. The kernel is normalized,
    ``k(x, x) = 1``, which is what bounds the sensitivity of mean embeddings.
    """

    gamma: float
    family: KernelFamily = KernelFamily.EXP_QUADRATIC

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be positive and finite, got {self.gamma}")
        object.__setattr__(self, "family", KernelFamily(self.family))

    @classmethod
    def for_dim(cls, dim: int) -> "KernelSpec":
        """The bandwidth used for the mixture experiments, ``gamma = 1e-4 / dim``."""
        return cls(gamma=1e-4 / dim)

    @property
    def lipschitz(self) -> float:
        """Lipschitz constant of ``y -> k(x, y)``, i.e. ``sqrt(2 gamma / e)``."""
        return float(np.sqrt(2.0 * self.gamma / np.e))

    def from_sqdist(self, sqdist):
        return np.exp(-self.gamma * sqdist)


def as_points(x, name="points") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} must be a non-empty 2-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite input")
    return arr


def eval_kernel(spec: KernelSpec, x, y) -> float:
    """Evaluate ``k(x, y)`` for two single points."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape or x.size == 0:
        raise ValueError("dim mismatch")
    d = x - y
    return float(np.exp(-spec.gamma * np.dot(d, d)))


def cross_gram(spec: KernelSpec, a, b) -> np.ndarray:
    """Matrix with entries ``k(a[i], b[j])``."""
    a = as_points(a, "a")
    b = as_points(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError("dim mismatch")
    return spec.from_sqdist(cdist(a, b, "sqeuclidean"))


def gram(spec: KernelSpec, points, check_psd: bool = False) -> np.ndarray:
    """Symmetric Gram matrix of ``points`` with an exact unit diagonal.

    Args:
        spec: kernel to evaluate.
        points: ``(M, D)`` array.
        check_psd: assert that the smallest eigenvalue is at least
            ``-1e-10 * M``. Costs an eigendecomposition, so off by default.
    """
    pts = as_points(points)
    K = spec.from_sqdist(cdist(pts, pts, "sqeuclidean"))
    np.fill_diagonal(K, 1.0)
    if check_psd:
        m = K.shape[0]
        lo = np.linalg.eigvalsh(K)[0]
        assert lo >= -1e-10 * m, f"Gram matrix not PSD: min eigenvalue {lo}"
    return K


def kernel_matvec(spec: KernelSpec, a, b, wb) -> np.ndarray:
    """Compute ``K(a, b) @ wb`` in column blocks of ``b``."""
    a = as_points(a, "a")
    b = as_points(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError("dim mismatch")
    wb = np.asarray(wb, dtype=float)
    out = np.zeros(a.shape[0])
    for start in range(0, b.shape[0], _BLOCK_ROWS):
        stop = start + _BLOCK_ROWS
        out += spec.from_sqdist(cdist(a, b[start:stop], "sqeuclidean")) @ wb[start:stop]
    return out


def kernel_sum(spec: KernelSpec, a, b, wa=None, wb=None) -> float:
    """Compute ``sum_ij wa_i wb_j k(a_i, b_j)`` in row blocks.

    Never materializes the full cross-Gram matrix, so it is usable for the
    ``N x N`` double sum in the norm of a large empirical embedding.
    """
    a = as_points(a, "a")
    b = as_points(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError("dim mismatch")
    wa = np.full(a.shape[0], 1.0) if wa is None else np.asarray(wa, dtype=float)
    wb = np.full(b.shape[0], 1.0) if wb is None else np.asarray(wb, dtype=float)
    total = 0.0
    for start in range(0, a.shape[0], _BLOCK_ROWS):
        stop = start + _BLOCK_ROWS
        block = spec.from_sqdist(cdist(a[start:stop], b, "sqeuclidean"))
        total += float(wa[start:stop] @ (block @ wb))
    return total
