"""Private release by projection onto a synthetic-data subspace of the RKHS.

The synthetic points ``z_1..z_M`` are fixed before the private rows are read,
either sampled from a wide distribution ``q`` or taken from a subset of rows
that is already public. The private empirical embedding is projected onto
``span{k(z_m, .)}``, its coordinates in an orthonormal basis are perturbed with
the Gaussian mechanism, and the result is re-expressed as weights on the
``z_m``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from dpkme.dp import PrivacyParams, gaussian_mechanism
from dpkme.kernel import KernelSpec, gram
from dpkme.optim import solve_l1_qp
from dpkme.rkhs import (
    DEFAULT_TRUNC_TOL,
    SubspaceBasis,
    WeightedExpansion,
    build_subspace_basis,
    coeffs_to_expansion,
    empirical_kme,
    project_coeffs,
)

__all__ = [
    "PublicSubset",
    "SampleFromQ",
    "SubspaceRelease",
    "SubspaceReleaseConfig",
    "default_m_schedule",
    "regularized_reexpress",
    "release_subspace",
    "release_subspace_detailed",
    "sample_synthetic_points",
    "synthetic_basis",
    "take_public_subset",
]


@dataclass(frozen=True)
class SampleFromQ:
    """Draw synthetic points i.i.d. from ``N(q_mean, q_std^2 I)``."""

    q_mean: Union[float, tuple] = 0.0
    q_std: float = 500.0

    def __post_init__(self):
        if not self.q_std >= 0:
            raise ValueError("q_std must be non-negative")


@dataclass(frozen=True)
class PublicSubset:
    """Use the first ``count`` private rows, assumed already public."""

    count: int


@dataclass(frozen=True)
class SubspaceReleaseConfig:
    m_synthetic: int
    privacy: PrivacyParams
    synthetic_source: Union[SampleFromQ, PublicSubset] = field(default_factory=SampleFromQ)
    trunc_tol: float = DEFAULT_TRUNC_TOL
    regularization: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.m_synthetic < 1:
            raise ValueError("m_synthetic must be >= 1")
        src = self.synthetic_source
        if isinstance(src, PublicSubset) and src.count != self.m_synthetic:
            raise ValueError("PublicSubset.count must equal m_synthetic")
        if not self.trunc_tol > 0:
            raise ValueError("trunc_tol must be positive")
        if self.regularization is not None and not self.regularization >= 1:
            raise ValueError("regularization constant C must be >= 1")


def default_m_schedule(n: int, dim: int) -> int:
    """``ceil(N ** (1 - 4 / (2 D + 4)))`` synthetic points."""
    return int(math.ceil(n ** (1.0 - 4.0 / (2 * dim + 4))))


def sample_synthetic_points(
    cfg: SubspaceReleaseConfig, dim: int, rng: np.random.Generator
) -> np.ndarray:
    src = cfg.synthetic_source
    if not isinstance(src, SampleFromQ):
        raise ValueError("sample_synthetic_points needs a SampleFromQ source")
    mean = np.broadcast_to(np.asarray(src.q_mean, dtype=float), (dim,))
    return mean + src.q_std * rng.standard_normal((cfg.m_synthetic, dim))


def take_public_subset(data, count: int) -> np.ndarray:
    rows = np.asarray(data, dtype=float)
    if count < 1:
        raise ValueError("public subset must contain at least one row")
    if count > rows.shape[0]:
        raise ValueError(f"public subset of {count} rows from a dataset of {rows.shape[0]}")
    return rows[:count].copy()


def synthetic_basis(
    cfg: SubspaceReleaseConfig,
    kernel: KernelSpec,
    dim: int,
    rng: np.random.Generator,
    public_rows=None,
) -> SubspaceBasis:
    """Choose the synthetic points and build the orthonormal basis of their span.

    Reads no private data: ``public_rows`` is only consulted for a
    ``PublicSubset`` source.
    """
    src = cfg.synthetic_source
    if isinstance(src, PublicSubset):
        if public_rows is None:
            raise ValueError("PublicSubset source needs the public rows")
        z = take_public_subset(public_rows, src.count)
    else:
        z = sample_synthetic_points(cfg, dim, rng)
    return build_subspace_basis(z, kernel, cfg.trunc_tol)


def regularized_reexpress(
    target_coeffs,
    basis: SubspaceBasis,
    C: float,
    tol: float = 1e-8,
    max_iter: int = 10_000,
) -> np.ndarray:
    """Weights ``u`` with ``||u||_1 <= C`` closest in RKHS norm to ``sum_f beta_f b_f``.

    With ``K`` the Gram matrix of the span points and ``w = coeff^T beta`` the
    unregularized weights, the objective is ``(u - w)^T K (u - w)``, a
    quadratic solved by projected gradient from the projection of ``w`` onto
    the L1 ball.
    """
    if not C >= 1:
        raise ValueError("regularization constant C must be >= 1")
    beta = np.asarray(target_coeffs, dtype=float)
    w = basis.coeff.T @ beta
    K = gram(basis.kernel, basis.span_points)
    res = solve_l1_qp(K, K @ w, C, x0=w, tol=tol, max_iter=max_iter)
    return res.x


@dataclass(frozen=True, eq=False)
class SubspaceRelease:
    expansion: WeightedExpansion
    basis: SubspaceBasis
    alpha: np.ndarray
    beta: np.ndarray


def release_subspace_detailed(
    private,
    kernel: KernelSpec,
    cfg: SubspaceReleaseConfig,
    rng: Optional[np.random.Generator] = None,
) -> SubspaceRelease:
    """Like :func:`release_subspace` but also returns the basis and coordinates."""
    x = np.asarray(private, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("private dataset must be a non-empty N x D matrix")
    n, dim = x.shape
    if cfg.privacy.n_private != n:
        raise ValueError(
            f"privacy params are for N={cfg.privacy.n_private}, dataset has {n} rows"
        )
    if n == 1:
        warnings.warn("N=1: the release is dominated by privacy noise", stacklevel=2)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    basis = synthetic_basis(cfg, kernel, dim, rng, public_rows=x)
    if basis.span_points.shape[1] != dim:
        raise ValueError("dim mismatch between private data and synthetic points")

    alpha = project_coeffs(empirical_kme(x, kernel), basis)
    beta = gaussian_mechanism(alpha, cfg.privacy, rng)

    if cfg.regularization is None:
        expansion = coeffs_to_expansion(beta, basis)
    else:
        u = regularized_reexpress(beta, basis, cfg.regularization)
        expansion = WeightedExpansion(
            basis.span_points, u, kernel, l1_bound=cfg.regularization
        )
    return SubspaceRelease(expansion, basis, alpha, beta)


def release_subspace(
    private,
    kernel: KernelSpec,
    cfg: SubspaceReleaseConfig,
    rng: Optional[np.random.Generator] = None,
) -> WeightedExpansion:
    """Release an (epsilon, delta)-private weighted synthetic database.

    Args:
        private: ``N x D`` private rows.
        kernel: kernel whose RKHS hosts the embedding; must satisfy k(x, x) <= 1.
        cfg: synthetic-point source, privacy parameters and options. With
            ``cfg.regularization = C`` the final weights are constrained to
            ``||w||_1 <= C`` and the expansion carries that bound.
        rng: generator for synthetic points and noise; defaults to one seeded
            with ``cfg.seed``. Synthetic points are drawn before the noise.

    Returns:
        Weighted expansion over the ``M`` synthetic points.
    """
    return release_subspace_detailed(private, kernel, cfg, rng).expansion
