"""Private release through a random Fourier feature space.

The empirical mean of ``phi(x_n)`` is privatized directly in ``R^J`` and a
weighted point set ``(z_m, w_m)`` with ``sum |w_m| <= 1`` is then fitted to the
noisy mean by a reduced set method that moves both weights and locations.
The fit only ever sees the noisy mean vector, so it is post-processing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from dpkme.dp import PrivacyParams, gaussian_mechanism
from dpkme.kernel import KernelSpec, as_points, cross_gram
from dpkme.optim import solve_l1_qp
from dpkme.rkhs import WeightedExpansion

__all__ = [
    "FeatureMap",
    "FromQ",
    "Grid",
    "InitPoints",
    "RFFRelease",
    "ReducedSetConfig",
    "ReducedSetResult",
    "build_feature_map",
    "default_j_schedule",
    "feature_mean",
    "reduced_set_optimize",
    "release_rff",
    "release_rff_detailed",
]

J_CAP = 2**14
_ROW_BLOCK = 1024


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Paired random Fourier features for the exponentiated quadratic kernel.

    ``phi(x) = [cos(W x), sin(W x)] / sqrt(J')`` with the ``J'`` rows of ``W``
    drawn from ``N(0, 2 gamma I)``. Each cos/sin pair has unit squared norm,
    so ``||phi(x)||_2 = 1`` for every ``x``.
    """

    frequencies: np.ndarray
    kernel: KernelSpec

    @property
    def n_pairs(self) -> int:
        return self.frequencies.shape[0]

    @property
    def dim_features(self) -> int:
        return 2 * self.frequencies.shape[0]

    @property
    def dim(self) -> int:
        return self.frequencies.shape[1]

    @property
    def pair_scale(self) -> float:
        return 1.0 / math.sqrt(self.n_pairs)

    def phases(self, x) -> np.ndarray:
        x = as_points(x)
        if x.shape[1] != self.dim:
            raise ValueError("dim mismatch")
        return x @ self.frequencies.T

    def __call__(self, x) -> np.ndarray:
        """Feature matrix with one row ``phi(x_i)`` per input row."""
        theta = self.phases(x)
        return self.pair_scale * np.hstack([np.cos(theta), np.sin(theta)])


def build_feature_map(
    kernel: KernelSpec, j_features: int, dim: int, rng: np.random.Generator
) -> FeatureMap:
    if j_features < 2 or j_features % 2:
        raise ValueError(f"j_features must be even and >= 2, got {j_features}")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    w = math.sqrt(2.0 * kernel.gamma) * rng.standard_normal((j_features // 2, dim))
    return FeatureMap(w, kernel)


def default_j_schedule(n: int) -> int:
    """``floor(N^(4/3))`` features rounded down to even, capped at ``J_CAP``."""
    # the epsilon guards exact powers such as 8 ** (4/3) == 15.999...
    j = min(int(math.floor(n ** (4.0 / 3.0) * (1 + 1e-12))), J_CAP)
    return max(2, j - j % 2)


def feature_mean(data, fm: FeatureMap) -> np.ndarray:
    x = as_points(data)
    if x.shape[1] != fm.dim:
        raise ValueError("dim mismatch")
    total = np.zeros(fm.dim_features)
    for start in range(0, x.shape[0], _ROW_BLOCK):
        total += fm(x[start : start + _ROW_BLOCK]).sum(axis=0)
    return total / x.shape[0]


@dataclass(frozen=True)
class FromQ:
    """Initial locations from ``N(q_mean, q_std^2 I)``.

    With ``n_candidates > m_points`` a pool of candidates is drawn and ``M``
    of them are picked by kernel matching pursuit against the (already
    private) target vector.
    """

    q_mean: Union[float, tuple] = 0.0
    q_std: float = 500.0
    n_candidates: int = 10_000


@dataclass(frozen=True)
class Grid:
    """Initial locations on a regular grid over the box ``[lo, hi]^D``."""

    lo: float
    hi: float


@dataclass(frozen=True, eq=False)
class InitPoints:
    """Explicit initial locations, e.g. already public rows."""

    points: np.ndarray


@dataclass(frozen=True)
class ReducedSetConfig:
    m_points: int
    max_iters: int = 300
    step_size: float = 0.5
    l1_bound: float = 1.0
    init: Union[FromQ, Grid, InitPoints] = field(default_factory=FromQ)
    optimize_locations: bool = True
    rel_tol: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if self.m_points < 1:
            raise ValueError("m_points must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not self.l1_bound > 0:
            raise ValueError("l1_bound must be positive")


@dataclass(frozen=True, eq=False)
class ReducedSetResult:
    expansion: WeightedExpansion
    objective: float
    history: np.ndarray
    converged: bool


def _grid_points(m: int, dim: int, lo: float, hi: float) -> np.ndarray:
    per_axis = max(1, math.ceil(m ** (1.0 / dim)))
    axis = np.linspace(lo, hi, per_axis) if per_axis > 1 else np.array([(lo + hi) / 2])
    mesh = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1)
    return mesh.reshape(-1, dim)[:m].copy()


def _matching_pursuit(cands: np.ndarray, target, fm: FeatureMap, m: int) -> np.ndarray:
    # scores[i] = <phi(c_i), residual>; the residual update uses the exact
    # kernel in place of phi(c)^T phi(c') which keeps this O(n_cand) per pick.
    scores = np.concatenate(
        [fm(cands[s : s + _ROW_BLOCK]) @ target for s in range(0, len(cands), _ROW_BLOCK)]
    )
    picked = []
    for _ in range(m):
        i = int(np.argmax(np.abs(scores)))
        picked.append(i)
        scores = scores - scores[i] * cross_gram(fm.kernel, cands, cands[i])[:, 0]
        scores[picked] = 0.0
    return cands[picked]


def _initial_points(rs: ReducedSetConfig, target, fm: FeatureMap, rng) -> np.ndarray:
    init, m, dim = rs.init, rs.m_points, fm.dim
    if isinstance(init, InitPoints):
        z = as_points(init.points)
        if z.shape != (m, dim):
            raise ValueError(f"init points have shape {z.shape}, expected {(m, dim)}")
        return z.copy()
    if isinstance(init, Grid):
        return _grid_points(m, dim, init.lo, init.hi)
    mean = np.broadcast_to(np.asarray(init.q_mean, dtype=float), (dim,))
    n_draw = max(m, init.n_candidates)
    cands = mean + init.q_std * rng.standard_normal((n_draw, dim))
    if n_draw == m:
        return cands
    return _matching_pursuit(cands, target, fm, m)


def _fit_weights(Phi, target, radius, w0):
    res = solve_l1_qp(Phi.T @ Phi, Phi.T @ target, radius, x0=w0, max_iter=2000)
    return res.x


def _objective(Phi, w, target) -> float:
    return float(np.linalg.norm(Phi @ w - target))


def _location_grad(fm: FeatureMap, z, w, resid) -> np.ndarray:
    # d/dz_m ||Phi w - t||^2 = 2 w_m s sum_j omega_j (-r_cos_j sin + r_sin_j cos)
    theta = fm.phases(z)
    jp = fm.n_pairs
    a = -resid[None, :jp] * np.sin(theta) + resid[None, jp:] * np.cos(theta)
    return 2.0 * fm.pair_scale * w[:, None] * (a @ fm.frequencies)


def reduced_set_optimize(
    target,
    fm: FeatureMap,
    rs: ReducedSetConfig,
    rng: Optional[np.random.Generator] = None,
) -> ReducedSetResult:
    """Approximate ``target`` by ``sum_m w_m phi(z_m)`` with ``||w||_1 <= l1_bound``.

    Alternates an L1-constrained least-squares solve for the weights with a
    backtracking gradient step on the locations. Every accepted iterate has
    an objective no larger than the previous one; ``history`` records them.
    """
    target = np.asarray(target, dtype=float)
    if target.shape != (fm.dim_features,):
        raise ValueError(f"target must have length {fm.dim_features}")
    if rng is None:
        rng = np.random.default_rng(rs.seed)

    z = _initial_points(rs, target, fm, rng)
    Phi = fm(z).T
    w = _fit_weights(Phi, target, rs.l1_bound, np.zeros(rs.m_points))
    obj = _objective(Phi, w, target)
    history = [obj]
    converged = obj == 0.0
    # step measured in kernel length-scales
    length = 1.0 / math.sqrt(2.0 * fm.kernel.gamma)
    eta = None

    for _ in range(rs.max_iters if rs.optimize_locations else 0):
        if converged:
            break
        g = _location_grad(fm, z, w, Phi @ w - target)
        gmax = float(np.max(np.linalg.norm(g, axis=1)))
        if gmax == 0.0:
            converged = True
            break
        if eta is None:
            eta = rs.step_size * length / gmax
        accepted = False
        for _ in range(40):
            z_try = z - eta * g
            Phi_try = fm(z_try).T
            obj_try = _objective(Phi_try, w, target)
            if obj_try < obj:
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            converged = True
            break
        eta *= 1.5
        w_try = _fit_weights(Phi_try, target, rs.l1_bound, w)
        obj_w = _objective(Phi_try, w_try, target)
        if obj_w <= obj_try:
            w, obj_try = w_try, obj_w
        z, Phi = z_try, Phi_try
        rel = (obj - obj_try) / max(obj, 1e-300)
        obj = obj_try
        history.append(obj)
        if rel < rs.rel_tol:
            converged = True
            break

    exp = WeightedExpansion(z, w, fm.kernel, l1_bound=rs.l1_bound)
    return ReducedSetResult(exp, obj, np.asarray(history), converged)


@dataclass(frozen=True, eq=False)
class RFFRelease:
    expansion: WeightedExpansion
    feature_map: FeatureMap
    mean: np.ndarray
    noisy_mean: np.ndarray
    fit: ReducedSetResult


def release_rff_detailed(
    private,
    kernel: KernelSpec,
    j_features: int,
    privacy: PrivacyParams,
    rs: ReducedSetConfig,
    rng: Optional[np.random.Generator] = None,
) -> RFFRelease:
    x = as_points(private, "private")
    n, dim = x.shape
    if privacy.n_private != n:
        raise ValueError(f"privacy params are for N={privacy.n_private}, dataset has {n} rows")
    if rng is None:
        rng = np.random.default_rng(rs.seed)
    fm = build_feature_map(kernel, j_features, dim, rng)
    mean = feature_mean(x, fm)
    noisy = gaussian_mechanism(mean, privacy, rng)
    # from here on only the privatized vector is used
    fit = reduced_set_optimize(noisy, fm, rs, rng)
    return RFFRelease(fit.expansion, fm, mean, noisy, fit)


def release_rff(
    private,
    kernel: KernelSpec,
    j_features: int,
    privacy: PrivacyParams,
    rs: ReducedSetConfig,
    rng: Optional[np.random.Generator] = None,
) -> WeightedExpansion:
    """Release a private weighted point set via random features.

    The generator (default: seeded with ``rs.seed``) is consumed in a fixed
    order: feature frequencies, privacy noise, then the optimizer's initial
    locations. The result is an expansion in the RKHS of ``kernel`` with
    ``||w||_1 <= rs.l1_bound``.
    """
    return release_rff_detailed(private, kernel, j_features, privacy, rs, rng).expansion
