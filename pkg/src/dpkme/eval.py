"""Accuracy evaluation, downstream use of releases, and the experiment grid."""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from dpkme.data import MixtureSpec, generate_mixture
from dpkme.dp import PrivacyParams
from dpkme.kernel import KernelSpec, as_points
from dpkme.rff import FromQ, ReducedSetConfig, release_rff
from dpkme.rkhs import (
    WeightedExpansion,
    empirical_kme,
    inner,
    mmd,
    rkhs_distance,
)
from dpkme.subspace import (
    PublicSubset,
    SampleFromQ,
    SubspaceReleaseConfig,
    release_subspace,
    take_public_subset,
)

__all__ = [
    "Affine",
    "Coordinatewise",
    "ExperimentGrid",
    "RESULT_COLUMNS",
    "ResultRow",
    "baseline_uniform",
    "delta_metric",
    "estimate_expectation",
    "fit_rate",
    "mean_delta",
    "mixture_kme_distance",
    "push_forward",
    "read_results",
    "run_grid",
    "write_results",
    "two_sample_mmd_test",
]

RESULT_COLUMNS = ["dim", "algorithm", "epsilon", "m", "repeat", "delta_rkhs", "wall_ms", "seed", "error"]


def delta_metric(private, release: WeightedExpansion, kernel: KernelSpec,
                 private_norm2: Optional[float] = None) -> float:
    """RKHS distance between the private empirical embedding and a release.

    ``private_norm2`` may carry a cached ``||mu_hat||^2``; it is the only
    quadratic-cost term.
    """
    if release.kernel != kernel:
        raise ValueError(f"kernel mismatch: {release.kernel} vs {kernel}")
    return rkhs_distance(empirical_kme(private, kernel), release, aa=private_norm2)


def baseline_uniform(public_points, kernel: KernelSpec) -> WeightedExpansion:
    """Public points weighted uniformly, ``(1/M) sum_m k(z_m, .)``."""
    return empirical_kme(public_points, kernel)


def estimate_expectation(release: WeightedExpansion, h: WeightedExpansion) -> float:
    """Estimate ``E[h(X)]`` as ``<release, h>``, i.e. ``sum_m w_m h(z_m)``."""
    return inner(release, h)


def two_sample_mmd_test(
    release: WeightedExpansion,
    sample,
    n_permutations: int = 200,
    rng: Optional[np.random.Generator] = None,
) -> tuple[float, float]:
    """MMD test of whether ``sample`` comes from the distribution a release represents.

    The statistic is ``||release - mu_hat_sample||``. Releases carry signed
    weights, so labels cannot be permuted between the two sides. Instead the
    null is approximated by bootstrapping the sample:
    ``T*_b = ||mu_hat_{X*_b} - mu_hat_X||`` mimics the sampling fluctuation
    of ``mu_hat_X`` around the embedding it estimates. This ignores the
    release's own error, so it is only valid for releases much more accurate
    than ``1/sqrt(n)``.

    Returns:
        ``(statistic, p_value)`` with ``p_value = (1 + #{T* >= T}) / (1 + B)``.
    """
    if n_permutations < 10:
        raise ValueError("n_permutations must be >= 10")
    x = as_points(sample, "sample")
    if rng is None:
        rng = np.random.default_rng()
    kernel = release.kernel
    n = x.shape[0]
    stat = mmd(release, empirical_kme(x, kernel))

    counts = rng.multinomial(n, np.full(n, 1.0 / n), size=n_permutations).T / n
    diffs = counts - 1.0 / n
    kd = np.zeros_like(diffs)
    for s in range(0, n, 1024):
        kd[s : s + 1024] = kernel.from_sqdist(cdist(x[s : s + 1024], x, "sqeuclidean")) @ diffs
    boot = np.sqrt(np.maximum(np.einsum("ib,ib->b", diffs, kd), 0.0))
    p_value = (1.0 + np.count_nonzero(boot >= stat)) / (1.0 + n_permutations)
    return stat, float(p_value)


@dataclass(frozen=True, eq=False)
class Affine:
    """``x -> A x + b``; ``A`` may be a scalar or a matrix."""

    A: object
    b: object = 0.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        A = np.asarray(self.A, dtype=float)
        y = x * A if A.ndim == 0 else x @ A.T
        return y + np.asarray(self.b, dtype=float)


_COORDINATEWISE = {
    "abs": lambda x, lo, hi: np.abs(x),
    "square": lambda x, lo, hi: x * x,
    "clamp": lambda x, lo, hi: np.clip(x, lo, hi),
}


@dataclass(frozen=True)
class Coordinatewise:
    kind: str
    lo: float = -math.inf
    hi: float = math.inf

    def __post_init__(self):
        if self.kind not in _COORDINATEWISE:
            raise ValueError(f"unknown coordinatewise map {self.kind!r}")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return _COORDINATEWISE[self.kind](x, self.lo, self.hi)


def push_forward(release: WeightedExpansion, f, target_kernel: KernelSpec) -> WeightedExpansion:
    """Expansion ``sum_m w_m k'(f(z_m), .)`` estimating the embedding of ``f(X)``."""
    if release.l1_bound is None:
        raise ValueError("push-forward requires L1-bounded release")
    if not isinstance(f, (Affine, Coordinatewise)):
        raise TypeError("f must be an Affine or Coordinatewise map")
    return WeightedExpansion(
        f(release.points), release.weights, target_kernel, l1_bound=release.l1_bound
    )


def mixture_kme_distance(spec: MixtureSpec, release: WeightedExpansion) -> float:
    """RKHS distance from a release to the embedding of the mixture itself.

    For the exponentiated quadratic kernel and isotropic Gaussian components
    the population embedding has closed-form inner products, so this measures
    error against the data-generating distribution rather than the sample.
    """
    kernel = release.kernel
    if release.dim != spec.dim:
        raise ValueError("dim mismatch")
    g, s2, d = kernel.gamma, spec.component_cov_scale, spec.dim
    pi, a = spec.weights, spec.component_means()
    c2 = 1.0 + 4.0 * g * s2
    mm = float(pi @ (c2 ** (-d / 2) * np.exp(-g * cdist(a, a, "sqeuclidean") / c2)) @ pi)
    c1 = 1.0 + 2.0 * g * s2
    mu_at_z = c1 ** (-d / 2) * np.exp(-g * cdist(release.points, a, "sqeuclidean") / c1) @ pi
    rr = inner(release, release)
    return float(math.sqrt(max(mm - 2.0 * float(release.weights @ mu_at_z) + rr, 0.0)))


def fit_rate(ns: Sequence[float], deltas: Sequence[float]) -> float:
    """Least-squares slope of ``log(delta)`` against ``log(n)``."""
    ns = np.asarray(ns, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    if ns.shape != deltas.shape or ns.size < 4:
        raise ValueError("need at least 4 (n, delta) pairs")
    if np.any(ns <= 0) or np.any(deltas <= 0):
        raise ValueError("n and delta values must be positive")
    slope, _ = np.polyfit(np.log(ns), np.log(deltas), 1)
    return float(slope)


# --------------------------------------------------------------------------
# experiment grid

SCENARIOS = ("no_publishable", "publishable_subset")
ALGORITHMS = {
    "no_publishable": ("subspace", "rff"),
    "publishable_subset": ("subspace", "baseline"),
}


@dataclass(frozen=True)
class ExperimentGrid:
    """Sweep over dimension, privacy level and number of synthetic points.

    ``scenario`` selects the algorithms: ``"publishable_subset"`` runs the
    subspace release on the first ``M`` private rows against the uniform
    baseline; ``"no_publishable"`` runs the subspace release on points drawn
    from ``q`` against the random-features release.
    """

    dims: tuple
    n_private: int
    m_values: tuple
    epsilons: tuple
    delta: float = 1e-6
    scenario: str = "publishable_subset"
    repeats: int = 1
    master_seed: int = 0
    data_seed: int = 0
    j_features: int = 10_000
    q_std: float = 500.0
    rff_max_iters: int = 100
    rff_candidates: int = 10_000
    record_wall_time: bool = False

    def __post_init__(self):
        for name in ("dims", "m_values", "epsilons"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise ValueError(f"{name} must be non-empty")
            object.__setattr__(self, name, vals)
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.n_private < 1:
            raise ValueError("n_private must be >= 1")

    @property
    def algorithms(self) -> tuple:
        return ALGORITHMS[self.scenario]

    def cells(self):
        """Cells ``(index, dim, epsilon, m, repeat)`` in canonical order."""
        idx = 0
        for dim in self.dims:
            for eps in self.epsilons:
                for m in self.m_values:
                    for rep in range(self.repeats):
                        yield idx, dim, eps, m, rep
                        idx += 1

    def cell_seed(self, index: int) -> int:
        return int(np.random.SeedSequence([self.master_seed, index]).generate_state(1)[0])

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentGrid":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown grid keys {sorted(unknown)}")
        return cls(**d)


@dataclass
class ResultRow:
    dim: int
    algorithm: str
    epsilon: float
    m: int
    repeat: int
    delta_rkhs: float
    wall_ms: Optional[float]
    seed: int
    error: str = ""

    def __post_init__(self):
        if not (math.isnan(self.delta_rkhs) or self.delta_rkhs >= 0):
            raise ValueError("delta_rkhs must be non-negative")

    def as_csv(self) -> list:
        return [
            self.dim, self.algorithm, repr(float(self.epsilon)), self.m, self.repeat,
            repr(float(self.delta_rkhs)),
            "" if self.wall_ms is None else f"{self.wall_ms:.3f}",
            self.seed, self.error,
        ]


@dataclass
class _DimContext:
    private: np.ndarray
    kernel: KernelSpec
    norm2: float = field(default=0.0)


_WORKER_CTX: dict = {}


def _prepare_dim(grid: ExperimentGrid, dim: int) -> _DimContext:
    x = np.asarray(generate_mixture(MixtureSpec(dim=dim, seed=grid.data_seed), grid.n_private))
    kernel = KernelSpec.for_dim(dim)
    mu = empirical_kme(x, kernel)
    return _DimContext(x, kernel, inner(mu, mu))


def _run_algorithm(grid, ctx: _DimContext, alg, eps, m, rng) -> WeightedExpansion:
    n, dim = ctx.private.shape
    privacy = PrivacyParams(eps, grid.delta, n)
    if alg == "baseline":
        return baseline_uniform(take_public_subset(ctx.private, m), ctx.kernel)
    if alg == "subspace":
        source = PublicSubset(m) if grid.scenario == "publishable_subset" else SampleFromQ(0.0, grid.q_std)
        cfg = SubspaceReleaseConfig(m, privacy, source)
        return release_subspace(ctx.private, ctx.kernel, cfg, rng)
    if alg == "rff":
        rs = ReducedSetConfig(
            m_points=m,
            max_iters=grid.rff_max_iters,
            init=FromQ(0.0, grid.q_std, grid.rff_candidates),
        )
        return release_rff(ctx.private, ctx.kernel, grid.j_features, privacy, rs, rng)
    raise ValueError(f"unknown algorithm {alg!r}")


def _run_cell(grid: ExperimentGrid, cell) -> list:
    idx, dim, eps, m, rep = cell
    ctx = _WORKER_CTX[dim]
    seed = grid.cell_seed(idx)
    rows = []
    for a_idx, alg in enumerate(grid.algorithms):
        rng = np.random.default_rng([seed, a_idx])
        t0 = time.perf_counter()
        try:
            rel = _run_algorithm(grid, ctx, alg, eps, m, rng)
            delta = delta_metric(ctx.private, rel, ctx.kernel, private_norm2=ctx.norm2)
            err = ""
        except Exception as exc:  # a failed cell must not abort the sweep
            delta, err = math.nan, f"{type(exc).__name__}: {exc}".replace("\n", " ")
        wall = (time.perf_counter() - t0) * 1e3 if grid.record_wall_time else None
        rows.append(ResultRow(dim, alg, eps, m, rep, delta, wall, seed, err))
    return rows


def _init_worker(ctx):
    _WORKER_CTX.clear()
    _WORKER_CTX.update(ctx)


def _default_workers() -> int:
    env = os.environ.get("KME_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_grid(grid: ExperimentGrid, out_path=None, workers: Optional[int] = None,
             progress=None) -> list:
    """Run every cell of ``grid`` and optionally write the result CSV.

    Each cell draws its randomness from ``(master_seed, cell_index)`` alone and
    rows are written in canonical cell order, so the output does not depend on
    ``workers`` (default: ``$KME_THREADS`` or the CPU count). Failed runs are
    recorded with ``delta_rkhs = nan`` and the exception text.
    """
    workers = workers or _default_workers()
    ctx = {dim: _prepare_dim(grid, dim) for dim in grid.dims}
    cells = list(grid.cells())
    if workers == 1:
        _init_worker(ctx)
        results = []
        for c in cells:
            results.append(_run_cell(grid, c))
            if progress:
                progress(len(results), len(cells))
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(ctx,)) as ex:
            results = list(ex.map(_run_cell, [grid] * len(cells), cells, chunksize=4))
    rows = [r for cell_rows in results for r in cell_rows]
    if out_path is not None:
        write_results(rows, out_path)
    return rows


def write_results(rows: Sequence[ResultRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow(r.as_csv())


def read_results(path) -> list:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULT_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for rec in reader:
            rows.append(ResultRow(
                dim=int(rec["dim"]), algorithm=rec["algorithm"],
                epsilon=float(rec["epsilon"]), m=int(rec["m"]),
                repeat=int(rec["repeat"]), delta_rkhs=float(rec["delta_rkhs"]),
                wall_ms=float(rec["wall_ms"]) if rec["wall_ms"] else None,
                seed=int(rec["seed"]), error=rec["error"],
            ))
    return rows


def mean_delta(rows: Sequence[ResultRow], **key) -> float:
    """Mean ``delta_rkhs`` over rows matching every ``field=value`` in ``key``."""
    vals = [r.delta_rkhs for r in rows if all(getattr(r, k) == v for k, v in key.items())]
    if not vals:
        raise KeyError(f"no rows match {key}")
    return float(np.mean(vals))
