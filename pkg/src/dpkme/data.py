"""Private-database generation and plain-text persistence.

Datasets are CSV files with one record per line and an optional header.
Released expansions are CSV files with a mandatory ``weight,z_1,...,z_D``
header plus a JSON sidecar holding everything needed to interpret the
expansion as an RKHS element (kernel family and bandwidth in particular).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from dpkme.kernel import KernelFamily, KernelSpec
from dpkme.rkhs import WeightedExpansion

__all__ = [
    "DataFormatError",
    "Dataset",
    "MixtureSpec",
    "ReleaseMeta",
    "generate_mixture",
    "meta_path",
    "read_csv",
    "read_release",
    "write_csv",
    "write_release",
]


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ``N x D`` matrix of finite reals, optionally with column names."""

    rows: np.ndarray
    column_names: Optional[tuple] = None

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
            raise ValueError(f"dataset must be a non-empty N x D matrix, got {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise ValueError("non-finite input")
        if self.column_names is not None:
            names = tuple(self.column_names)
            if len(names) != rows.shape[1]:
                raise ValueError("column_names length does not match D")
            object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "rows", rows)

    def __array__(self, dtype=None, copy=None):
        return self.rows if dtype is None else self.rows.astype(dtype)

    def __len__(self):
        return self.rows.shape[0]

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def head(self, count: int) -> "Dataset":
        return Dataset(self.rows[:count], self.column_names)


@dataclass(frozen=True)
class MixtureSpec:
    """Gaussian mixture with weights proportional to ``1, 1/2, ..., 1/K``.

    Component means are drawn once, from ``N(center_prior_mean * 1,
    center_prior_cov_scale * I)``, using a stream derived from ``seed``; the
    same spec therefore always describes the same mixture. Each component has
    covariance ``component_cov_scale * I``.
    """

    dim: int
    seed: int = 0
    n_components: int = 10
    center_prior_mean: float = 100.0
    center_prior_cov_scale: float = 200.0
    component_cov_scale: float = 30.0

    def __post_init__(self):
        if self.dim < 1 or self.n_components < 1:
            raise ValueError("dim and n_components must be >= 1")
        if not (self.center_prior_cov_scale > 0 and self.component_cov_scale > 0):
            raise ValueError("covariance scales must be positive")

    @property
    def weights(self) -> np.ndarray:
        w = 1.0 / np.arange(1, self.n_components + 1)
        return w / w.sum()

    def _streams(self):
        return np.random.SeedSequence(self.seed).spawn(2)

    def component_means(self) -> np.ndarray:
        rng = np.random.default_rng(self._streams()[0])
        return self.center_prior_mean + math.sqrt(
            self.center_prior_cov_scale
        ) * rng.standard_normal((self.n_components, self.dim))


def generate_mixture(
    spec: MixtureSpec, n: int, rng: Optional[np.random.Generator] = None,
    return_labels: bool = False,
):
    """Draw ``n`` rows from the mixture.

    Without ``rng`` the rows come from a stream derived from ``spec.seed``, so
    ``(spec, n)`` determines the output.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if rng is None:
        rng = np.random.default_rng(spec._streams()[1])
    means = spec.component_means()
    labels = rng.choice(spec.n_components, size=n, p=spec.weights)
    rows = means[labels] + math.sqrt(spec.component_cov_scale) * rng.standard_normal(
        (n, spec.dim)
    )
    ds = Dataset(rows, tuple(f"x_{i + 1}" for i in range(spec.dim)))
    return (ds, labels) if return_labels else ds


def _parse_row(cells: Sequence[str], lineno: int) -> list:
    try:
        return [float(c) for c in cells]
    except ValueError:
        raise DataFormatError(f"line {lineno}: non-numeric cell in {list(cells)!r}") from None


def _is_numeric(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_csv(path) -> Dataset:
    """Read a comma-separated numeric matrix with an optional header line."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if r]
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    names = None
    first_no, first = lines[0]
    if not any(_is_numeric(c) for c in first):
        names = tuple(c.strip() for c in first)
        lines = lines[1:]
        if not lines:
            raise DataFormatError(f"{path}: header but no data rows")
    width = len(names) if names else len(lines[0][1])
    rows = []
    for lineno, cells in lines:
        if len(cells) != width:
            raise DataFormatError(
                f"line {lineno}: ragged row with {len(cells)} cells, expected {width}"
            )
        rows.append(_parse_row(cells, lineno))
    return Dataset(np.array(rows), names)


def _fmt(x: float) -> str:
    # repr is the shortest string that round-trips exactly
    return repr(float(x))


def write_csv(dataset, path, header: bool = True) -> None:
    ds = dataset if isinstance(dataset, Dataset) else Dataset(dataset)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(ds.column_names or [f"x_{i + 1}" for i in range(ds.dim)])
        for row in ds.rows:
            w.writerow([_fmt(v) for v in row])


@dataclass
class ReleaseMeta:
    """Sidecar metadata of a released expansion."""

    algorithm: str
    kernel: str
    gamma: float
    epsilon: float
    delta: float
    n_private: int
    m_synthetic: int
    seed: int
    j_features: Optional[int] = None
    l1_bound: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        extra = d.pop("extra")
        d = {k: v for k, v in d.items() if v is not None}
        d.update(extra)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ReleaseMeta":
        known = {f for f in cls.__dataclass_fields__ if f != "extra"}
        missing = {"algorithm", "kernel", "gamma"} - d.keys()
        if missing:
            raise DataFormatError(f"release metadata missing keys {sorted(missing)}")
        return cls(
            **{k: v for k, v in d.items() if k in known},
            extra={k: v for k, v in d.items() if k not in known},
        )

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(gamma=self.gamma, family=KernelFamily(self.kernel))


def meta_path(path) -> Path:
    return Path(path).with_suffix(".meta.json")


def write_release(exp: WeightedExpansion, meta: ReleaseMeta, path) -> Path:
    """Write the release CSV and its ``.meta.json`` sidecar; return the sidecar path."""
    if meta.gamma != exp.kernel.gamma or meta.kernel != exp.kernel.family.value:
        raise ValueError("metadata kernel does not match the expansion's kernel")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["weight"] + [f"z_{i + 1}" for i in range(exp.dim)])
        for wt, z in zip(exp.weights, exp.points):
            w.writerow([_fmt(wt)] + [_fmt(v) for v in z])
    side = meta_path(path)
    side.write_text(json.dumps(meta.to_dict(), indent=2, sort_keys=True) + "\n")
    return side


def read_release(path) -> tuple[WeightedExpansion, ReleaseMeta]:
    side = meta_path(path)
    if not side.exists():
        raise DataFormatError(f"{path}: missing metadata sidecar {side}")
    meta = ReleaseMeta.from_dict(json.loads(side.read_text()))
    table = read_csv(path)
    if not table.column_names or table.column_names[0] != "weight":
        raise DataFormatError(f"{path}: release CSV must start with a 'weight' column")
    exp = WeightedExpansion(
        table.rows[:, 1:], table.rows[:, 0], meta.kernel_spec(), l1_bound=meta.l1_bound
    )
    return exp, meta
