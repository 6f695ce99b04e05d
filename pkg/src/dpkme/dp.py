"""Gaussian mechanism calibrated to the ``2/N`` sensitivity of mean embeddings."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PrivacyParams",
    "gaussian_mechanism",
    "kme_sensitivity_bound",
    "noise_std",
]


class SmallDeltaWarning(UserWarning):
    """``delta`` is at least ``1/N``, too large for meaningful protection."""


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float
    n_private: int

    def __post_init__(self):
        if not (
            math.isfinite(self.epsilon)
            and self.epsilon > 0
            and 0 < self.delta < 1
            and int(self.n_private) == self.n_private
            and self.n_private >= 1
        ):
            raise ValueError(f"invalid privacy params: {self}")
        if self.delta >= 1.0 / self.n_private:
            warnings.warn(
                f"delta={self.delta} is not small relative to 1/N={1 / self.n_private}",
                SmallDeltaWarning,
                stacklevel=3,
            )

    @property
    def noise_std(self) -> float:
        return noise_std(self)


def kme_sensitivity_bound(n: int) -> float:
    """L2 sensitivity of an empirical mean of unit-bounded features: ``2/n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return 2.0 / n


def noise_std(p: PrivacyParams) -> float:
    """Per-coordinate noise scale ``sqrt(8 ln(1.25/delta)) / (N epsilon)``.

    This is the classical Gaussian mechanism scale
    ``sqrt(2 ln(1.25/delta)) * sensitivity / epsilon`` with sensitivity ``2/N``.
    """
    return math.sqrt(8.0 * math.log(1.25 / p.delta)) / (p.n_private * p.epsilon)


def gaussian_mechanism(vector, p: PrivacyParams, rng: np.random.Generator) -> np.ndarray:
    """Return ``vector`` plus i.i.d. ``N(0, noise_std(p)^2)`` noise.

    The caller is responsible for the ``2/N`` sensitivity of ``vector``. The
    number of draws depends only on ``len(vector)``, never on its values.
    """
    v = np.asarray(vector, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite input")
    return v + noise_std(p) * rng.standard_normal(v.shape)
