"""Differentially private release of kernel mean embeddings.

Two release mechanisms are provided:

* :func:`dpkme.subspace.release_subspace` projects the empirical kernel mean
  embedding onto the span of data-independent synthetic points and perturbs the
  basis coordinates with the Gaussian mechanism.
* :func:`dpkme.rff.release_rff` privatizes the embedding in a random Fourier
  feature space and then fits a weighted point set with a reduced set method.

Both return a :class:`dpkme.rkhs.WeightedExpansion`, i.e. a weighted synthetic
database ``(z_m, w_m)``.
"""

from dpkme.data import Dataset, MixtureSpec, generate_mixture
from dpkme.dp import PrivacyParams, gaussian_mechanism, noise_std
from dpkme.kernel import KernelSpec
from dpkme.rff import FeatureMap, ReducedSetConfig, build_feature_map, release_rff
from dpkme.rkhs import WeightedExpansion, empirical_kme, mmd, rkhs_distance
from dpkme.subspace import (
    PublicSubset,
    SampleFromQ,
    SubspaceReleaseConfig,
    release_subspace,
)

__all__ = [
    "Dataset",
    "FeatureMap",
    "KernelSpec",
    "MixtureSpec",
    "PrivacyParams",
    "PublicSubset",
    "ReducedSetConfig",
    "SampleFromQ",
    "SubspaceReleaseConfig",
    "WeightedExpansion",
    "build_feature_map",
    "empirical_kme",
    "gaussian_mechanism",
    "generate_mixture",
    "mmd",
    "noise_std",
    "release_rff",
    "release_subspace",
    "rkhs_distance",
]

__version__ = "0.1.0"
