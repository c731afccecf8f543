"""Distill VQ-VAE latent priors into tractable mixture models."""

from ._vqdm import (
    Bundle,
    Mixture,
    ScoredCode,
    Selection,
    VqdmError,
    compile,
    latent_space_size,
    load_bundle,
    load_mixture,
    marginal_logprob,
    select_codes,
    synthetic_bundle,
    utilization_cdf,
)

__all__ = [
    "Bundle",
    "Mixture",
    "ScoredCode",
    "Selection",
    "VqdmError",
    "compile",
    "latent_space_size",
    "load_bundle",
    "load_mixture",
    "marginal_logprob",
    "select_codes",
    "synthetic_bundle",
    "utilization_cdf",
]
