"""Bayesian binomial model for collision counts with unknown exposure.

Collision counts k ~ Binomial(n, logistic(psi)) where the crossing counts n
are latent and follow a Dirichlet-process mixture of discretized truncated
normals.  Estimation is by a Polya-Gamma augmented blocked Gibbs sampler.
"""

from .analytics import (
    PosteriorSummary,
    ScenarioEdit,
    expected_avc,
    monthly_totals,
    rank_hotspots,
    scenario_delta,
    summarize,
)
from .config import GenerationConfig, RunConfig, Schema
from .data import Dataset, DatasetValidationError, load_dataset, simulate_dataset, write_dataset
from .diagnostics import diagnose, effective_sample_size, gelman_rubin
from .draws import DrawStore
from .sampler import GibbsSampler, SamplerError, fit, run_chain
from .validation import joint_distribution_test

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DatasetValidationError", "DrawStore", "GenerationConfig", "GibbsSampler", "PosteriorSummary",
    "RunConfig", "SamplerError", "ScenarioEdit", "Schema", "diagnose", "effective_sample_size", "expected_avc",
    "fit", "gelman_rubin", "joint_distribution_test", "load_dataset", "monthly_totals", "rank_hotspots",
    "run_chain", "scenario_delta", "simulate_dataset", "summarize", "write_dataset",
]
