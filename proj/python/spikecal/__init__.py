"""Python bindings for the spikecal ANN-to-SNN conversion toolkit."""

from ._core import (
    ConvertedSNN,
    NeuronConfig,
    ParetoAssignment,
    SensitivityTable,
    __version__,
    brute_force_search,
    clipfloor,
    confidence,
    convert,
    entropy,
    forward,
    kl_divergence,
    load_model,
    optimize_threshold,
    pareto_phi_search,
    pareto_rho_search,
    run_task,
    simulate,
    synth_blobs,
    train,
)

__all__ = [
    "ConvertedSNN",
    "NeuronConfig",
    "ParetoAssignment",
    "SensitivityTable",
    "__version__",
    "brute_force_search",
    "clipfloor",
    "confidence",
    "convert",
    "entropy",
    "forward",
    "kl_divergence",
    "load_model",
    "optimize_threshold",
    "pareto_phi_search",
    "pareto_rho_search",
    "run_task",
    "simulate",
    "synth_blobs",
    "train",
]
