"""Mixed linear regression toolkit.

Mix-IRLS (sequential robust recovery plus joint refinement), the AltMin,
EM and GD baselines, evaluation metrics, the two-component recovery
guarantee, real-data ingestion and a reproducible benchmark harness.
"""

from .core import (
    Dataset,
    FitReport,
    MixtureSpec,
    MLRModel,
    SolverConfig,
    draw_init,
    generate_synthetic,
    information_limit,
    inject_outliers,
    load_dataset,
    ols,
    oracle_ols,
    save_dataset,
    wls,
)
from .estimators import AltMinRegressor, EMRegressor, GDRegressor, MixIRLSRegressor
from .exceptions import (
    ConstantColumn,
    DegenerateComponent,
    DegenerateSystem,
    Diverged,
    EmptyRange,
    EmptySubset,
    Inapplicable,
    Indeterminate,
    InsufficientData,
    MLRError,
    ThresholdExhausted,
    UnknownDataset,
    ZeroVariance,
)
from .metrics import evaluate, f_latent, f_latent_overparam, f_real, failure_threshold

__version__ = "0.1.0"

__all__ = [
    "AltMinRegressor", "ConstantColumn", "Dataset", "DegenerateComponent", "DegenerateSystem",
    "Diverged", "EMRegressor", "EmptyRange", "EmptySubset", "FitReport", "GDRegressor",
    "Inapplicable", "Indeterminate", "InsufficientData", "MLRError", "MLRModel", "MixIRLSRegressor",
    "MixtureSpec", "SolverConfig", "ThresholdExhausted", "UnknownDataset", "ZeroVariance",
    "draw_init", "evaluate", "f_latent", "f_latent_overparam", "f_real", "failure_threshold",
    "generate_synthetic", "information_limit", "inject_outliers", "load_dataset", "ols",
    "oracle_ols", "save_dataset", "wls",
]
