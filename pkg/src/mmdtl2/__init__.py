"""Domain adaptation by a max-margin feature transform with class anchoring.

The public surface re-exports the pieces most callers need: datasets and
synthetic generation, kernel configuration, the fit/predict entry points,
model serialization, and the experiment driver. The oracle module stays
importable as mmdtl2.oracle but is deliberately not re-exported here; it
exists to cross-check the solvers, not to serve as API.
"""

from .dataset import (
    DomainDataset,
    ParseError,
    SynthConfig,
    augment,
    augment_columns,
    load_csv,
    save_csv,
    split_indices,
    split_per_class,
    standard_synth_config,
    synth_generate,
)
from .kernels import KernelSpec
from .linalg import NumericalError
from .adapt import (
    AdaptParams,
    AdaptedModel,
    FitReport,
    TransformModel,
    fit,
    load_model,
    materialize_w,
    predict,
    predict_columns,
    save_model,
)
from .eval import (
    ExperimentConfig,
    WelchResult,
    accuracy,
    render_sweep_tsv,
    render_tsv,
    run_experiment,
    run_sweep,
    welch_t,
    write_plot_data,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptParams",
    "AdaptedModel",
    "DomainDataset",
    "ExperimentConfig",
    "FitReport",
    "KernelSpec",
    "NumericalError",
    "ParseError",
    "SynthConfig",
    "TransformModel",
    "WelchResult",
    "accuracy",
    "augment",
    "augment_columns",
    "fit",
    "load_csv",
    "load_model",
    "materialize_w",
    "predict",
    "predict_columns",
    "render_sweep_tsv",
    "render_tsv",
    "run_experiment",
    "run_sweep",
    "save_csv",
    "save_model",
    "split_indices",
    "split_per_class",
    "standard_synth_config",
    "synth_generate",
    "welch_t",
    "write_plot_data",
    "__version__",
]
