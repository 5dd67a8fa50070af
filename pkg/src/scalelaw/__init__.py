"""Tools for planning multilingual translation training runs.

Four concerns, one per module family:

- corpus mixing (`mixing`): temperature-controlled oversampling of
  imbalanced dataset collections,
- sample packing (`packing`): prompt formatting, loss masks, and a binary
  shard format with exact read/write round-tripping,
- accounting (`accounting`): parameter counts and FLOP estimates for
  decoder-only transformer shapes,
- scaling laws (`fitting`, `planning`, `estimators`): robust fits of loss
  vs model size and data, extrapolation checks, and budget planning on
  top of the fitted curves.
"""

from .accounting import (
    FlopEstimate,
    ModelArch,
    ParamCount,
    ScalingRow,
    flops,
    format_scaling_table,
    get_preset,
    pad_vocab,
    param_count,
    scaling_table,
)
from .errors import (
    FitFailed,
    InfeasibleTarget,
    InsufficientData,
    InvalidComparison,
    InvalidInput,
    MagicMismatch,
    ScalelawError,
    ShardFormatError,
    TruncatedShard,
    UnknownControlToken,
    VersionMismatch,
)
from .estimators import ChinchillaLawEstimator, PowerLawEstimator
from .fitting import (
    ChinchillaFit,
    FitConfig,
    GroupedFitResult,
    HoldoutReport,
    PowerLawFit,
    fit_chinchilla,
    fit_from_dict,
    fit_grouped,
    fit_power_law,
    holdout_extrapolation,
    huber,
    predict,
)
from .mixing import (
    DatasetSpec,
    MixEntry,
    MixPlan,
    dataset_probabilities,
    grouped_mix,
    load_manifest,
    materialize_indices,
    mix_plan,
    oversample_factors,
)
from .observations import Observation, load_observations, select_final_checkpoints
from .packing import (
    FormattedSample,
    PackResult,
    PackedShard,
    SamplePair,
    ShardStats,
    SpecialTokenRegistry,
    decode_samples,
    format_sample,
    inference_prefix,
    load_registry,
    pack,
    read_shard,
    shard_stats,
    write_shard,
)
from .planning import (
    BudgetQuery,
    IsoflopResult,
    MatchResult,
    data_needed,
    isoflop_optimum,
    match_model,
    params_needed,
    sixnd_flops_per_unit,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "ScalelawError", "InvalidInput", "InvalidComparison", "UnknownControlToken",
    "ShardFormatError", "MagicMismatch", "VersionMismatch", "TruncatedShard",
    "InsufficientData", "FitFailed", "InfeasibleTarget",
    # mixing
    "DatasetSpec", "MixEntry", "MixPlan", "oversample_factors", "mix_plan",
    "grouped_mix", "dataset_probabilities", "materialize_indices", "load_manifest",
    # packing
    "SpecialTokenRegistry", "SamplePair", "FormattedSample", "PackedShard",
    "PackResult", "ShardStats", "format_sample", "inference_prefix", "pack",
    "write_shard", "read_shard", "shard_stats", "decode_samples",
    "load_registry",
    # accounting
    "ModelArch", "ParamCount", "FlopEstimate", "ScalingRow", "pad_vocab",
    "param_count", "flops", "scaling_table", "format_scaling_table", "get_preset",
    # observations
    "Observation", "load_observations", "select_final_checkpoints",
    # fitting
    "FitConfig", "PowerLawFit", "ChinchillaFit", "GroupedFitResult",
    "HoldoutReport", "huber", "fit_power_law", "fit_chinchilla", "fit_grouped",
    "holdout_extrapolation", "fit_from_dict", "predict",
    # estimators
    "PowerLawEstimator", "ChinchillaLawEstimator",
    # planning
    "BudgetQuery", "MatchResult", "IsoflopResult", "sixnd_flops_per_unit",
    "data_needed", "params_needed", "match_model", "isoflop_optimum",
]
