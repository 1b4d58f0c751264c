"""Weight quantization as constrained optimization.

A library and CLI for compressing trained models by codebook quantization:
a penalty-method outer loop alternates penalized retraining with optimal
re-quantization, plus direct-compression baselines and the full family of
fixed-codebook quantizers (binary, ternary, powers of two, with or without
a learned scale).
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataFormatError,
    DivergenceError,
    LcquantError,
    NumericalError,
)
from .quantizers import (
    Assignments,
    Codebook,
    QuantParams,
    assign_fixed,
    binarize,
    binarize_scale,
    decompress,
    fixed_scale_alternate,
    kmeans_1d,
    kmedians_1d,
    pow2_quantize,
    ternarize,
    ternarize_scale,
)
from .lc import (
    CompressionStats,
    PenaltySchedule,
    PenaltyState,
    QuantScheme,
    Trace,
    clipped_lr,
    compression_stats,
    dc_run,
    idc_run,
    lc_run,
)
from .models import LinearRegressionModel, MlpModel, SgdConfig

__all__ = [
    "__version__",
    "LcquantError", "ConfigError", "DataFormatError", "NumericalError",
    "DivergenceError",
    "Codebook", "Assignments", "QuantParams",
    "decompress", "assign_fixed", "kmeans_1d", "kmedians_1d",
    "binarize", "binarize_scale", "ternarize", "ternarize_scale",
    "pow2_quantize", "fixed_scale_alternate",
    "PenaltySchedule", "PenaltyState", "QuantScheme", "CompressionStats",
    "Trace", "clipped_lr", "compression_stats",
    "lc_run", "dc_run", "idc_run",
    "LinearRegressionModel", "MlpModel", "SgdConfig",
]
