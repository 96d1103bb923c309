"""CPU inference engine for a source-filter neural vocoder.

WORLD-style acoustic features plus a continuous F0 track go in; a 24 kHz
waveform and the model's excitation signal come out.  F0 can be scaled at
synthesis time without retraining.
"""

from .checkpoint import load_config, load_weights, save_config, save_weights
from .errors import (
    CheckpointError,
    ConfigError,
    EngineError,
    FeatureError,
    MetricError,
)
from .excitation import F0Track, Waveform, generate_sine, upsample_f0
from .features import (
    FeatureSeq,
    load_feature_bundle,
    read_wav,
    save_feature_bundle,
    transform_f0,
    write_wav,
)
from .kernels import DilationSchedule, compute_dilation_schedule, conv1d, pd_conv1d
from .metrics import (
    estimate_f0,
    log_f0_rmse,
    lpc_residual,
    mel_l1,
    reg_loss,
    rtf_benchmark,
    vuv_error,
)
from .model import (
    ModelConfig,
    SynthesisResult,
    WeightStore,
    count_params,
    init_random_weights,
    required_tensor_shapes,
    synthesize,
)

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ConfigError",
    "DilationSchedule",
    "EngineError",
    "F0Track",
    "FeatureError",
    "FeatureSeq",
    "MetricError",
    "ModelConfig",
    "SynthesisResult",
    "Waveform",
    "WeightStore",
    "compute_dilation_schedule",
    "conv1d",
    "count_params",
    "estimate_f0",
    "generate_sine",
    "init_random_weights",
    "load_config",
    "load_feature_bundle",
    "load_weights",
    "log_f0_rmse",
    "lpc_residual",
    "mel_l1",
    "pd_conv1d",
    "read_wav",
    "reg_loss",
    "required_tensor_shapes",
    "rtf_benchmark",
    "save_config",
    "save_feature_bundle",
    "save_weights",
    "synthesize",
    "transform_f0",
    "upsample_f0",
    "vuv_error",
    "write_wav",
]
