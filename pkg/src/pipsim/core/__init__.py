"""Shared domain types, configuration, and validated constants."""

from .config import (
    ELEMENTARY_CHARGE,
    K_BOLTZMANN,
    MAX_WEIGHT_STEPS,
    T_EXPO_MAX_DEFAULT,
    SensorConfig,
    ValidatedConfig,
    default_config,
    load_config,
    parse_config,
    validate_config,
)
from .errors import (
    DimensionMismatch,
    InfeasibleTiming,
    InputError,
    InvalidConfig,
    NotReady,
    PhaseMismatch,
    PipsimError,
    UnsupportedGeometry,
)
from .kernels import (
    SUPPORTED_KERNEL_SIZES,
    SUPPORTED_STRIDES_PX,
    WEIGHT_MAX,
    WEIGHT_MIN,
    WeightKernel,
    decompose_weights,
    load_weights,
    random_kernel,
    save_weights,
)
from .types import (
    COLOR_PLANES,
    FeatureMap,
    PhotocurrentMap,
    color_plane,
    color_plane_map,
    load_feature_csv,
)

__all__ = [
    "ELEMENTARY_CHARGE", "K_BOLTZMANN", "MAX_WEIGHT_STEPS", "T_EXPO_MAX_DEFAULT",
    "SensorConfig", "ValidatedConfig", "default_config", "load_config",
    "parse_config", "validate_config",
    "DimensionMismatch", "InfeasibleTiming", "InputError", "InvalidConfig",
    "NotReady", "PhaseMismatch", "PipsimError", "UnsupportedGeometry",
    "SUPPORTED_KERNEL_SIZES", "SUPPORTED_STRIDES_PX", "WEIGHT_MAX", "WEIGHT_MIN",
    "WeightKernel", "decompose_weights", "load_weights", "random_kernel",
    "save_weights",
    "COLOR_PLANES", "FeatureMap", "PhotocurrentMap", "color_plane",
    "color_plane_map", "load_feature_csv",
]
