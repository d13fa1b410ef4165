"""pipsim: behavioral model of a convolution-in-pixel CMOS image sensor.

The first CNN layer is computed during exposure: weights modulate
photodiode exposure times (PWM), charge sharing across spliced pixel units
performs the accumulation, and two exposures per step handle signed
weights. The package also provides the analytical rate, power, and
efficiency calculators for the architecture, a direct-convolution oracle,
and noise/mismatch models for robustness studies.
"""

__version__ = "0.1.0"

from .core import (
    FeatureMap,
    PhotocurrentMap,
    SensorConfig,
    ValidatedConfig,
    WeightKernel,
    decompose_weights,
    default_config,
    validate_config,
)
from .optics import Scene, photocurrents, scene_from_image
from .pipeline import simulate_frame, traditional_frame
from .analysis import compare, oracle_conv, power_model, rate_report

__all__ = [
    "__version__",
    "FeatureMap", "PhotocurrentMap", "SensorConfig", "ValidatedConfig",
    "WeightKernel", "decompose_weights", "default_config", "validate_config",
    "Scene", "photocurrents", "scene_from_image",
    "simulate_frame", "traditional_frame",
    "compare", "oracle_conv", "power_model", "rate_report",
]
