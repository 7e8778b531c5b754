"""Uplink spectral efficiency of massive MIMO receivers with mixed-resolution ADCs."""

from .model import (
    REFERENCE_BETAS,
    ChannelRealization,
    ConfigError,
    GeometryParams,
    LargeScaleFading,
    SystemConfig,
    build_config,
    drop_users,
    sample_channel,
)
from .quantizer import (
    DistortionFactor,
    ScalarQuantizer,
    alpha_for_bits,
    design_mmse_quantizer,
    quantization_noise_covariance,
    quantize_value,
)
from .closed_form import (
    SEEstimate,
    UnboundedLimitError,
    kappa_sensitivity,
    rate_all_low,
    rate_closed_form,
    rate_full_resolution,
    rate_high_power_limit,
    sinr_closed_form,
)
from .montecarlo import McSettings, McTrace, estimate_se_mc, instantaneous_sinr, validate_moments
from .power import PowerModel, receiver_power

__version__ = "0.1.0"
