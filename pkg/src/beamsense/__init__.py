"""beamsense: quantum-limited beam displacement/tilt metrology simulator.

Split detection vs TEM10 homodyne detection of a modulated Gaussian beam, with
and without squeezed light, validated against a Monte-Carlo noise oracle.
"""

from .beam import (
    BeamState,
    ModalField,
    Modulation,
    NoiseCovariance,
    apply_modulation,
    combine_mach_zehnder,
    db_to_variance,
    flipped_noise_shape,
    inject_squeezed_mode,
    make_coherent_beam,
    momentum_to_tilt,
    photon_number,
    propagate,
    squeeze_transfer_flipped_to_tem10,
    tem10_noise_shape,
    tilt_to_momentum,
)
from .detect import (
    Measurement,
    SpectrumTrace,
    efficiency_ratio,
    experimental_ratio_from_traces,
    homodyne_detect,
    inferred_displacement,
    qnl_displacement,
    qnl_momentum,
    qnl_tilt,
    split_detect,
    spectrum_trace,
    sub_qnl_displacement,
    theoretical_efficiency_ratio,
)
from .errors import (
    BeamSenseError,
    GeometryError,
    NumericError,
    SmallSignalError,
    TruncationError,
    UsageError,
)
from .mc import McConfig, empirical_moments, mc_noise_power, sample_quadratures
from .modes import (
    DEFAULT_N_MAX,
    BeamGeometry,
    Profile,
    QuadratureGrid,
    detected_power_fraction,
    flipped_captured_fraction,
    flipped_mode_coeffs,
    gouy_phase,
    hg_amplitude,
    overlap,
    split_overlap_coeffs,
)

__version__ = "0.1.0"

__all__ = [
    "BeamGeometry",
    "BeamSenseError",
    "BeamState",
    "DEFAULT_N_MAX",
    "GeometryError",
    "McConfig",
    "Measurement",
    "ModalField",
    "Modulation",
    "NoiseCovariance",
    "NumericError",
    "Profile",
    "QuadratureGrid",
    "SmallSignalError",
    "SpectrumTrace",
    "TruncationError",
    "UsageError",
    "apply_modulation",
    "combine_mach_zehnder",
    "db_to_variance",
    "detected_power_fraction",
    "efficiency_ratio",
    "empirical_moments",
    "experimental_ratio_from_traces",
    "flipped_captured_fraction",
    "flipped_mode_coeffs",
    "flipped_noise_shape",
    "gouy_phase",
    "hg_amplitude",
    "homodyne_detect",
    "inferred_displacement",
    "inject_squeezed_mode",
    "make_coherent_beam",
    "mc_noise_power",
    "momentum_to_tilt",
    "overlap",
    "photon_number",
    "propagate",
    "qnl_displacement",
    "qnl_momentum",
    "qnl_tilt",
    "sample_quadratures",
    "split_detect",
    "split_overlap_coeffs",
    "spectrum_trace",
    "squeeze_transfer_flipped_to_tem10",
    "sub_qnl_displacement",
    "tem10_noise_shape",
    "theoretical_efficiency_ratio",
    "tilt_to_momentum",
]
