"""Split and homodyne detector models, QNL calculators and the spectrum-analyzer trace.

All powers are relative to shot noise: the spectrum-analyzer gain constant and
the (hbar omega / 2 eps0 c T)^2 prefactors cancel in every reported ratio.  The
shot-noise reference of the split detector is the power actually collected by
its two pads, so a coherent beam always reads noise_rel = 1.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .beam import BeamState, momentum_to_tilt, propagate
from .errors import UsageError
from .mc import counter_normals
from .modes import detected_power_fraction, split_overlap_coeffs

APERTURE_WARNING_FRACTION = 0.5


@dataclass(frozen=True)
class Measurement:
    """Detector outcome at one setting (z for split, phi_LO for homodyne).

    signal_rel and noise_rel are powers relative to shot noise; snr is their
    ratio.  apertured flags a split detector collecting less than half of the
    beam power.
    """

    kind: str
    setting: float
    signal_rel: float
    noise_rel: float
    snr: float = field(init=False)
    apertured: bool = False

    def __post_init__(self):
        if self.signal_rel < 0:
            raise UsageError(f"signal_rel must be >= 0, got {self.signal_rel}")
        if self.noise_rel <= 0:
            raise UsageError(f"noise_rel must be > 0, got {self.noise_rel}")
        object.__setattr__(self, "snr", self.signal_rel / self.noise_rel)

    @property
    def total_rel(self) -> float:
        return self.signal_rel + self.noise_rel

    @property
    def total_db(self) -> float:
        """Trace height 10 log10(signal + noise) relative to shot noise."""
        return 10.0 * math.log10(self.total_rel)


@dataclass(frozen=True)
class SpectrumTrace:
    """Zero-span spectrum-analyzer trace: dB vs setting, with VBW-averaged scatter."""

    settings: np.ndarray
    values_db: np.ndarray
    rbw: float
    vbw: float
    seed: int

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.settings.tolist(), self.values_db.tolist()))


def qnl_displacement(w0: float, photons_n: float) -> float:
    """Quantum noise limit for displacement: w0 / (2 sqrt(N)) (m)."""
    if photons_n <= 0:
        raise UsageError("QNL undefined for N <= 0 photons")
    return w0 / (2.0 * math.sqrt(photons_n))


def qnl_momentum(w0: float, photons_n: float) -> float:
    """Quantum noise limit for transverse momentum: 1 / (w0 sqrt(N)) (1/m)."""
    if photons_n <= 0:
        raise UsageError("QNL undefined for N <= 0 photons")
    return 1.0 / (w0 * math.sqrt(photons_n))


def qnl_tilt(w0: float, photons_n: float, wavelength: float) -> float:
    """Tilt angle corresponding to the momentum QNL (rad)."""
    return momentum_to_tilt(qnl_momentum(w0, photons_n), wavelength)


def sub_qnl_displacement(d_qnl: float, squeeze_db: float) -> float:
    """New displacement limit with squeeze_db of noise reduction: d_qnl 10^(-dB/20).

    The SNR is quadratic in d, so an amplitude-variance factor 10^(-dB/10)
    lowers the resolvable displacement by its square root.
    """
    if squeeze_db < 0:
        raise UsageError(f"squeeze_db must be >= 0, got {squeeze_db}")
    return d_qnl * 10.0 ** (-squeeze_db / 20.0)


def inferred_displacement(signal_rel: float, w0: float, photons_n: float) -> float:
    """Invert signal_rel = 4 N (d/w0)^2: the displacement read off a trace (m)."""
    if signal_rel < 0:
        raise UsageError(f"signal_rel must be >= 0, got {signal_rel}")
    return math.sqrt(signal_rel) * qnl_displacement(w0, photons_n)


def _mean_quadratures(state: BeamState) -> np.ndarray:
    """Mean quadrature vector (2 Re beta_n, 2 Im beta_n) scaled by sqrt(N), sidebands only.

    The carrier (mode 0) has no content at the modulation frequency, so its
    entry is zeroed; the tail slot never carries coherent amplitude.
    """
    n_modes = state.noise.n_modes
    m = np.zeros(2 * n_modes)
    root_n = math.sqrt(state.field.photons_N)
    coeffs = state.field.coeffs
    m[2 : 2 * len(coeffs) : 2] = 2.0 * root_n * coeffs[1:].real
    m[3 : 2 * len(coeffs) : 2] = 2.0 * root_n * coeffs[1:].imag
    return m


def split_projection(
    n_max: int,
    geom,
    gap: float = 0.0,
    half_width: float = math.inf,
) -> np.ndarray:
    """Unit quadrature-projection vector of a split detector, in the local frame.

    Amplitude-quadrature components are the windowed overlap coefficients; the
    part of the windowed flipped mode beyond the truncation goes to the tail
    slot.  Normalized by the detected power so a coherent beam projects to 1.
    """
    c = split_overlap_coeffs(n_max, geom, gap, half_width)
    p_det = detected_power_fraction(geom, gap, half_width)
    v = np.zeros(2 * (n_max + 2))
    v[0 : 2 * (n_max + 1) : 2] = c
    v[2 * (n_max + 1)] = math.sqrt(max(p_det - float(np.sum(c**2)), 0.0))
    return v / math.sqrt(p_det)


def homodyne_projection(n_max: int, lo_shape: np.ndarray, phi_lo: float) -> np.ndarray:
    """Unit quadrature-projection vector of a homodyne detector at LO phase phi_lo."""
    lo = np.asarray(lo_shape, dtype=float)
    n_modes = n_max + 2
    if len(lo) == n_modes - 1:
        lo = np.concatenate([lo, [0.0]])
    if len(lo) != n_modes:
        raise UsageError(f"lo_shape length {len(lo)} does not match {n_modes} tracked modes")
    norm = float(np.linalg.norm(lo))
    if abs(norm - 1.0) > 1e-6:
        raise UsageError(f"local oscillator shape must be unit norm, got {norm:.8f}")
    v = np.zeros(2 * n_modes)
    v[0::2] = lo * math.cos(phi_lo)
    v[1::2] = lo * math.sin(phi_lo)
    return v


def split_detect(
    state: BeamState,
    z: float = 0.0,
    gap: float = 0.0,
    half_width: float = math.inf,
    electronic_floor_db: float | None = None,
) -> Measurement:
    """Split-photodiode difference measurement at plane z.

    The detector projects onto the local amplitude quadrature of the windowed
    flipped mode: signal uses the actual geometry's overlap coefficients, noise
    is the covariance projection, both referenced to the shot noise of the
    power the pads actually collect.  The projection's component beyond the
    mode truncation goes to the covariance tail slot, assumed parallel to any
    injected tail (exact for the ideal detector).
    """
    local = propagate(state, z)
    v = split_projection(state.n_max, state.geom, gap, half_width)
    p_det = detected_power_fraction(state.geom, gap, half_width)
    noise_rel = local.noise.project(v)
    if electronic_floor_db is not None:
        noise_rel += 10.0 ** (-electronic_floor_db / 10.0)
    amp = float(v @ _mean_quadratures(local))
    return Measurement(
        kind="split",
        setting=z,
        signal_rel=amp**2,
        noise_rel=noise_rel,
        apertured=p_det < APERTURE_WARNING_FRACTION,
    )


def homodyne_detect(
    state: BeamState,
    lo_shape: np.ndarray,
    phi_lo: float,
    electronic_floor_db: float | None = None,
) -> Measurement:
    """Balanced homodyne measurement with a bright local oscillator of shape lo_shape.

    phi_lo selects the quadrature; the LO transverse shape selects the mode.
    The LO is assumed much brighter than the signal beam, so only the projected
    mode contributes to the noise.
    """
    v = homodyne_projection(state.n_max, lo_shape, phi_lo)
    noise_rel = state.noise.project(v)
    if electronic_floor_db is not None:
        noise_rel += 10.0 ** (-electronic_floor_db / 10.0)
    amp = float(v @ _mean_quadratures(state))
    return Measurement(
        kind="homodyne", setting=phi_lo, signal_rel=amp**2, noise_rel=noise_rel
    )


def efficiency_ratio(meas_sd: Measurement, meas_hd: Measurement) -> float:
    """SNR_split / SNR_homodyne for measurements at matched modulation quadrature."""
    if meas_hd.snr == 0:
        raise UsageError("homodyne SNR is zero, efficiency ratio undefined")
    return meas_sd.snr / meas_hd.snr


def theoretical_efficiency_ratio(photons_sd: float, photons_hd: float) -> float:
    """Ideal-geometry coherent-light prediction (2/pi) * N_SD / N_HD."""
    if photons_hd <= 0:
        raise UsageError("homodyne photon number must be > 0")
    return (2.0 / math.pi) * photons_sd / photons_hd


def experimental_ratio_from_traces(
    p_sd: float, p_hd: float, mod_sd_db: float, mod_hd_db: float
) -> float:
    """Reconstruct the efficiency ratio from measured powers and peak trace heights.

    Trace heights are in dB relative to shot noise; the shot-noise floor is
    subtracted before taking the ratio (Mod -> 10^(Mod/10) - 1), which is the
    reading under which the quoted powers reproduce the theoretical 2/pi.
    """
    if mod_sd_db <= 0 or mod_hd_db <= 0:
        raise UsageError("modulation peaks at or below the noise floor are indistinguishable")
    snr_sd = 10.0 ** (mod_sd_db / 10.0) - 1.0
    snr_hd = 10.0 ** (mod_hd_db / 10.0) - 1.0
    return (p_hd / p_sd) * snr_sd / snr_hd


def spectrum_trace(
    sweep: list[Measurement], rbw: float, vbw: float, seed: int = 0
) -> SpectrumTrace:
    """Zero-span trace over a sweep of measurements with VBW-averaged noise scatter.

    Each point reads 10 log10(signal_rel + noise_rel * chi) where chi is a
    unit-mean fluctuation of variance 2 vbw / rbw modelling the scatter of the
    analyzer's power estimate.  chi is drawn log-normally so the trace stays
    positive even at vbw = rbw; in the operating regime rbw/vbw >= 10 this is
    indistinguishable from the Gaussian model.  Point i depends only on
    (seed, i), so traces are reproducible for any evaluation order.
    """
    if vbw > rbw:
        raise UsageError(f"vbw {vbw} must not exceed rbw {rbw}")
    var = 2.0 * vbw / rbw
    sigma2 = math.log1p(var)
    sigma = math.sqrt(sigma2)
    settings = np.array([m.setting for m in sweep])
    values = np.empty(len(sweep))
    for i, m in enumerate(sweep):
        g = float(counter_normals(seed, i, 1)[0])
        chi = math.exp(sigma * g - sigma2 / 2.0)
        values[i] = 10.0 * math.log10(m.signal_rel + m.noise_rel * chi)
    return SpectrumTrace(settings=settings, values_db=values, rbw=rbw, vbw=vbw, seed=seed)


CSV_PREAMBLE = (
    "# beamsense measurement export: signal_rel and noise_rel are powers "
    "relative to shot noise (1 = coherent floor); dB = 10*log10(signal_rel + noise_rel)"
)


def write_measurements_csv(
    measurements: list[Measurement],
    fh: io.TextIOBase,
    setting_name: str,
    trace: SpectrumTrace | None = None,
) -> None:
    """CSV with columns (setting, signal_rel, noise_rel, snr, dB) and a unit header.

    When a spectrum trace accompanies the sweep, its noisy readings go into an
    extra trace_dB column and the RBW/VBW/seed are recorded in the header.
    """
    fh.write(CSV_PREAMBLE + "\n")
    header = [setting_name, "signal_rel", "noise_rel", "snr", "dB"]
    if trace is not None:
        fh.write(f"# rbw_Hz={trace.rbw:.12g} vbw_Hz={trace.vbw:.12g} seed={trace.seed}\n")
        header.append("trace_dB")
    writer = csv.writer(fh)
    writer.writerow(header)
    for i, m in enumerate(measurements):
        row = [f"{m.setting:.12g}", f"{m.signal_rel:.12g}", f"{m.noise_rel:.12g}",
               f"{m.snr:.12g}", f"{m.total_db:.12g}"]
        if trace is not None:
            row.append(f"{trace.values_db[i]:.12g}")
        writer.writerow(row)


def write_trace_csv(trace: SpectrumTrace, fh: io.TextIOBase, setting_name: str) -> None:
    """CSV of a spectrum trace: (setting, dB) with RBW/VBW/seed recorded in the header."""
    fh.write(CSV_PREAMBLE + "\n")
    fh.write(f"# rbw_Hz={trace.rbw:.12g} vbw_Hz={trace.vbw:.12g} seed={trace.seed}\n")
    writer = csv.writer(fh)
    writer.writerow([setting_name, "dB"])
    for s, val in zip(trace.settings, trace.values_db):
        writer.writerow([f"{s:.12g}", f"{val:.12g}"])
