"""Beam state: coherent modal amplitudes plus multimode quadrature-noise covariance.

Conventions fixed project-wide:

* Quadratures X+ = a + a^dag and X- = -i(a - a^dag), shot-noise normalized so a
  coherent or vacuum mode has variance 1 in both.  <X+> = 2 Re(alpha) and
  <X-> = 2 Im(alpha) for coherent amplitude alpha.
* Covariance ordering (X+_0, X-_0, X+_1, X-_1, ...), one pair per mode.
* The covariance carries one extra synthetic "tail" mode after the physical
  modes 0..n_max.  It holds the part of an injected noise shape (notably the
  flipped mode, whose truncated decomposition captures only ~92% of its norm
  at n_max = 41) that lives beyond the truncation, so squeezing bookkeeping
  stays exact where the detection projection shares the same tail.
* Propagation by a Gouy phase increment dphi multiplies the coherent
  coefficient of mode n by exp(-i n dphi); the matching quadrature rotation is
  applied to the covariance.  The sign is chosen so that a beam displaced in
  the waist plane shows up on the positive tilt quadrature downstream, which
  reproduces the split-detection variance with its +sin(phi_G) tilt term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.constants import c as _c_light
from scipy.constants import h as _h_planck

from .errors import NumericError, SmallSignalError, UsageError
from .modes import DEFAULT_N_MAX, BeamGeometry, flipped_mode_coeffs, gouy_phase

SMALL_SIGNAL_LIMIT = 0.1
SHAPE_NORM_TOL = 1e-6


def tilt_to_momentum(theta: float, wavelength: float) -> float:
    """Transverse momentum p = 2 pi sin(theta) / lambda (1/m) for tilt angle theta (rad)."""
    return 2.0 * math.pi * math.sin(theta) / wavelength


def momentum_to_tilt(p: float, wavelength: float) -> float:
    """Inverse of tilt_to_momentum: theta = arcsin(p lambda / 2 pi)."""
    return math.asin(p * wavelength / (2.0 * math.pi))


@dataclass(frozen=True)
class Modulation:
    """Displacement/tilt modulation amplitudes; frequency is bookkeeping only."""

    displacement_d: float = 0.0  # m
    momentum_p: float = 0.0  # 1/m
    frequency: float = 0.0  # Hz

    def validate(self, geom: BeamGeometry) -> None:
        w0 = geom.waist_w0
        d_ratio = abs(self.displacement_d) / w0
        p_ratio = abs(self.momentum_p) * w0 / 2.0
        if d_ratio >= SMALL_SIGNAL_LIMIT:
            raise SmallSignalError(
                f"|d|/w0 = {d_ratio:.4g} exceeds the small-signal window {SMALL_SIGNAL_LIMIT}"
            )
        if p_ratio >= SMALL_SIGNAL_LIMIT:
            raise SmallSignalError(
                f"|p| w0/2 = {p_ratio:.4g} exceeds the small-signal window {SMALL_SIGNAL_LIMIT}"
            )


class NoiseCovariance:
    """Symmetric PSD matrix over per-mode quadrature pairs, shot-noise normalized.

    Size 2 * (n_max + 2): physical modes 0..n_max plus the tail mode at index
    n_max + 1 (see module docstring).  Identity = coherent/vacuum.
    """

    def __init__(self, matrix: np.ndarray, n_max: int):
        matrix = np.asarray(matrix, dtype=float)
        expected = 2 * (n_max + 2)
        if matrix.shape != (expected, expected):
            raise UsageError(
                f"covariance must be {expected}x{expected} for n_max={n_max}, "
                f"got {matrix.shape}"
            )
        self.matrix = matrix
        self.n_max = n_max

    @property
    def n_modes(self) -> int:
        """Number of tracked modes including the tail slot."""
        return self.n_max + 2

    @property
    def tail_index(self) -> int:
        return self.n_max + 1

    @classmethod
    def vacuum(cls, n_max: int = DEFAULT_N_MAX) -> "NoiseCovariance":
        return cls(np.eye(2 * (n_max + 2)), n_max)

    def copy(self) -> "NoiseCovariance":
        return NoiseCovariance(self.matrix.copy(), self.n_max)

    def mode_block(self, n: int) -> np.ndarray:
        """The 2x2 (X+, X-) covariance block of mode n."""
        i = 2 * n
        return self.matrix[i : i + 2, i : i + 2].copy()

    def project(self, quad_vector: np.ndarray) -> float:
        """Variance of the quadrature combination v . X, i.e. v^T C v."""
        v = np.asarray(quad_vector, dtype=float)
        if v.shape != (self.matrix.shape[0],):
            raise UsageError(
                f"projection vector length {v.shape} does not match covariance "
                f"dimension {self.matrix.shape[0]}"
            )
        return float(v @ self.matrix @ v)

    def rotated(self, angles: np.ndarray) -> "NoiseCovariance":
        """Apply the per-mode quadrature rotation by angles[n] (one angle per mode)."""
        angles = np.asarray(angles, dtype=float)
        if angles.shape != (self.n_modes,):
            raise UsageError(f"need {self.n_modes} angles, got {angles.shape}")
        cos, sin = np.cos(angles), np.sin(angles)
        R = np.zeros_like(self.matrix)
        idx = 2 * np.arange(self.n_modes)
        R[idx, idx] = cos
        R[idx, idx + 1] = -sin
        R[idx + 1, idx] = sin
        R[idx + 1, idx + 1] = cos
        return NoiseCovariance(R @ self.matrix @ R.T, self.n_max)

    def validate(self, tol: float = 1e-9) -> None:
        """Check symmetry, positive semidefiniteness and per-mode uncertainty."""
        m = self.matrix
        asym = np.abs(m - m.T).max()
        if asym > tol:
            raise NumericError(f"covariance asymmetry {asym:.3e} exceeds {tol}")
        eigs = np.linalg.eigvalsh(0.5 * (m + m.T))
        if eigs.min() < -tol:
            raise NumericError(f"covariance has negative eigenvalue {eigs.min():.3e}")
        for n in range(self.n_modes):
            det = float(np.linalg.det(self.mode_block(n)))
            if det < 1.0 - tol:
                raise NumericError(f"mode {n} uncertainty product {det:.6f} below 1")


@dataclass(frozen=True)
class ModalField:
    """Coherent part of a beam: carrier-normalized complex mode coefficients.

    coeffs[0] = 1 for a carrier-bearing beam; sidebands on n >= 1 stay small in
    the linearized regime.  photons_N is the photon number detected in the
    integration time integration_T = 1/RBW.
    """

    geom: BeamGeometry
    coeffs: np.ndarray  # complex, length n_max + 1 (physical modes only)
    photons_N: float
    integration_T: float

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=complex))
        if self.photons_N < 0:
            raise UsageError(f"photons_N must be >= 0, got {self.photons_N}")

    @property
    def n_max(self) -> int:
        return len(self.coeffs) - 1


@dataclass(frozen=True)
class BeamState:
    """A beam at plane z: coherent modal field plus quadrature-noise covariance."""

    field: ModalField
    noise: NoiseCovariance
    z: float = 0.0  # m, measured from the waist

    def __post_init__(self):
        if self.field.n_max != self.noise.n_max:
            raise UsageError(
                f"field n_max {self.field.n_max} != covariance n_max {self.noise.n_max}"
            )

    @property
    def geom(self) -> BeamGeometry:
        return self.field.geom

    @property
    def n_max(self) -> int:
        return self.field.n_max


def photon_number(power: float, wavelength: float, rbw: float) -> float:
    """Photons detected in T = 1/rbw: N = P T lambda / (h c)."""
    if power < 0:
        raise UsageError(f"power must be >= 0, got {power}")
    if wavelength <= 0 or rbw <= 0:
        raise UsageError("wavelength and rbw must be > 0")
    return power * wavelength / (_h_planck * _c_light * rbw)


def make_coherent_beam(
    power: float,
    wavelength: float,
    waist: float,
    rbw: float,
    n_max: int = DEFAULT_N_MAX,
) -> BeamState:
    """Coherent TEM00 beam at the waist: unit carrier, vacuum noise everywhere."""
    geom = BeamGeometry(waist_w0=waist, wavelength_lambda=wavelength)
    coeffs = np.zeros(n_max + 1, dtype=complex)
    coeffs[0] = 1.0
    field = ModalField(
        geom=geom,
        coeffs=coeffs,
        photons_N=photon_number(power, wavelength, rbw),
        integration_T=1.0 / rbw,
    )
    return BeamState(field=field, noise=NoiseCovariance.vacuum(n_max), z=0.0)


def apply_modulation(state: BeamState, mod: Modulation) -> BeamState:
    """Add displacement/tilt sidebands: coeffs[1] += d/w0 + i w0 p / 2."""
    mod.validate(state.geom)
    w0 = state.geom.waist_w0
    coeffs = state.field.coeffs.copy()
    coeffs[1] += mod.displacement_d / w0 + 1j * w0 * mod.momentum_p / 2.0
    return replace(state, field=replace(state.field, coeffs=coeffs))


def squeeze_transfer_flipped_to_tem10(v_flipped: float) -> float:
    """TEM10 amplitude-quadrature variance seen when the flipped mode has variance v_flipped:
    (2/pi) v_flipped + (1 - 2/pi)."""
    if v_flipped < 0:
        raise UsageError(f"variance must be >= 0, got {v_flipped}")
    r = 2.0 / math.pi
    return r * v_flipped + (1.0 - r)


def db_to_variance(squeeze_db: float) -> float:
    """Variance 10^(-dB/10) relative to shot noise; positive dB means below shot noise."""
    return 10.0 ** (-squeeze_db / 10.0)


def tem10_noise_shape(n_max: int = DEFAULT_N_MAX) -> np.ndarray:
    """Unit shape vector selecting the TEM10 mode (length n_max + 2, tail slot zero)."""
    shape = np.zeros(n_max + 2)
    shape[1] = 1.0
    return shape


def flipped_noise_shape(n_max: int = DEFAULT_N_MAX) -> np.ndarray:
    """Unit shape vector of the flipped mode, exact thanks to the tail slot.

    Components 0..n_max are the flipped-mode overlap coefficients; the tail slot
    carries sqrt(1 - sum c_n^2) so the vector has norm 1 even though the
    truncated decomposition does not.
    """
    c = flipped_mode_coeffs(n_max)
    shape = np.zeros(n_max + 2)
    shape[: n_max + 1] = c
    shape[n_max + 1] = math.sqrt(max(1.0 - float(np.sum(c**2)), 0.0))
    return shape


def _quadrature_vectors(shape: np.ndarray, angle: float) -> tuple[np.ndarray, np.ndarray]:
    """Unit quadrature-space vectors of a mode shape at `angle` and at angle + pi/2."""
    dim = 2 * len(shape)
    s = np.zeros(dim)
    a = np.zeros(dim)
    s[0::2] = shape * math.cos(angle)
    s[1::2] = shape * math.sin(angle)
    a[0::2] = -shape * math.sin(angle)
    a[1::2] = shape * math.cos(angle)
    return s, a


def inject_squeezed_mode(
    cov: NoiseCovariance,
    mode_shape: np.ndarray,
    squeeze_db: float,
    antisqueeze_db: float,
    squeeze_angle: float = 0.0,
) -> NoiseCovariance:
    """Replace the vacuum of the superposition mode `mode_shape` with squeezed noise.

    Variance 10^(-squeeze_db/10) along the quadrature at squeeze_angle and
    10^(+antisqueeze_db/10) along the orthogonal quadrature; every orthogonal
    mode is untouched.  mode_shape must be unit norm (length n_max + 1 for
    physical modes only, or n_max + 2 including the tail slot).
    """
    if squeeze_db < 0:
        raise UsageError(f"squeeze_db must be >= 0, got {squeeze_db}")
    if antisqueeze_db < squeeze_db:
        raise UsageError(
            f"antisqueeze_db {antisqueeze_db} must be >= squeeze_db {squeeze_db}"
        )
    shape = np.asarray(mode_shape, dtype=float)
    if len(shape) == cov.n_modes - 1:
        shape = np.concatenate([shape, [0.0]])
    if len(shape) != cov.n_modes:
        raise UsageError(
            f"mode_shape length {len(shape)} does not match {cov.n_modes} tracked modes"
        )
    norm = float(np.linalg.norm(shape))
    if abs(norm - 1.0) > SHAPE_NORM_TOL:
        raise UsageError(f"mode_shape must be unit norm, got |shape| = {norm:.8f}")
    v_s = 10.0 ** (-squeeze_db / 10.0)
    v_a = 10.0 ** (antisqueeze_db / 10.0)
    s, a = _quadrature_vectors(shape, squeeze_angle)
    matrix = cov.matrix + (v_s - 1.0) * np.outer(s, s) + (v_a - 1.0) * np.outer(a, a)
    return NoiseCovariance(matrix, cov.n_max)


def _parity_masks(n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature-index masks for even and odd modes; the tail slot counts as odd."""
    mode_parity_odd = np.array([n % 2 == 1 for n in range(n_max + 1)] + [True])
    odd = np.repeat(mode_parity_odd, 2)
    return ~odd, odd


def combine_mach_zehnder(
    bright: BeamState, dim_odd: NoiseCovariance, efficiency: float = 1.0
) -> BeamState:
    """Losslessly merge a bright even-mode beam with odd-mode noise from a dim input.

    Models the asymmetric Mach-Zehnder whose extra mirror pi-shifts odd
    transverse profiles: even modes of the bright port and odd modes of the dim
    port exit on the same output.  efficiency < 1 admixes vacuum on the odd
    block as a loss channel C -> eta C + (1 - eta) I.
    """
    if not 0.0 < efficiency <= 1.0:
        raise UsageError(f"efficiency must be in (0, 1], got {efficiency}")
    if bright.noise.n_max != dim_odd.n_max:
        raise UsageError("bright and dim inputs use different truncations")
    coeffs = bright.field.coeffs
    odd_amp = np.abs(coeffs[1::2]).max() if len(coeffs) > 1 else 0.0
    if odd_amp > 1e-12:
        raise UsageError(
            "bright input carries coherent content on odd modes "
            f"(max |coeff| = {odd_amp:.3e}); the combiner assumes even-only"
        )
    n_max = bright.noise.n_max
    even_q, odd_q = _parity_masks(n_max)
    even_block = dim_odd.matrix[np.ix_(even_q, even_q)]
    if np.abs(even_block - np.eye(even_block.shape[0])).max() > 1e-9:
        raise UsageError("dim input carries non-vacuum noise on even modes")
    out = np.eye(2 * (n_max + 2))
    out[np.ix_(even_q, even_q)] = bright.noise.matrix[np.ix_(even_q, even_q)]
    odd_in = dim_odd.matrix[np.ix_(odd_q, odd_q)]
    out[np.ix_(odd_q, odd_q)] = efficiency * odd_in + (1.0 - efficiency) * np.eye(
        odd_in.shape[0]
    )
    return replace(bright, noise=NoiseCovariance(out, n_max))


def _mode_rotation_angles(n_max: int, dphi: float) -> np.ndarray:
    """Gouy rotation angle per tracked mode; the tail slot rotates as the first
    mode beyond the truncation."""
    orders = np.arange(n_max + 2, dtype=float)
    orders[n_max + 1] = n_max + 2
    return -orders * dphi


def propagate(state: BeamState, z: float) -> BeamState:
    """Move the beam to plane z; mode n picks up Gouy phase -n * dphi relative
    to the carrier, and the covariance rotates accordingly."""
    dphi = gouy_phase(z, state.geom) - gouy_phase(state.z, state.geom)
    if dphi == 0.0:
        return replace(state, z=z)
    n_max = state.n_max
    orders = np.arange(n_max + 1)
    coeffs = state.field.coeffs * np.exp(-1j * orders * dphi)
    noise = state.noise.rotated(_mode_rotation_angles(n_max, dphi))
    return BeamState(field=replace(state.field, coeffs=coeffs), noise=noise, z=z)
