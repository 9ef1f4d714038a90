"""Hermite-Gauss mode functions, overlap integrals and split-detector coefficients.

Everything here is one-dimensional (transverse coordinate x) and evaluated in
the waist plane.  The normalized mode of order n is

    u_n(x) = (2 / w0^2)^(1/4) * psi_n(sqrt(2) x / w0),

where psi_n are the unit-norm Hermite functions, so that integral(u_n^2 dx) = 1.
Overlap integrals over products of modes are polynomial-times-Gaussian and are
handled exactly by a Gauss-Hermite rule scaled to the waist; half-line integrals
(split detector, flipped mode) are done with adaptive quadrature subdivided at
x = 0 where the flipped mode's kink sits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import erf, roots_hermite

from .errors import GeometryError, TruncationError, UsageError

DEFAULT_N_MAX = 41
# Node count 4*n_max + 64 needs exp(t_max^2) with t_max^2 ~ 2*nodes; cap so the
# inverse-Gaussian weights stay inside double range.
MAX_N_MAX = 64


@dataclass(frozen=True)
class BeamGeometry:
    """Classical envelope of a Gaussian beam: waist, wavelength, Rayleigh range (all meters)."""

    waist_w0: float
    wavelength_lambda: float
    rayleigh_zR: float = field(init=False)

    def __post_init__(self):
        if self.waist_w0 <= 0:
            raise GeometryError(f"waist_w0 must be > 0, got {self.waist_w0}")
        if self.wavelength_lambda <= 0:
            raise GeometryError(f"wavelength_lambda must be > 0, got {self.wavelength_lambda}")
        object.__setattr__(
            self, "rayleigh_zR", math.pi * self.waist_w0**2 / self.wavelength_lambda
        )

    def validate(self, rel_tol: float = 1e-12) -> None:
        """Recompute the Rayleigh range and compare against the stored value."""
        expected = math.pi * self.waist_w0**2 / self.wavelength_lambda
        if abs(self.rayleigh_zR - expected) > rel_tol * expected:
            raise GeometryError(
                f"rayleigh_zR inconsistent: stored {self.rayleigh_zR}, derived {expected}"
            )


def gouy_phase(z: float, geom: BeamGeometry) -> float:
    """Gouy phase arctan(z / z_R) in (-pi/2, pi/2); odd and strictly increasing in z."""
    return math.atan(z / geom.rayleigh_zR)


def _psi_ladder(xi: np.ndarray, n_max: int) -> np.ndarray:
    """Unit-norm Hermite functions psi_0..psi_n_max at points xi, shape (n_max+1, len(xi)).

    Three-term recurrence with the normalization folded in at every step, so no
    Hermite-polynomial or factorial overflow up to n ~ hundreds.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    out = np.empty((n_max + 1, xi.size))
    out[0] = math.pi**-0.25 * np.exp(-0.5 * xi**2)
    if n_max >= 1:
        out[1] = math.sqrt(2.0) * xi * out[0]
    for n in range(1, n_max):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * xi * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


def hg_amplitude(n: int, x, geom: BeamGeometry, n_max: int = DEFAULT_N_MAX):
    """Normalized waist-plane Hermite-Gauss amplitude u_n(x) in m^-1/2.

    Accepts a scalar or array x; raises TruncationError for n beyond n_max.
    """
    if n < 0:
        raise TruncationError(f"mode index must be >= 0, got {n}")
    if n > n_max:
        raise TruncationError(f"mode index {n} exceeds truncation n_max={n_max}")
    xi = np.sqrt(2.0) * np.asarray(x, dtype=float) / geom.waist_w0
    scale = (2.0 / geom.waist_w0**2) ** 0.25
    vals = scale * _psi_ladder(xi, n)[n]
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(vals[0])
    return vals


class QuadratureGrid:
    """Gauss-Hermite nodes scaled to the waist, with inverse-Gaussian weights.

    overlap() is exact (to rounding) for products of Hermite-Gauss modes up to
    the n_max the grid was built for.
    """

    def __init__(self, geom: BeamGeometry, n_max: int = DEFAULT_N_MAX):
        if n_max < 1:
            raise UsageError(f"n_max must be >= 1, got {n_max}")
        if n_max > MAX_N_MAX:
            raise UsageError(f"n_max={n_max} exceeds supported maximum {MAX_N_MAX}")
        self.geom = geom
        self.n_max = n_max
        n_nodes = 4 * n_max + 64
        t, v = roots_hermite(n_nodes)
        w0 = geom.waist_w0
        self.nodes = w0 * t / math.sqrt(2.0)
        # weight carries the substitution Jacobian and removes the e^{-t^2} factor
        self.weights = (w0 / math.sqrt(2.0)) * v * np.exp(t**2)

    def sample(self, func) -> "Profile":
        """Sample a callable f(x) on the grid nodes."""
        return Profile(self, np.asarray(func(self.nodes), dtype=float))

    def mode_profile(self, n: int) -> "Profile":
        return Profile(self, hg_amplitude(n, self.nodes, self.geom, n_max=self.n_max))

    def flipped_profile(self) -> "Profile":
        """The flipped mode sign(x) * u_0(x), sampled on the grid.

        The kink at x = 0 defeats the smooth rule: overlaps against this profile
        converge only algebraically (about 1e-3 absolute at the default node
        count).  Use flipped_mode_coeffs for accurate flipped-mode overlaps.
        """
        u0 = hg_amplitude(0, self.nodes, self.geom, n_max=self.n_max)
        return Profile(self, np.sign(self.nodes) * u0)


@dataclass
class Profile:
    """A real profile sampled on a QuadratureGrid."""

    grid: QuadratureGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.nodes.shape:
            raise UsageError(
                f"profile has {self.values.shape} values for a grid of {self.grid.nodes.shape}"
            )


def overlap(f: Profile, g: Profile) -> float:
    """Inner product integral(f * g dx) on the common quadrature grid."""
    if f.grid is not g.grid:
        raise UsageError("profiles live on different quadrature grids")
    return float(np.sum(f.grid.weights * f.values * g.values))


def _psi_product(xi: float, n: int) -> float:
    ladder = _psi_ladder(np.array([xi]), n)
    return float(ladder[n, 0] * ladder[0, 0])


@lru_cache(maxsize=256)
def _half_line_coeffs(n_max: int, gap_ratio: float, half_width_ratio: float) -> tuple:
    """c_n over [gap/2, hw] minus [-hw, -gap/2] in waist units, via adaptive quadrature.

    Scale-free: ratios are gap/w0 and half_width/w0.  Subdividing the integral
    at x = 0 keeps each piece smooth regardless of the flipped mode's kink.
    """
    lo = math.sqrt(2.0) * gap_ratio / 2.0
    hi = math.inf if math.isinf(half_width_ratio) else math.sqrt(2.0) * half_width_ratio
    coeffs = []
    for n in range(n_max + 1):
        f = lambda xi, n=n: _psi_product(xi, n)
        pos, _ = integrate.quad(f, lo, hi, epsabs=1e-14, epsrel=1e-14, limit=400)
        neg, _ = integrate.quad(f, -hi, -lo, epsabs=1e-14, epsrel=1e-14, limit=400)
        coeffs.append(pos - neg)
    return tuple(coeffs)


def split_overlap_coeffs(
    n_max: int,
    geom: BeamGeometry,
    gap: float = 0.0,
    half_width: float = math.inf,
) -> np.ndarray:
    """Overlap coefficients c_n of the carrier with mode n over a split detector.

    gap is the dead zone straddling x = 0 and half_width the outer edge of each
    pad (meters; half_width may be inf for the ideal detector).  For the ideal
    geometry the even coefficients vanish and c_1 = sqrt(2/pi).
    """
    if gap < 0:
        raise GeometryError(f"gap must be >= 0, got {gap}")
    if half_width <= gap / 2.0:
        raise GeometryError(f"half_width {half_width} must exceed gap/2 = {gap / 2.0}")
    w0 = geom.waist_w0
    hw_ratio = math.inf if math.isinf(half_width) else half_width / w0
    return np.array(_half_line_coeffs(n_max, gap / w0, hw_ratio))


def flipped_mode_coeffs(n_max: int = DEFAULT_N_MAX) -> np.ndarray:
    """Decomposition of the flipped mode sign(x) u_0(x) onto modes 0..n_max.

    Only odd indices are nonzero; the partial Parseval sum grows toward 1 as
    n_max increases (the flipped mode is not band-limited).  Scale-free, hence
    no geometry argument.
    """
    if n_max < 1:
        raise UsageError(f"n_max must be >= 1, got {n_max}")
    coeffs = np.empty(n_max + 1)
    for n in range(n_max + 1):
        f = lambda xi, n=n: _psi_product(xi, n)
        # integral of u_n * u_f split at the kink: u_f = +u_0 on x>0, -u_0 on x<0
        pos, _ = integrate.quad(f, 0.0, math.inf, epsabs=1e-14, epsrel=1e-14, limit=400)
        neg, _ = integrate.quad(f, -math.inf, 0.0, epsabs=1e-14, epsrel=1e-14, limit=400)
        coeffs[n] = pos - neg
    return coeffs


def detected_power_fraction(
    geom: BeamGeometry, gap: float = 0.0, half_width: float = math.inf
) -> float:
    """Fraction of the carrier power landing on the two detector pads (exact, via erf)."""
    if gap < 0:
        raise GeometryError(f"gap must be >= 0, got {gap}")
    if half_width <= gap / 2.0:
        raise GeometryError(f"half_width {half_width} must exceed gap/2 = {gap / 2.0}")
    w0 = geom.waist_w0
    lo = math.sqrt(2.0) * (gap / 2.0) / w0
    hi = 1.0 if math.isinf(half_width) else erf(math.sqrt(2.0) * half_width / w0)
    return float(hi - erf(lo))


def flipped_captured_fraction(n_max: int = DEFAULT_N_MAX) -> float:
    """Parseval sum of the truncated flipped-mode decomposition, sum(c_n^2) <= 1."""
    c = flipped_mode_coeffs(n_max)
    return float(np.sum(c**2))
