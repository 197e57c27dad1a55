"""Closed-form laws for long harmonic ion chains and their inversions.

Local-density (charged fluid) description::

    1/a(z) = (3N / 4L) (1 - (z - z0)^2 / L^2)
    L      = l (3N)^(1/3) Lambda(N)^(1/3)
    a0     = 4 l (3N)^(-2/3) Lambda(N)^(1/3),   Lambda(N) = ln N + ln 6 + gamma_e - 13/5

and the empirical molecular-dynamics law ``a0 = 2.018 l N^-0.559``.

All lengths are :class:`~ionchain.units.Length` in metres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .units import DomainError, Frequency, IonSpecies, Length, axial_frequency_from_length_scale

EULER_GAMMA = 0.577215664901533
LOG_CONST = math.log(6.0) + EULER_GAMMA - 13.0 / 5.0

JAMES_PREFACTOR = 2.018
JAMES_EXPONENT = 0.559

N_MAX_INVERSION = 1e7

# Lambda(N) = 1/2 is where d ln a0 / d ln N changes sign; below it the
# Dubin spacing grows with N.
N_TURNING = math.exp(0.5 - LOG_CONST)


@dataclass(frozen=True)
class DensityModelParams:
    n_ions: int
    half_length: Length
    center: float = 0.0

    def __post_init__(self):
        if self.n_ions < 2:
            raise DomainError(f"density model needs n_ions >= 2, got {self.n_ions}")
        if not self.half_length.value > 0:
            raise DomainError("half_length must be positive")


@dataclass(frozen=True)
class SpacingSample:
    """Spacing ``a`` of one adjacent pair, located at the pair midpoint."""

    position: float
    spacing: float

    def __post_init__(self):
        if not self.spacing > 0:
            raise DomainError(f"spacing must be positive, got {self.spacing}")


@dataclass(frozen=True)
class NumberEstimate:
    n_real: float
    n: int


def _log_factor(n) -> float:
    if n < 2:
        raise DomainError(f"chain laws need n_ions >= 2, got {n}")
    return math.log(n) + LOG_CONST


def local_spacing(z: float, params: DensityModelParams) -> float:
    """Nearest-neighbour distance at axial position ``z`` (metres)."""
    L = params.half_length.value
    x = (z - params.center) / L
    if abs(x) >= 1.0:
        raise DomainError(f"|z - z0| = {abs(z - params.center):.6g} m is outside the chain half-length {L:.6g} m")
    return 4.0 * L / (3.0 * params.n_ions) / (1.0 - x * x)


def inverse_spacing(z, n_ions: int, half_length: float, center: float = 0.0):
    """Vectorised ``1/a(z)``; goes negative outside the chain (used by fits)."""
    x = (z - center) / half_length
    return 3.0 * n_ions / (4.0 * half_length) * (1.0 - x * x)


def half_length(n_ions: int, l: Length) -> Length:
    factor = (3.0 * n_ions) ** (1.0 / 3.0) * _log_factor(n_ions) ** (1.0 / 3.0)
    return l.scaled(factor)


def min_spacing_dubin(n_ions: float, l: Length) -> Length:
    factor = 4.0 * (3.0 * n_ions) ** (-2.0 / 3.0) * _log_factor(n_ions) ** (1.0 / 3.0)
    return l.scaled(factor)


def min_spacing_james(n_ions: float, l: Length) -> Length:
    if n_ions < 2:
        raise DomainError(f"chain laws need n_ions >= 2, got {n_ions}")
    return l.scaled(JAMES_PREFACTOR * n_ions ** (-JAMES_EXPONENT))


def dlogn_dloga0_dubin(n_real: float) -> float:
    """``d ln N / d ln a0`` along the Dubin law (equals ``-d ln N / d ln l``)."""
    return 1.0 / (-2.0 / 3.0 + 1.0 / (3.0 * _log_factor(n_real)))


def dlogn_dloga0_james() -> float:
    return -1.0 / JAMES_EXPONENT


def _check_positive(**kw):
    for name, q in kw.items():
        if not q.value > 0:
            raise DomainError(f"{name} must be positive, got {q.value}")


def estimate_n_dubin(a0: Length, l: Length) -> NumberEstimate:
    """Invert the Dubin minimum-spacing law for the ion number.

    The root is bracketed in ``ln N`` and refined with Brent's method to
    1e-12 in ``ln N``. The law is not monotone for ``2 <= N < 2.08``; the
    returned root is on the decreasing branch except for ``a0`` equal to the
    two-ion value, which maps to N = 2.
    """
    _check_positive(a0=a0, l=l)
    ratio = a0.value / l.value
    g = lambda logn: math.log(min_spacing_dubin(math.exp(logn), Length(1.0)).value) - math.log(ratio)
    a_two = min_spacing_dubin(2, Length(1.0)).value
    a_top = min_spacing_dubin(N_MAX_INVERSION, Length(1.0)).value
    if ratio > a_two * (1 + 1e-12):
        raise DomainError(
            f"a0/l = {ratio:.6g} exceeds the two-ion spacing {a_two:.6g}: no chain of N >= 2 ions has this spacing"
        )
    if ratio < a_top:
        raise DomainError(f"a0/l = {ratio:.6g} implies N > {N_MAX_INVERSION:.0e}; outside the bracket")
    if ratio >= a_two * (1 - 1e-12):
        logn = math.log(2.0)
    else:
        logn = brentq(g, math.log(N_TURNING), math.log(N_MAX_INVERSION), xtol=1e-13, rtol=1e-15, maxiter=200)
    n_real = math.exp(logn)
    return NumberEstimate(n_real, int(round(n_real)))


def estimate_n_james(a0: Length, l: Length) -> NumberEstimate:
    _check_positive(a0=a0, l=l)
    n_real = (JAMES_PREFACTOR * l.value / a0.value) ** (1.0 / JAMES_EXPONENT)
    return NumberEstimate(n_real, int(round(n_real)))


def axial_freq_from_length(half_length_measured: Length, n_ions: int, species: IonSpecies) -> Frequency:
    """Axial frequency for which the fluid half-length of ``n_ions`` equals the input."""
    _check_positive(half_length_measured=half_length_measured)
    unit = half_length(n_ions, Length(1.0)).value
    l = half_length_measured.scaled(1.0 / unit)
    return axial_frequency_from_length_scale(species, l)


def homogeneity_dispersion(n_central: int, n_ions: int) -> float:
    """Relative spread of the spacing over the ``n_central`` innermost ions, ``(2 Na / 3N)^2``."""
    if n_central < 2:
        raise DomainError(f"n_central must be >= 2, got {n_central}")
    if n_central > n_ions:
        raise DomainError(f"n_central = {n_central} exceeds n_ions = {n_ions}")
    return (2.0 * n_central / (3.0 * n_ions)) ** 2


def central_count_for_dispersion(n_ions: int, max_dispersion: float) -> int:
    """Largest ``Na`` with ``(2 Na / 3N)^2 <= max_dispersion``; may return 0 or 1."""
    if not 0 < max_dispersion < (2.0 / 3.0) ** 2:
        raise DomainError(f"max_dispersion must be in (0, 4/9), got {max_dispersion}")
    disp = lambda k: (2.0 * k / (3.0 * n_ions)) ** 2
    k = math.floor(1.5 * n_ions * math.sqrt(max_dispersion))
    # guard the floor against rounding on exact boundary values
    while disp(k + 1) <= max_dispersion:
        k += 1
    while k > 0 and disp(k) > max_dispersion:
        k -= 1
    return min(k, n_ions)


def parabolic_center(positions, spacings) -> float:
    """Chain centre from a linear least-squares parabola through ``1/a(z)``.

    Falls back to the mean position when the curvature is not negative.
    """
    z = np.asarray(positions, dtype=float)
    inv_a = 1.0 / np.asarray(spacings, dtype=float)
    if len(z) < 3:
        return float(z.mean())
    shift = z.mean()
    c2, c1, _ = np.polyfit(z - shift, inv_a, 2)
    if c2 >= 0:
        return float(shift)
    return float(shift - c1 / (2.0 * c2))
