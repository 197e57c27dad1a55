"""Ion-number diagnostic: central spacing average, estimators, uncertainty budget.

Uncertainty components are independent and combined in quadrature. For an
estimator ``N(a0 / l)`` with log-derivative ``k = d ln N / d ln a0``::

    sigma_N / N = |k| * sqrt((sigma_a0/a0)^2 + (sigma_M/M)^2 + ((2/3) sigma_wz/wz)^2)

where the magnification term enters because ``a0`` is measured through the
imaging scale.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import dubin
from .dubin import SpacingSample, homogeneity_dispersion
from .units import DomainError, Frequency, IonSpecies, Length, length_scale

SCHEMA_VERSION = "1.0"

AXIAL = "axial_frequency"
SPACING = "spacing_statistics"
MAGNIFICATION = "magnification"

MIN_CENTRAL = 4
SAFETY_FACTOR = 1.5

# Rf calibration of the reference trap: omega_x / 2 pi = (157 +- 1) kHz * V_rf / 2000 V
CAL_REFERENCE_VOLTAGE = 2000.0


@dataclass(frozen=True)
class TrapModel:
    """Secular frequencies of a linear trap.

    ``rf_calibration_slope`` is the radial frequency reached at
    ``CAL_REFERENCE_VOLTAGE`` of rf amplitude, i.e. ``omega_x`` scales as
    ``slope * v_rf / 2000 V``.
    """

    omega_z: Frequency
    omega_x: Frequency | None = None
    v_rf: float | None = None
    v_dc: float | None = None
    rf_calibration_slope: Frequency = field(default_factory=lambda: Frequency.from_khz(157.0, 1.0))

    def resolved_omega_x(self) -> Frequency:
        if self.omega_x is not None:
            return self.omega_x
        if self.v_rf is None:
            raise DomainError("trap has neither omega_x nor v_rf")
        return omega_x_from_vrf(self.v_rf, self)


@dataclass(frozen=True)
class NumberBudget:
    law: str
    n_real: float
    n: int
    sigma: float
    components: dict  # component name -> sigma_N contribution (ions)

    @property
    def rel_sigma(self) -> float:
        return self.sigma / self.n_real

    def to_dict(self) -> dict:
        return {
            "law": self.law,
            "n_real": self.n_real,
            "n": self.n,
            "sigma": self.sigma,
            "rel_sigma": self.rel_sigma,
            "components": dict(self.components),
        }


@dataclass(frozen=True)
class EstimateReport:
    a0_mean: Length
    a0_stderr: Length
    n_central_used: int | None
    n_dubin: NumberBudget
    n_james: NumberBudget
    dominant_uncertainty: str
    inputs: dict

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "a0_mean_um": self.a0_mean.um,
            "a0_sigma_um": self.a0_mean.sigma_um,
            "a0_stderr_um": self.a0_stderr.um,
            "n_central_used": self.n_central_used,
            "n_dubin": self.n_dubin.to_dict(),
            "n_james": self.n_james.to_dict(),
            "dominant_uncertainty": self.dominant_uncertainty,
            "reference_budget_quotes": {"body": "+-5%", "conclusion": "+-4.5%"},
            "inputs": self.inputs,
        }


def _central_subset(samples: list[SpacingSample], n_central: int, center: float | None):
    if n_central < 2:
        raise DomainError("n_central must be >= 2")
    if n_central - 1 > len(samples):
        raise DomainError(f"n_central = {n_central} needs {n_central - 1} spacings, only {len(samples)} available")
    z = np.array([s.position for s in samples])
    a = np.array([s.spacing for s in samples])
    if center is None:
        center = dubin.parabolic_center(z, a) if len(samples) >= 3 else float(z.mean())
    order = np.argsort(np.abs(z - center), kind="stable")[: n_central - 1]
    return a[np.sort(order)]


def average_central_spacing(
    samples: list[SpacingSample], n_central: int, center: float | None = None
) -> tuple[Length, Length]:
    """Mean and standard error of the ``n_central - 1`` spacings nearest the chain centre.

    ``center`` defaults to the vertex of a parabola fitted to ``1/a(z)``.
    """
    a = _central_subset(samples, n_central, center)
    mean = float(a.mean())
    spread = len(a) > 1 and a.max() > a.min()
    stderr = float(a.std(ddof=1) / math.sqrt(len(a))) if spread else 0.0
    return Length(mean, stderr), Length(stderr)


def empirical_dispersion(samples: list[SpacingSample], n_central: int, center: float | None = None) -> float:
    """Relative peak-to-peak spread ``(max a - min a) / min a`` of the central spacings."""
    a = _central_subset(samples, n_central, center)
    return float((a.max() - a.min()) / a.min())


def choose_n_central(
    samples: list[SpacingSample],
    dispersion_target: float,
    n_ions_guess: int,
    center: float | None = None,
) -> int:
    """Number of central ions to average.

    Candidates run from ``MIN_CENTRAL`` up to the count allowed by
    ``dispersion_target`` through the homogeneity law; the largest candidate
    whose measured spread stays within ``SAFETY_FACTOR`` times the law's
    value is returned, or ``MIN_CENTRAL`` if none does.
    """
    n_avail = len(samples) + 1
    if n_avail < MIN_CENTRAL or n_ions_guess < MIN_CENTRAL:
        return MIN_CENTRAL
    cap = min(dubin.central_count_for_dispersion(n_ions_guess, dispersion_target), n_avail, n_ions_guess)
    best = MIN_CENTRAL
    for na in range(MIN_CENTRAL, cap + 1):
        floor = homogeneity_dispersion(na, n_ions_guess)
        if empirical_dispersion(samples, na, center) <= SAFETY_FACTOR * floor:
            best = na
    return best


def _budget(law, est, dlogn, a0: Length, l: Length, mag_rel_sigma: float) -> NumberBudget:
    k = abs(dlogn)
    comps = {
        AXIAL: k * l.rel_sigma * est.n_real,
        SPACING: k * a0.rel_sigma * est.n_real,
        MAGNIFICATION: k * mag_rel_sigma * est.n_real,
    }
    total = math.sqrt(sum(v * v for v in comps.values()))
    return NumberBudget(law, est.n_real, est.n, total, comps)


def estimate_report(
    a0_mean: Length,
    species: IonSpecies,
    omega_z: Frequency,
    magnification_rel_sigma: float = 0.0,
    a0_stderr: Length | None = None,
    n_central_used: int | None = None,
) -> EstimateReport:
    """Run both number estimators and propagate the input uncertainties.

    ``a0_mean.sigma`` is the spacing uncertainty used in the budget.
    """
    if not a0_mean.value > 0:
        raise DomainError("a0 must be positive")
    if magnification_rel_sigma < 0:
        raise DomainError("magnification uncertainty must be >= 0")
    l = length_scale(species, omega_z)
    nd = dubin.estimate_n_dubin(a0_mean, l)
    nj = dubin.estimate_n_james(a0_mean, l)
    bd = _budget("dubin", nd, dubin.dlogn_dloga0_dubin(nd.n_real), a0_mean, l, magnification_rel_sigma)
    bj = _budget("james", nj, dubin.dlogn_dloga0_james(), a0_mean, l, magnification_rel_sigma)
    dominant = max(bd.components, key=bd.components.get)
    inputs = {
        "a0_um": a0_mean.um,
        "a0_err_um": a0_mean.sigma_um,
        "species": {"name": species.name, "mass_amu": species.mass_amu, "charge_e": species.charge},
        "fz_khz": omega_z.khz,
        "fz_err_khz": omega_z.sigma_khz,
        "magnification_rel_sigma": magnification_rel_sigma,
        "length_scale_um": l.um,
        "length_scale_err_um": l.sigma_um,
    }
    return EstimateReport(
        a0_mean,
        a0_stderr if a0_stderr is not None else Length(a0_mean.sigma),
        n_central_used,
        bd,
        bj,
        dominant,
        inputs,
    )


def diagnose_spacings(
    samples: list[SpacingSample],
    species: IonSpecies,
    omega_z: Frequency,
    dispersion_target: float = 0.02,
    magnification_rel_sigma: float = 0.0,
    n_central: int | None = None,
) -> EstimateReport:
    """Full diagnostic from measured spacings.

    The ion number needed by the homogeneity law is unknown, so it is seeded
    from the single central spacing, ``N_a`` is chosen, and the choice is
    repeated once with the refined estimate.
    """
    l = length_scale(species, omega_z)
    if n_central is None:
        a_min, _ = average_central_spacing(samples, 2)
        n_guess = dubin.estimate_n_dubin(a_min, l).n
        for _ in range(2):
            n_central = choose_n_central(samples, dispersion_target, n_guess)
            mean, _ = average_central_spacing(samples, n_central)
            n_guess = dubin.estimate_n_dubin(mean, l).n
    mean, stderr = average_central_spacing(samples, n_central)
    return estimate_report(mean, species, omega_z, magnification_rel_sigma, stderr, n_central)


def axial_frequency_from_vdc(v_dc: float, reference: Frequency, v_ref: float = 2000.0) -> Frequency:
    """Axial frequency from the endcap voltage, scaling as ``sqrt(V_dc)`` from a reference point."""
    if not (v_dc > 0 and v_ref > 0):
        raise DomainError("V_dc and the reference voltage must be positive")
    f = math.sqrt(v_dc / v_ref)
    return Frequency(reference.value * f, reference.sigma * f)


def radial_frequency(trap: TrapModel) -> Frequency:
    """``omega_r^2 = omega_x^2 - omega_z^2 / 2`` with first-order uncertainty."""
    wx = trap.resolved_omega_x()
    wz = trap.omega_z
    r2 = wx.value**2 - wz.value**2 / 2
    if not r2 > 0:
        raise DomainError(
            f"omega_x = {wx.khz:.4g} kHz does not exceed omega_z / sqrt(2) = {wz.khz / math.sqrt(2):.4g} kHz"
        )
    wr = math.sqrt(r2)
    sigma = math.hypot(wx.value * wx.sigma, 0.5 * wz.value * wz.sigma) / wr
    return Frequency(wr, sigma)


def aspect_ratio(trap: TrapModel) -> tuple[float, float]:
    """``rho = omega_z^2 / omega_r^2`` and its uncertainty."""
    wr = radial_frequency(trap)
    wz = trap.omega_z
    rho = (wz.value / wr.value) ** 2
    return rho, rho * 2 * math.hypot(wz.rel_sigma if wz.value else 0.0, wr.rel_sigma)


def omega_x_from_vrf(v_rf: float, trap: TrapModel | None = None) -> Frequency:
    """Radial frequency from the linear rf calibration; ``v_rf = 0`` gives 0 with a warning."""
    slope = (trap.rf_calibration_slope if trap is not None else Frequency.from_khz(157.0, 1.0))
    if v_rf < 0:
        raise DomainError("v_rf must be >= 0")
    if v_rf == 0:
        warnings.warn("v_rf = 0: no radial confinement", RuntimeWarning, stacklevel=2)
    f = v_rf / CAL_REFERENCE_VOLTAGE
    return Frequency(slope.value * f, slope.sigma * f)
