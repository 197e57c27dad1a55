"""Physical constants, ion species, and uncertain scalar quantities.

Everything is stored in SI internally (m, s, kg, C, rad/s). Helpers accept and
report the laboratory units used throughout the package: micrometres, kHz
(ordinary frequency), atomic mass units and elementary charges.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass
from pathlib import Path

# CODATA 2018
CONSTANTS = {
    "elementary_charge": 1.602176634e-19,  # C (exact)
    "atomic_mass_unit": 1.66053906660e-27,  # kg
    "vacuum_permittivity": 8.8541878128e-12,  # F/m
}
E_CHARGE = CONSTANTS["elementary_charge"]
AMU = CONSTANTS["atomic_mass_unit"]
EPS0 = CONSTANTS["vacuum_permittivity"]
COULOMB_K = 1.0 / (4.0 * math.pi * EPS0)

TWO_PI = 2.0 * math.pi

SPECIES_REGISTRY_ENV = "IONCHAIN_SPECIES_REGISTRY"


class DomainError(ValueError):
    """Input lies outside the domain where a model or conversion is defined."""


@dataclass(frozen=True)
class IonSpecies:
    """A trapped particle species.

    Parameters
    ----------
    name : str
        Registry label, e.g. ``"Ca40"``.
    mass_amu : float
        Mass in atomic mass units.
    charge : int
        Charge as an integer multiple of the elementary charge.
    """

    name: str
    mass_amu: float
    charge: int

    def __post_init__(self):
        if not (self.mass_amu > 0 and math.isfinite(self.mass_amu)):
            raise DomainError(f"species {self.name!r}: mass must be positive, got {self.mass_amu}")
        if int(self.charge) != self.charge or self.charge == 0:
            raise DomainError(f"species {self.name!r}: charge must be a non-zero integer, got {self.charge}")

    @property
    def mass(self) -> float:
        """Mass in kg."""
        return self.mass_amu * AMU

    @property
    def charge_si(self) -> float:
        """Charge in coulomb."""
        return self.charge * E_CHARGE

    @staticmethod
    def kg_to_amu(mass_kg: float) -> float:
        return mass_kg / AMU


@dataclass(frozen=True)
class Frequency:
    """Angular frequency in rad/s with a one-sigma uncertainty.

    ``from_hz``/``from_khz`` take ordinary frequencies and multiply by 2*pi;
    ``hz``/``khz`` undo that. No other conversion touches the factor.
    """

    value: float
    sigma: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value >= 0):
            raise DomainError(f"frequency must be finite and non-negative, got {self.value}")
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise DomainError(f"frequency sigma must be >= 0, got {self.sigma}")

    @classmethod
    def from_hz(cls, f_hz: float, sigma_hz: float = 0.0) -> "Frequency":
        return cls(TWO_PI * f_hz, TWO_PI * sigma_hz)

    @classmethod
    def from_khz(cls, f_khz: float, sigma_khz: float = 0.0) -> "Frequency":
        return cls.from_hz(1e3 * f_khz, 1e3 * sigma_khz)

    @property
    def hz(self) -> float:
        return self.value / TWO_PI

    @property
    def khz(self) -> float:
        return self.hz / 1e3

    @property
    def sigma_khz(self) -> float:
        return self.sigma / TWO_PI / 1e3

    @property
    def rel_sigma(self) -> float:
        return self.sigma / self.value if self.value > 0 else math.inf


@dataclass(frozen=True)
class Length:
    """Length in metres with a one-sigma uncertainty."""

    value: float
    sigma: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise DomainError(f"length must be finite, got {self.value}")
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise DomainError(f"length sigma must be >= 0, got {self.sigma}")

    @classmethod
    def from_um(cls, value_um: float, sigma_um: float = 0.0) -> "Length":
        return cls(value_um * 1e-6, sigma_um * 1e-6)

    @property
    def um(self) -> float:
        return self.value * 1e6

    @property
    def sigma_um(self) -> float:
        return self.sigma * 1e6

    @property
    def rel_sigma(self) -> float:
        return self.sigma / abs(self.value) if self.value != 0 else math.inf

    def scaled(self, factor: float) -> "Length":
        return Length(self.value * factor, self.sigma * abs(factor))


def length_scale(species: IonSpecies, omega_z: Frequency) -> Length:
    """Two-body equilibrium length ``l = (Q^2 / 4 pi eps0 m wz^2)^(1/3)``.

    The uncertainty follows first-order propagation, ``sigma_l/l = (2/3) sigma_w/w``.
    """
    if not omega_z.value > 0:
        raise DomainError(f"axial frequency must be positive, got {omega_z.value} rad/s")
    l3 = COULOMB_K * species.charge_si**2 / (species.mass * omega_z.value**2)
    l = l3 ** (1.0 / 3.0)
    return Length(l, l * (2.0 / 3.0) * omega_z.sigma / omega_z.value)


def axial_frequency_from_length_scale(species: IonSpecies, l: Length) -> Frequency:
    """Inverse of :func:`length_scale`."""
    if not l.value > 0:
        raise DomainError(f"length scale must be positive, got {l.value} m")
    w = math.sqrt(COULOMB_K * species.charge_si**2 / (species.mass * l.value**3))
    return Frequency(w, w * 1.5 * l.sigma / l.value)


# Nominal mass number, as in the usual Ca-40+ bookkeeping of chain diagnostics.
CA40 = IonSpecies("Ca40", 40.0, 1)
BUILTIN_SPECIES = {CA40.name: CA40}


def load_species_registry(path: str | os.PathLike | None = None) -> dict[str, IonSpecies]:
    """Return the built-in species merged with entries from an INI registry.

    Each section is one species::

        [Be9]
        mass_amu = 9.012182
        charge_e = 1

    With ``path=None`` the file named by ``$IONCHAIN_SPECIES_REGISTRY`` is used
    when set.
    """
    registry = dict(BUILTIN_SPECIES)
    if path is None:
        path = os.environ.get(SPECIES_REGISTRY_ENV)
        if not path:
            return registry
    path = Path(path)
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    for name in parser.sections():
        sec = parser[name]
        try:
            registry[name] = IonSpecies(name, sec.getfloat("mass_amu"), sec.getint("charge_e"))
        except (TypeError, ValueError) as exc:
            raise DomainError(f"{path}: bad species entry [{name}]: {exc}") from exc
    return registry


def get_species(name: str, registry_path: str | os.PathLike | None = None) -> IonSpecies:
    registry = load_species_registry(registry_path)
    try:
        return registry[name]
    except KeyError:
        raise DomainError(f"unknown species {name!r}; known: {', '.join(sorted(registry))}") from None
