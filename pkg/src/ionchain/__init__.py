"""Number and homogeneity diagnostic for long one-dimensional ion chains."""

__version__ = "0.1.0"

from .units import CA40, DomainError, Frequency, IonSpecies, Length, get_species, length_scale
from .dubin import (
    DensityModelParams,
    SpacingSample,
    axial_freq_from_length,
    central_count_for_dispersion,
    estimate_n_dubin,
    estimate_n_james,
    half_length,
    homogeneity_dispersion,
    local_spacing,
    min_spacing_dubin,
    min_spacing_james,
)
from .equilibrium import (
    ChainConfiguration,
    ConvergenceError,
    StabilityResult,
    chain_energy,
    min_spacing_numeric,
    solve_equilibrium,
    spacings_with_midpoints,
    zigzag_critical_ratio,
)
from .estimation import (
    EstimateReport,
    TrapModel,
    average_central_spacing,
    choose_n_central,
    estimate_report,
    omega_x_from_vrf,
    radial_frequency,
)
