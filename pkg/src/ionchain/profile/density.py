from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from ..dubin import DensityModelParams, SpacingSample, inverse_spacing, parabolic_center
from ..units import DomainError, Length
from .types import FitError


@dataclass(frozen=True)
class DensityFit:
    params: DensityModelParams
    residuals: np.ndarray  # 1/a data minus model, 1/m
    rms: float

    @property
    def full_length(self) -> float:
        return 2.0 * self.params.half_length.value

    def curve(self, n_points: int = 512):
        """Model spacing sampled across the open interval ``(z0 - L, z0 + L)``."""
        L = self.params.half_length.value
        z0 = self.params.center
        t = np.linspace(-1, 1, n_points + 2)[1:-1]
        z = z0 + L * t
        return z, 1.0 / inverse_spacing(z, self.params.n_ions, L, z0)


def fit_density_profile(samples: list[SpacingSample], n_ions: int) -> DensityFit:
    """Least-squares fit of ``1/a(z)`` to the parabolic density with ``N`` held fixed.

    Free parameters are the centre ``z0`` and half-length ``L``.
    """
    if len(samples) < 3:
        raise DomainError(f"density fit needs at least 3 samples, got {len(samples)}")
    if n_ions < 2:
        raise DomainError("n_ions must be >= 2")
    z = np.array([s.position for s in samples], dtype=float)
    inv_a = 1.0 / np.array([s.spacing for s in samples], dtype=float)

    z0 = parabolic_center(z, 1.0 / inv_a)
    L0 = 3.0 * n_ions / (4.0 * inv_a.max())
    L0 = max(L0, 1.05 * np.max(np.abs(z - z0)))
    # dimensionless unknowns keep the solver well scaled
    scale = L0

    def resid(q):
        return (inverse_spacing(z, n_ions, q[1] * scale, q[0] * scale) - inv_a) * scale

    res = least_squares(resid, [z0 / scale, 1.0], xtol=1e-15, ftol=1e-15, gtol=1e-15, method="lm")
    if not res.success:
        raise FitError(f"density fit failed: {res.message}")
    zc, L = res.x[0] * scale, abs(res.x[1]) * scale
    if np.any(np.abs(z - zc) >= L):
        raise FitError("samples lie outside the fitted chain half-length")
    params = DensityModelParams(n_ions, Length(L), zc)
    r = inv_a - inverse_spacing(z, n_ions, L, zc)
    return DensityFit(params, r, float(np.sqrt(np.mean(r * r))))
