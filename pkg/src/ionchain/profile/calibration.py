from __future__ import annotations

import numpy as np
from scipy.stats import linregress

from ..units import DomainError
from .types import MagnificationFit


def calibrate_magnification(stage_positions, image_positions, pixel_size: float) -> MagnificationFit:
    """Magnification from a stage scan: OLS slope (pixels per metre) times pixel size.

    The sign of the slope (image inversion) is dropped.
    """
    s = np.asarray(stage_positions, dtype=float)
    p = np.asarray(image_positions, dtype=float)
    if s.shape != p.shape or s.ndim != 1:
        raise DomainError("stage and image positions must be 1-D arrays of equal length")
    if len(s) < 3:
        raise DomainError(f"magnification fit needs at least 3 samples, got {len(s)}")
    if len(np.unique(s)) < 2 or np.ptp(s) == 0:
        raise DomainError("stage positions are degenerate (rank-deficient regression)")
    if len(np.unique(s)) != len(s):
        raise DomainError("stage positions must be distinct")
    if not pixel_size > 0:
        raise DomainError("pixel_size must be positive")
    fit = linregress(s, p)
    resid = p - (fit.intercept + fit.slope * s)
    return MagnificationFit(
        magnification=abs(fit.slope) * pixel_size,
        sigma=float(fit.stderr) * pixel_size,
        residuals=resid,
        intercept_px=float(fit.intercept),
    )
