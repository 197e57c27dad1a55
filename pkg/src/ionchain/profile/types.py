from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..units import DomainError

SENSOR_WIDTH = 1024


class FitError(RuntimeError):
    """Peak fit diverged or produced an unphysical peak."""

    def __init__(self, message, peak_index=None):
        super().__init__(message)
        self.peak_index = peak_index


class StitchError(RuntimeError):
    """Frames could not be registered against each other."""

    def __init__(self, message, frames=()):
        super().__init__(message)
        self.frames = tuple(frames)


@dataclass(frozen=True)
class FluorescenceProfile:
    """Vertically binned intensity of one camera frame.

    ``frame_offset_nominal`` is the object-space position (metres, stage
    reading) imaged onto pixel 0; pixel ``p`` images
    ``offset + p * pixel_size / magnification``.
    """

    intensities: np.ndarray
    pixel_size: float
    frame_offset_nominal: float = 0.0

    def __post_init__(self):
        y = np.asarray(self.intensities, dtype=float)
        object.__setattr__(self, "intensities", y)
        if y.ndim != 1 or len(y) == 0:
            raise DomainError("profile must be a non-empty 1-D array")
        if len(y) > SENSOR_WIDTH:
            raise DomainError(f"profile has {len(y)} pixels, sensor width is {SENSOR_WIDTH}")
        if not np.all(np.isfinite(y)) or np.any(y < 0):
            raise DomainError("intensities must be finite and non-negative")
        if not self.pixel_size > 0:
            raise DomainError("pixel_size must be positive")

    @property
    def n_pixels(self) -> int:
        return len(self.intensities)

    def to_object(self, pixels, magnification: float, offset: float | None = None):
        off = self.frame_offset_nominal if offset is None else offset
        return off + np.asarray(pixels, dtype=float) * self.pixel_size / magnification


@dataclass
class PeakSet:
    """Gaussian peaks in pixel coordinates (``widths`` are standard deviations)."""

    centers: np.ndarray
    widths: np.ndarray
    amplitudes: np.ndarray
    center_sigma: np.ndarray | None = None
    baseline: float = 0.0
    residual_norm: float | None = None

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float)
        self.widths = np.asarray(self.widths, dtype=float)
        self.amplitudes = np.asarray(self.amplitudes, dtype=float)
        if self.center_sigma is None:
            self.center_sigma = np.full(len(self.centers), np.nan)
        self.center_sigma = np.asarray(self.center_sigma, dtype=float)
        n = len(self.centers)
        if not (len(self.widths) == len(self.amplitudes) == len(self.center_sigma) == n):
            raise DomainError("peak arrays must have equal length")
        if n > 1 and not np.all(np.diff(self.centers) > 0):
            raise DomainError("peak centers must be strictly increasing")
        if np.any(self.widths <= 0):
            raise DomainError("peak widths must be positive")

    def __len__(self):
        return len(self.centers)

    def is_resolvable(self) -> bool:
        if len(self) < 2:
            return True
        return bool(np.min(np.diff(self.centers)) > 3 * np.median(self.widths))

    def to_dict(self) -> dict:
        return {
            "centers_px": self.centers.tolist(),
            "center_sigma_px": [None if not np.isfinite(s) else float(s) for s in self.center_sigma],
            "widths_px": self.widths.tolist(),
            "amplitudes": self.amplitudes.tolist(),
            "baseline": float(self.baseline),
            "residual_norm": None if self.residual_norm is None else float(self.residual_norm),
        }

    @classmethod
    def empty(cls) -> "PeakSet":
        return cls(np.empty(0), np.empty(0), np.empty(0))


@dataclass
class StitchResult:
    global_positions: np.ndarray
    fitted_offsets: np.ndarray
    redundancy_counts: list[int]
    total_count: int
    offset_increment_errors: np.ndarray
    warnings: list[str] = field(default_factory=list)
    position_sigma: np.ndarray | None = None

    @property
    def flagged(self) -> bool:
        return bool(self.warnings)

    def to_dict(self) -> dict:
        return {
            "total_count": int(self.total_count),
            "redundancy_counts": [int(c) for c in self.redundancy_counts],
            "fitted_offsets_um": (np.asarray(self.fitted_offsets) * 1e6).tolist(),
            "offset_increment_errors_um": (np.asarray(self.offset_increment_errors) * 1e6).tolist(),
            "global_positions_um": (np.asarray(self.global_positions) * 1e6).tolist(),
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class MagnificationFit:
    magnification: float
    sigma: float
    residuals: np.ndarray
    intercept_px: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["residuals_px"] = np.asarray(d.pop("residuals")).tolist()
        return d
