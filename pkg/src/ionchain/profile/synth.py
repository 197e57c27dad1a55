"""Synthetic camera frames standing in for recorded chain images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..units import DomainError
from .types import SENSOR_WIDTH, FluorescenceProfile


@dataclass(frozen=True)
class SyntheticFrame:
    profile: FluorescenceProfile
    true_offset: float
    centers_px: np.ndarray  # true image centres of the ions that land on the sensor
    ion_indices: np.ndarray  # indices into the input position array for ``centers_px``
    clipped: tuple  # indices of ions imaged outside the sensor


def generate_synthetic_frame(
    ion_positions,
    magnification: float,
    pixel_size: float,
    psf_sigma: float,
    amplitude: float,
    noise_seed: int = 0,
    noise_model: str = "none",
    *,
    frame_offset: float = 0.0,
    nominal_offset: float | None = None,
    n_pixels: int = SENSOR_WIDTH,
    background: float = 0.0,
) -> SyntheticFrame:
    """Render ions (object-space metres) as Gaussian spots on a 1-D sensor.

    ``frame_offset`` is the true object position imaged on pixel 0 and
    ``nominal_offset`` the stage reading stored in the profile (defaults to the
    true one). ``psf_sigma`` is given in object space. Poisson shot noise uses
    ``numpy.random.default_rng(noise_seed)``; with ``noise_model="none"`` the
    seed is ignored.
    """
    x = np.asarray(ion_positions, dtype=float)
    if len(x) > 1 and np.any(np.diff(x) < 0):
        raise DomainError("ion positions must be sorted")
    if not psf_sigma > 0:
        raise DomainError("psf_sigma must be positive")
    if noise_model not in ("none", "poisson"):
        raise DomainError(f"unknown noise model {noise_model!r}")
    scale = magnification / pixel_size
    centers = (x - frame_offset) * scale
    s = psf_sigma * scale
    pix = np.arange(n_pixels, dtype=float)
    model = np.full(n_pixels, float(background))
    # spots further than 8 sigma from the sensor contribute nothing representable
    near = (centers > -8 * s) & (centers < n_pixels - 1 + 8 * s)
    for c in centers[near]:
        model += amplitude * np.exp(-0.5 * ((pix - c) / s) ** 2)
    if noise_model == "poisson":
        model = np.random.default_rng(noise_seed).poisson(model).astype(float)
    inside = (centers >= 0) & (centers <= n_pixels - 1)
    profile = FluorescenceProfile(
        model, pixel_size, frame_offset if nominal_offset is None else nominal_offset
    )
    return SyntheticFrame(
        profile,
        frame_offset,
        centers[inside],
        np.flatnonzero(inside),
        tuple(int(i) for i in np.flatnonzero(~inside)),
    )


def frame_geometry_offsets(
    n_frames: int, step: float, first_offset: float, jitter: float = 0.0, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Nominal and true frame offsets for a one-directional stage scan.

    Each translation after the first frame picks up an independent error drawn
    uniformly from ``[-jitter, jitter]``, so true offsets random-walk away from
    the stage readings.
    """
    nominal = first_offset + step * np.arange(n_frames)
    if n_frames > 1 and jitter > 0:
        errors = np.random.default_rng(seed).uniform(-jitter, jitter, n_frames - 1)
    else:
        errors = np.zeros(max(n_frames - 1, 0))
    true = nominal + np.concatenate([[0.0], np.cumsum(errors)])
    return nominal, true


def render_chain_frames(
    ion_positions,
    *,
    n_frames: int,
    step: float,
    first_offset: float,
    magnification: float,
    pixel_size: float,
    psf_sigma: float,
    amplitude: float,
    background: float = 0.0,
    jitter: float = 0.0,
    noise_model: str = "none",
    seed: int = 0,
    n_pixels: int = SENSOR_WIDTH,
) -> list[SyntheticFrame]:
    """Image a chain with a translated objective, one frame per stage position."""
    nominal, true = frame_geometry_offsets(n_frames, step, first_offset, jitter, seed)
    return [
        generate_synthetic_frame(
            ion_positions,
            magnification,
            pixel_size,
            psf_sigma,
            amplitude,
            noise_seed=seed + 1000 + k,
            noise_model=noise_model,
            frame_offset=true[k],
            nominal_offset=nominal[k],
            n_pixels=n_pixels,
            background=background,
        )
        for k in range(n_frames)
    ]


def centered_first_offset(
    n_frames: int, step: float, magnification: float, pixel_size: float, n_pixels: int = SENSOR_WIDTH, center: float = 0.0
) -> float:
    """Stage reading for the first frame such that the middle frame is centred on ``center``."""
    return center - 0.5 * (n_frames - 1) * step - 0.5 * (n_pixels - 1) * pixel_size / magnification
