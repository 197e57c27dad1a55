import numpy as np
import pytest

from ionchain import CA40, Frequency, length_scale, solve_equilibrium
from ionchain.equilibrium import spacings_with_midpoints
from ionchain.profile import (
    centered_first_offset,
    detect_peaks,
    fit_multigaussian,
    render_chain_frames,
    stitch_frames,
)

FZ = Frequency.from_khz(2.95, 0.13)
MAG = 11.58
PIXEL = 13e-6
STEP = 1e-3
N_FRAMES = 5


@pytest.fixture(scope="session")
def l_ref():
    return length_scale(CA40, FZ)


@pytest.fixture(scope="session")
def chain155():
    return solve_equilibrium(155)


@pytest.fixture(scope="session")
def positions155(chain155, l_ref):
    return chain155.as_float() * l_ref.value


@pytest.fixture(scope="session")
def samples155(chain155, l_ref):
    return spacings_with_midpoints(chain155, l_ref.value)


def run_pipeline(positions, *, seed=0, first_offset=None, jitter=5e-6, noise_model="poisson"):
    """Render the five-frame scan, fit every frame and stitch; returns (frames, stitch result)."""
    if first_offset is None:
        first_offset = centered_first_offset(N_FRAMES, STEP, MAG, PIXEL)
    frames = render_chain_frames(
        positions,
        n_frames=N_FRAMES,
        step=STEP,
        first_offset=first_offset,
        magnification=MAG,
        pixel_size=PIXEL,
        psf_sigma=2e-6,
        amplitude=200.0,
        background=2.0,
        jitter=jitter,
        noise_model=noise_model,
        seed=seed,
    )
    fitted = [(f.profile, fit_multigaussian(f.profile, detect_peaks(f.profile))) for f in frames]
    return frames, stitch_frames(fitted, MAG)


@pytest.fixture(scope="session")
def pipeline155(positions155):
    return run_pipeline(positions155, seed=0)


def rel(a, b):
    return abs(a - b) / abs(b)


__all__ = ["FZ", "MAG", "PIXEL", "STEP", "N_FRAMES", "run_pipeline", "rel", "np"]
