"""Fluorescence-profile pipeline: synthetic frames, peaks, stitching, calibration."""

from .types import FitError, FluorescenceProfile, MagnificationFit, PeakSet, StitchError, StitchResult
from .synth import SyntheticFrame, centered_first_offset, frame_geometry_offsets, generate_synthetic_frame, render_chain_frames
from .peaks import detect_peaks, fit_multigaussian
from .stitch import stitch_frames, stitched_spacings
from .calibration import calibrate_magnification
from .density import DensityFit, fit_density_profile

__all__ = [
    "DensityFit",
    "FitError",
    "FluorescenceProfile",
    "MagnificationFit",
    "PeakSet",
    "StitchError",
    "StitchResult",
    "SyntheticFrame",
    "calibrate_magnification",
    "centered_first_offset",
    "detect_peaks",
    "fit_density_profile",
    "fit_multigaussian",
    "frame_geometry_offsets",
    "generate_synthetic_frame",
    "render_chain_frames",
    "stitch_frames",
    "stitched_spacings",
]
