"""CSV / JSON helpers shared by the command-line pipelines.

Writers are deterministic: fixed column order, ``repr`` floats, sorted JSON
keys, ``\\n`` line endings. Nothing time-dependent is ever written.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .dubin import SpacingSample
from .profile.types import FluorescenceProfile
from .units import DomainError


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps_json(obj), encoding="utf-8")


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_spacings_csv(path, samples: list[SpacingSample]):
    write_csv(path, ["midpoint_um", "spacing_um"], [(s.position * 1e6, s.spacing * 1e6) for s in samples])


def read_spacings_csv(path) -> list[SpacingSample]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [SpacingSample(float(r["midpoint_um"]) * 1e-6, float(r["spacing_um"]) * 1e-6) for r in csv.DictReader(fh)]


def write_frame_csv(path, profile: FluorescenceProfile):
    write_csv(path, ["pixel_index", "intensity"], ((i, float(v)) for i, v in enumerate(profile.intensities)))


def read_frame_csv(path, pixel_size: float, nominal_offset: float) -> FluorescenceProfile:
    idx, val = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            idx.append(int(r["pixel_index"]))
            val.append(float(r["intensity"]))
    if idx != list(range(len(idx))):
        raise DomainError(f"{path}: pixel_index must run 0..n-1 without gaps")
    return FluorescenceProfile(np.array(val), pixel_size, nominal_offset)


def read_manifest(path):
    """Load a frame manifest; returns (magnification, mag_rel_sigma, [(profile, file), ...])."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        mag = float(data["magnification"])
        default_px = data.get("pixel_size_um")
        frames = []
        for entry in data["frames"]:
            px = float(entry.get("pixel_size_um", default_px)) * 1e-6
            f = path.parent / entry["file"]
            frames.append((read_frame_csv(f, px, float(entry["nominal_offset_um"]) * 1e-6), f))
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"{path}: invalid manifest ({exc})") from exc
    return mag, float(data.get("magnification_rel_sigma", 0.0)), frames


def write_manifest(path, magnification, pixel_size_um, entries, magnification_rel_sigma=0.0):
    write_json(
        path,
        {
            "magnification": magnification,
            "magnification_rel_sigma": magnification_rel_sigma,
            "pixel_size_um": pixel_size_um,
            "frames": [{"file": f, "nominal_offset_um": off} for f, off in entries],
        },
    )
