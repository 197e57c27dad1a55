"""Registration of translated frames through the ions they share."""

from __future__ import annotations

import numpy as np

from ..dubin import SpacingSample
from .types import FluorescenceProfile, PeakSet, StitchError, StitchResult

STAGE_TOLERANCE = 5e-6  # m, per translation
WARN_FACTOR = 3.0
LATTICE_SHIFTS = (0, -1, 1, -2, 2)  # registration hypotheses, in local spacings
POSITION_FLOOR_PX = 0.01  # floor on per-peak position sigma in the mismatch score
MISSING_PAIR_PENALTY = 9.0  # chi-square cost of each shared ion a hypothesis fails to pair


def _match(prev_x, pred_x, gate, frames):
    """Nearest-neighbour correspondence; returns (prev_idx, new_idx) arrays."""
    pairs = []
    for j, x in enumerate(pred_x):
        cand = np.flatnonzero(np.abs(prev_x - x) < gate)
        if len(cand) > 1:
            raise StitchError(
                f"ambiguous correspondence between frames {frames[0]} and {frames[1]}: "
                f"{len(cand)} candidates within {gate * 1e6:.2f} um of peak {j}",
                frames,
            )
        if len(cand) == 1:
            pairs.append((int(cand[0]), j))
    if not pairs:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    prev_idx, new_idx = map(np.array, zip(*pairs))
    if len(set(prev_idx.tolist())) != len(prev_idx):
        raise StitchError(f"two peaks of frame {frames[1]} claim the same ion of frame {frames[0]}", frames)
    return prev_idx, new_idx


def _register(prev_x, pred, gate, frames):
    """Match, fit the rigid shift, and rematch once with it applied."""
    prev_idx, new_idx = _match(prev_x, pred, gate, frames)
    shift = float(np.mean(prev_x[prev_idx] - pred[new_idx])) if len(prev_idx) else 0.0
    prev_idx, new_idx = _match(prev_x, pred + shift, gate, frames)
    shift = float(np.mean(prev_x[prev_idx] - pred[new_idx])) if len(prev_idx) else shift
    return prev_idx, new_idx, shift


def _best_registration(prev_x, prev_var, pred, pred_var, gate, spacing, stage_tolerance, frames):
    """Pick the lattice registration with the lowest mismatch-plus-stage-prior score.

    Nearest-neighbour matching alone cannot tell a stage error near one
    spacing from a correct placement; the chain's spacing gradient can, so
    alternatives shifted by whole local spacings are scored as well. An
    ambiguous match under the nominal hypothesis is an error; under an
    alternative it just discards that alternative.
    """
    trials = []
    for h in LATTICE_SHIFTS if np.isfinite(spacing) else (0,):
        base = h * spacing if h else 0.0
        try:
            prev_idx, new_idx, shift = _register(prev_x, pred + base, gate, frames)
        except StitchError:
            if h == 0:
                raise
            continue
        if len(prev_idx) >= 2:
            trials.append((prev_idx, new_idx, base + shift))
    if not trials:
        return np.empty(0, dtype=int), np.empty(0, dtype=int), 0.0

    def score(t):
        prev_idx, new_idx, total = t
        x = pred + total
        r = prev_x[prev_idx] - x[new_idx]
        chi2 = float(np.sum(r * r / (prev_var[prev_idx] + pred_var[new_idx])))
        # every peak inside the common span should have found a partner
        lo, hi = x.min() - gate, prev_x.max() + gate
        in_new = int(np.sum(x <= hi))
        in_prev = int(np.sum(prev_x >= lo))
        missing = (in_new - len(new_idx)) + (in_prev - len(prev_idx))
        return chi2 + (total / stage_tolerance) ** 2 + MISSING_PAIR_PENALTY * missing

    return min(trials, key=score)


def _median_spacing(x):
    return float(np.median(np.diff(np.sort(x)))) if len(x) > 1 else np.inf


def stitch_frames(
    frames: list[tuple[FluorescenceProfile, PeakSet]],
    magnification: float,
    gate_fraction: float = 0.5,
    stage_tolerance: float = STAGE_TOLERANCE,
) -> StitchResult:
    """Fold frames left to right into one list of distinct ion positions.

    For every adjacent pair the later frame is placed at its nominal
    translation from the already-registered frame, peaks are paired by
    nearest neighbour inside a gate of ``gate_fraction`` times the local
    median spacing, and the rigid offset minimising the squared mismatch
    (the mean difference) is applied. Matching is repeated once with the
    refined offset. Registrations displaced by whole local spacings are
    scored against the nominal one (see :func:`_best_registration`), so a
    stage error close to one spacing is caught and flagged rather than
    silently aliased. Shared ions are merged by averaging.
    """
    if not frames:
        raise StitchError("no frames to stitch")
    nominal = np.array([f.frame_offset_nominal for f, _ in frames], dtype=float)
    if len(frames) > 1 and np.any(np.diff(nominal) <= 0):
        raise StitchError("frames must be ordered by increasing nominal offset")

    def local_x(k, offset):
        prof, peaks = frames[k]
        return offset + peaks.centers * prof.pixel_size / magnification

    def local_sig(k):
        prof, peaks = frames[k]
        s = np.nan_to_num(peaks.center_sigma, nan=0.0)
        return s * prof.pixel_size / magnification

    def floor2(k):
        return (POSITION_FLOOR_PX * frames[k][0].pixel_size / magnification) ** 2

    fitted = [float(nominal[0])]
    x0 = local_x(0, fitted[0])
    sums = list(x0)
    counts = [1] * len(x0)
    var = list(local_sig(0) ** 2)
    owner = list(range(len(x0)))  # global index of each peak of the previous frame
    prev_x = x0
    prev_var = local_sig(0) ** 2 + floor2(0)
    redundancy, increments, warnings = [], [], []

    for k in range(1, len(frames)):
        guess = fitted[-1] + (nominal[k] - nominal[k - 1])
        pred = local_x(k, guess)
        # local spacing: previous-frame peaks inside the nominal overlap
        overlap = prev_x[prev_x >= pred.min()] if len(pred) else prev_x
        spacing = _median_spacing(overlap if len(overlap) >= 3 else prev_x)
        gate = gate_fraction * spacing
        pred_var = local_sig(k) ** 2 + floor2(k)
        prev_idx, new_idx, shift = _best_registration(
            prev_x, prev_var, pred, pred_var, gate, spacing, stage_tolerance, (k - 1, k)
        )
        if len(prev_idx) < 2:
            raise StitchError(f"frames {k - 1} and {k} share {len(prev_idx)} ions; at least 2 are needed", (k - 1, k))
        offset = guess + shift
        fitted.append(offset)
        dev = (offset - fitted[-2]) - (nominal[k] - nominal[k - 1])
        increments.append(dev)
        if abs(dev) > WARN_FACTOR * stage_tolerance:
            warnings.append(
                f"translation {k - 1}->{k} deviates {dev * 1e6:+.2f} um from the stage reading "
                f"(tolerance {stage_tolerance * 1e6:.1f} um)"
            )
        redundancy.append(len(prev_idx))

        xk = local_x(k, offset)
        sk = local_sig(k)
        matched = dict(zip(new_idx.tolist(), prev_idx.tolist()))
        new_owner = []
        for j, x in enumerate(xk):
            if j in matched:
                g = owner[matched[j]]
                sums[g] += x
                counts[g] += 1
                var[g] += sk[j] ** 2
            else:
                g = len(sums)
                sums.append(x)
                counts.append(1)
                var.append(sk[j] ** 2)
            new_owner.append(g)
        owner = new_owner
        prev_x = xk
        prev_var = sk**2 + floor2(k)

    counts_arr = np.array(counts, dtype=float)
    pos = np.array(sums) / counts_arr
    sig = np.sqrt(np.array(var)) / counts_arr
    order = np.argsort(pos, kind="stable")
    return StitchResult(
        global_positions=pos[order],
        fitted_offsets=np.array(fitted),
        redundancy_counts=redundancy,
        total_count=len(pos),
        offset_increment_errors=np.array(increments),
        warnings=warnings,
        position_sigma=sig[order],
    )


def stitched_spacings(result: StitchResult) -> list[SpacingSample]:
    """Adjacent spacings of the stitched chain at pair midpoints (metres)."""
    x = result.global_positions
    return [SpacingSample(float(m), float(a)) for m, a in zip((x[1:] + x[:-1]) / 2, np.diff(x))]
