"""Peak detection and multi-Gaussian least-squares fitting of binned profiles."""

from __future__ import annotations

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks, peak_widths

from ..units import DomainError
from .types import FitError, FluorescenceProfile, PeakSet

FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))


def detect_peaks(
    profile: FluorescenceProfile,
    min_prominence: float | None = None,
    edge_margin: float | None = None,
) -> PeakSet:
    """Local maxima whose topographic prominence reaches ``min_prominence``.

    Widths are seeded from the half-maximum crossings. ``None`` picks a
    threshold of a quarter of the profile's dynamic range above its median.
    A second pass enforces a minimum separation of three median widths, so a
    shot-noise dip on top of one spot does not split it. Peaks closer than
    ``edge_margin`` pixels (default two median widths) to either end of the
    sensor are dropped as partially imaged. Returns an empty
    :class:`PeakSet` when nothing qualifies.
    """
    y = profile.intensities
    if min_prominence is None:
        span = float(np.max(y) - np.median(y))
        if span <= 0:
            return PeakSet.empty()
        min_prominence = 0.25 * span
    idx, _ = find_peaks(y, prominence=min_prominence)
    if len(idx) == 0:
        return PeakSet.empty()
    w_med = float(np.median(peak_widths(y, idx, rel_height=0.5)[0])) * FWHM_TO_SIGMA
    idx, _ = find_peaks(y, prominence=min_prominence, distance=max(1.0, 3.0 * w_med))
    margin = 2.0 * w_med if edge_margin is None else edge_margin
    idx = idx[(idx >= margin) & (idx <= len(y) - 1 - margin)]
    if len(idx) == 0:
        return PeakSet.empty()
    widths = np.maximum(peak_widths(y, idx, rel_height=0.5)[0] * FWHM_TO_SIGMA, 0.5)
    centers = idx.astype(float)
    # three-point parabolic refinement of the maximum
    inner = (idx > 0) & (idx < len(y) - 1)
    i = idx[inner]
    ym, y0, yp = y[i - 1], y[i], y[i + 1]
    denom = ym - 2 * y0 + yp
    with np.errstate(divide="ignore", invalid="ignore"):
        shift = np.where(denom < 0, 0.5 * (ym - yp) / denom, 0.0)
    centers[inner] += np.clip(shift, -0.5, 0.5)
    base = float(np.median(y))
    return PeakSet(centers, widths, np.maximum(y[idx] - base, 1e-12), baseline=base)


def _gauss(x, c, w, a):
    return a * np.exp(-0.5 * ((x - c) / w) ** 2)


def _model(params, x):
    k = (len(params) - 1) // 3
    p = params[:-1].reshape(k, 3)
    out = np.full_like(x, params[-1])
    for c, w, a in p:
        out += _gauss(x, c, w, a)
    return out


def _jac(params, x):
    k = (len(params) - 1) // 3
    p = params[:-1].reshape(k, 3)
    J = np.empty((len(x), 3 * k + 1))
    for j, (c, w, a) in enumerate(p):
        t = (x - c) / w
        g = np.exp(-0.5 * t * t)
        J[:, 3 * j] = a * g * t / w
        J[:, 3 * j + 1] = a * g * t * t / w
        J[:, 3 * j + 2] = g
    J[:, -1] = 1.0
    return J


def _initial_baseline(x, init: PeakSet, y):
    far = np.ones(len(x), dtype=bool)
    for c, w in zip(init.centers, init.widths):
        far &= np.abs(x - c) > 4 * w
    return float(np.median(y[far])) if far.sum() >= 5 else float(np.percentile(y, 10))


def fit_multigaussian(
    profile: FluorescenceProfile,
    init: PeakSet,
    window: float = 4.0,
    min_width: float = 0.5,
    weighting: str = "poisson",
) -> PeakSet:
    """Refine peaks by least squares on ``b + sum_k A_k exp(-(x - c_k)^2 / 2 w_k^2)``.

    Each peak is first refined alone in a window of ``+-window`` widths (other
    peaks held at their current estimate, baseline fixed), then all
    parameters and the baseline are polished jointly. Only pixels within
    ``window`` widths of the outermost peaks enter the fit, so spots dropped
    at the sensor edges do not bias it. Centre uncertainties come from the
    joint fit's covariance scaled by the residual variance.

    With ``weighting="poisson"`` the joint fit is repeated with residuals
    divided by ``sqrt(max(model, 1))`` (weights frozen from the unweighted
    solution), which makes the covariance match shot-noise scatter;
    ``"none"`` keeps the unweighted solution. ``residual_norm`` refers to
    the final, possibly weighted, residual vector.
    """
    if weighting not in ("poisson", "none"):
        raise DomainError(f"unknown weighting {weighting!r}")
    y = profile.intensities
    n = len(y)
    x = np.arange(n, dtype=float)
    if len(init) == 0:
        raise FitError("no initial peaks to fit")
    if np.any(init.centers < -0.5) or np.any(init.centers > n - 0.5):
        raise FitError("initial peak outside the profile")

    k = len(init)
    pad = window * float(np.max(init.widths))
    fit_px = (x >= init.centers[0] - pad) & (x <= init.centers[-1] + pad)
    x, y = x[fit_px], y[fit_px]
    p = np.column_stack([init.centers, init.widths, init.amplitudes]).astype(float)
    b = _initial_baseline(x, init, y)

    for j in range(k):
        c, w, a = p[j]
        half = max(window * w, 3.0)
        sel = (x >= c - half) & (x <= c + half)
        if sel.sum() < 4:
            continue
        xs = x[sel]
        others = np.zeros(sel.sum())
        for i in range(k):
            if i != j:
                others += _gauss(xs, *p[i])
        target = y[sel] - b - others
        res = least_squares(
            lambda q: _gauss(xs, *q) - target,
            [c, w, max(a, 1e-12)],
            bounds=([c - half, 0.05, 0.0], [c + half, 10 * half, np.inf]),
            x_scale="jac",
        )
        p[j] = res.x

    x0 = np.concatenate([p.ravel(), [b]])
    lo = np.concatenate([np.tile([-np.inf, 0.05, 0.0], k), [-np.inf]])
    hi = np.full(len(x0), np.inf)
    x0 = np.maximum(x0, lo)
    def polish(start, wts):
        return least_squares(
            lambda q: (_model(q, x) - y) * wts,
            start,
            jac=lambda q: _jac(q, x) * wts[:, None],
            bounds=(lo, hi),
            x_scale="jac",
            xtol=1e-12,
            ftol=1e-12,
            gtol=1e-12,
            max_nfev=200 * len(start),
        )

    res = polish(x0, np.ones(len(x)))
    if res.status > 0 and weighting == "poisson":
        res = polish(res.x, 1.0 / np.sqrt(np.maximum(_model(res.x, x), 1.0)))
    if res.status <= 0:
        raise FitError(f"joint fit did not converge: {res.message}")
    q = res.x[:-1].reshape(k, 3)
    for j, (c, w, a) in enumerate(q):
        if not (-0.5 <= c <= n - 0.5):
            raise FitError(f"peak {j} diverged to pixel {c:.2f}", j)
        if w < min_width:
            raise FitError(f"peak {j} collapsed to width {w:.3f} px", j)
    if k > 1 and not np.all(np.diff(q[:, 0]) > 0):
        j = int(np.argmin(np.diff(q[:, 0])))
        raise FitError(f"peaks {j} and {j + 1} crossed during the fit", j)

    dof = max(len(x) - len(res.x), 1)
    s2 = 2 * res.cost / dof
    try:
        _, sv, vt = np.linalg.svd(res.jac, full_matrices=False)
        keep = sv > sv[0] * 1e-12
        cov = (vt[keep].T / sv[keep] ** 2) @ vt[keep] * s2
        sig = np.sqrt(np.clip(np.diag(cov)[:-1].reshape(k, 3)[:, 0], 0, None))
    except np.linalg.LinAlgError:
        sig = np.full(k, np.nan)
    return PeakSet(
        q[:, 0],
        q[:, 1],
        q[:, 2],
        center_sigma=sig,
        baseline=float(res.x[-1]),
        residual_norm=float(np.sqrt(2 * res.cost)),
    )
