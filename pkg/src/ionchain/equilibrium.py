"""Exact equilibria of ions in a harmonic trap by direct energy minimisation.

Positions are dimensionless, in units of the two-body length ``l``, so the
energy in units of ``m wz^2 l^2`` is::

    E(u) = sum_i u_i^2 / 2 + sum_{i<j} 1 / |u_i - u_j|

The minimiser is a damped Newton iteration. Its Hessian is strictly
diagonally dominant for any ordered configuration, so a Cholesky failure (and
the steepest-descent fallback) only happens for degenerate input. Gradients
and the iterate are carried in ``numpy.longdouble``; the linear solve is
float64. This keeps the gradient norm meaningful below 1e-12 for chains of a
few hundred ions, where rounding of float64 positions alone produces
residual forces of that size.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .dubin import LOG_CONST, SpacingSample
from .units import DomainError

EXT = np.longdouble

GTOL = 1e-12
MAX_ITER = 500


class ConvergenceError(RuntimeError):
    """Newton iteration did not reach the gradient tolerance."""

    def __init__(self, message, positions, grad_norm, iterations):
        super().__init__(message)
        self.positions = positions
        self.grad_norm = grad_norm
        self.iterations = iterations


@dataclass(frozen=True)
class ChainConfiguration:
    """Ordered equilibrium positions in units of ``l``.

    ``positions`` keeps the extended-precision iterate; use :meth:`as_float`
    for plain float64 work.
    """

    positions: np.ndarray
    grad_norm: float = 0.0
    iterations: int = 0
    energy_history: tuple = field(default=(), repr=False)

    def __post_init__(self):
        u = self.positions
        if u.ndim != 1 or len(u) < 1:
            raise DomainError("configuration needs a 1-D array of at least one position")
        if len(u) > 1 and not np.all(np.diff(u) > 0):
            raise DomainError("configuration positions must be strictly increasing")

    @property
    def n_ions(self) -> int:
        return len(self.positions)

    def as_float(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)


@dataclass(frozen=True)
class StabilityResult:
    """Largest ``(wz/wr)^2`` for which the linear chain is a local minimum."""

    critical_ratio: float
    n_ions: int
    lambda_max: float

    def margin(self, rho: float) -> float:
        """Relative distance below threshold: positive means stable."""
        return 1.0 - rho / self.critical_ratio

    def is_stable(self, rho: float) -> bool:
        return rho < self.critical_ratio


def _pair_terms(u):
    d = u[:, None] - u[None, :]
    n = len(u)
    idx = np.arange(n)
    d[idx, idx] = 1
    if n > 1 and np.any(np.abs(d[~np.eye(n, dtype=bool)]) == 0):
        raise DomainError("coincident ion positions")
    return d


def chain_energy(u) -> float:
    """Dimensionless trap + Coulomb energy of an axial configuration."""
    u = np.asarray(u)
    if len(u) == 1:
        return float(0.5 * u[0] ** 2)
    d = _pair_terms(u)
    iu = np.triu_indices(len(u), 1)
    return 0.5 * np.sum(u * u) + np.sum(1 / np.abs(d[iu]))


def chain_gradient(u):
    u = np.asarray(u)
    if len(u) == 1:
        return u.copy()
    d = _pair_terms(u)
    f = np.sign(d) / (d * d)
    np.fill_diagonal(f, 0)
    return u - f.sum(axis=1)


def chain_hessian(u):
    u = np.asarray(u)
    if len(u) == 1:
        return np.ones((1, 1), dtype=u.dtype)
    d = _pair_terms(u)
    off = -2 / np.abs(d) ** 3
    np.fill_diagonal(off, 0)
    H = off
    np.fill_diagonal(H, 1 - off.sum(axis=1))
    return H


def initial_guess(n_ions: int) -> np.ndarray:
    """Equal-charge quantiles of the parabolic fluid density.

    Solves ``3t - t^3 = 4q - 2`` for ``t = z/L`` at ``q = (i + 1/2)/N``.
    """
    if n_ions == 1:
        return np.zeros(1)
    L = (3 * n_ions) ** (1 / 3) * (math.log(n_ions) + LOG_CONST) ** (1 / 3)
    q = (np.arange(n_ions) + 0.5) / n_ions
    t = 2 * np.sin(np.arcsin((4 * q - 2) / 2) / 3)
    return L * t


def solve_equilibrium(n_ions: int, gtol: float = GTOL, max_iter: int = MAX_ITER) -> ChainConfiguration:
    """Minimise the chain energy for ``n_ions`` ions; deterministic."""
    if n_ions < 1:
        raise DomainError(f"n_ions must be >= 1, got {n_ions}")
    u = initial_guess(n_ions).astype(EXT)
    energy = chain_energy(u)
    history = [float(energy)]
    eps = np.finfo(EXT).eps
    gnorm = math.inf
    for it in range(max_iter + 1):
        g = chain_gradient(u)
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= gtol:
            return ChainConfiguration(u, gnorm, it, tuple(history))
        if it == max_iter:
            break
        H = chain_hessian(u).astype(float)
        g64 = g.astype(float)
        try:
            p = -cho_solve(cho_factor(H), g64)
        except LinAlgError:
            p = -g64
        p = p.astype(EXT)
        slope = float(np.dot(g, p))
        noise = 64 * eps * abs(float(energy))
        alpha = 1.0
        while True:
            trial = u + EXT(alpha) * p
            if n_ions == 1 or np.all(np.diff(trial) > 0):
                e_trial = chain_energy(trial)
                if e_trial <= energy + 1e-4 * alpha * slope:
                    break
                # at the rounding floor of E the Armijo test is meaningless;
                # accept a full step that still reduces the force
                if abs(slope) <= noise and float(np.max(np.abs(chain_gradient(trial)))) < gnorm:
                    e_trial = min(e_trial, energy)
                    break
            alpha *= 0.5
            if alpha < 1e-12:
                raise ConvergenceError(
                    f"line search failed at iteration {it} (|grad|_inf = {gnorm:.3e})", u, gnorm, it
                )
        u = trial
        energy = e_trial
        history.append(float(energy))
    raise ConvergenceError(
        f"no convergence in {max_iter} iterations for N = {n_ions} (|grad|_inf = {gnorm:.3e})", u, gnorm, max_iter
    )


def min_spacing_numeric(cfg: ChainConfiguration) -> float:
    if cfg.n_ions < 2:
        raise DomainError("a single ion has no spacing")
    return float(np.min(np.diff(cfg.positions)))


def spacings_with_midpoints(cfg: ChainConfiguration, scale: float = 1.0) -> list[SpacingSample]:
    """Adjacent-pair spacings located at pair midpoints, multiplied by ``scale``."""
    u = cfg.positions
    mid = (u[1:] + u[:-1]) / 2
    gap = np.diff(u)
    return [SpacingSample(float(m) * scale, float(a) * scale) for m, a in zip(mid, gap)]


def transverse_coupling_matrix(u) -> np.ndarray:
    """``A_ii = sum_k 1/|u_i-u_k|^3``, ``A_ij = -1/|u_i-u_j|^3``."""
    u = np.asarray(u, dtype=float)
    d = _pair_terms(u)
    A = -1 / np.abs(d) ** 3
    np.fill_diagonal(A, 0)
    np.fill_diagonal(A, -A.sum(axis=1))
    return A


def zigzag_critical_ratio(n_ions: int, cfg: ChainConfiguration | None = None) -> StabilityResult:
    """Linear-chain stability threshold for cylindrically symmetric radial confinement.

    Transverse stiffness in units of ``wz^2`` is ``(wr/wz)^2 I - A``; the chain
    buckles once ``(wr/wz)^2`` drops to the largest eigenvalue of ``A``.
    """
    if n_ions < 2:
        raise DomainError(f"stability threshold needs n_ions >= 2, got {n_ions}")
    if cfg is None:
        cfg = solve_equilibrium(n_ions)
    lam = float(np.linalg.eigvalsh(transverse_coupling_matrix(cfg.as_float()))[-1])
    return StabilityResult(1.0 / lam, n_ions, lam)


def write_configuration_csv(cfg: ChainConfiguration, path, length_scale_m: float | None = None):
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["index", "position_l_units"] + (["position_um"] if length_scale_m is not None else [])
        w.writerow(header)
        for i, u in enumerate(cfg.as_float()):
            row = [i, repr(float(u))]
            if length_scale_m is not None:
                row.append(repr(float(u * length_scale_m * 1e6)))
            w.writerow(row)


def sweep_equilibria(ns, max_workers: int | None = None) -> dict[int, ChainConfiguration]:
    """Solve a batch of chain sizes as independent processes."""
    ns = list(ns)
    if max_workers == 1 or len(ns) < 2:
        return {n: solve_equilibrium(n) for n in ns}
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return dict(zip(ns, pool.map(solve_equilibrium, ns)))
