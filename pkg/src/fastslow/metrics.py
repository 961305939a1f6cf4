"""Convergence metrics: weak errors, exact empirical Wasserstein-1 and rate fits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .effective import EffectiveSDE, limit_sample, semigroup_mc
from .ensemble import DEFAULT_BLOCK, Ensemble
from .errors import DegenerateFitError, SizeMismatchError
from .lie import pairwise_distances
from .multiscale import DEFAULT_THETA, MultiscaleSystem, slow_marginal
from .observables import Observable

EXACT_MAX = 4096
BOOTSTRAP_RESAMPLES = 200
BOOTSTRAP_MAX = 512
LIMIT_STEP = 0.01
# Seed offsets keeping the two sides of every comparison on disjoint streams.
LIMIT_STREAM_OFFSET = 1 << 40
FLOOR_STREAM_OFFSET = 1 << 41


@dataclass(frozen=True)
class WeakError:
    error: float
    pooled_se: float
    approx_mean: float
    limit_mean: float


def weak_error(f: Observable, sys: MultiscaleSystem, sde: EffectiveSDE, T: float, n_paths: int,
               limit_paths: int | None = None, theta: float = DEFAULT_THETA, limit_h: float = LIMIT_STEP,
               master_seed: int = 0, block_size: int = DEFAULT_BLOCK, workers: int = 1) -> WeakError:
    """``|E f(y^eps_{T/eps}) - P_T f(y0)|`` with the pooled standard error of both sides.

    The limit side draws from streams starting at ``LIMIT_STREAM_OFFSET``,
    disjoint from the fast-slow side.
    """
    limit_paths = n_paths if limit_paths is None else limit_paths
    ens = slow_marginal(sys, T, n_paths, theta, master_seed, block_size, workers)
    m1, s1 = ens.mean(f)
    lim = semigroup_mc(f, sys.y0, sde, T, limit_h, limit_paths, master_seed, block_size, workers,
                       first_stream=LIMIT_STREAM_OFFSET)
    return WeakError(abs(m1 - lim.estimate), math.hypot(s1, lim.std_error), m1, lim.estimate)


@dataclass(frozen=True)
class W1Result:
    w1: float
    ci: tuple[float, float]
    flagged: int


def _assignment_cost(cost: np.ndarray) -> float:
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].mean())


def wasserstein1(a: Ensemble, b: Ensemble, bootstrap: int = BOOTSTRAP_RESAMPLES, seed: int = 0,
                 level: float = 0.95) -> W1Result:
    """Exact empirical W1 under the geodesic distance, with an m-out-of-n bootstrap interval.

    The assignment problem is solved exactly by a Jonker-Volgenant type
    shortest augmenting path method. The bootstrap redraws ``m = min(n, 512)``
    points from each side, re-solves, and rescales the spread of the
    replicates around the full-sample value by ``sqrt(m / n)``.
    """
    n = len(a)
    if len(b) != n:
        raise SizeMismatchError(f"ensembles have sizes {len(a)} and {len(b)}")
    if n > EXACT_MAX:
        raise SizeMismatchError(f"exact assignment is limited to {EXACT_MAX} points, got {n}")
    if a.spec != b.spec:
        raise SizeMismatchError("ensembles live on different groups")
    cost, flagged = pairwise_distances(a.spec, a.states, b.states)
    w1 = _assignment_cost(cost)
    if bootstrap <= 0 or n < 2:
        return W1Result(w1, (w1, w1), flagged)
    m = min(n, BOOTSTRAP_MAX)
    rng = np.random.default_rng(seed)
    reps = np.empty(bootstrap)
    for r in range(bootstrap):
        i = rng.integers(n, size=m)
        j = rng.integers(n, size=m)
        reps[r] = _assignment_cost(cost[np.ix_(i, j)])
    dev = (reps - reps.mean()) * math.sqrt(m / n)
    lo_q, hi_q = np.quantile(dev, [(1 - level) / 2, (1 + level) / 2])
    return W1Result(w1, (max(0.0, w1 + lo_q), w1 + hi_q), flagged)


@dataclass(frozen=True)
class RateFit:
    eps_values: tuple
    errors: tuple
    exponent: float
    exponent_ci: tuple[float, float]
    intercept: float
    model_ratios: tuple

    def summary(self) -> str:
        lo, hi = self.exponent_ci
        ratios = ", ".join(f"{r:.6g}" for r in self.model_ratios)
        return (f"exponent = {self.exponent:.6g}\nexponent_ci = [{lo:.6g}, {hi:.6g}]\n"
                f"intercept = {self.intercept:.6g}\nmodel_ratios = [{ratios}]")


def _wls(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    a = np.stack([np.ones_like(x), x], -1) * np.sqrt(w)[:, None]
    coef, *_ = np.linalg.lstsq(a, y * np.sqrt(w), rcond=None)
    return float(coef[1]), float(coef[0])


def rate_fit(eps, errors, ses, bootstrap: int = 2000, seed: int = 0, level: float = 0.95) -> RateFit:
    """Weighted least squares of ``log error`` on ``log eps``.

    The weights are ``(error / se)^2`` (delta method for the log). The
    exponent interval comes from a parametric bootstrap that redraws each
    error from ``N(error, se^2)``; draws that are not positive are redrawn
    as the absolute value.
    """
    eps = np.asarray(eps, dtype=float)
    err = np.asarray(errors, dtype=float)
    ses = np.asarray(ses, dtype=float)
    if not len(eps) == len(err) == len(ses) or len(eps) < 3:
        raise ValueError("need at least three (eps, error, se) triples")
    if np.any(np.diff(eps) >= 0):
        raise ValueError("eps values must be strictly decreasing")
    if np.any(err <= 0):
        raise DegenerateFitError("errors must be positive")
    if np.all(err <= 2.0 * ses):
        raise DegenerateFitError("errors are indistinguishable from zero at the given standard errors")
    x, y = np.log(eps), np.log(err)
    w = np.where(ses > 0, (err / np.where(ses > 0, ses, 1.0)) ** 2, 1.0)
    if np.all(ses == 0):
        w = np.ones_like(err)
    slope, icpt = _wls(x, y, w)
    if np.any(ses > 0) and bootstrap > 0:
        rng = np.random.default_rng(seed)
        draws = np.abs(err + ses * rng.standard_normal((bootstrap, len(err))))
        draws = np.maximum(draws, 1e-300)
        slopes = np.array([_wls(x, np.log(d), w)[0] for d in draws])
        ci = tuple(float(q) for q in np.quantile(slopes, [(1 - level) / 2, (1 + level) / 2]))
    else:
        ci = (slope, slope)
    ratios = tuple(float(e / (s * math.sqrt(abs(math.log(s))))) for e, s in zip(err, eps))
    return RateFit(tuple(eps), tuple(err), slope, ci, icpt, ratios)


@dataclass(frozen=True)
class WassersteinStudy:
    eps_values: tuple
    w1: tuple
    ci: tuple
    sampling_floor: float
    floor_ci: tuple[float, float]
    fit: RateFit | None
    fit_note: str


def wasserstein_convergence(sys: MultiscaleSystem, sde: EffectiveSDE, T: float, eps_grid, n: int,
                            master_seed: int = 0, theta: float = DEFAULT_THETA, limit_h: float = LIMIT_STEP,
                            bootstrap: int = BOOTSTRAP_RESAMPLES, workers: int = 1) -> WassersteinStudy:
    """W1 between each eps-marginal and a limit sample, plus the floor between two limit samples.

    The fit uses only the eps values whose W1 exceeds twice the floor; when
    fewer than three remain it is omitted and ``fit_note`` says why.
    """
    eps_grid = tuple(float(e) for e in eps_grid)
    ref = limit_sample(sde, sys.y0, T, limit_h, n, master_seed, first_stream=LIMIT_STREAM_OFFSET, workers=workers)
    ref2 = limit_sample(sde, sys.y0, T, limit_h, n, master_seed, first_stream=FLOOR_STREAM_OFFSET, workers=workers)
    floor = wasserstein1(ref, ref2, bootstrap, seed=master_seed)
    vals, cis, ses = [], [], []
    for e in eps_grid:
        ens = slow_marginal(sys.with_epsilon(e), T, n, theta, master_seed, workers=workers)
        r = wasserstein1(ens, ref, bootstrap, seed=master_seed)
        vals.append(r.w1)
        cis.append(r.ci)
        ses.append((r.ci[1] - r.ci[0]) / (2 * 1.96))
    keep = [i for i, v in enumerate(vals) if v > 2.0 * floor.w1]
    fit, note = None, ""
    if len(keep) >= 3:
        try:
            fit = rate_fit([eps_grid[i] for i in keep], [vals[i] for i in keep], [ses[i] for i in keep])
        except DegenerateFitError as exc:
            note = str(exc)
    else:
        note = f"only {len(keep)} eps values exceed twice the sampling floor; no fit"
    return WassersteinStudy(eps_grid, tuple(vals), tuple(cis), floor.w1, floor.ci, fit, note)
