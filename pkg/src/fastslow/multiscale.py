"""Coupled fast-slow simulation and the identity/moment probes built on it.

The slow state solves the random ODE ``dy/dt = sum_k y Y_k alpha_k(z_t)``
on the physical horizon ``[0, T / eps]``. Both processes share one fast grid
of step ``h = theta * eps``; on each step the slow state takes the
exponential-Euler update ``y <- y exp(h sum_k alpha_k(z) Y_k)`` with ``z`` at
the start of the step, then ``z`` takes its own step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ensemble import DEFAULT_BLOCK, Ensemble, run_blocks
from .errors import FastSlowError
from .fast import FastSpec, hormander_check
from .lie import AlgebraVector, GroupElement, GroupSpec, distance_from_identity, exp_matrices
from .observables import Observable
from .poisson import centering_check, solve_poisson_mc, solve_poisson_spectral
from .rng import RngStream

DEFAULT_THETA = 0.1


@dataclass(frozen=True, eq=False)
class MultiscaleSystem:
    """Slow group, slow fields ``Y_k``, coefficients ``alpha_k`` and the fast datum."""

    slow_group: GroupSpec
    slow_fields: tuple[AlgebraVector, ...]
    fast: FastSpec
    alphas: tuple[Observable, ...]
    y0: np.ndarray | None = None
    z0: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "slow_fields", tuple(self.slow_fields))
        object.__setattr__(self, "alphas", tuple(self.alphas))
        if len(self.slow_fields) != len(self.alphas) or not self.alphas:
            raise ValueError("need as many coefficient functions as slow fields, at least one")
        y0 = self.slow_group.identity() if self.y0 is None else np.asarray(self.y0, dtype=self.slow_group.dtype)
        z0 = self.fast.group.identity() if self.z0 is None else np.asarray(self.z0, dtype=self.fast.group.dtype)
        GroupElement(self.slow_group, y0)
        GroupElement(self.fast.group, z0)
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "z0", z0)

    @property
    def epsilon(self) -> float:
        return self.fast.epsilon

    @property
    def m(self) -> int:
        return len(self.alphas)

    @property
    def field_matrices(self) -> np.ndarray:
        return np.array([y.matrix for y in self.slow_fields])

    def with_epsilon(self, epsilon: float) -> "MultiscaleSystem":
        out = MultiscaleSystem(self.slow_group, self.slow_fields, self.fast.with_epsilon(epsilon),
                               self.alphas, self.y0, self.z0)
        out._cache.update({k: v for k, v in self._cache.items() if k in ("validated", "betas")})
        return out

    def validate(self) -> dict:
        """Check centring of every alpha and the strong Hormander condition on the fast fields."""
        if "validated" not in self._cache:
            rep = hormander_check(self.fast.diffusion_fields, target_dim=self.fast.dim)
            if not rep.satisfied:
                raise FastSlowError(f"fast fields generate dimension {rep.generated_dim}, need {rep.target_dim}")
            cents = [centering_check(a, self.fast) for a in self.alphas]
            bad = [a.name for a, c in zip(self.alphas, cents) if not c.centered]
            if bad:
                from .errors import NotCenteredError
                raise NotCenteredError(f"not centred: {', '.join(bad)}")
            self._cache["validated"] = {"hormander": rep, "centering": cents}
        return self._cache["validated"]

    def betas(self, tail_T: float = 20.0, n_paths: int = 20_000, master_seed: int = 0,
              validation_count: int = 4):
        """Poisson solutions for every alpha (spectral on a torus, Monte Carlo otherwise).

        Solutions are cached on first call; later calls return the cached list.
        """
        if "betas" not in self._cache:
            if self.fast.is_torus():
                sols = [solve_poisson_spectral(a, self.fast) for a in self.alphas]
            else:
                sols = [solve_poisson_mc(a, self.fast, tail_T, n_paths, master_seed, validation_count=validation_count)
                        for a in self.alphas]
            self._cache["betas"] = sols
        return self._cache["betas"]


def alpha_evaluator(alphas) -> callable:
    """Batched evaluation ``z -> (B, m)`` of a coefficient list."""
    alphas = list(alphas)
    if all(a.meta.get("kind") == "adjoint" for a in alphas):
        y0 = alphas[0].meta["y0"]
        spec = alphas[0].meta["spec"]
        w = spec.metric_scale * np.conj(np.array([a.meta["mk"] for a in alphas])).reshape(len(alphas), -1).T

        def ev(z):
            ad = (z @ y0 @ np.conj(np.swapaxes(z, -1, -2))).reshape(len(z), -1)
            return np.real(ad @ w)

        return ev
    return lambda z: np.stack([a(z) for a in alphas], -1)


def step_plan(sys: MultiscaleSystem, T: float, theta: float) -> tuple[int, float]:
    """Number of fast steps covering the physical horizon ``T / eps`` and the step used."""
    if not 0.0 < theta <= 0.5:
        raise ValueError("theta must lie in (0, 0.5]")
    eps = sys.epsilon
    horizon = T / eps
    n = max(1, math.ceil(horizon / (theta * eps) - 1e-9))
    return n, horizon / n


def pair_steps(sys: MultiscaleSystem, T: float, theta: float, rng: RngStream, batch: int,
               y0: np.ndarray | None = None, z0: np.ndarray | None = None):
    """Generator over ``(k, y, z, alpha(z))`` after each of the fast steps (``k = 0`` first)."""
    n, h = step_plan(sys, T, theta)
    sys.fast.check_step(h)
    fast = sys.fast
    ev = alpha_evaluator(sys.alphas)
    ys = sys.field_matrices
    y = np.broadcast_to(sys.y0 if y0 is None else y0, (batch, sys.slow_group.n, sys.slow_group.n)).copy()
    z = np.broadcast_to(sys.z0 if z0 is None else z0, (batch, fast.group.n, fast.group.n)).copy()
    m_fast = len(fast.diffusion_fields)
    a = ev(z)
    yield 0, y, z, a
    for k in range(1, n + 1):
        y = y @ exp_matrices(sys.slow_group, h * np.tensordot(a, ys, axes=(-1, 0)))
        if m_fast or fast.drift_field is not None:
            z = z @ fast.increment(rng.normal((batch, m_fast)), h)
        a = ev(z)
        yield k, y, z, a


@dataclass(frozen=True, eq=False)
class PathSample:
    times: np.ndarray
    states: list
    stream_id: int


def simulate_pair(sys: MultiscaleSystem, T: float, theta: float, rng: RngStream, record_grid=None) -> PathSample:
    """One coupled path; ``record_grid`` holds slow-clock times in ``(0, T]`` (default ``[T]``)."""
    if T <= 0:
        raise ValueError("T must be positive")
    n, h = step_plan(sys, T, theta)
    grid = [T] if record_grid is None else sorted(float(t) for t in record_grid)
    want = {}
    for t in grid:
        k = int(round(t / (sys.epsilon * h)))
        if abs(k * sys.epsilon * h - t) > 1e-9 * max(1.0, t) or not 0 <= k <= n:
            raise ValueError(f"record time {t} is not on the fast grid")
        want.setdefault(k, []).append(t)
    times, states = [], []
    for k, y, _, _ in pair_steps(sys, T, theta, rng, 1):
        for t in want.get(k, ()):
            times.append(t)
            states.append(GroupElement(sys.slow_group, y[0].copy()))
    return PathSample(np.array(times), states, rng.stream_id)


def slow_marginal(sys: MultiscaleSystem, T: float, n_paths: int, theta: float = DEFAULT_THETA,
                  master_seed: int = 0, block_size: int = DEFAULT_BLOCK, workers: int = 1,
                  first_stream: int = 0) -> Ensemble:
    """Terminal slow states ``y^eps_{T/eps}`` of ``n_paths`` independent runs."""

    def run(rng, lo, hi):
        y = None
        for _, y, _, _ in pair_steps(sys, T, theta, rng, hi - lo):
            pass
        return y

    parts = run_blocks(run, master_seed, n_paths, block_size, workers, first_stream)
    prov = {"master_seed": master_seed, "first_stream": first_stream, "block_size": block_size,
            "epsilon": sys.epsilon, "T": T, "theta": theta}
    return Ensemble(sys.slow_group, np.concatenate(parts), prov)


@dataclass(frozen=True)
class IdentityReport:
    lhs: float
    rhs: float
    pooled_se: float
    difference_se: float
    allowance: float
    passed: bool


def ito_reduction_check(sys: MultiscaleSystem, f: Observable, t: float, n_paths: int,
                        theta: float = DEFAULT_THETA, master_seed: int = 0, betas=None,
                        block_size: int = DEFAULT_BLOCK, workers: int = 1) -> IdentityReport:
    """Monte Carlo check of the averaged Ito-reduction identity on common paths.

    ``lhs = E f(y_{t/eps}) - f(y0)`` and
    ``rhs = eps sum_j [E (L_j f)(y_end) beta_j(z_end) - (L_j f)(y0) beta_j(z0)]
    - eps sum_ij int_0^{t/eps} E (L_i L_j f)(y_r) alpha_i(z_r) beta_j(z_r) dr``.
    Passes when ``|lhs - rhs| <= 3 pooled_se + 10 theta eps``.
    """
    a_mat = f.trace_matrix if f.trace_matrix is not None else f._require()
    eps = sys.epsilon
    if betas is None:
        betas = [s.beta for s in sys.betas()]
    betas = list(betas)
    ys = sys.field_matrices
    m = sys.m
    n_steps, h = step_plan(sys, t, theta)
    pair = np.einsum("iab,jbc->ijac", ys, ys).reshape(m * m, -1)  # Y_i Y_j, flattened
    const_f = not np.any(a_mat)

    def lj(y):
        if const_f:
            return np.zeros((len(y), m))
        p = np.einsum("ab,kbc->kac", a_mat, y).reshape(len(y), -1)
        return np.real(p @ ys.transpose(0, 2, 1).reshape(m, -1).T)

    def lij(y):
        if const_f:
            return np.zeros((len(y), m * m))
        p = np.einsum("ab,kbc->kac", a_mat, y).reshape(len(y), -1)
        n = y.shape[-1]
        pt = pair.reshape(m * m, n, n).transpose(0, 2, 1).reshape(m * m, -1)
        return np.real(p @ pt.T)

    def run(rng, lo, hi):
        b = hi - lo
        integ = np.zeros(b)
        prev = None
        first_b = None
        for k, y, z, a in pair_steps(sys, t, theta, rng, b):
            bz = np.stack([bt(z) for bt in betas], -1)
            cur = np.einsum("ki,kj,kij->k", a, bz, lij(y).reshape(b, m, m))
            if k == 0:
                first_b = np.sum(lj(y) * bz, -1)
            else:
                integ += 0.5 * h * (prev + cur)
            prev = cur
            last = (y, bz)
        y_end, bz_end = last
        lhs = f(y_end) - f(sys.y0[None])[0]
        rhs = eps * (np.sum(lj(y_end) * bz_end, -1) - first_b) - eps * integ
        return lhs, rhs

    parts = run_blocks(run, master_seed, n_paths, block_size, workers)
    lhs = np.concatenate([p[0] for p in parts])
    rhs = np.concatenate([p[1] for p in parts])
    n = len(lhs)
    se_l = float(np.std(lhs, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    se_r = float(np.std(rhs, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    se_d = float(np.std(lhs - rhs, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    pooled = math.hypot(se_l, se_r)
    allowance = 10.0 * theta * eps
    gap = abs(float(lhs.mean() - rhs.mean()))
    return IdentityReport(float(lhs.mean()), float(rhs.mean()), pooled, se_d, allowance,
                          gap <= 3.0 * pooled + allowance)


def squared_distance(spec: GroupSpec) -> Observable:
    """``V(y) = distance(I, y)^2``."""
    return Observable(lambda g: distance_from_identity(spec, g) ** 2, name="dist^2")


@dataclass(frozen=True)
class MomentProbe:
    eps_values: tuple
    moments: tuple
    standard_errors: tuple
    ratio: float
    passed: bool


def uniform_moment_probe(sys: MultiscaleSystem, V: Observable | None = None, p: float = 2.0,
                         eps_grid=(0.2, 0.1, 0.05), T: float = 1.0, n_paths: int = 2000,
                         theta: float = DEFAULT_THETA, master_seed: int = 0,
                         block_size: int = DEFAULT_BLOCK, workers: int = 1) -> MomentProbe:
    """``E sup_{t <= T} V(y_{t/eps})^p`` for each eps; passes when max/min over the grid is at most 2.

    The running supremum is taken over every fast step.
    """
    V = squared_distance(sys.slow_group) if V is None else V
    moments, ses = [], []
    for eps in eps_grid:
        s = sys.with_epsilon(eps)

        def run(rng, lo, hi, s=s):
            run_sup = np.zeros(hi - lo)
            for _, y, _, _ in pair_steps(s, T, theta, rng, hi - lo):
                np.maximum(run_sup, V(y), out=run_sup)
            return run_sup ** p if p != 0 else np.ones(hi - lo)

        vals = np.concatenate(run_blocks(run, master_seed, n_paths, block_size, workers))
        moments.append(float(np.mean(vals)))
        ses.append(float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0)
    lo = min(moments)
    ratio = max(moments) / lo if lo > 0 else (1.0 if max(moments) == 0 else math.inf)
    return MomentProbe(tuple(eps_grid), tuple(moments), tuple(ses), ratio, ratio <= 2.0)
