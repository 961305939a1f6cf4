"""The limiting diffusion on the slow group and its Monte Carlo semigroup.

The limit has generator ``Lbar = -sum_ij a_bar[i, j] L_{Y_i} L_{Y_j}``. It is
realised as the Stratonovich SDE ``dy = sum_k Ytilde_k(y) o dB^k + D(y) dt``
with left-invariant fields. Since ``(1/2) sum_k L_{Ytilde_k}^2`` must equal
the symmetric part ``-sum_ij a_sym[i, j] L_i L_j``, the driving fields are
``Ytilde_k = sqrt(2) sum_i sigma[i, k] Y_i`` with ``sigma sigma^T = -a_sym``.
The antisymmetric part becomes the first-order drift
``D = -sum_{i<j} a_anti[i, j] [Y_i, Y_j]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .ensemble import DEFAULT_BLOCK, Ensemble, run_blocks
from .errors import RequiresDerivativesError
from .lie import AlgebraVector, GroupElement, GroupSpec, exp_matrices
from .observables import Observable
from .poisson import AveragedModel
from .rng import RngStream

GENERATOR_SCALE = math.sqrt(2.0)
HERMITE_NODES = 24


@dataclass(frozen=True, eq=False)
class EffectiveSDE:
    slow_group: GroupSpec
    driving_fields: tuple[AlgebraVector, ...]
    bracket_drift: AlgebraVector

    @property
    def field_matrices(self) -> np.ndarray:
        n = self.slow_group.n
        if not self.driving_fields:
            return np.zeros((0, n, n), dtype=self.slow_group.dtype)
        return np.array([f.matrix for f in self.driving_fields])

    def generator_matrix(self) -> np.ndarray:
        """``Q = (1/2) sum_k Ytilde_k^2 + D``; on the trace family ``Lbar Re tr(A g) = Re tr(A g Q)``."""
        ys = self.field_matrices
        return 0.5 * np.einsum("kij,kjl->il", ys, ys) + self.bracket_drift.matrix

    def quadratic_form(self) -> np.ndarray:
        """``sum_k Ytilde_k Ytilde_k^T`` in the basis coordinates of the slow algebra."""
        c = np.array([f.coordinates() for f in self.driving_fields]) if self.driving_fields else np.zeros((0, self.slow_group.dim))
        return c.T @ c

    def increment(self, xi: np.ndarray, h: float) -> np.ndarray:
        a = math.sqrt(h) * np.tensordot(xi, self.field_matrices, axes=(-1, 0)) + h * self.bracket_drift.matrix
        return exp_matrices(self.slow_group, a)

    def one_step_mean(self, h: float, nodes: int = HERMITE_NODES) -> np.ndarray:
        """``E exp(sqrt(h) sum xi_k Ytilde_k + h D)`` by tensor Gauss-Hermite quadrature."""
        m = len(self.driving_fields)
        if m == 0:
            return exp_matrices(self.slow_group, h * self.bracket_drift.matrix)
        x, w = np.polynomial.hermite_e.hermegauss(nodes)
        w = w / w.sum()
        grids = np.meshgrid(*([x] * m), indexing="ij")
        xi = np.stack([g.ravel() for g in grids], -1)
        wts = np.prod(np.meshgrid(*([w] * m), indexing="ij"), axis=0).ravel()
        return np.einsum("b,bij->ij", wts, self.increment(xi, h))


def build_effective(model: AveragedModel, slow_fields) -> EffectiveSDE:
    """Effective SDE from an averaged model (see the module docstring for the scaling)."""
    slow_fields = list(slow_fields)
    spec = slow_fields[0].spec
    m = len(slow_fields)
    ys = np.array([y.matrix for y in slow_fields])
    sigma = np.asarray(model.sigma)
    driving = []
    for k in range(sigma.shape[1]):
        col = sigma[:, k]
        if np.max(np.abs(col)) <= 1e-15:
            continue
        driving.append(AlgebraVector(spec, GENERATOR_SCALE * np.tensordot(col, ys, axes=(0, 0))))
    drift = np.zeros((spec.n, spec.n), dtype=spec.dtype)
    for i in range(m):
        for j in range(i + 1, m):
            drift -= model.a_anti[i, j] * (ys[i] @ ys[j] - ys[j] @ ys[i])
    return EffectiveSDE(spec, tuple(driving), AlgebraVector(spec, drift))


def generator_on_trace(f: Observable, sde: EffectiveSDE, g: np.ndarray) -> np.ndarray:
    """``Lbar f`` at stacked ``g`` for ``f = c + Re tr(A g)``."""
    if f.trace_matrix is None:
        raise RequiresDerivativesError(f"{f.name} has no closed-form derivatives")
    if not np.any(f.trace_matrix):
        return np.zeros(np.shape(g)[:-2])
    q = sde.generator_matrix()
    return np.real(np.einsum("ij,...jk,ki->...", f.trace_matrix, g, q))


def averaged_generator_on_trace(f: Observable, a_bar: np.ndarray, slow_fields, g: np.ndarray) -> np.ndarray:
    """``-sum_ij a_bar[i, j] L_{Y_i} L_{Y_j} f`` at ``g`` for a trace observable."""
    ys = np.array([y.matrix for y in slow_fields])
    q = -np.einsum("ij,iab,jbc->ac", a_bar, ys, ys)
    if f.trace_matrix is None:
        raise RequiresDerivativesError(f"{f.name} has no closed-form derivatives")
    if not np.any(f.trace_matrix):
        return np.zeros(np.shape(g)[:-2])
    return np.real(np.einsum("ij,...jk,ki->...", f.trace_matrix, g, q))


def step_limit(y: GroupElement, sde: EffectiveSDE, h: float, rng: RngStream) -> GroupElement:
    """One exponential step ``y exp(sqrt(h) sum xi_k Ytilde_k + h D)``."""
    if h <= 0:
        raise ValueError("h must be positive")
    xi = rng.normal((1, len(sde.driving_fields)))
    return GroupElement(y.spec, y.matrix @ sde.increment(xi, h)[0])


def limit_steps(sde: EffectiveSDE, T: float, h: float, rng: RngStream, batch: int, y0: np.ndarray):
    """Generator over ``(k, y)``, ``k = 0..n`` for ``n = ceil(T / h)`` equal steps."""
    n = max(1, math.ceil(T / h - 1e-9)) if T > 0 else 0
    h_eff = T / n if n else h
    y = np.broadcast_to(y0, (batch,) + y0.shape).copy()
    m = len(sde.driving_fields)
    yield 0, y
    for k in range(1, n + 1):
        if m or np.any(sde.bracket_drift.matrix):
            y = y @ sde.increment(rng.normal((batch, m)), h_eff)
        yield k, y


def limit_sample(sde: EffectiveSDE, y0: np.ndarray, T: float, h: float, n_paths: int, master_seed: int,
                 block_size: int = DEFAULT_BLOCK, workers: int = 1, first_stream: int = 0) -> Ensemble:
    """Terminal states of ``n_paths`` effective-SDE paths."""

    def run(rng, lo, hi):
        y = None
        for _, y in limit_steps(sde, T, h, rng, hi - lo, np.asarray(y0)):
            pass
        return y

    parts = run_blocks(run, master_seed, n_paths, block_size, workers, first_stream)
    prov = {"master_seed": master_seed, "first_stream": first_stream, "block_size": block_size,
            "T": T, "h": h, "law": "limit"}
    return Ensemble(sde.slow_group, np.concatenate(parts), prov)


@dataclass(frozen=True)
class SemigroupEstimate:
    estimate: float
    std_error: float


def semigroup_mc(f: Observable, y0, sde: EffectiveSDE, T: float, h: float, n_paths: int,
                 master_seed: int = 0, block_size: int = DEFAULT_BLOCK, workers: int = 1,
                 first_stream: int = 0) -> SemigroupEstimate:
    """Monte Carlo estimate of ``P_T f(y0)``."""
    y0 = y0.matrix if isinstance(y0, GroupElement) else np.asarray(y0)
    if T == 0:
        return SemigroupEstimate(float(f(y0[None])[0]), 0.0)
    ens = limit_sample(sde, y0, T, h, n_paths, master_seed, block_size, workers, first_stream)
    mean, se = ens.mean(f)
    return SemigroupEstimate(mean, se)


@dataclass(frozen=True)
class BackwardReport:
    lhs_slope: float
    rhs_value: float
    pooled_se: float
    allowance: float
    passed: bool


def backward_check(f: Observable, sde: EffectiveSDE, T: float, h: float, n_paths: int, y0=None,
                   delta: float = 0.05, master_seed: int = 0, block_size: int = DEFAULT_BLOCK,
                   workers: int = 1) -> BackwardReport:
    """Kolmogorov backward equation ``d/dT P_T f = P_T Lbar f`` checked on common paths.

    Each path is recorded at ``T - delta``, ``T`` and ``T + delta``, so the
    centred difference and ``P_T(Lbar f)`` come from the same noise. The
    allowance bounds the centred-difference truncation plus the scheme's
    one-step bias, both computed exactly for the trace family from
    ``exp(t Q)`` and the Gauss-Hermite one-step mean.
    """
    if f.trace_matrix is None:
        raise RequiresDerivativesError(f"{f.name} has no closed-form derivatives")
    if T - delta <= 0:
        raise ValueError("T must exceed delta")
    spec = sde.slow_group
    y0 = spec.identity() if y0 is None else (y0.matrix if isinstance(y0, GroupElement) else np.asarray(y0))
    k_lo = int(round((T - delta) / h))
    k_mid = int(round(T / h))
    k_hi = int(round((T + delta) / h))
    for k, t in ((k_lo, T - delta), (k_mid, T), (k_hi, T + delta)):
        if abs(k * h - t) > 1e-9:
            raise ValueError("T and delta must be multiples of h")

    def run(rng, lo, hi):
        out = {}
        for k, y in limit_steps(sde, k_hi * h, h, rng, hi - lo, y0):
            if k == k_lo:
                out["lo"] = f(y)
            if k == k_mid:
                out["gen"] = generator_on_trace(f, sde, y)
            if k == k_hi:
                out["hi"] = f(y)
        return (out["hi"] - out["lo"]) / (2 * delta), out["gen"]

    parts = run_blocks(run, master_seed, n_paths, block_size, workers)
    slope = np.concatenate([p[0] for p in parts])
    gen = np.concatenate([p[1] for p in parts])
    n = len(slope)
    se_s = float(np.std(slope, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    se_g = float(np.std(gen, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    pooled = math.hypot(se_s, se_g)
    allowance = backward_allowance(f, sde, y0, T, h, delta)
    gap = abs(float(slope.mean() - gen.mean()))
    return BackwardReport(float(slope.mean()), float(gen.mean()), pooled, allowance,
                          gap <= 3.0 * pooled + allowance)


def backward_allowance(f: Observable, sde: EffectiveSDE, y0: np.ndarray, T: float, h: float, delta: float) -> float:
    """Deterministic gap between the two sides for the discretised chain, plus roundoff slack."""
    a = f.trace_matrix
    if not np.any(a):
        return 1e-12
    q = sde.generator_matrix()
    k = sde.one_step_mean(h)
    mpow = np.linalg.matrix_power
    n_lo, n_mid, n_hi = (int(round(t / h)) for t in (T - delta, T, T + delta))
    # discrete chain: E f(y_n) = Re tr(A y0 K^n)
    disc_slope = np.real(np.trace(a @ y0 @ (mpow(k, n_hi) - mpow(k, n_lo)))) / (2 * delta)
    disc_gen = np.real(np.trace(a @ y0 @ mpow(k, n_mid) @ q))
    exact_slope = np.real(np.trace(a @ y0 @ (scipy.linalg.expm((T + delta) * q) - scipy.linalg.expm((T - delta) * q)))) / (2 * delta)
    exact_gen = np.real(np.trace(a @ y0 @ scipy.linalg.expm(T * q) @ q))
    return float(abs(disc_slope - disc_gen) + abs(exact_slope - exact_gen)) + 1e-12
