"""The fast process: a left-invariant diffusion on a compact (sub)group.

The fast process solves ``dz = eps^{-1/2} sum_k z X_k o dW^k + eps^{-1} z X_0 dt``
and is integrated with the exponential (geodesic) Euler scheme

    z <- z exp(sqrt(h / eps) sum_k xi_k X_k + (h / eps) X_0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotTorusError, StepTooLargeError
from .lie import AlgebraVector, GroupElement, GroupSpec, exp_matrices, haar_matrices
from .observables import Observable
from .rng import RngStream, block_streams

MAX_STEP_RATIO = 0.5
STEP_CHUNK = 8192  # step exponentials built per vectorised call
BRACKET_DEPTH = 8
RANK_TOL = 1e-8
TORUS_NODES = 512
HAAR_MC_SAMPLES = 1_000_000
HAAR_MC_SEED = 0x5EED_4AA2


@dataclass(frozen=True, eq=False)
class FastSpec:
    """Fast diffusion datum.

    ``group`` is the ambient matrix group the fast process is realised in;
    the fast manifold itself is the connected subgroup generated by the
    diffusion fields. ``dim`` is that manifold's declared dimension (defaults
    to the dimension of the generated Lie algebra).
    """

    group: GroupSpec
    diffusion_fields: tuple[AlgebraVector, ...]
    drift_field: AlgebraVector | None = None
    epsilon: float = 1.0
    dim: int | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "diffusion_fields", tuple(self.diffusion_fields))
        for x in self.fields():
            if x.spec != self.group:
                raise ValueError("all fields must live in the fast group's algebra")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in (0, 1]")
        if self.dim is None:
            object.__setattr__(self, "dim", self.algebra_basis().shape[0] if self.diffusion_fields else 0)

    def fields(self) -> list[AlgebraVector]:
        out = list(self.diffusion_fields)
        if self.drift_field is not None:
            out.append(self.drift_field)
        return out

    def with_epsilon(self, epsilon: float) -> "FastSpec":
        return FastSpec(self.group, self.diffusion_fields, self.drift_field, epsilon, self.dim)

    @property
    def field_matrices(self) -> np.ndarray:
        if not self.diffusion_fields:
            return np.zeros((0, self.group.n, self.group.n), dtype=self.group.dtype)
        return np.array([x.matrix for x in self.diffusion_fields])

    @property
    def drift_matrix(self) -> np.ndarray:
        if self.drift_field is None:
            return np.zeros((self.group.n, self.group.n), dtype=self.group.dtype)
        return self.drift_field.matrix

    def generator_matrix(self) -> np.ndarray:
        """``C = (1/2) sum X_k^2 + X_0``: ``L_0`` acts on matrix entries as ``z -> z C``."""
        xs = self.field_matrices
        return 0.5 * np.einsum("kij,kjl->il", xs, xs) + self.drift_matrix

    def algebra_basis(self) -> np.ndarray:
        """Orthonormal basis (as matrices) of the Lie algebra generated by the diffusion fields."""
        if "basis" not in self._cache:
            self._cache["basis"] = _lie_closure(self.group, [x.matrix for x in self.diffusion_fields])[0]
        return self._cache["basis"]

    def increment(self, xi: np.ndarray, h: float) -> np.ndarray:
        """Stack of step exponentials for normals ``xi`` of shape ``(B, m')``."""
        r = h / self.epsilon
        a = math.sqrt(r) * np.tensordot(xi, self.field_matrices, axes=(-1, 0))
        if self.drift_field is not None:
            a = a + r * self.drift_matrix
        return exp_matrices(self.group, a)

    def check_step(self, h: float) -> None:
        if h > MAX_STEP_RATIO * self.epsilon * (1 + 1e-12):
            raise StepTooLargeError(f"fast step h={h:g} exceeds {MAX_STEP_RATIO} * eps = {MAX_STEP_RATIO * self.epsilon:g}")

    # fast-manifold structure -------------------------------------------

    def is_torus(self) -> bool:
        return self.algebra_basis().shape[0] == 1 and self._drift_tangent()

    def _drift_tangent(self) -> bool:
        if self.drift_field is None:
            return True
        basis = self.algebra_basis()
        d = self.drift_matrix
        resid = d - np.tensordot(self.group.inner(basis, d), basis, axes=(0, 0))
        return float(self.group.norm(resid)) <= 1e-12 * max(1.0, float(self.group.norm(d)))

    def torus(self) -> "TorusChart":
        if "torus" not in self._cache:
            self._cache["torus"] = TorusChart.from_fast(self)
        return self._cache["torus"]

    def haar(self, rng: RngStream, size: int) -> np.ndarray:
        """Haar samples of the fast manifold, as ambient matrices."""
        basis = self.algebra_basis()
        k = basis.shape[0]
        if k == 0:
            return np.broadcast_to(self.group.identity(), (size, self.group.n, self.group.n)).copy()
        if k == 1:
            return self.torus().from_angle(rng.uniform(size) * 2 * np.pi)
        if k == self.group.dim:
            return haar_matrices(self.group, rng, size)
        support = np.flatnonzero(np.any(np.abs(basis) > 0, axis=(0, 1)) | np.any(np.abs(basis) > 0, axis=(0, 2)))
        s = len(support)
        if self.group.family == "SO" and k == s * (s - 1) // 2:
            block = haar_matrices(GroupSpec("SO", s), rng, size)
            out = np.broadcast_to(np.eye(self.group.n), (size, self.group.n, self.group.n)).copy()
            out[np.ix_(np.arange(size), support, support)] = block
            return out
        raise NotImplementedError("Haar sampling is implemented for tori, full groups and SO(k) blocks")

    def haar_mean(self, f: Observable) -> tuple[float, float, str]:
        """Mean of ``f`` under the fast invariant measure.

        Returns ``(mean, standard_error, method)``: 512-node trapezoid on a
        torus (standard error 0), Haar Monte Carlo otherwise.
        """
        if self.is_torus():
            ch = self.torus()
            vals = f(ch.from_angle(ch.nodes(TORUS_NODES)))
            return float(np.mean(vals)), 0.0, "quadrature"
        rng = RngStream(HAAR_MC_SEED, 0)
        total, total2, n_done = 0.0, 0.0, 0
        while n_done < HAAR_MC_SAMPLES:
            b = min(100_000, HAAR_MC_SAMPLES - n_done)
            v = f(self.haar(rng, b))
            total += float(np.sum(v))
            total2 += float(np.sum(v * v))
            n_done += b
        mean = total / n_done
        var = max(total2 / n_done - mean * mean, 0.0)
        return mean, math.sqrt(var / n_done), "monte_carlo"


@dataclass(frozen=True)
class TorusChart:
    """Angle chart ``phi in [0, 2 pi) -> exp((phi / lam) X)`` of a one-dimensional fast group.

    In this chart ``L_0 = (c / 2) d^2/dphi^2 + b d/dphi``.
    """

    generator: np.ndarray
    lam: float
    eigvec: np.ndarray
    spec: GroupSpec
    c: float
    b: float

    @classmethod
    def from_fast(cls, fast: FastSpec) -> "TorusChart":
        if not fast.is_torus():
            raise NotTorusError("fast group is not a one-dimensional torus")
        x = fast.algebra_basis()[0]
        w, v = np.linalg.eig(x.astype(complex))
        lam_all = np.imag(w)
        pos = np.abs(lam_all) > 1e-12
        lam = float(np.min(np.abs(lam_all[pos])))
        ratios = lam_all / lam
        if np.max(np.abs(ratios - np.round(ratios))) > 1e-9:
            raise NotTorusError("one-parameter subgroup is not closed")
        idx = int(np.flatnonzero(pos & np.isclose(lam_all, lam))[0]) if np.any(np.isclose(lam_all, lam)) else int(
            np.flatnonzero(pos & np.isclose(lam_all, -lam))[0])
        if lam_all[idx] < 0:
            x = -x
            w, v = np.linalg.eig(x.astype(complex))
            idx = int(np.flatnonzero(np.isclose(np.imag(w), lam))[0])
        eigvec = v[:, idx] / np.linalg.norm(v[:, idx])
        coeffs = np.array([float(fast.group.inner(x, f.matrix)) for f in fast.diffusion_fields])
        c = float(np.sum(coeffs**2)) * lam * lam
        b = float(fast.group.inner(x, fast.drift_matrix)) * lam
        return cls(x, lam, eigvec, fast.group, c, b)

    def nodes(self, count: int) -> np.ndarray:
        return 2 * np.pi * np.arange(count) / count

    def from_angle(self, phi: np.ndarray) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        return exp_matrices(self.spec, (phi / self.lam)[..., None, None] * self.generator)

    def to_angle(self, z: np.ndarray) -> np.ndarray:
        # z v = exp(i phi) v for z on the torus
        v = self.eigvec
        return np.mod(np.angle(np.einsum("i,...ij,j->...", np.conj(v), z, v)), 2 * np.pi)


def _lie_closure(spec: GroupSpec, gens: list[np.ndarray], extra: list[np.ndarray] = (),
                 depth: int = BRACKET_DEPTH) -> tuple[np.ndarray, int]:
    """Orthonormal basis of the smallest bracket-closed space containing ``gens``.

    Brackets are also taken against ``extra`` (used for the drift in the weak
    condition), without adding ``extra`` itself. Returns ``(basis, levels)``.
    """
    basis: list[np.ndarray] = []

    def add(m: np.ndarray) -> bool:
        r = m - sum((spec.inner(b, m) * b for b in basis), np.zeros_like(m))
        r = r - sum((spec.inner(b, r) * b for b in basis), np.zeros_like(m))
        nrm = float(spec.norm(r))
        scale = max(1.0, float(spec.norm(m)))
        # rank test on the Gram matrix: a new direction must carry squared norm above RANK_TOL
        if nrm * nrm <= RANK_TOL * scale * scale:
            return False
        basis.append(r / nrm)
        return True

    frontier = [g for g in gens if add(g)]
    levels = 0
    multipliers = list(gens) + list(extra)
    while frontier and levels < depth:
        levels += 1
        new = []
        for a in frontier:
            for b in multipliers + basis[:]:
                c = a @ b - b @ a
                if add(c):
                    new.append(basis[-1])
        frontier = new
    if not basis:
        return np.zeros((0, spec.n, spec.n), dtype=spec.dtype), levels
    return np.array(basis), levels


@dataclass(frozen=True)
class HormanderReport:
    satisfied: bool
    generated_dim: int
    target_dim: int
    depth: int
    weak_satisfied: bool | None = None
    weak_generated_dim: int | None = None


def hormander_check(fields, include_drift: AlgebraVector | None = None,
                    target_dim: int | None = None) -> HormanderReport:
    """Bracket-closure test of the strong (and optionally weak) Hormander condition.

    ``target_dim`` is the dimension of the fast manifold; it defaults to the
    dimension of the ambient Lie algebra.
    """
    fields = list(fields)
    if not fields:
        raise ValueError("hormander_check needs at least one field")
    spec = fields[0].spec
    target = spec.dim if target_dim is None else int(target_dim)
    basis, depth = _lie_closure(spec, [f.matrix for f in fields])
    dim = basis.shape[0]
    weak_ok = weak_dim = None
    if include_drift is not None:
        wbasis, _ = _lie_closure(spec, [f.matrix for f in fields], extra=[include_drift.matrix])
        weak_dim = wbasis.shape[0]
        weak_ok = weak_dim >= target
    return HormanderReport(dim >= target, dim, target, depth, weak_ok, weak_dim)


# --- simulation ----------------------------------------------------------------


def _n_steps(T: float, h: float) -> tuple[int, float]:
    if T <= 0:
        return 0, h
    n = max(1, math.ceil(T / h - 1e-9))
    return n, T / n


def step_fast(z: GroupElement, spec: FastSpec, h: float, rng: RngStream) -> GroupElement:
    """One exponential-Euler step of the fast process."""
    spec.check_step(h)
    m = len(spec.diffusion_fields)
    xi = rng.normal((1, m))
    return GroupElement(z.spec, (z.matrix @ spec.increment(xi, h)[0]))


def simulate_fast_batch(z0: np.ndarray, spec: FastSpec, T: float, h: float, rng: RngStream,
                        record_every: int | None = None):
    """Integrate a stack of fast paths to time ``T``.

    Returns the terminal stack, or ``(terminal, recorded)`` when
    ``record_every`` is given (``recorded[k]`` is the stack after
    ``k * record_every`` steps).
    """
    spec.check_step(h)
    n, h_eff = _n_steps(T, h)
    z = np.array(z0, dtype=spec.group.dtype, copy=True)
    batch = z.shape[0]
    m = len(spec.diffusion_fields)
    rec = [z.copy()] if record_every else None
    # noise and step exponentials are built a chunk at a time; the draws match
    # one-step-at-a-time sampling exactly and the product stays sequential
    chunk = max(1, min(n, STEP_CHUNK // max(batch, 1)))
    k = 0
    while k < n:
        c = min(chunk, n - k)
        inc = spec.increment(rng.normal((c * batch, m)), h_eff).reshape((c,) + z.shape)
        for j in range(c):
            z = z @ inc[j]
            k += 1
            if record_every and k % record_every == 0:
                rec.append(z.copy())
    return (z, rec) if record_every else z


def simulate_fast(z0: GroupElement, spec: FastSpec, T: float, h: float, rng: RngStream,
                  return_path: bool = False):
    """Single fast path; deterministic given the stream."""
    if return_path:
        z, rec = simulate_fast_batch(z0.matrix[None], spec, T, h, rng, record_every=1)
        return GroupElement(z0.spec, z[0]), [GroupElement(z0.spec, r[0]) for r in rec]
    z = simulate_fast_batch(z0.matrix[None], spec, T, h, rng)
    return GroupElement(z0.spec, z[0])


@dataclass(frozen=True)
class LLNPoint:
    t: float
    l2_error: float
    ci_halfwidth: float


def lln_error(f: Observable, spec: FastSpec, t_grid, n_paths: int, master_seed: int = 0,
              h: float = 0.05, block_size: int = 4096, z0: np.ndarray | None = None) -> list[LLNPoint]:
    """L2 error of ergodic time averages ``(1/t) int_0^t f(z_s) ds`` against the Haar mean.

    The time integral uses the trapezoid rule on the fast grid; every ``t``
    in ``t_grid`` must be a multiple of ``h``. Confidence half-widths are
    1.96 standard errors propagated through the square root.
    """
    if spec.epsilon != 1.0:
        raise ValueError("lln_error runs the fast process at eps = 1")
    t_grid = sorted(float(t) for t in t_grid)
    fbar = spec.haar_mean(f)[0]
    n_steps = [int(round(t / h)) for t in t_grid]
    for t, k in zip(t_grid, n_steps):
        if abs(k * h - t) > 1e-9 * max(1.0, t):
            raise ValueError(f"t={t} is not a multiple of h={h}")
    spec.check_step(h)
    ident = spec.group.identity() if z0 is None else np.asarray(z0)
    m = len(spec.diffusion_fields)
    sq = np.zeros((len(t_grid), n_paths))
    for rng, lo, hi in block_streams(master_seed, n_paths, block_size):
        b = hi - lo
        z = np.broadcast_to(ident, (b,) + ident.shape).copy()
        prev = f(z)
        integral = np.zeros(b)
        j = 0
        for k in range(1, n_steps[-1] + 1):
            z = z @ spec.increment(rng.normal((b, m)), h)
            cur = f(z)
            integral += 0.5 * h * (prev + cur)
            prev = cur
            while j < len(n_steps) and n_steps[j] == k:
                sq[j, lo:hi] = (integral / t_grid[j] - fbar) ** 2
                j += 1
    out = []
    for j, t in enumerate(t_grid):
        msq = float(np.mean(sq[j]))
        se = float(np.std(sq[j], ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
        l2 = math.sqrt(msq)
        half = 1.96 * se / (2 * l2) if l2 > 0 else 0.0
        out.append(LLNPoint(t, l2, half))
    return out
