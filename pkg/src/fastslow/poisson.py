"""Poisson equation ``L_0 beta = alpha`` on the fast group and the averaged matrix.

Two solvers share one contract:

* :func:`solve_poisson_spectral` for a one-dimensional torus, by FFT on a
  512-node grid (exact for trigonometric polynomials);
* :func:`solve_poisson_mc` anywhere, through the truncated resolvent
  ``beta(x) = -int_0^T E alpha(x z_t) dt`` with simulated fast paths.

Both pick the mean-zero solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotCenteredError, NotPSDError
from .fast import TORUS_NODES, FastSpec
from .lie import AlgebraVector, GroupSpec, exp_matrices
from .observables import Observable
from .rng import RngStream, block_streams

SPECTRAL_ALIAS_TOL = 1e-10
QUAD_CENTER_TOL = 1e-6
PSD_TOL = 1e-8
FD_STEP = 1e-4
HERMITE_NODES = 24


# --- coefficient functions ---------------------------------------------------


def adjoint_alpha(y0: AlgebraVector, m_basis, fast: FastSpec | None = None) -> list[Observable]:
    """Coefficients ``alpha_k(z) = <Ad(z) Y0, m_k>`` of the adjoint action.

    With a torus fast group the outputs are tagged as trigonometric
    polynomials, with the maximal frequency read off the eigenphases of the
    torus generator.
    """
    spec = y0.spec
    y = y0.matrix
    mats = [m.matrix for m in m_basis]
    max_freq = None
    if fast is not None and fast.is_torus():
        ch = fast.torus()
        ph = np.imag(np.linalg.eigvals(ch.generator.astype(complex))) / ch.lam
        max_freq = int(round(float(np.max(ph) - np.min(ph))))
    out = []
    for k, mk in enumerate(mats):
        def f(z, mk=mk):
            z = np.asarray(z)
            ad = z @ y @ np.conj(np.swapaxes(z, -1, -2))
            return spec.inner(mk, ad)

        out.append(Observable(f, bound=float(spec.norm(y)), name=f"alpha_{k + 1}",
                              max_frequency=max_freq, meta={"kind": "adjoint", "index": k, "y0": y, "mk": mk,
                                    "spec": spec}))
    return out


@dataclass(frozen=True)
class CenteringReport:
    mean: float
    standard_error: float
    centered: bool
    method: str


def centering_check(alpha: Observable, fast: FastSpec) -> CenteringReport:
    """Mean of ``alpha`` under the fast invariant measure, with a centred/not-centred verdict."""
    mean, se, method = fast.haar_mean(alpha)
    if method == "quadrature":
        ok = abs(mean) <= QUAD_CENTER_TOL
    else:
        ok = abs(mean) <= 3.0 * se
    return CenteringReport(mean, se, ok, method)


# --- residual ----------------------------------------------------------------


def apply_generator_fd(beta: Observable, fast: FastSpec, points: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """``L_0 beta`` at ``points`` by centred finite differences along the fast fields.

    Uses the five-point stencils (fourth order), so the truncation error at
    step ``1e-4`` stays far below ``1e-6`` even for frequency-64 harmonics.
    """
    points = np.asarray(points)
    spec = fast.group
    dirs = [x.matrix for x in fast.diffusion_fields]
    if fast.drift_field is not None:
        dirs.append(fast.drift_field.matrix)
    offsets = (2, 1, -1, -2)
    shifted = [points]
    for d in dirs:
        for o in offsets:
            shifted.append(points @ exp_matrices(spec, o * step * d))
    vals = beta(np.concatenate(shifted)).reshape(len(shifted), len(points))
    center = vals[0]
    out = np.zeros(len(points))
    for i in range(len(dirs)):
        p2, p1, m1, m2 = vals[1 + 4 * i: 5 + 4 * i]
        if i < len(fast.diffusion_fields):
            out += 0.5 * (-p2 + 16 * p1 - 30 * center + 16 * m1 - m2) / (12 * step**2)
        else:
            out += (-p2 + 8 * p1 - 8 * m1 + m2) / (12 * step)
    return out


def validation_points(fast: FastSpec, count: int, seed: int = 7) -> np.ndarray:
    if fast.is_torus():
        ch = fast.torus()
        return ch.from_angle(ch.nodes(count))
    return fast.haar(RngStream(seed, 0), count)


def poisson_residual(alpha: Observable, beta: Observable, fast: FastSpec, points: np.ndarray) -> float:
    """``max |L_0 beta - alpha|`` over ``points``."""
    return float(np.max(np.abs(apply_generator_fd(beta, fast, points) - alpha(points))))


@dataclass(frozen=True, eq=False)
class PoissonSolution:
    alpha: Observable
    beta: Observable
    method: str  # "Spectral" or "MonteCarloResolvent"
    residual_sup: float
    details: dict = field(default_factory=dict)


# --- spectral solver -----------------------------------------------------------


def _trig_observable(coeffs: np.ndarray, freqs: np.ndarray, chart, name: str, max_freq) -> Observable:
    keep = np.abs(coeffs) > 1e-300
    c = coeffs[keep]
    k = freqs[keep]

    def f(z):
        phi = chart.to_angle(np.asarray(z))
        return np.real(np.exp(1j * phi[..., None] * k) @ c)

    bound = float(np.sum(np.abs(c)))
    return Observable(f, bound, name, max_frequency=max_freq,
                      meta={"fourier_coeffs": c, "frequencies": k})


def solve_poisson_spectral(alpha: Observable, fast: FastSpec, nodes: int = TORUS_NODES) -> PoissonSolution:
    """Fourier solution of ``L_0 beta = alpha`` on a one-dimensional torus.

    Raises
    ------
    NotTorusError
        If the fast group is not a circle.
    NotCenteredError
        If the zero mode of ``alpha`` exceeds ``1e-6``.
    """
    chart = fast.torus()
    phi = chart.nodes(nodes)
    vals = alpha(chart.from_angle(phi))
    coeffs = np.fft.fft(vals) / nodes
    freqs = np.fft.fftfreq(nodes, d=1.0 / nodes)
    if abs(coeffs[0]) > QUAD_CENTER_TOL:
        raise NotCenteredError(f"{alpha.name} has mean {coeffs[0].real:.3e}")
    if alpha.max_frequency is not None:
        alias = np.max(np.abs(coeffs[np.abs(freqs) > alpha.max_frequency]), initial=0.0)
        if alias > SPECTRAL_ALIAS_TOL:
            raise ValueError(f"{alpha.name} has Fourier content above frequency {alpha.max_frequency} ({alias:.2e})")
        coeffs = np.where(np.abs(freqs) > alpha.max_frequency, 0.0, coeffs)
    symbol = -0.5 * chart.c * freqs**2 + 1j * chart.b * freqs
    beta_hat = np.zeros_like(coeffs)
    nz = freqs != 0
    beta_hat[nz] = coeffs[nz] / symbol[nz]
    beta_hat[np.abs(coeffs) <= 1e-15] = 0.0
    beta = _trig_observable(beta_hat, freqs, chart, f"beta[{alpha.name}]", alpha.max_frequency)
    resid = poisson_residual(alpha, beta, fast, chart.from_angle(phi))
    return PoissonSolution(alpha, beta, "Spectral", resid, {"symbol_c": chart.c, "symbol_b": chart.b})


# --- Monte Carlo resolvent ---------------------------------------------------------


def _support(fast: FastSpec) -> np.ndarray:
    basis = fast.algebra_basis()
    touched = np.any(np.abs(basis) > 1e-14, axis=(0, 1)) | np.any(np.abs(basis) > 1e-14, axis=(0, 2))
    return np.flatnonzero(touched)


def _features(z: np.ndarray, support: np.ndarray, complex_group: bool) -> np.ndarray:
    sub = z[..., support[:, None], support[None, :]].reshape(z.shape[:-2] + (-1,))
    if complex_group:
        sub = np.concatenate([sub.real, sub.imag], axis=-1)
    return sub


def _feature_operator(mats: np.ndarray, support: np.ndarray, complex_group: bool) -> np.ndarray:
    """Real matrices ``R`` with ``features(z e) = R features(z)`` for each ``e`` in ``mats``."""
    s = len(support)
    e = mats[:, support[:, None], support[None, :]]
    # row-major vec(z e) = (I kron e^T) vec(z)
    blk = np.einsum("ij,bkl->bikjl", np.eye(s), np.swapaxes(e, -1, -2)).reshape(len(mats), s * s, s * s)
    if not complex_group:
        return blk.real
    re, im = blk.real, blk.imag
    top = np.concatenate([re, -im], axis=2)
    bot = np.concatenate([im, re], axis=2)
    return np.concatenate([top, bot], axis=1)


class ControlVariates:
    """Mean-zero martingale controls for fast-path functionals.

    With features ``r(z)`` (entries of ``z`` on the fast support) and
    ``phi = (r, r (x) r)``, the sums ``sum_n phi(z_{n+1}) - K phi(z_n)`` have
    exactly zero mean under the exponential-Euler chain, where ``K`` is the
    one-step conditional mean computed by Gauss-Hermite quadrature.
    """

    def __init__(self, fast: FastSpec, h: float, nodes: int = HERMITE_NODES):
        self.support = _support(fast)
        self.complex_group = fast.group.family == "SU"
        m = len(fast.diffusion_fields)
        x, w = np.polynomial.hermite_e.hermegauss(nodes)
        w = w / w.sum()
        grids = np.meshgrid(*([x] * m), indexing="ij")
        xi = np.stack([g.ravel() for g in grids], -1) if m else np.zeros((1, 0))
        wts = np.prod(np.meshgrid(*([w] * m), indexing="ij"), axis=0).ravel() if m else np.ones(1)
        inc = fast.increment(xi, h)
        r = _feature_operator(inc, self.support, self.complex_group)
        self.k1 = np.einsum("b,bij->ij", wts, r)
        d = r.shape[1]
        self.k2 = np.einsum("b,bij,bkl->ikjl", wts, r, r).reshape(d * d, d * d)
        self.dim = d + d * d

    def phi(self, z: np.ndarray) -> np.ndarray:
        r = _features(z, self.support, self.complex_group)
        return np.concatenate([r, np.einsum("...i,...j->...ij", r, r).reshape(r.shape[:-1] + (-1,))], -1)

    def finish(self, phi0: np.ndarray, phin: np.ndarray, s0: np.ndarray) -> np.ndarray:
        d = self.k1.shape[0]
        ks0 = np.concatenate([s0[:, :d] @ self.k1.T, s0[:, d:] @ self.k2.T], -1)
        return s0 - phi0 + phin - ks0


def _regress_mean(y: np.ndarray, controls: np.ndarray | None) -> tuple[float, float]:
    """Control-variate mean of ``y`` and its standard error."""
    n = len(y)
    if controls is None or controls.shape[1] == 0 or n < 4:
        return float(np.mean(y)), float(np.std(y, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    c = controls - controls.mean(axis=0)
    scale = np.sqrt(np.mean(c * c, axis=0))
    good = scale > 1e-12
    if not np.any(good):
        return float(np.mean(y)), float(np.std(y, ddof=1) / math.sqrt(n))
    c = c[:, good] / scale[good]
    coef, *_ = np.linalg.lstsq(c, y - y.mean(), rcond=1e-10)
    # the controls have exactly zero expectation, so subtracting them keeps the estimator unbiased
    adj = y - controls[:, good] / scale[good] @ coef
    rank = np.linalg.matrix_rank(c) if c.shape[1] < n else c.shape[1]
    dof = max(n - rank - 1, 1)
    resid = adj - adj.mean()
    return float(np.mean(adj)), float(math.sqrt(np.sum(resid**2) / dof / n))


def resolvent_paths(alphas, fast: FastSpec, query: np.ndarray, tail_T: float, n_paths: int,
                    master_seed: int, h: float = 0.05, control_variates: bool = True,
                    start: np.ndarray | None = None, block_size: int = 8192):
    """Simulate fast paths for resolvent estimates.

    Paths start at ``start`` (per path, default the identity); the integrand
    is evaluated at ``query[q] @ z_t`` for every query point, so all query
    points share the same noise (common random numbers). Returns
    ``(integrals, controls)`` with ``integrals`` of shape
    ``(n_query, n_paths, n_alpha)`` holding trapezoid values of
    ``int_0^T alpha(query z_t) dt``.
    """
    fast1 = fast.with_epsilon(1.0)
    fast1.check_step(h)
    n_steps = max(1, math.ceil(tail_T / h - 1e-9))
    h = tail_T / n_steps
    query = np.asarray(query)
    nq = len(query)
    na = len(alphas)
    cv = ControlVariates(fast1, h) if control_variates else None
    integrals = np.zeros((nq, n_paths, na))
    controls = np.zeros((n_paths, cv.dim)) if cv else None
    m = len(fast1.diffusion_fields)
    ident = fast.group.identity()

    if all(a.meta.get("kind") == "adjoint" for a in alphas):
        # alpha_k(x z) = <z Y0 z^H, x^H m_k x>: one product against rotated basis elements
        y0 = alphas[0].meta["y0"]
        spec = alphas[0].meta["spec"]
        rot = np.array([[np.conj(x.T) @ a.meta["mk"] @ x for a in alphas] for x in query])
        weights = spec.metric_scale * np.conj(rot).reshape(nq * na, -1).T

        def evaluate(z):
            ad = (z @ y0 @ np.conj(np.swapaxes(z, -1, -2))).reshape(len(z), -1)
            vals = np.real(ad @ weights) if np.iscomplexobj(ad) or np.iscomplexobj(weights) else ad @ weights
            return vals.reshape(len(z), nq, na).transpose(1, 0, 2)
    else:
        def evaluate(z):
            pts = (query[:, None] @ z[None]).reshape((-1,) + z.shape[1:])
            return np.stack([a(pts) for a in alphas], -1).reshape(nq, len(z), na)

    for rng, lo, hi in block_streams(master_seed, n_paths, block_size):
        b = hi - lo
        z = np.broadcast_to(ident, (b,) + ident.shape).copy() if start is None else np.array(start[lo:hi])
        prev = evaluate(z)
        acc = 0.5 * prev
        if cv:
            phi0 = cv.phi(z)
            s0 = phi0.copy()
        for k in range(1, n_steps + 1):
            z = z @ fast1.increment(rng.normal((b, m)), h)
            cur = evaluate(z)
            acc += cur if k < n_steps else 0.5 * cur
            if cv and k < n_steps:
                s0 += cv.phi(z)
        integrals[:, lo:hi] = h * acc
        if cv:
            controls[lo:hi] = cv.finish(phi0, cv.phi(z), s0)
    return integrals, controls


class _ResolventBeta:
    """Lazily evaluated, memoised Monte Carlo resolvent solution."""

    def __init__(self, alpha, fast, tail_T, n_paths, master_seed, h, control_variates):
        self.alpha = alpha
        self.fast = fast
        self.tail_T = tail_T
        self.n_paths = n_paths
        self.master_seed = master_seed
        self.h = h
        self.control_variates = control_variates
        self.memo: dict[bytes, tuple[float, float]] = {}

    def _key(self, z: np.ndarray) -> bytes:
        return np.round(z, 13).tobytes()

    def estimate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        points = np.asarray(points)
        flat = points.reshape((-1,) + points.shape[-2:])
        keys = [self._key(p) for p in flat]
        todo = {}
        for k, p in zip(keys, flat):
            if k not in self.memo and k not in todo:
                todo[k] = p
        if todo:
            q = np.array(list(todo.values()))
            integ, ctl = resolvent_paths([self.alpha], self.fast, q, self.tail_T, self.n_paths,
                                         self.master_seed, self.h, self.control_variates)
            for i, k in enumerate(todo):
                self.memo[k] = _regress_mean(-integ[i, :, 0], ctl)
        est = np.array([self.memo[k][0] for k in keys]).reshape(points.shape[:-2])
        se = np.array([self.memo[k][1] for k in keys]).reshape(points.shape[:-2])
        return est, se

    def __call__(self, points):
        return self.estimate(points)[0]


def solve_poisson_mc(alpha: Observable, fast: FastSpec, tail_T: float = 20.0, n_paths: int = 100_000,
                     master_seed: int = 0, h: float = 0.05, control_variates: bool = True,
                     check_centering: bool = True, validation_count: int = 16) -> PoissonSolution:
    """Truncated-resolvent solution ``beta(x) = -int_0^tail_T E alpha(x z_t) dt``.

    The fast process runs at ``eps = 1``. Query points share paths, so the
    returned ``beta`` is a smooth function of its argument for a fixed seed,
    which the finite-difference residual relies on. ``validation_count=0``
    skips the residual and reports it as NaN.
    """
    if check_centering:
        rep = centering_check(alpha, fast)
        if not rep.centered:
            raise NotCenteredError(f"{alpha.name} has mean {rep.mean:.3e}")
    engine = _ResolventBeta(alpha, fast, tail_T, n_paths, master_seed, h, control_variates)
    beta = Observable(engine, alpha.bound * tail_T, f"beta_mc[{alpha.name}]",
                      meta={"resolvent": engine})
    if validation_count > 0:
        pts = validation_points(fast, validation_count)
        resid = poisson_residual(alpha, beta, fast, pts)
        scale = float(np.max(np.abs(alpha(pts)))) or 1.0
    else:
        resid, scale = float("nan"), 1.0
    return PoissonSolution(alpha, beta, "MonteCarloResolvent", resid,
                           {"relative_residual": resid / scale, "tail_T": tail_T, "n_paths": n_paths})


# --- averaging -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AveragedModel:
    """Averaged matrix ``a_bar[i, j] = mean(alpha_i beta_j)`` and its square-root factor.

    ``sigma`` satisfies ``sigma sigma^T = -a_sym``; columns of ``sigma`` give
    the coefficients of the effective driving fields.
    """

    a_bar: np.ndarray
    a_sym: np.ndarray
    a_anti: np.ndarray
    sigma: np.ndarray
    quadrature_error: float
    method: str = "quadrature"

    @classmethod
    def from_matrix(cls, a_bar: np.ndarray, quadrature_error: float = 0.0, method: str = "given") -> "AveragedModel":
        a_bar = np.asarray(a_bar, dtype=float)
        a_sym = 0.5 * (a_bar + a_bar.T)
        a_anti = 0.5 * (a_bar - a_bar.T)
        return cls(a_bar, a_sym, a_anti, psd_sqrt(-a_sym), quadrature_error, method)


def psd_sqrt(c: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    """``S`` with ``S S^T = c`` from an eigendecomposition; clamps eigenvalues in ``[-tol, 0]``."""
    c = 0.5 * (c + c.T)
    w, v = np.linalg.eigh(c)
    if w.size and w.min() < -tol:
        raise NotPSDError(f"matrix has eigenvalue {w.min():.3e} < -{tol:g}")
    w = np.where(w < 0, 0.0, w)
    return v * np.sqrt(w)


def averaged_matrix(alphas, betas, fast: FastSpec, haar_samples: int = 1_000_000,
                    n_paths: int = 20_000, master_seed: int = 11) -> AveragedModel:
    """Averaged matrix by torus quadrature, Haar Monte Carlo, or stationary path pairing.

    Monte Carlo resolvent betas are not evaluated pointwise; instead each
    Haar-distributed start ``z0`` is paired with one path from it, and
    ``alpha_i(z0) * (-int_0^T alpha_j(z_t) dt)`` is averaged (its conditional
    mean given ``z0`` is ``alpha_i(z0) beta_j(z0)``).
    """
    alphas, betas = list(alphas), list(betas)
    m = len(alphas)
    if len(betas) != m:
        raise ValueError("alphas and betas must have the same length")
    engines = [b.meta.get("resolvent") for b in betas]
    if fast.is_torus() and all(e is None for e in engines):
        ch = fast.torus()
        pts = ch.from_angle(ch.nodes(TORUS_NODES))
        av = np.array([a(pts) for a in alphas])
        bv = np.array([b(pts) for b in betas])
        a_bar = av @ bv.T / pts.shape[0]
        return AveragedModel.from_matrix(a_bar, 0.0, "quadrature")
    if all(e is not None for e in engines):
        e0 = engines[0]
        rng = RngStream(master_seed, 1 << 32)
        z0 = fast.haar(rng, n_paths)
        integ, ctl = resolvent_paths([e.alpha for e in engines], fast, fast.group.identity()[None],
                                     e0.tail_T, n_paths, master_seed, e0.h, e0.control_variates, start=z0)
        integ = integ[0]
        a0 = np.stack([a(z0) for a in alphas], -1)
        a_bar = np.zeros((m, m))
        err = 0.0
        for i in range(m):
            cvs = None if ctl is None else np.concatenate([ctl * a0[:, i:i + 1], a0[:, i:i + 1]], -1)
            for j in range(m):
                mean, se = _regress_mean(-a0[:, i] * integ[:, j], cvs)
                a_bar[i, j] = mean
                err = max(err, se)
        return AveragedModel.from_matrix(a_bar, err, "stationary_pairing")
    rng = RngStream(master_seed, 0)
    acc = np.zeros((m, m))
    acc2 = np.zeros((m, m))
    done = 0
    while done < haar_samples:
        b = min(100_000, haar_samples - done)
        z = fast.haar(rng, b)
        av = np.array([a(z) for a in alphas])
        bv = np.array([bt(z) for bt in betas])
        prod = av[:, None, :] * bv[None, :, :]
        acc += prod.sum(-1)
        acc2 += (prod**2).sum(-1)
        done += b
    a_bar = acc / done
    var = np.maximum(acc2 / done - a_bar**2, 0.0)
    return AveragedModel.from_matrix(a_bar, float(np.sqrt(var.max() / done)), "haar_monte_carlo")
