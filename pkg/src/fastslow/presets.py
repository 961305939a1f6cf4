"""Ready-made fast-slow systems on SU(2) and SO(n).

Each preset bundles a :class:`MultiscaleSystem` with an ``expected`` block of
reference quantities worked out by hand. Every entry is tagged ``[DERIVED]``
and names the computation that produced it, so tests can cite it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .effective import EffectiveSDE, build_effective
from .fast import FastSpec
from .lie import SO, SU, AlgebraVector, exp_matrices, pauli, so_generator
from .multiscale import MultiscaleSystem
from .poisson import AveragedModel, adjoint_alpha, averaged_matrix


@dataclass(frozen=True)
class Expected:
    """One reference quantity with its provenance tag and the oracle that produced it."""

    value: object
    provenance: str
    oracle: str


@dataclass(eq=False)
class Preset:
    name: str
    system: MultiscaleSystem
    expected: dict = field(default_factory=dict)
    description: str = ""
    _cache: dict = field(default_factory=dict, repr=False)

    def averaged(self, source: str = "computed", **kwargs) -> AveragedModel:
        """Averaged model, ``computed`` from the Poisson solutions or taken from the ``derived`` block."""
        if source == "derived":
            return AveragedModel.from_matrix(np.asarray(self.expected["a_bar"].value, dtype=float), 0.0, "derived")
        if source != "computed":
            raise ValueError("source must be 'computed' or 'derived'")
        key = ("averaged", tuple(sorted(kwargs.items())))
        if key not in self._cache:
            sols = self.system.betas(validation_count=0)
            self._cache[key] = averaged_matrix(self.system.alphas, [s.beta for s in sols], self.system.fast, **kwargs)
        return self._cache[key]

    def effective(self, source: str = "computed", **kwargs) -> EffectiveSDE:
        return build_effective(self.averaged(source, **kwargs), self.system.slow_fields)

    def describe(self) -> str:
        """Plain-text dump of the preset."""
        s = self.system
        lines = [f"name = {self.name}", f"description = {self.description}",
                 f"slow_group = {s.slow_group.name}", f"fast_fields = {len(s.fast.diffusion_fields)}",
                 f"fast_dim = {s.fast.dim}", f"fast_drift = {s.fast.drift_field is not None}",
                 f"torus = {s.fast.is_torus()}", f"m = {s.m}"]
        for key, e in self.expected.items():
            val = np.array2string(np.asarray(e.value), precision=6, separator=", ").replace("\n", "")
            lines.append(f"expected.{key} = {val}  {e.provenance} ({e.oracle})")
        return "\n".join(lines)


def preset_hopf(epsilon: float = 0.1) -> Preset:
    """SU(2) with a circle of fast motion along ``X1`` and slow fields ``X2, X3``.

    The coefficients are ``alpha = (cos 2phi, sin 2phi)`` on ``z = exp(phi X1)``,
    whose Poisson solutions are ``-alpha / 2``, so ``a_bar = -I / 4``. The
    start ``y0 = exp((pi/4) X2)`` is off the identity: at ``y0 = I`` the
    trace observable's weak error is second order in ``eps`` and too small
    to resolve by Monte Carlo.
    """
    su2 = SU(2)
    x1, x2, x3 = (AlgebraVector(su2, x) for x in pauli())
    fast = FastSpec(su2, (x1,), epsilon=epsilon)
    m = [x2, x3]
    alphas = adjoint_alpha(x2, m, fast)
    y0 = exp_matrices(su2, (np.pi / 4) * x2.matrix)
    sys = MultiscaleSystem(su2, m, fast, alphas, y0=y0)
    q = -0.5 * np.eye(2)  # (1/2)(Ytilde_2^2 + Ytilde_3^2) with Ytilde = X / sqrt(2)
    expected = {
        "a_bar": Expected(-0.25 * np.eye(2), "[DERIVED]", "Fourier series of cos 2phi, sin 2phi on the circle"),
        "beta_over_alpha": Expected(-0.5, "[DERIVED]", "L0 cos 2phi = -2 cos 2phi"),
        "generator_matrix": Expected(q, "[DERIVED]", "Lbar Re tr(A g) = Re tr(A g Q), Q = -I/2"),
        "fast_dim": Expected(1, "[DERIVED]", "abelian fast group"),
    }
    return Preset("hopf", sys, expected, "Hopf fibration S^3 -> S^2, horizontal limit")


def preset_so_n_interpolation(n: int = 3, epsilon: float = 0.1) -> Preset:
    """SO(n) with fast motion on the SO(n-1) block and slow fields ``A_{k,n}``.

    ``alpha_k(z) = z[k, 1]``. The fast generator ``(1/2) sum A_ij^2`` over
    so(n-1) is ``-(n-2)/4`` times the identity on that block, so
    ``beta_k = -4 alpha_k / (n - 2)`` and
    ``a_bar = -4 / ((n - 2)(n - 1)) I``.
    """
    if not 3 <= n <= 5:
        raise ValueError("n must be 3, 4 or 5")
    g = SO(n)
    fast_fields = [AlgebraVector(g, so_generator(n, i, j)) for i in range(1, n) for j in range(i + 1, n)]
    fast = FastSpec(g, fast_fields, epsilon=epsilon)
    m = [AlgebraVector(g, so_generator(n, k, n)) for k in range(1, n)]
    alphas = adjoint_alpha(m[0], m, fast)
    sys = MultiscaleSystem(g, m, fast, alphas)
    c = -4.0 / ((n - 2) * (n - 1))
    expected = {
        "a_bar": Expected(c * np.eye(n - 1), "[DERIVED]", "eigenfunction z[k,1] of the so(n-1) Casimir, Haar second moment 1/(n-1)"),
        "beta_over_alpha": Expected(-4.0 / (n - 2), "[DERIVED]", "Casimir eigenvalue -(n-2)/4"),
        "fast_dim": Expected((n - 1) * (n - 2) // 2, "[DERIVED]", "so(n-1) dimension"),
        "lambda_candidate": Expected((n - 2) / 4.0, "[DERIVED] candidate",
                                     "fast Casimir eigenvalue on the coefficient functions"),
    }
    return Preset(f"so{n}_interpolation", sys, expected, f"SO({n}) interpolation between SO({n - 1}) and its complement")


def preset_so4_hypoelliptic(k: int = 1, epsilon: float = 0.1) -> Preset:
    """SO(4) with two fast fields ``A12, A13`` and coefficients from ``Ad(z) A_{k4}``.

    The two fields bracket to ``A23`` and so generate so(3). With
    ``alpha_j(z) = z[j, k]`` the fast generator acts as right
    multiplication by ``-(1/4) diag(2, 1, 1)``, hence
    ``beta_j = -4 alpha_j / d_k`` with ``d = (2, 1, 1)`` and
    ``a_bar = -(4 / (3 d_k)) I``.
    """
    if k not in (1, 2, 3):
        raise ValueError("k must be 1, 2 or 3")
    g = SO(4)
    fast = FastSpec(g, [AlgebraVector(g, so_generator(4, 1, 2)), AlgebraVector(g, so_generator(4, 1, 3))],
                    epsilon=epsilon, dim=3)
    m = [AlgebraVector(g, so_generator(4, j, 4)) for j in (1, 2, 3)]
    alphas = adjoint_alpha(m[k - 1], m, fast)
    sys = MultiscaleSystem(g, m, fast, alphas)
    d = (2.0, 1.0, 1.0)[k - 1]
    expected = {
        "a_bar": Expected(-(4.0 / (3.0 * d)) * np.eye(3), "[DERIVED]", "right action of -(1/4) diag(2,1,1), Haar second moment 1/3"),
        "beta_over_alpha": Expected(-4.0 / d, "[DERIVED]", "eigenvalue -d_k/4 of the fast generator"),
        "fast_dim": Expected(3, "[DERIVED]", "bracket closure [A12, A13] ~ A23"),
    }
    return Preset(f"so4_hypoelliptic_{k}", sys, expected, f"SO(4) hypoelliptic fast motion, drift A_{k}4")


PRESETS = {
    "hopf": preset_hopf,
    "so3_interpolation": lambda epsilon=0.1: preset_so_n_interpolation(3, epsilon),
    "so4_interpolation": lambda epsilon=0.1: preset_so_n_interpolation(4, epsilon),
    "so5_interpolation": lambda epsilon=0.1: preset_so_n_interpolation(5, epsilon),
    "so4_hypoelliptic": lambda epsilon=0.1: preset_so4_hypoelliptic(1, epsilon),
    "so4_hypoelliptic_2": lambda epsilon=0.1: preset_so4_hypoelliptic(2, epsilon),
    "so4_hypoelliptic_3": lambda epsilon=0.1: preset_so4_hypoelliptic(3, epsilon),
}


def get_preset(name: str, epsilon: float = 0.1) -> Preset:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    return factory(epsilon=epsilon)
