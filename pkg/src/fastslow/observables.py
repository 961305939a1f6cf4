"""Real-valued functions on a matrix group, evaluated on stacks of matrices."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import RequiresDerivativesError
from .lie import GroupElement


@dataclass(frozen=True, eq=False)
class Observable:
    """A bounded function ``G -> R``.

    ``func`` maps an array of shape ``(..., n, n)`` to an array of shape
    ``(...)``. ``max_frequency`` is set for trigonometric polynomials on a
    torus (the Fourier support in the torus angle). Members of the linear
    trace family ``g -> constant + Re tr(A g)`` carry ``trace_matrix = A``,
    which gives them exact Lie derivatives.
    """

    func: Callable[[np.ndarray], np.ndarray]
    bound: float = np.inf
    name: str = "f"
    max_frequency: int | None = None
    trace_matrix: np.ndarray | None = None
    constant: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def smoothness_tag(self) -> str:
        return "TrigPolynomial" if self.max_frequency is not None else "Generic"

    def __call__(self, g) -> np.ndarray:
        if isinstance(g, GroupElement):
            return float(self.func(g.matrix[None])[0])
        return np.asarray(self.func(np.asarray(g)))

    @property
    def has_derivatives(self) -> bool:
        return self.trace_matrix is not None

    def _require(self):
        if self.trace_matrix is None:
            raise RequiresDerivativesError(f"observable {self.name!r} has no closed-form derivatives")
        return self.trace_matrix

    def lie_derivative(self, g: np.ndarray, y: np.ndarray) -> np.ndarray:
        """``L_Y f(g) = Re tr(A g Y)`` for the left-invariant field ``Y``."""
        a = self._require()
        return np.real(np.einsum("ij,...jk,ki->...", a, g, y))

    def second_derivative(self, g: np.ndarray, yi: np.ndarray, yj: np.ndarray) -> np.ndarray:
        """``L_{Y_i} L_{Y_j} f(g) = Re tr(A g Y_i Y_j)``."""
        return self.lie_derivative(g, yi @ yj)

    def scaled(self, c: float) -> "Observable":
        f = self.func
        tm = None if self.trace_matrix is None else c * self.trace_matrix
        return Observable(lambda g: c * f(g), abs(c) * self.bound, f"{c:g}*{self.name}",
                          self.max_frequency, tm, c * self.constant)


def constant(c: float) -> Observable:
    def f(g):
        return np.full(np.shape(g)[:-2], float(c))

    return Observable(f, abs(c), f"const({c:g})", max_frequency=0,
                      trace_matrix=np.zeros((1, 1)), constant=float(c))


def trace_observable(a: np.ndarray, c: float = 0.0, name: str | None = None) -> Observable:
    """``g -> c + Re tr(A g)``; bounded by ``|c| + ||A||_*`` on a unitary group."""
    a = np.array(a)
    a.setflags(write=False)

    def f(g):
        if a.shape == (1, 1) and not a.any():
            return np.full(np.shape(g)[:-2], c)
        return c + np.real(np.einsum("ij,...ji->...", a, g))

    bound = abs(c) + float(np.sum(np.linalg.svd(a, compute_uv=False)))
    return Observable(f, bound, name or "Re tr(A g)", trace_matrix=a, constant=c)


def real_trace(n: int) -> Observable:
    """``g -> Re tr(g)``."""
    return trace_observable(np.eye(n), name="Re tr")
