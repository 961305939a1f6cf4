"""Compact matrix groups SO(n) and SU(n): exponential, logarithm, distance, Haar.

Every routine that touches many group elements works on stacked arrays of
shape ``(..., n, n)``; the value types :class:`GroupElement` and
:class:`AlgebraVector` wrap single matrices and delegate to the array code.

Metric normalisation is per family so the declared bases are orthonormal:
``<A, B> = trace(A^T B)`` on so(n) and ``<A, B> = trace(A^H B) / 2`` on su(n).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .errors import CutLocusError
from .rng import RngStream

CUT_LOCUS_TOL = 1e-6


@dataclass(frozen=True)
class GroupSpec:
    """A compact matrix group, ``SO(n)`` (family ``"SO"``) or ``SU(n)`` (``"SU"``)."""

    family: str
    n: int

    def __post_init__(self):
        if self.family not in ("SO", "SU"):
            raise ValueError(f"unknown group family {self.family!r}")
        if self.n < 2:
            raise ValueError("n must be at least 2")

    @property
    def metric_scale(self) -> float:
        return 1.0 if self.family == "SO" else 0.5

    @property
    def dtype(self):
        return np.float64 if self.family == "SO" else np.complex128

    @property
    def dim(self) -> int:
        n = self.n
        return n * (n - 1) // 2 if self.family == "SO" else n * n - 1

    @property
    def name(self) -> str:
        return f"{self.family}({self.n})"

    def inner(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Bi-invariant inner product, broadcasting over leading axes."""
        val = np.einsum("...ij,...ij->...", np.conj(a), b)
        return self.metric_scale * np.real(val)

    def norm(self, a: np.ndarray) -> np.ndarray:
        return np.sqrt(np.maximum(self.inner(a, a), 0.0))

    def identity(self) -> np.ndarray:
        return np.eye(self.n, dtype=self.dtype)

    @cached_property
    def basis(self) -> np.ndarray:
        """Orthonormal algebra basis, shape ``(dim, n, n)``."""
        if self.family == "SO":
            return np.array([so_generator(self.n, i, j) for i, j in so_pairs(self.n)])
        if self.n == 2:
            return np.array(pauli())
        return _su_basis(self.n)

    def coords(self, a: np.ndarray) -> np.ndarray:
        """Coordinates of algebra elements in :attr:`basis`."""
        return self.inner(self.basis, np.asarray(a)[..., None, :, :])

    def from_coords(self, c: np.ndarray) -> np.ndarray:
        return np.tensordot(np.asarray(c, dtype=float), self.basis, axes=(-1, 0))


def SO(n: int) -> GroupSpec:
    return GroupSpec("SO", n)


def SU(n: int) -> GroupSpec:
    return GroupSpec("SU", n)


def so_pairs(n: int) -> list[tuple[int, int]]:
    """1-based index pairs ``(i, j)``, ``i < j``, ordering the so(n) basis."""
    return [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]


def so_generator(n: int, i: int, j: int) -> np.ndarray:
    """``A_{ij} = (E_ij - E_ji) / sqrt(2)`` with 1-based indices."""
    a = np.zeros((n, n))
    a[i - 1, j - 1] = 1.0
    a[j - 1, i - 1] = -1.0
    return a / np.sqrt(2.0)


def pauli() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The orthonormal su(2) basis X1, X2, X3 (they multiply like quaternion units)."""
    x1 = np.array([[1j, 0], [0, -1j]])
    x2 = np.array([[0, 1], [-1, 0]], dtype=complex)
    x3 = np.array([[0, 1j], [1j, 0]])
    return x1, x2, x3


def _su_basis(n: int) -> np.ndarray:
    # generalised Gell-Mann matrices times i, rescaled to unit norm
    mats = []
    for j in range(n):
        for k in range(j + 1, n):
            s = np.zeros((n, n), complex)
            s[j, k] = s[k, j] = 1.0
            mats.append(1j * s)
            a = np.zeros((n, n), complex)
            a[j, k], a[k, j] = 1.0, -1.0
            mats.append(a)
    for l in range(1, n):
        d = np.zeros((n, n), complex)
        d[np.arange(l), np.arange(l)] = 1.0
        d[l, l] = -l
        mats.append(1j * d)
    mats = np.array(mats)
    norms = np.sqrt(0.5 * np.einsum("kij,kij->k", mats.conj(), mats).real)
    return mats / norms[:, None, None]


# --- array-level primitives -------------------------------------------------


def dagger(g: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(g, -1, -2))


def bracket_matrices(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def _su2_exp(a: np.ndarray) -> np.ndarray:
    # A^2 = -det(A) I on su(2)
    r = np.sqrt(np.maximum(np.real(a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]), 0.0))
    sinc = np.sinc(r / np.pi)
    out = sinc[..., None, None] * a
    c = np.cos(r)
    out[..., 0, 0] += c
    out[..., 1, 1] += c
    return out


def _so2_exp(a: np.ndarray) -> np.ndarray:
    t = a[..., 1, 0]
    c, s = np.cos(t), np.sin(t)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def _so3_exp(a: np.ndarray) -> np.ndarray:
    # Rodrigues with the rotation angle |w|, w the axial vector
    w = np.stack([a[..., 2, 1], a[..., 0, 2], a[..., 1, 0]], -1)
    t = np.sqrt(np.einsum("...i,...i->...", w, w))
    s1 = np.sinc(t / np.pi)
    half = np.sinc(t / (2 * np.pi))
    s2 = 0.5 * half * half  # (1 - cos t) / t^2
    out = s1[..., None, None] * a + s2[..., None, None] * (a @ a)
    out[..., 0, 0] += 1.0
    out[..., 1, 1] += 1.0
    out[..., 2, 2] += 1.0
    return out


def _so_exp(a: np.ndarray) -> np.ndarray:
    # single-plane rotations (A^3 = -t^2 A) take Rodrigues; everything else goes to expm
    a = np.asarray(a, dtype=float)
    a2 = a @ a
    t2 = np.maximum(-0.5 * np.trace(a2, axis1=-2, axis2=-1), 0.0)
    resid = np.abs(a2 @ a + t2[..., None, None] * a).max(axis=(-2, -1), initial=0.0)
    plane = resid <= 1e-13 * (1.0 + t2) ** 1.5
    t = np.sqrt(t2)
    s1 = np.sinc(t / np.pi)
    half = np.sinc(t / (2 * np.pi))
    out = s1[..., None, None] * a + (0.5 * half * half)[..., None, None] * a2
    out = out + np.eye(a.shape[-1])
    if not np.all(plane):
        rest = ~plane
        out[rest] = np.real(scipy.linalg.expm(a[rest]))
    return out


def exp_matrices(spec: GroupSpec, a: np.ndarray) -> np.ndarray:
    """Matrix exponential of stacked algebra elements (closed forms where available)."""
    a = np.asarray(a, dtype=spec.dtype)
    if spec.family == "SU" and spec.n == 2:
        return _su2_exp(a)
    if spec.family == "SO" and spec.n == 2:
        return _so2_exp(a)
    if spec.family == "SO" and spec.n == 3:
        return _so3_exp(a)
    if spec.family == "SO":
        return _so_exp(a)
    out = scipy.linalg.expm(a)
    return np.real(out) if spec.family == "SO" else out


def eigen_phases(spec: GroupSpec, g: np.ndarray) -> np.ndarray:
    """Arguments in ``(-pi, pi]`` of the eigenvalues of stacked group elements."""
    return np.angle(np.linalg.eigvals(np.asarray(g)))


def _chord_angle(g: np.ndarray) -> np.ndarray:
    # rotation angle from the Frobenius chord ||g - I|| = 2 sqrt(2) sin(angle / 2)
    n = g.shape[-1]
    d = g - np.eye(n)
    chord = np.sqrt(np.einsum("...ij,...ij->...", np.conj(d), d).real)
    return 2.0 * np.arcsin(np.clip(chord / (2.0 * np.sqrt(2.0)), 0.0, 1.0))


def distance_from_identity(spec: GroupSpec, g: np.ndarray) -> np.ndarray:
    """Geodesic distance ``||log g||`` for stacked elements.

    Well defined on the cut locus too (the distance is, the logarithm is not).
    """
    g = np.asarray(g)
    if (spec.family, spec.n) in (("SU", 2), ("SO", 2)) or (spec.family, spec.n) == ("SO", 3):
        ang = _chord_angle(g)
        return ang if spec.family == "SU" else np.sqrt(2.0) * ang
    ph = eigen_phases(spec, g)
    return np.sqrt(spec.metric_scale * np.sum(ph * ph, axis=-1))


def near_cut_locus(spec: GroupSpec, g: np.ndarray, tol: float = CUT_LOCUS_TOL) -> np.ndarray:
    """True where some eigenvalue lies within ``tol`` of -1."""
    lam = np.linalg.eigvals(np.asarray(g))
    return np.any(np.abs(lam + 1.0) <= tol, axis=-1)


def pairwise_distances(spec: GroupSpec, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, int]:
    """All geodesic distances ``rho(a_i, b_j)``.

    Returns the ``(len(a), len(b))`` cost matrix and the number of pairs that
    sit within :data:`CUT_LOCUS_TOL` of the cut locus. Those pairs still get
    their exact geodesic distance (computed from eigenphases), they are only
    counted.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if (spec.family, spec.n) in (("SU", 2), ("SO", 2), ("SO", 3)):
        # ||a - b||_F^2 = 2n - 2 Re tr(a^H b), and the distance depends only on that chord
        n = spec.n
        fa = a.reshape(len(a), -1)
        fb = b.reshape(len(b), -1)
        chord2 = 2.0 * n - 2.0 * np.real(np.conj(fa) @ fb.T)
        ang = 2.0 * np.arcsin(np.clip(np.sqrt(np.maximum(chord2, 0.0)) / (2.0 * np.sqrt(2.0)), 0.0, 1.0))
        dist = ang if spec.family == "SU" else np.sqrt(2.0) * ang
        flagged = int(np.count_nonzero(ang >= np.pi - CUT_LOCUS_TOL))
        return dist, flagged
    rel = dagger(a)[:, None] @ b[None, :]
    dist = distance_from_identity(spec, rel)
    flagged = int(np.count_nonzero(near_cut_locus(spec, rel)))
    return dist, flagged


def haar_matrices(spec: GroupSpec, rng: RngStream, size: int) -> np.ndarray:
    """Haar-distributed elements via QR of a Gaussian matrix with phase correction."""
    n = spec.n
    if spec.family == "SO":
        z = rng.normal((size, n, n))
    else:
        z = (rng.normal((size, n, n)) + 1j * rng.normal((size, n, n))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    q = q * (d / np.abs(d))[..., None, :]
    det = np.linalg.det(q)
    if spec.family == "SO":
        q[..., :, 0] *= np.sign(det)[..., None]
    else:
        q = q * (np.conj(det) ** (1.0 / n))[..., None, None] / np.abs(det)[..., None, None] ** (1.0 / n)
    return q


# --- value types ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AlgebraVector:
    """A Lie algebra element (skew-symmetric or skew-Hermitian matrix)."""

    spec: GroupSpec
    matrix: np.ndarray
    coords: np.ndarray | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=self.spec.dtype)
        if m.shape != (self.spec.n, self.spec.n):
            raise ValueError(f"expected a {self.spec.n}x{self.spec.n} matrix, got {m.shape}")
        if np.max(np.abs(m + dagger(m)), initial=0.0) > 1e-12:
            raise ValueError("algebra element is not skew")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if self.coords is not None:
            c = np.asarray(self.coords, dtype=float)
            if np.max(np.abs(self.spec.from_coords(c) - m), initial=0.0) > 1e-10:
                raise ValueError("coordinates do not reconstruct the matrix")
            object.__setattr__(self, "coords", c)

    @classmethod
    def from_coords(cls, spec: GroupSpec, coords) -> "AlgebraVector":
        c = np.asarray(coords, dtype=float)
        return cls(spec, spec.from_coords(c), c)

    @classmethod
    def zero(cls, spec: GroupSpec) -> "AlgebraVector":
        return cls(spec, np.zeros((spec.n, spec.n), dtype=spec.dtype))

    def coordinates(self) -> np.ndarray:
        return self.coords if self.coords is not None else self.spec.coords(self.matrix)

    def norm(self) -> float:
        return float(self.spec.norm(self.matrix))

    def inner(self, other: "AlgebraVector") -> float:
        return float(self.spec.inner(self.matrix, other.matrix))

    def __add__(self, other: "AlgebraVector") -> "AlgebraVector":
        return AlgebraVector(self.spec, self.matrix + other.matrix)

    def __sub__(self, other: "AlgebraVector") -> "AlgebraVector":
        return AlgebraVector(self.spec, self.matrix - other.matrix)

    def __neg__(self) -> "AlgebraVector":
        return AlgebraVector(self.spec, -self.matrix)

    def __mul__(self, c: float) -> "AlgebraVector":
        return AlgebraVector(self.spec, float(c) * self.matrix)

    __rmul__ = __mul__

    def __truediv__(self, c: float) -> "AlgebraVector":
        return AlgebraVector(self.spec, self.matrix / float(c))

    def allclose(self, other: "AlgebraVector", atol: float = 1e-10) -> bool:
        return bool(np.max(np.abs(self.matrix - other.matrix)) <= atol)

    def __repr__(self) -> str:
        return f"AlgebraVector({self.spec.name}, coords={np.round(self.coordinates(), 6).tolist()})"


@dataclass(frozen=True, eq=False)
class GroupElement:
    """An element of SO(n) or SU(n)."""

    spec: GroupSpec
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=self.spec.dtype)
        n = self.spec.n
        if m.shape != (n, n):
            raise ValueError(f"expected a {n}x{n} matrix, got {m.shape}")
        if np.max(np.abs(dagger(m) @ m - np.eye(n))) > 1e-10:
            raise ValueError("matrix is not unitary")
        if abs(np.linalg.det(m) - 1.0) > 1e-8:
            raise ValueError("determinant is not 1")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, spec: GroupSpec) -> "GroupElement":
        return cls(spec, spec.identity())

    def inverse(self) -> "GroupElement":
        return GroupElement(self.spec, dagger(self.matrix))

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(self.spec, self.matrix @ other.matrix)

    def allclose(self, other: "GroupElement", atol: float = 1e-10) -> bool:
        return bool(np.max(np.abs(self.matrix - other.matrix)) <= atol)

    def __repr__(self) -> str:
        return f"GroupElement({self.spec.name}, {np.array2string(self.matrix, precision=4)})"


def exp_map(a: AlgebraVector) -> GroupElement:
    return GroupElement(a.spec, exp_matrices(a.spec, a.matrix))


def log_map(g: GroupElement) -> AlgebraVector:
    """Principal logarithm.

    Raises
    ------
    CutLocusError
        If an eigenvalue of ``g`` is within ``1e-6`` of -1.
    """
    spec, m = g.spec, g.matrix
    if near_cut_locus(spec, m):
        raise CutLocusError(f"{spec.name} element has an eigenvalue at -1")
    if spec.family == "SU" and spec.n == 2:
        # g = cos(t) I + sin(t) U with U^2 = -I
        skew = 0.5 * (m - dagger(m))
        t = 2.0 * np.arcsin(min(np.sqrt(np.sum(np.abs(m - np.eye(2)) ** 2)) / (2 * np.sqrt(2)), 1.0))
        s = np.sin(t)
        out = skew * (t / s) if s > 0 else np.zeros_like(skew)
        out = out - np.trace(out) / 2 * np.eye(2)
    elif spec.family == "SO" and spec.n == 3:
        skew = 0.5 * (m - m.T)
        t = float(_chord_angle(m))
        s = np.sin(t)
        out = skew * (t / s) if s > 0 else np.zeros((3, 3))
    else:
        t_mat, q = scipy.linalg.schur(m.astype(complex), output="complex")
        lam = np.diagonal(t_mat)
        out = (q * np.log(lam)) @ dagger(q)
        out = 0.5 * (out - dagger(out))
        if spec.family == "SO":
            out = np.real(out)
        else:
            out = out - np.trace(out) / spec.n * np.eye(spec.n)
    return AlgebraVector(spec, out)


def distance(g: GroupElement, h: GroupElement) -> float:
    """Geodesic distance ``||log(g^-1 h)||``; raises :class:`CutLocusError` on the cut locus."""
    if g.spec != h.spec:
        raise ValueError("elements belong to different groups")
    rel = dagger(g.matrix) @ h.matrix
    if near_cut_locus(g.spec, rel):
        raise CutLocusError("pair lies on the cut locus")
    return float(distance_from_identity(g.spec, rel))


def chordal_distance(g: GroupElement, h: GroupElement) -> float:
    """Frobenius chord ``sqrt(metric_scale) * ||g - h||_F``, a lower bound on :func:`distance`."""
    d = g.matrix - h.matrix
    return float(np.sqrt(g.spec.metric_scale * np.sum(np.abs(d) ** 2)))


def bracket(a: AlgebraVector, b: AlgebraVector) -> AlgebraVector:
    return AlgebraVector(a.spec, bracket_matrices(a.matrix, b.matrix))


def adjoint(g: GroupElement, a: AlgebraVector) -> AlgebraVector:
    return AlgebraVector(a.spec, g.matrix @ a.matrix @ dagger(g.matrix))


def haar_sample(spec: GroupSpec, rng: RngStream) -> GroupElement:
    return GroupElement(spec, haar_matrices(spec, rng, 1)[0])
