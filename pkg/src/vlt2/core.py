"""Tensor algebra, gridded field containers and finite-difference operators.

Arrays are stored with axis 0 along x1 and axis 1 along x2, so that
``values[i, j]`` is the sample at ``(x_min + i*h, y_min + j*h)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class Vlt2Error(Exception):
    """Base class for library errors."""


class InputError(Vlt2Error, ValueError):
    """Malformed or inconsistent input."""


class GeometryError(Vlt2Error):
    """The requested procedure is undefined for the given geometry."""


class NotInvertibleError(GeometryError):
    """The transform is not invertible for the given geometry."""


class SingularDirectionError(GeometryError):
    """A direction is orthogonal to a branch of a star, where ``Q`` is undefined."""


class SolverError(Vlt2Error):
    """An iterative or marching solver failed."""


class Vec2(NamedTuple):
    x1: float
    x2: float


class SymTensor2(NamedTuple):
    f11: float
    f12: float
    f22: float


E1 = Vec2(1.0, 0.0)
E2 = Vec2(0.0, 1.0)
IDENTITY = SymTensor2(1.0, 0.0, 1.0)


def perp(w) -> Vec2:
    """Rotate by +90 degrees: (x1, x2) -> (-x2, x1)."""
    return Vec2(-w[1], w[0])


def dot(a, b) -> float:
    return a[0] * b[0] + a[1] * b[1]


def norm(a) -> float:
    return math.hypot(a[0], a[1])


def sym_outer(a, b) -> SymTensor2:
    """Symmetrized tensor product ``a (.) b``."""
    return SymTensor2(a[0] * b[0], 0.5 * (a[0] * b[1] + a[1] * b[0]), a[1] * b[1])


def inner(f, g) -> float:
    """Scalar product of symmetric 2-tensors, counting the off-diagonal twice."""
    return f[0] * g[0] + 2.0 * f[1] * g[1] + f[2] * g[2]


# ---------------------------------------------------------------------------
# grids and fields


@dataclass(frozen=True)
class GridSpec:
    """Uniform vertex-centred grid on a rectangular box with square cells."""

    nx: int
    ny: int
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise InputError(f"grid needs at least 3x3 vertices, got {self.nx}x{self.ny}")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise InputError("empty grid box")
        hx = (self.x_max - self.x_min) / (self.nx - 1)
        hy = (self.y_max - self.y_min) / (self.ny - 1)
        if abs(hx - hy) > 1e-12 * max(hx, hy):
            raise InputError(f"cells must be square (hx={hx!r}, hy={hy!r})")

    @classmethod
    def square(cls, n: int, half_width: float = 1.25) -> "GridSpec":
        """``n x n`` grid on ``[-half_width, half_width]^2``."""
        return cls(n, n, -half_width, half_width, -half_width, half_width)

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def x1(self) -> np.ndarray:
        return self.x_min + self.h * np.arange(self.nx)

    @property
    def x2(self) -> np.ndarray:
        return self.y_min + self.h * np.arange(self.ny)

    @property
    def inscribed_radius(self) -> float:
        """Radius of the largest origin-centred disk inside the box."""
        return min(-self.x_min, self.x_max, -self.y_min, self.y_max)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.x_max - self.x_min, self.y_max - self.y_min)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def disk_mask(self, radius: float) -> np.ndarray:
        X1, X2 = self.mesh()
        return X1**2 + X2**2 < radius**2

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def index_of(self, x) -> tuple[int, int]:
        """Nearest vertex index to the point ``x``."""
        return (int(round((x[0] - self.x_min) / self.h)), int(round((x[1] - self.y_min) / self.h)))

    def refined(self) -> "GridSpec":
        """Same box with the spacing halved."""
        return GridSpec(2 * self.nx - 1, 2 * self.ny - 1, self.x_min, self.x_max, self.y_min, self.y_max)


def _as_grid(spec: GridSpec, values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != spec.shape:
        raise InputError(f"{name}: expected shape {spec.shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name}: non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField2:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_grid(self.spec, self.values, "values"))

    @classmethod
    def zeros(cls, spec: GridSpec) -> "ScalarField2":
        return cls(spec, spec.zeros())

    def _check(self, other: "ScalarField2") -> np.ndarray:
        if other.spec != self.spec:
            raise InputError("fields live on different grids")
        return other.values

    def __add__(self, other):
        return ScalarField2(self.spec, self.values + self._check(other))

    def __sub__(self, other):
        return ScalarField2(self.spec, self.values - self._check(other))

    def __mul__(self, c: float):
        return ScalarField2(self.spec, c * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField2(self.spec, -self.values)


@dataclass(frozen=True, eq=False)
class VectorField2:
    spec: GridSpec
    g1: np.ndarray
    g2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "g1", _as_grid(self.spec, self.g1, "g1"))
        object.__setattr__(self, "g2", _as_grid(self.spec, self.g2, "g2"))

    @classmethod
    def zeros(cls, spec: GridSpec) -> "VectorField2":
        return cls(spec, spec.zeros(), spec.zeros())

    def components(self) -> tuple[np.ndarray, np.ndarray]:
        return (self.g1, self.g2)


@dataclass(frozen=True, eq=False)
class SymTensorField2:
    spec: GridSpec
    f11: np.ndarray
    f12: np.ndarray
    f22: np.ndarray

    def __post_init__(self):
        for name in ("f11", "f12", "f22"):
            object.__setattr__(self, name, _as_grid(self.spec, getattr(self, name), name))

    @classmethod
    def zeros(cls, spec: GridSpec) -> "SymTensorField2":
        return cls(spec, spec.zeros(), spec.zeros(), spec.zeros())

    def components(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.f11, self.f12, self.f22)

    def trace(self) -> np.ndarray:
        return self.f11 + self.f22

    def max_abs(self) -> float:
        return float(max(np.abs(c).max() for c in self.components()))

    def __add__(self, other: "SymTensorField2") -> "SymTensorField2":
        if other.spec != self.spec:
            raise InputError("fields live on different grids")
        return SymTensorField2(self.spec, self.f11 + other.f11, self.f12 + other.f12, self.f22 + other.f22)

    def __mul__(self, c: float) -> "SymTensorField2":
        return SymTensorField2(self.spec, c * self.f11, c * self.f12, c * self.f22)

    __rmul__ = __mul__

    def __sub__(self, other: "SymTensorField2") -> "SymTensorField2":
        return self + (-1.0) * other

    def project(self, t) -> np.ndarray:
        """Pointwise ``<f, t>`` for a constant symmetric tensor ``t``."""
        return t[0] * self.f11 + 2.0 * t[1] * self.f12 + t[2] * self.f22

    def vanishes_on_ring(self, layers: int = 2) -> bool:
        return all(_ring_is_zero(c, layers) for c in self.components())


def _ring_is_zero(a: np.ndarray, layers: int) -> bool:
    k = layers
    return not (a[:k].any() or a[-k:].any() or a[:, :k].any() or a[:, -k:].any())


@dataclass(frozen=True)
class VLineGeometry:
    """Ray directions ``u = (u1, u2)`` and its mirror ``v = (-u1, u2)``.

    Only ``u1`` is stored; ``u2`` is derived so ``|u| = 1`` holds. Swapping
    ``u`` and ``v`` leaves every transform unchanged, so ``u1 > 0`` is
    required without loss of generality.
    """

    u1: float

    def __post_init__(self):
        if not (0.0 < self.u1 < 1.0):
            raise InputError(f"need 0 < u1 < 1 for a proper V-line, got u1={self.u1!r}")

    @classmethod
    def from_vector(cls, u) -> "VLineGeometry":
        if abs(norm(u) - 1.0) > 1e-12:
            raise InputError(f"u must be a unit vector, |u| = {norm(u)!r}")
        if u[1] <= 0:
            raise InputError("u must point upwards (u2 > 0)")
        return cls(abs(u[0]))

    @classmethod
    def from_angle(cls, opening_deg: float) -> "VLineGeometry":
        """Geometry whose branches are ``opening_deg`` apart."""
        return cls(math.sin(math.radians(opening_deg) / 2.0))

    @property
    def u2(self) -> float:
        return math.sqrt(1.0 - self.u1 * self.u1)

    @property
    def u(self) -> Vec2:
        return Vec2(self.u1, self.u2)

    @property
    def v(self) -> Vec2:
        return Vec2(-self.u1, self.u2)

    @property
    def delta(self) -> float:
        """``u1^2 - u2^2``; zero for orthogonal branches."""
        return self.u1 * self.u1 - self.u2 * self.u2

    @property
    def is_orthogonal(self) -> bool:
        return abs(self.delta) <= 1e-12


# ---------------------------------------------------------------------------
# finite differences on raw arrays


def partial(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    """First derivative, central inside and second-order one-sided at the edges."""
    return np.gradient(a, h, axis=axis, edge_order=2)


def second_partial(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Second derivative along one axis with second-order accurate edges."""
    a = np.moveaxis(np.asarray(a, dtype=float), axis, 0)
    out = np.empty_like(a)
    out[1:-1] = a[:-2] - 2.0 * a[1:-1] + a[2:]
    if a.shape[0] >= 4:
        out[0] = 2.0 * a[0] - 5.0 * a[1] + 4.0 * a[2] - a[3]
        out[-1] = 2.0 * a[-1] - 5.0 * a[-2] + 4.0 * a[-3] - a[-4]
    else:
        out[0] = out[1]
        out[-1] = out[-2]
    return np.moveaxis(out / (h * h), 0, axis)


def directional(a: np.ndarray, h: float, w) -> np.ndarray:
    """``w . grad a`` on a raw array."""
    out = np.zeros_like(a, dtype=float)
    if w[0] != 0.0:
        out += w[0] * partial(a, h, 0)
    if w[1] != 0.0:
        out += w[1] * partial(a, h, 1)
    return out


def dudv(a: np.ndarray, h: float, geom: VLineGeometry) -> np.ndarray:
    """Fused ``D_u D_v = u2^2 d2^2 - u1^2 d1^2``; the mixed terms cancel."""
    return geom.u2**2 * second_partial(a, h, 1) - geom.u1**2 * second_partial(a, h, 0)


def du_plus_dv(a: np.ndarray, h: float, geom: VLineGeometry) -> np.ndarray:
    """``D_u + D_v = 2 u2 d2``."""
    return 2.0 * geom.u2 * partial(a, h, 1)


# ---------------------------------------------------------------------------
# field-level operators


def directional_derivative(hf: ScalarField2, w) -> ScalarField2:
    return ScalarField2(hf.spec, directional(hf.values, hf.spec.h, w))


def gradient(phi: ScalarField2) -> VectorField2:
    """Scalar ``d``: (d1 phi, d2 phi)."""
    h = phi.spec.h
    return VectorField2(phi.spec, partial(phi.values, h, 0), partial(phi.values, h, 1))


def gradient_perp(phi: ScalarField2) -> VectorField2:
    """Scalar ``d-perp``: (-d2 phi, d1 phi)."""
    h = phi.spec.h
    return VectorField2(phi.spec, -partial(phi.values, h, 1), partial(phi.values, h, 0))


def sym_derivative(g: VectorField2) -> SymTensorField2:
    """Symmetrized derivative ``d g``."""
    h = g.spec.h
    d1g1, d2g1 = partial(g.g1, h, 0), partial(g.g1, h, 1)
    d1g2, d2g2 = partial(g.g2, h, 0), partial(g.g2, h, 1)
    return SymTensorField2(g.spec, d1g1, 0.5 * (d2g1 + d1g2), d2g2)


def sym_derivative_perp(g: VectorField2) -> SymTensorField2:
    """Orthogonal symmetrized derivative ``d-perp g``.

    Componentwise: ``(-d2 g1, (d1 g1 - d2 g2)/2, d1 g2)``.
    """
    h = g.spec.h
    d1g1, d2g1 = partial(g.g1, h, 0), partial(g.g1, h, 1)
    d1g2, d2g2 = partial(g.g2, h, 0), partial(g.g2, h, 1)
    return SymTensorField2(g.spec, -d2g1, 0.5 * (d1g1 - d2g2), d1g2)


def divergence(f: SymTensorField2) -> VectorField2:
    """``(delta f)_i = d_j f_ij``."""
    h = f.spec.h
    return VectorField2(
        f.spec,
        partial(f.f11, h, 0) + partial(f.f12, h, 1),
        partial(f.f12, h, 0) + partial(f.f22, h, 1),
    )


def divergence_perp(f: SymTensorField2) -> VectorField2:
    """``(delta-perp f)_i = -d2 f_i1 + d1 f_i2``."""
    h = f.spec.h
    return VectorField2(
        f.spec,
        -partial(f.f11, h, 1) + partial(f.f12, h, 0),
        -partial(f.f12, h, 1) + partial(f.f22, h, 0),
    )


def rel_l2(approx: np.ndarray, truth: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Relative L2 error, optionally restricted to ``mask``."""
    if mask is not None:
        approx, truth = approx[mask], truth[mask]
    den = float(np.linalg.norm(truth))
    num = float(np.linalg.norm(approx - truth))
    return num / den if den > 0 else num
