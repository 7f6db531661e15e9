"""Test fields: smooth bumps, kernel fields of L, T and M, structured fields,
and the tensor field that no moment data of L alone can see.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    GridSpec,
    InputError,
    ScalarField2,
    SymTensorField2,
    VectorField2,
    VLineGeometry,
    Vec2,
    gradient,
    gradient_perp,
    partial,
    sym_derivative,
    sym_derivative_perp,
)

RING = 2
STRUCTURED_KINDS = ("dg", "dperp_g", "d2", "dperp2", "ddperp")


@dataclass(frozen=True)
class BumpSpec:
    """``amplitude * exp(-1 / (1 - r^2))`` with ``r = |x - center| / radius``."""

    center: Vec2 = Vec2(0.0, 0.0)
    radius: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise InputError(f"bump radius must be positive, got {self.radius!r}")
        if np.hypot(*self.center) + self.radius > 1.0 + 1e-12:
            raise InputError("bump support must lie inside the unit disk")


def bump_values(spec: BumpSpec, x1, x2) -> np.ndarray:
    """Evaluate the bump at arbitrary points."""
    r2 = ((np.asarray(x1) - spec.center[0]) ** 2 + (np.asarray(x2) - spec.center[1]) ** 2) / spec.radius**2
    out = np.zeros(np.broadcast(r2, r2).shape)
    inside = r2 < 1.0
    out[inside] = spec.amplitude * np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def bump_gradient(spec: BumpSpec, x1, x2) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradient of the bump."""
    y1 = (np.asarray(x1) - spec.center[0]) / spec.radius
    y2 = (np.asarray(x2) - spec.center[1]) / spec.radius
    r2 = y1 * y1 + y2 * y2
    g = np.zeros(r2.shape)
    inside = r2 < 1.0
    s = 1.0 - r2[inside]
    # d/dr2 exp(-1/(1-r2)) = -exp(...)/(1-r2)^2
    g[inside] = -spec.amplitude * np.exp(-1.0 / s) / s**2
    return 2 * y1 * g / spec.radius, 2 * y2 * g / spec.radius


def bump(spec: BumpSpec, grid: GridSpec) -> ScalarField2:
    """Sample the bump on ``grid``; exactly zero outside its disk."""
    X1, X2 = grid.mesh()
    return ScalarField2(grid, bump_values(spec, X1, X2))


def random_bump_spec(rng: np.random.Generator, r_min: float = 0.35, r_max: float = 0.6) -> BumpSpec:
    """Random centre, radius in ``[r_min, r_max]`` and signed amplitude, inside the unit disk."""
    if not 0 < r_min <= r_max <= 0.98:
        raise InputError("need 0 < r_min <= r_max <= 0.98")
    radius = rng.uniform(r_min, r_max)
    rho = rng.uniform(0.0, 1.0 - radius - 0.02)
    ang = rng.uniform(0.0, 2 * np.pi)
    amp = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0)
    return BumpSpec(Vec2(rho * np.cos(ang), rho * np.sin(ang)), radius, amp)


def random_bump(rng: np.random.Generator, grid: GridSpec, r_min: float = 0.35, r_max: float = 0.6) -> ScalarField2:
    """Sample :func:`random_bump_spec` on ``grid``."""
    return bump(random_bump_spec(rng, r_min, r_max), grid)


def bump_tensor(grid: GridSpec, specs: tuple[BumpSpec, BumpSpec, BumpSpec]) -> SymTensorField2:
    """Tensor field whose three components are independent bumps."""
    return SymTensorField2(grid, *(bump(s, grid).values for s in specs))


def default_phantom(grid: GridSpec) -> SymTensorField2:
    """Fixed asymmetric three-component phantom used across tests and scripts."""
    return bump_tensor(
        grid,
        (
            BumpSpec(Vec2(0.06, 0.04), 0.9, 2.0),
            BumpSpec(Vec2(-0.07, 0.05), 0.86, 1.5),
            BumpSpec(Vec2(0.04, -0.08), 0.88, 1.0),
        ),
    )


def _clear_ring(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    a[:RING] = a[-RING:] = 0.0
    a[:, :RING] = a[:, -RING:] = 0.0
    return a


def _field(grid, f11, f12, f22) -> SymTensorField2:
    return SymTensorField2(grid, _clear_ring(f11), _clear_ring(f12), _clear_ring(f22))


def _free(choice: ScalarField2 | None, grid: GridSpec) -> np.ndarray:
    if choice is None:
        return grid.zeros()
    if choice.spec != grid:
        raise InputError("free component lives on a different grid")
    return choice.values


def kernel_field_L(phi: ScalarField2, f22_choice: ScalarField2 | None, geom: VLineGeometry) -> SymTensorField2:
    """Field with ``d phi = (u1^2 f11 + u2^2 f22, 2 u1^2 f12)``, hence ``L f = 0``."""
    g, h = phi.spec, phi.spec.h
    u1s, u2s = geom.u1**2, geom.u2**2
    f22 = _free(f22_choice, g)
    f11 = (partial(phi.values, h, 0) - u2s * f22) / u1s
    f12 = partial(phi.values, h, 1) / (2 * u1s)
    return _field(g, f11, f12, f22)


def kernel_field_T(phi: ScalarField2, f22_choice: ScalarField2 | None, geom: VLineGeometry) -> SymTensorField2:
    """Field with ``d phi = (u2^2 f11 + u1^2 f22, -2 u1^2 f12)``, hence ``T f = 0``."""
    g, h = phi.spec, phi.spec.h
    u1s, u2s = geom.u1**2, geom.u2**2
    f22 = _free(f22_choice, g)
    f11 = (partial(phi.values, h, 0) - u1s * f22) / u2s
    f12 = -partial(phi.values, h, 1) / (2 * u1s)
    return _field(g, f11, f12, f22)


def kernel_field_M(phi: ScalarField2, f11_minus_f22_choice: ScalarField2 | None, geom: VLineGeometry) -> SymTensorField2:
    """Field with ``d phi = ((u1^2 - u2^2) f12, -u1^2 (f11 - f22))``, hence ``M f = 0``.

    The trace is left free and set to zero. For orthogonal branches the
    relation forces ``d1 phi = 0``, and ``f12`` is the free choice instead.
    """
    g, h = phi.spec, phi.spec.h
    d1 = partial(phi.values, h, 0)
    D = -partial(phi.values, h, 1) / geom.u1**2
    if geom.is_orthogonal:
        if np.abs(d1).max() > 1e-12 * max(1.0, np.abs(phi.values).max() / h):
            raise InputError("orthogonal branches: an M-kernel potential must not depend on x1")
        f12 = _free(f11_minus_f22_choice, g)
    else:
        if f11_minus_f22_choice is not None:
            raise InputError("f11 - f22 is determined by phi when u1^2 != u2^2")
        f12 = d1 / geom.delta
    return _field(g, 0.5 * D, f12, -0.5 * D)


def counterexample_field(phi: ScalarField2, geom: VLineGeometry) -> SymTensorField2:
    """``diag(u2^2, -u1^2) phi``: annihilated by both L and its first moment."""
    z = phi.spec.zeros()
    return _field(phi.spec, geom.u2**2 * phi.values, z, -geom.u1**2 * phi.values)


def structured_field(kind: str, generator: ScalarField2 | VectorField2) -> SymTensorField2:
    """Apply the differential operator named by ``kind`` to a generator.

    ``dg`` and ``dperp_g`` take a vector field; ``d2``, ``dperp2`` and
    ``ddperp`` take a scalar potential.
    """
    if kind in ("dg", "dperp_g"):
        if not isinstance(generator, VectorField2):
            raise InputError(f"{kind} needs a vector field generator")
        f = sym_derivative(generator) if kind == "dg" else sym_derivative_perp(generator)
    elif kind in ("d2", "dperp2", "ddperp"):
        if not isinstance(generator, ScalarField2):
            raise InputError(f"{kind} needs a scalar potential")
        if kind == "d2":
            f = sym_derivative(gradient(generator))
        elif kind == "dperp2":
            f = sym_derivative_perp(gradient_perp(generator))
        else:
            f = sym_derivative(gradient_perp(generator))
    else:
        raise InputError(f"unknown structured field kind {kind!r}; expected one of {STRUCTURED_KINDS}")
    return _field(f.spec, f.f11, f.f12, f.f22)
