"""Recovery of structured tensor fields: ``d g``, ``d-perp g``, ``d^2 phi``,
``(d-perp)^2 phi`` and ``d d-perp phi``.

For these classes the data are pointwise expressions in ``g`` or ``phi``
(for example ``L(d g) = -2 u2 g2``), so most recoveries are a rescaling or a
single integration along an axis. The remaining component solves a constant
coefficient second-order PDE ``a d1^2 w + c d2^2 w = rhs`` whose type is fixed
by the sign of ``c``.

The PDE right-hand sides use ``D_u D_v V psi = -2 u2 d2 psi`` instead of
re-simulating ``V psi``; the two are equal for compactly supported ``psi``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InputError, ScalarField2, VectorField2, VLineGeometry, dudv, partial
from .numerics import (
    EllipticProblem,
    primitive,
    solve_degenerate_double_integral,
    solve_elliptic,
    solve_hyperbolic,
)

DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class PdeRegime:
    """Type of ``a d1^2 w + c d2^2 w = rhs`` with ``a > 0``.

    ``degenerate`` when ``|c| <= 1e-12``, ``elliptic`` when ``c > 0`` and
    ``hyperbolic`` when ``c < 0``.
    """

    kind: str
    a: float
    c: float

    def __post_init__(self):
        if self.kind not in ("degenerate", "elliptic", "hyperbolic"):
            raise InputError(f"unknown regime {self.kind!r}")
        if not self.a > 0:
            raise InputError(f"need a > 0, got {self.a!r}")

    @classmethod
    def classify(cls, a: float, c: float) -> "PdeRegime":
        if abs(c) <= DEGENERATE_TOL:
            return cls("degenerate", a, 0.0)
        return cls("elliptic" if c > 0 else "hyperbolic", a, c)

    def solve(self, rhs: ScalarField2, tol: float = 1e-10, report: list | None = None) -> ScalarField2:
        """Solve with zero data on the left edge (marching) or the boundary (elliptic)."""
        if self.kind == "degenerate":
            return solve_degenerate_double_integral(self.a, rhs)
        if self.kind == "elliptic":
            return solve_elliptic(EllipticProblem(self.a, self.c, -rhs), tol=tol, report=report)
        return solve_hyperbolic(self.a, -self.c, rhs)


def regime_for(geom: VLineGeometry) -> PdeRegime:
    """Regime of the ``d g`` / ``d-perp g`` equation ``2 u1^2 d1^2 + (u1^2 - u2^2) d2^2``."""
    return PdeRegime.classify(2 * geom.u1**2, geom.delta)


def _mask(spec, support_radius):
    return None if support_radius is None else spec.disk_mask(support_radius + 1e-9)


def _cut(a, mask):
    return a if mask is None else np.where(mask, a, 0.0)


def _same_grid(*fields: ScalarField2):
    if len({f.spec for f in fields}) > 1:
        raise InputError("data grids differ")


def recover_dg(
    dataL: ScalarField2,
    dataM: ScalarField2,
    geom: VLineGeometry,
    support_radius: float | None = 1.0,
    tol: float = 1e-10,
    report: list | None = None,
) -> VectorField2:
    """Recover ``g`` from ``L f`` and ``M f`` when ``f = d g``.

    ``g2 = -L / (2 u2)`` pointwise, then
    ``2 u1^2 d1^2 g1 + (u1^2 - u2^2) d2^2 g1 = -D_u D_v M / u2 + d1 d2 g2``.
    """
    _same_grid(dataL, dataM)
    spec, h, u2 = dataL.spec, dataL.spec.h, geom.u2
    mask = _mask(spec, support_radius)
    g2 = _cut(-dataL.values / (2 * u2), mask)
    rhs = _cut(-dudv(dataM.values, h, geom) / u2 + partial(partial(g2, h, 0), h, 1), mask)
    g1 = regime_for(geom).solve(ScalarField2(spec, rhs), tol, report)
    return VectorField2(spec, g1.values, g2)


def recover_dperp_g(
    dataT: ScalarField2,
    dataM: ScalarField2,
    geom: VLineGeometry,
    support_radius: float | None = 1.0,
    tol: float = 1e-10,
    report: list | None = None,
) -> VectorField2:
    """Recover ``g`` from ``T f`` and ``M f`` when ``f = d-perp g``.

    ``g1 = T / (2 u2)`` pointwise, then
    ``2 u1^2 d1^2 g2 + (u1^2 - u2^2) d2^2 g2 = D_u D_v M / u2 - d1 d2 g1``.
    """
    _same_grid(dataT, dataM)
    spec, h, u2 = dataT.spec, dataT.spec.h, geom.u2
    mask = _mask(spec, support_radius)
    g1 = _cut(dataT.values / (2 * u2), mask)
    rhs = _cut(dudv(dataM.values, h, geom) / u2 - partial(partial(g1, h, 0), h, 1), mask)
    g2 = regime_for(geom).solve(ScalarField2(spec, rhs), tol, report)
    return VectorField2(spec, g1, g2.values)


def _integrate(data: ScalarField2, scale: float, axis: int, support_radius) -> ScalarField2:
    """``scale * X_e(data)`` for a datum that is an exact derivative along ``e``."""
    a = _cut(data.values, _mask(data.spec, support_radius))
    # X_e psi(x) = -(antiderivative of psi along e) for compactly supported results
    return ScalarField2(data.spec, -scale * primitive(a, data.spec.h, axis))


def _check_source(source: str, allowed: tuple[str, ...]):
    if source not in allowed:
        raise InputError(f"source must be one of {allowed}, got {source!r}")


def recover_potential_d2(data: ScalarField2, geom: VLineGeometry, source: str = "L", support_radius: float | None = 1.0) -> ScalarField2:
    """``phi`` from ``f = d^2 phi``.

    ``phi = (1/2u2) X_e2 L f = -(1/2u2) X_e1 M f``.
    """
    _check_source(source, ("L", "M"))
    u2 = geom.u2
    if source == "L":
        return _integrate(data, 1 / (2 * u2), 1, support_radius)
    return _integrate(data, -1 / (2 * u2), 0, support_radius)


def recover_potential_dperp2(data: ScalarField2, geom: VLineGeometry, source: str = "T", support_radius: float | None = 1.0) -> ScalarField2:
    """``phi`` from ``f = (d-perp)^2 phi``.

    ``phi = (1/2u2) X_e2 T f = (1/2u2) X_e1 M f``.
    """
    _check_source(source, ("T", "M"))
    u2 = geom.u2
    if source == "T":
        return _integrate(data, 1 / (2 * u2), 1, support_radius)
    return _integrate(data, 1 / (2 * u2), 0, support_radius)


def recover_potential_ddperp(data: ScalarField2, geom: VLineGeometry, source: str = "L", support_radius: float | None = 1.0) -> ScalarField2:
    """``phi`` from ``f = d d-perp phi``.

    ``phi = (1/2u2) X_e1 L f = -(1/2u2) X_e1 T f``.
    """
    _check_source(source, ("L", "T"))
    sign = 1.0 if source == "L" else -1.0
    return _integrate(data, sign / (2 * geom.u2), 0, support_radius)


def ddperp_regime(geom: VLineGeometry) -> PdeRegime:
    """Regime of ``(1 + 2 u1^2) d1^2 + (u1^2 - u2^2) d2^2``."""
    return PdeRegime.classify(1 + 2 * geom.u1**2, geom.delta)


def recover_potential_ddperp_from_M(
    dataM: ScalarField2,
    geom: VLineGeometry,
    support_radius: float | None = 1.0,
    tol: float = 1e-10,
    report: list | None = None,
) -> ScalarField2:
    """``phi`` from ``M f`` when ``f = d d-perp phi``.

    Solves ``(1 + 2 u1^2) d1^2 phi + (u1^2 - u2^2) d2^2 phi = -(1/u2) X_e2 D_u D_v M f``
    with zero data on the grid boundary or the left edge.
    """
    spec, h = dataM.spec, dataM.spec.h
    mask = _mask(spec, support_radius)
    dd = _cut(dudv(dataM.values, h, geom), mask)
    rhs = _cut(primitive(dd, h, 1) / geom.u2, mask)
    return ddperp_regime(geom).solve(ScalarField2(spec, rhs), tol, report)
