"""Reconstruction of a symmetric 2-tensor field from V-line data.

Every procedure is a fixed chain of finite differences (``D_u D_v`` and
``D_u + D_v``) and cumulative integrations along the grid axes. Where a
formula allows a choice, derivatives are applied before integrations: the
differentiated data are compactly supported, while raw V-line data fill
semi-infinite strips that the grid truncates.

Integrals of derivatives of compactly supported quantities are taken as the
average of the cumulative integrals from both grid edges, which halves the
error accumulated along the line. The differentiated data that enter an
integration are supported in ``supp f``. They are cut to the disk of radius ``support_radius`` (the unit
disk by default) before integrating, so that one-sided stencil errors on the
box edge, where the strips of moment data are large, do not leak inwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    GeometryError,
    InputError,
    ScalarField2,
    SymTensorField2,
    VLineGeometry,
    du_plus_dv,
    dudv,
    partial,
)
from .forward import DEFAULT_QUADRATURE, transform_field
from .numerics import EllipticProblem, integrate_along, primitive, solve_elliptic

TAGS = ("L", "T", "M", "L1", "T1", "M1", "L2", "T2", "M2")

# largest tolerated 1/|u1^2 - u2^2| for procedures that divide by it
CONDITION_LIMIT = 1e9


@dataclass(frozen=True, eq=False)
class VltData:
    """V-line data on a common grid, keyed by transform tag (``"L"``, ``"M1"``, ...)."""

    geom: VLineGeometry
    grids: dict[str, ScalarField2] = field(default_factory=dict)
    support_radius: float | None = 1.0

    def __post_init__(self):
        specs = {g.spec for g in self.grids.values()}
        if len(specs) > 1:
            raise InputError("all data grids must share one GridSpec")
        for tag in self.grids:
            if tag not in TAGS:
                raise InputError(f"unknown data tag {tag!r}")

    @property
    def spec(self):
        if not self.grids:
            raise InputError("no data grids")
        return next(iter(self.grids.values())).spec

    @property
    def mask(self) -> np.ndarray | None:
        if self.support_radius is None:
            return None
        return self.spec.disk_mask(self.support_radius + 1e-9)

    def need(self, *tags: str) -> list[np.ndarray]:
        missing = [t for t in tags if t not in self.grids]
        if missing:
            raise InputError(f"missing data: {', '.join(missing)}")
        return [self.grids[t].values for t in tags]


def _scalar(data: VltData, a: np.ndarray) -> ScalarField2:
    return ScalarField2(data.spec, a)


def _tensor(data: VltData, f11, f12, f22) -> SymTensorField2:
    return SymTensorField2(data.spec, f11, f12, f22)


def _check_delta(geom: VLineGeometry, what: str):
    if abs(geom.delta) < 1.0 / CONDITION_LIMIT:
        raise GeometryError(f"{what} degenerates when u1^2 = u2^2 (|u1^2 - u2^2| = {abs(geom.delta):.2e})")


# ---------------------------------------------------------------------------
# building blocks


class _Ops:
    """Finite-difference and integration operators bound to one grid and geometry."""

    def __init__(self, h: float, geom: VLineGeometry, mask: np.ndarray | None):
        self.h, self.geom, self.mask = h, geom, mask

    @classmethod
    def of(cls, data: VltData) -> "_Ops":
        return cls(data.spec.h, data.geom, data.mask)

    def cut(self, a: np.ndarray) -> np.ndarray:
        """Restrict a quantity known to vanish outside ``supp f``."""
        return a if self.mask is None else np.where(self.mask, a, 0.0)

    def dd(self, a):
        return dudv(a, self.h, self.geom)

    def s(self, a):
        return du_plus_dv(a, self.h, self.geom)

    def d(self, a, axis):
        return partial(a, self.h, axis)

    def x(self, a, direction):
        return integrate_along(a, self.h, direction)

    def p(self, a, axis):
        """Antiderivative of a compactly supported derivative."""
        return primitive(a, self.h, axis)

    def invert_vline(self, d):
        """``phi`` from ``V phi``: ``D_u D_v V = -2 u2 d2``."""
        return -self.p(self.cut(self.dd(d)), 1) / (2 * self.geom.u2)

    def invert_signed_vline(self, dm):
        """``phi`` from ``V^- phi``: ``D_u D_v V^- = 2 u1 d1``."""
        return self.p(self.cut(self.dd(dm)), 0) / (2 * self.geom.u1)

    def trace(self, L, T):
        return self.invert_vline(L + T)

    def weighted(self, W, W1):
        """``-(D_u D_v W1 + (D_u + D_v) W) / 2``."""
        return self.cut(-0.5 * (self.dd(W1) + self.s(W)))

    def bracket(self, W, W1):
        """``d2 X_e1 [(D_u D_v X_e2 / u2 + D_u + D_v) W + D_u D_v W1]``.

        Equals ``4 u1^2 f12`` for L, ``-4 u1^2 f12`` for T and
        ``-2 u1^2 (f11 - f22)`` for M.
        """
        inner = self.x(self.cut(self.dd(W)), "+e2") / self.geom.u2 - 2 * self.weighted(W, W1)
        return self.d(self.x(inner, "+e1"), 1)

    def difference_from_M(self, M, f12):
        """``f11 - f22`` from M once ``f12`` is known.

        From ``D_u D_v M = -2 u1^2 u2 d1 (f11 - f22) - 2 u2 (u1^2 - u2^2) d2 f12``.
        """
        u1, u2 = self.geom.u1, self.geom.u2
        rhs = self.cut(-2 * u2 * self.geom.delta * self.d(f12, 1) - self.dd(M))
        return self.p(rhs, 0) / (2 * u1 * u1 * u2)


def invert_signed_vline(dm: ScalarField2, geom: VLineGeometry, support_radius: float | None = 1.0) -> ScalarField2:
    """Recover ``phi`` from ``V^- phi``."""
    mask = None if support_radius is None else dm.spec.disk_mask(support_radius + 1e-9)
    return ScalarField2(dm.spec, _Ops(dm.spec.h, geom, mask).invert_signed_vline(dm.values))


def invert_vline(d: ScalarField2, geom: VLineGeometry, support_radius: float | None = 1.0) -> ScalarField2:
    """Recover ``phi`` from ``V phi``."""
    mask = None if support_radius is None else d.spec.disk_mask(support_radius + 1e-9)
    return ScalarField2(d.spec, _Ops(d.spec.h, geom, mask).invert_vline(d.values))


# ---------------------------------------------------------------------------
# trace and the L, T, M procedures


def recover_trace(data: VltData) -> ScalarField2:
    """``f11 + f22 = (1 / 2u2) D_u D_v X_e2 (L + T)``.

    ``D_u D_v`` is applied first; the two commute on compactly supported data.
    """
    L, T = data.need("L", "T")
    return _scalar(data, _Ops.of(data).trace(L, T))


def recover_orthogonal_case(data: VltData) -> SymTensorField2:
    """Full recovery from L, T, M when the branches are orthogonal.

    Then ``L - T = 4 u1^2 V^-(f12)`` and ``M = u1^2 V^-(f22 - f11)``.
    """
    geom = data.geom
    if abs(geom.u1 - geom.u2) > 1e-12:
        raise InputError("branches are not orthogonal; use recover_full_LTM")
    L, T, M = data.need("L", "T", "M")
    op = _Ops.of(data)
    u1s = geom.u1**2
    f12 = op.invert_signed_vline(L - T) / (4 * u1s)
    diff = op.invert_signed_vline(M) / u1s  # f22 - f11
    tr = op.trace(L, T)
    return _tensor(data, 0.5 * (tr - diff), f12, 0.5 * (tr + diff))


def recover_full_LTM(data: VltData, tol: float = 1e-10, report: list | None = None, f11_route: str = "integrate") -> SymTensorField2:
    """Full recovery from L, T, M for any admissible geometry.

    ``f12`` solves ``-(a d1^2 + b d2^2) f12 = g`` with ``a = 4 u1^4``,
    ``b = (u1^2 - u2^2)^2`` and
    ``g = (1 / 2u2) [u1^2 d1 D_u D_v (T - L) + (u1^2 - u2^2) d2 D_u D_v M]``.

    ``f11`` comes from the pair of identities

    ``E1 = u2^2 D_u D_v T - u1^2 D_u D_v L = -4 u1^2 u2 d1 f12 + 2 u2 (u1^2 - u2^2) d2 f11``
    ``E2 = D_u D_v M - 2 u1^2 u2 d1 tr = -4 u1^2 u2 d1 f11 - 2 u2 (u1^2 - u2^2) d2 f12``

    The default route ``"integrate"`` integrates the first along ``x2``
    using the recovered ``f12``. The route ``"elliptic"`` eliminates ``f12``
    between the two, which gives the same operator as for ``f12``:
    ``-(a d1^2 + b d2^2) f11 = -((u1^2 - u2^2) d2 E1 - 2 u1^2 d1 E2) / (2 u2)``,
    and does not differentiate the recovered ``f12``.

    ``report`` receives one :class:`~vlt2.numerics.SolveReport` per solve.
    """
    geom = data.geom
    if geom.is_orthogonal:
        return recover_orthogonal_case(data)
    if f11_route not in ("elliptic", "integrate"):
        raise InputError(f"unknown f11 route {f11_route!r}")
    L, T, M = data.need("L", "T", "M")
    op = _Ops.of(data)
    u1, u2, dl = geom.u1, geom.u2, geom.delta
    ddL, ddT, ddM = op.dd(L), op.dd(T), op.dd(M)
    a, b = 2 * u1 * u1 * (1 + dl), dl * dl
    g = op.cut(u1 * u1 * op.d(ddT - ddL, 0) + dl * op.d(ddM, 1)) / (2 * u2)
    f12 = solve_elliptic(EllipticProblem(a, b, _scalar(data, g)), tol=tol, report=report).values
    tr = op.trace(L, T)
    E1 = u2 * u2 * ddT - u1 * u1 * ddL
    if f11_route == "integrate":
        f11 = op.p(op.cut(E1 + 4 * u1 * u1 * u2 * op.d(f12, 0)), 1) / (2 * u2 * dl)
    else:
        E2 = ddM - 2 * u1 * u1 * u2 * op.d(tr, 0)
        rhs = op.cut(-(dl * op.d(E1, 1) - 2 * u1 * u1 * op.d(E2, 0))) / (2 * u2)
        f11 = solve_elliptic(EllipticProblem(a, b, _scalar(data, rhs)), tol=tol, report=report).values
    return _tensor(data, f11, f12, tr - f11)


# ---------------------------------------------------------------------------
# procedures using a first moment


def recover_f12_from_L_L1(data: VltData) -> ScalarField2:
    """``f12 = (1 / 4u1^2) d2 X_e1 [(D_u D_v X_e2 / u2 + D_u + D_v) L + D_u D_v L1]``.

    ``X_e1`` integrates along ``+e1``, from the right edge of the grid.
    """
    L, L1 = data.need("L", "L1")
    return _scalar(data, _Ops.of(data).bracket(L, L1) / (4 * data.geom.u1**2))


def recover_weighted_trace_from_L_L1(data: VltData) -> ScalarField2:
    """``u1^2 f11 + u2^2 f22 = -(D_u D_v L1 + (D_u + D_v) L) / 2``."""
    L, L1 = data.need("L", "L1")
    return _scalar(data, _Ops.of(data).weighted(L, L1))


def recover_f12_from_T_T1(data: VltData) -> ScalarField2:
    """Transverse analogue: ``f12 = -(1 / 4u1^2) d2 X_e1 [...]`` with T, T1."""
    T, T1 = data.need("T", "T1")
    return _scalar(data, -_Ops.of(data).bracket(T, T1) / (4 * data.geom.u1**2))


def recover_weighted_trace_from_T_T1(data: VltData) -> ScalarField2:
    """``u2^2 f11 + u1^2 f22 = -(D_u D_v T1 + (D_u + D_v) T) / 2``."""
    T, T1 = data.need("T", "T1")
    return _scalar(data, _Ops.of(data).weighted(T, T1))


def recover_f12_from_M_M1(data: VltData) -> ScalarField2:
    """``f12 = -(D_u D_v M1 + (D_u + D_v) M) / (2 (u1^2 - u2^2))``."""
    _check_delta(data.geom, "f12 from M and M1")
    M, M1 = data.need("M", "M1")
    return _scalar(data, _Ops.of(data).weighted(M, M1) / data.geom.delta)


def recover_difference_from_M_M1(data: VltData) -> ScalarField2:
    """``f11 - f22 = -(1 / 2u1^2) d2 X_e1 [...]`` with M, M1."""
    M, M1 = data.need("M", "M1")
    return _scalar(data, -_Ops.of(data).bracket(M, M1) / (2 * data.geom.u1**2))


def recover_full_L_L1_T(data: VltData) -> SymTensorField2:
    """Solve ``u1^2 f11 + u2^2 f22 = A``, ``f11 + f22 = B`` with ``f12`` from L, L1."""
    geom = data.geom
    if abs(geom.delta) < 1e-9:
        raise GeometryError("L, L1 and T do not determine f when u1 = u2")
    L, L1, T = data.need("L", "L1", "T")
    op = _Ops.of(data)
    f12 = op.bracket(L, L1) / (4 * geom.u1**2)
    A = op.weighted(L, L1)
    B = op.trace(L, T)
    u1s, u2s = geom.u1**2, geom.u2**2
    return _tensor(data, (A - u2s * B) / geom.delta, f12, (u1s * B - A) / geom.delta)


def recover_full_L_L1_M(data: VltData) -> SymTensorField2:
    """``f12`` and ``u1^2 f11 + u2^2 f22`` from L, L1; ``f11 - f22`` from M.

    ``M`` enters through ``u1 u2 V^-(f11 - f22) = (u1^2 - u2^2) V(f12) - M``;
    after ``D_u D_v`` the term ``V(f12)`` becomes ``-2 u2 d2 f12``, so the
    recovered ``f12`` is used directly rather than re-projected.
    """
    geom = data.geom
    L, L1, M = data.need("L", "L1", "M")
    op = _Ops.of(data)
    f12 = op.bracket(L, L1) / (4 * geom.u1**2)
    A = op.weighted(L, L1)
    D = op.difference_from_M(M, f12)
    return _tensor(data, A + geom.u2**2 * D, f12, A - geom.u1**2 * D)


def recover_full_T_T1_L(data: VltData) -> SymTensorField2:
    """Solve ``u2^2 f11 + u1^2 f22 = A``, ``f11 + f22 = B`` with ``f12`` from T, T1."""
    geom = data.geom
    if abs(geom.delta) < 1e-9:
        raise GeometryError("T, T1 and L do not determine f when u1 = u2")
    T, T1, L = data.need("T", "T1", "L")
    op = _Ops.of(data)
    f12 = -op.bracket(T, T1) / (4 * geom.u1**2)
    A = op.weighted(T, T1)
    B = op.trace(L, T)
    u1s, u2s = geom.u1**2, geom.u2**2
    return _tensor(data, (u1s * B - A) / geom.delta, f12, (A - u2s * B) / geom.delta)


def recover_full_T_T1_M(data: VltData) -> SymTensorField2:
    """``f12`` and ``u2^2 f11 + u1^2 f22`` from T, T1; ``f11 - f22`` from M."""
    geom = data.geom
    T, T1, M = data.need("T", "T1", "M")
    op = _Ops.of(data)
    f12 = -op.bracket(T, T1) / (4 * geom.u1**2)
    A = op.weighted(T, T1)
    D = op.difference_from_M(M, f12)
    return _tensor(data, A + geom.u1**2 * D, f12, A - geom.u2**2 * D)


def recover_full_M_M1_L(data: VltData) -> SymTensorField2:
    """``f12`` and ``f11 - f22`` from M, M1; ``u1^2 f11 + u2^2 f22`` from L.

    ``u1^2 f11 + u2^2 f22 = (1 / 2u2) X_e2 D_u D_v L - 2 u1^2 X_e2 d1 f12``.
    """
    geom = data.geom
    _check_delta(geom, "recovery from M, M1 and L")
    M, M1, L = data.need("M", "M1", "L")
    op = _Ops.of(data)
    u1s = geom.u1**2
    f12 = op.weighted(M, M1) / geom.delta
    D = -op.bracket(M, M1) / (2 * u1s)
    A = -op.p(op.cut(op.dd(L) / (2 * geom.u2) - 2 * u1s * op.d(f12, 0)), 1)
    f22 = A - u1s * D
    return _tensor(data, f22 + D, f12, f22)


def recover_full_M_M1_T(data: VltData) -> SymTensorField2:
    """``f12`` and ``f11 - f22`` from M, M1; ``u2^2 f11 + u1^2 f22`` from T.

    ``u2^2 f11 + u1^2 f22 = (1 / 2u2) X_e2 D_u D_v T + 2 u1^2 X_e2 d1 f12``.
    """
    geom = data.geom
    _check_delta(geom, "recovery from M, M1 and T")
    M, M1, T = data.need("M", "M1", "T")
    op = _Ops.of(data)
    u1s, u2s = geom.u1**2, geom.u2**2
    f12 = op.weighted(M, M1) / geom.delta
    D = -op.bracket(M, M1) / (2 * u1s)
    A = -op.p(op.cut(op.dd(T) / (2 * geom.u2) + 2 * u1s * op.d(f12, 0)), 1)
    f22 = A - u2s * D
    return _tensor(data, f22 + D, f12, f22)


COMBINATIONS = {
    "l-l1-t": (recover_full_L_L1_T, ("L", "L1", "T")),
    "l-l1-m": (recover_full_L_L1_M, ("L", "L1", "M")),
    "t-t1-l": (recover_full_T_T1_L, ("T", "T1", "L")),
    "t-t1-m": (recover_full_T_T1_M, ("T", "T1", "M")),
    "m-m1-l": (recover_full_M_M1_L, ("M", "M1", "L")),
    "m-m1-t": (recover_full_M_M1_T, ("M", "M1", "T")),
}


# ---------------------------------------------------------------------------
# moment identities


def moment_recurrence_residual(data: VltData, which: str = "L") -> ScalarField2:
    """``-D_u D_v W2 - 2 W - 2 (D_u + D_v) W1`` for ``W`` in L, T, M; zero in exact arithmetic."""
    if which not in ("L", "T", "M"):
        raise InputError(f"unknown transform {which!r}")
    W, W1, W2 = data.need(which, which + "1", which + "2")
    h, geom = data.spec.h, data.geom
    return _scalar(data, -dudv(W2, h, geom) - 2 * W - 2 * du_plus_dv(W1, h, geom))


def predict_L1_orthogonal(L: ScalarField2, trace: ScalarField2, geom: VLineGeometry, cfg=DEFAULT_QUADRATURE) -> ScalarField2:
    """First moment of L from L and the trace when ``u1 = u2``.

    There ``L = V(tr) / 2 + V^-(f12)``, so ``f12`` and then ``L1`` follow.
    """
    if not geom.is_orthogonal:
        raise InputError("L1 is determined by L and the trace only for orthogonal branches")
    Vtr = transform_field(SymTensorField2(L.spec, trace.values, L.spec.zeros(), trace.values), geom, "L")
    # with f11 = f22 = tr, L = u1^2 V(tr) + u2^2 V(tr) = V(tr)
    f12 = invert_signed_vline(L - 0.5 * Vtr, geom).values / (2 * geom.u1 * geom.u2)
    half = 0.5 * trace.values
    return transform_field(SymTensorField2(L.spec, half, f12, half), geom, "L", 1, cfg)
