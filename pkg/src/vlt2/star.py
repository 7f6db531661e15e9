"""Star transform of a symmetric 2-tensor field and its inversion.

A star with branches ``gamma_i`` and weights ``c_i`` maps ``f`` to the three
grids ``sum_i c_i X_{gamma_i}(f : t_i)`` with ``t_i`` in
``gamma_i^2``, ``gamma_i (.) gamma_i^perp`` and ``(gamma_i^perp)^2``.

Tensors are stored as ``(t11, t12, t22)``, and ``f : t = f11 t11 + 2 f12 t12
+ f22 t22``. The rows of ``Q(xi)`` hold the tensors themselves, so the Radon
identity reads ``d/ds R(S f) = Q(xi) W R f`` with ``W = diag(1, 2, 1)``.

Inversion does not take the Radon transform of the star data directly: the
data fill strips that leave the grid. Applying ``prod_j D_{gamma_j}`` first
gives a compactly supported field whose Radon transform is
``kappa(xi) d^m/ds^m R(S f)``. After ``m - 1`` integrations in ``s``, the
per-angle system is ``-P(xi) W R f = G`` with the polynomial matrix
``P = -kappa Q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.integrate import cumulative_trapezoid

from .core import (
    GridSpec,
    InputError,
    NotInvertibleError,
    ScalarField2,
    SingularDirectionError,
    SymTensorField2,
    Vec2,
    Vlt2Error,
    directional,
    perp,
    sym_outer,
)
from .forward import DEFAULT_QUADRATURE, RayQuadratureConfig, beam_grid
from .numerics import Sinogram, SinogramSpec, inverse_radon_fbp, radon, warn

EPS_Z = 1e-9
W = np.array([1.0, 2.0, 1.0])


@dataclass(frozen=True)
class StarGeometry:
    """Branch directions ``gammas`` (unit vectors) and non-zero ``weights``."""

    gammas: tuple[Vec2, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.gammas) != len(self.weights):
            raise InputError("one weight per branch")
        if len(self.gammas) < 2:
            raise InputError("a star needs at least two branches")
        for g in self.gammas:
            if abs(math.hypot(*g) - 1.0) > 1e-12:
                raise InputError(f"branch {tuple(g)} is not a unit vector")
        for c in self.weights:
            if c == 0 or not math.isfinite(c):
                raise InputError("branch weights must be finite and non-zero")
        for i, a in enumerate(self.gammas):
            for b in self.gammas[i + 1:]:
                if math.hypot(a[0] - b[0], a[1] - b[1]) <= 1e-12:
                    raise InputError("branch directions must be distinct")

    @classmethod
    def from_angles(cls, degrees, weights=None) -> "StarGeometry":
        gammas = tuple(Vec2(math.cos(math.radians(a)), math.sin(math.radians(a))) for a in degrees)
        weights = tuple(float(c) for c in (weights if weights is not None else [1.0] * len(gammas)))
        return cls(gammas, weights)

    @property
    def m(self) -> int:
        return len(self.gammas)


@dataclass(frozen=True, eq=False)
class StarData:
    """The longitudinal, mixed and transverse components of ``S f``."""

    long: ScalarField2
    mixed: ScalarField2
    trans: ScalarField2

    def __post_init__(self):
        if not self.long.spec == self.mixed.spec == self.trans.spec:
            raise InputError("star data components must share one grid")

    @property
    def spec(self) -> GridSpec:
        return self.long.spec

    def components(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.long.values, self.mixed.values, self.trans.values


def _tensors(g) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    gp = perp(g)
    return np.array(sym_outer(g, g)), np.array(sym_outer(g, gp)), np.array(sym_outer(gp, gp))


def star_forward(f: SymTensorField2, geom: StarGeometry, cfg: RayQuadratureConfig = DEFAULT_QUADRATURE) -> StarData:
    """``S f`` on the grid of ``f``."""
    comps = np.stack(f.components())
    outs = [np.zeros(f.spec.shape) for _ in range(3)]
    for g, c in zip(geom.gammas, geom.weights):
        for out, t in zip(outs, _tensors(g)):
            proj = np.tensordot(W * t, comps, axes=1)
            if proj.any():
                out += c * beam_grid(proj, f.spec, g, (0,), cfg)[0]
    return StarData(*(ScalarField2(f.spec, o) for o in outs))


# ---------------------------------------------------------------------------
# Q(xi) and its polynomial form


def _xi(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    n = np.hypot(*xi)
    if not n > 0:
        raise InputError("xi must be non-zero")
    return xi / n


def gamma_vectors(geom: StarGeometry, xi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``gamma(xi)``, ``gamma-dagger(xi)`` and ``gamma-perp(xi)`` as 3-vectors.

    Raises
    ------
    SingularDirectionError
        If ``|xi . gamma_i| <= 1e-9`` for some branch.
    """
    xi = _xi(xi)
    rows = [np.zeros(3) for _ in range(3)]
    for g, c in zip(geom.gammas, geom.weights):
        d = xi @ np.asarray(g)
        if abs(d) <= EPS_Z:
            raise SingularDirectionError(f"xi = {tuple(xi)} is orthogonal to branch {tuple(g)}")
        for r, t in zip(rows, _tensors(g)):
            r -= c * t / d
    return rows[0], rows[1], rows[2]


def p_matrix(geom: StarGeometry, xi) -> tuple[np.ndarray, float]:
    """Numerators ``P``, ``P-dagger``, ``P-perp`` as rows, and ``kappa(xi)``.

    Defined for every ``xi``; ``Q = -P / kappa`` off the type-1 set.
    """
    xi = _xi(xi)
    dots = np.array([xi @ np.asarray(g) for g in geom.gammas])
    P = np.zeros((3, 3))
    for i, (g, c) in enumerate(zip(geom.gammas, geom.weights)):
        kappa_i = np.prod(np.delete(dots, i))
        P += c * kappa_i * np.stack(_tensors(g))
    return P, float(np.prod(dots))


def det_from_p(P: np.ndarray, kappa: float) -> float:
    """``det Q = -(4 P12^2 + (P11 - P22)^2)(P11 + P22) / (2 kappa^3)``."""
    p11, p12, p22 = P[0]
    return -(4 * p12 * p12 + (p11 - p22) ** 2) * (p11 + p22) / (2 * kappa**3)


def _det3(A: np.ndarray) -> float:
    return float(
        A[0, 0] * (A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
        - A[0, 1] * (A[1, 0] * A[2, 2] - A[1, 2] * A[2, 0])
        + A[0, 2] * (A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0])
    )


def _adjugate(A: np.ndarray) -> np.ndarray:
    C = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            minor = np.delete(np.delete(A, i, 0), j, 1)
            C[i, j] = (-1) ** (i + j) * (minor[0, 0] * minor[1, 1] - minor[0, 1] * minor[1, 0])
    return C.T


@dataclass(frozen=True)
class QMatrix:
    xi: Vec2
    rows: np.ndarray
    det: float
    det_formula: float


def build_Q(geom: StarGeometry, xi, rtol: float = 1e-9) -> QMatrix:
    """``Q(xi)`` with its determinant by cofactors and by the ``P`` formula.

    The two determinants are compared relative to the Hadamard bound
    ``prod |row|``, which keeps the check meaningful where ``det Q`` vanishes.
    The bound is floored at the cube of the typical row size
    ``sum |c_i| / |xi . gamma_i|`` so rows cancelling to rounding level pass.

    Raises
    ------
    Vlt2Error
        If the two determinants disagree beyond ``rtol``.
    """
    rows = np.stack(gamma_vectors(geom, xi))
    P, kappa = p_matrix(geom, xi)
    det = _det3(rows)
    det_p = det_from_p(P, kappa)
    x = _xi(xi)
    typical = sum(abs(c) / abs(x @ np.asarray(g)) for g, c in zip(geom.gammas, geom.weights))
    scale = max(float(np.prod(np.linalg.norm(rows, axis=1))), 1e-12 * typical**3)
    if abs(det - det_p) > rtol * max(scale, abs(det), 1e-300):
        raise Vlt2Error(f"determinant mismatch at xi={xi}: cofactor {det!r} vs formula {det_p!r}")
    return QMatrix(Vec2(float(x[0]), float(x[1])), rows, det, det_p)


# ---------------------------------------------------------------------------
# singular directions


def is_symmetric(geom: StarGeometry, tol: float = 1e-12) -> bool:
    """True iff the branches pair up as ``(gamma, c)`` and ``(-gamma, c)``."""
    if geom.m % 2:
        return False
    unused = list(range(geom.m))
    while unused:
        i = unused.pop(0)
        gi, ci = geom.gammas[i], geom.weights[i]
        for j in unused:
            gj, cj = geom.gammas[j], geom.weights[j]
            if math.hypot(gi[0] + gj[0], gi[1] + gj[1]) <= tol and abs(ci - cj) <= tol:
                unused.remove(j)
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class SingularSets:
    """Type-1 and type-2 singular angles in ``[0, pi)``, in radians."""

    z1: tuple[float, ...]
    z2: tuple[float, ...]
    z2_everywhere: bool

    def all_angles(self) -> tuple[float, ...]:
        return tuple(sorted(self.z1 + self.z2))


def _unit_at(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


def _roots(fun, n: int, tol: float = 1e-12) -> list[float]:
    """Sign changes of ``fun`` on ``[0, pi)``, refined by bisection."""
    th = np.pi * np.arange(n + 1) / n
    vals = np.array([fun(t) for t in th])
    out = []
    for k in range(n):
        a, b = th[k], th[k + 1]
        fa, fb = vals[k], vals[k + 1]
        if fa == 0.0:
            out.append(a)
        elif fa * fb < 0:
            out.append(optimize.brentq(fun, a, b, xtol=tol, rtol=4 * np.finfo(float).eps))
    return [t % np.pi for t in out]


def _dedupe(angles, tol=1e-9) -> tuple[float, ...]:
    out = []
    for a in sorted(angles):
        if not out or min(abs(a - out[-1]), np.pi - abs(a - out[-1])) > tol:
            out.append(a)
    if len(out) > 1 and np.pi - (out[-1] - out[0]) <= tol:
        out.pop()
    return tuple(out)


def singular_sets(geom: StarGeometry, angle_samples: int = 3600, tol: float = 1e-9) -> SingularSets:
    """Locate the type-1 and type-2 singular directions on ``[0, pi)``.

    Type 1 is closed form: ``xi`` orthogonal to a branch. Type 2 is where
    ``P-dagger`` vanishes (``P12 = 0`` and ``P11 = P22``) or where
    ``sum_i c_i kappa_i = 0``; both are found by a sign-change scan of the
    polynomial numerators and bisection. When either function vanishes on the
    whole scan, type 2 is the whole circle.
    """
    z1 = _dedupe([(math.atan2(g[1], g[0]) + np.pi / 2) % np.pi for g in geom.gammas])

    def P(t):
        return p_matrix(geom, _unit_at(t))[0]

    def trace(t):
        Pt = P(t)
        return Pt[0, 0] + Pt[0, 2]

    def p12(t):
        return P(t)[0, 1]

    def diff(t):
        Pt = P(t)
        return Pt[0, 0] - Pt[0, 2]

    scan = np.pi * np.arange(angle_samples) / angle_samples
    scale = sum(abs(c) for c in geom.weights)
    tr_vals = np.array([trace(t) for t in scan])
    dag_vals = np.array([np.abs(P(t)[1]).max() for t in scan])
    if np.abs(tr_vals).max() <= 1e-12 * scale or dag_vals.max() <= 1e-12 * scale:
        return SingularSets(z1, (), True)
    z2 = [t for t in _roots(trace, angle_samples) if abs(trace(t)) <= tol * scale]
    # P-dagger = (-P12, (P11 - P22)/2, P12): roots of P12 where P11 = P22 too
    z2 += [t for t in _roots(p12, angle_samples) if abs(diff(t)) <= tol * scale]
    z2 += [t for t in _roots(diff, angle_samples) if abs(p12(t)) <= tol * scale]
    return SingularSets(z1, _dedupe(z2), False)


# ---------------------------------------------------------------------------
# inversion


COND_WARN = 1e8


def star_angles(geom: StarGeometry, n_angles: int, margin_deg: float = 0.5, sets: SingularSets | None = None) -> tuple[float, ...]:
    """Uniform angles in ``[0, pi)`` minus those within ``margin_deg`` of a singular direction."""
    sets = sets or singular_sets(geom)
    base = np.pi * np.arange(n_angles) / n_angles
    bad = np.array(sets.all_angles())
    margin = math.radians(margin_deg)
    if bad.size:
        gap = np.abs((base[:, None] - bad[None, :] + np.pi / 2) % np.pi - np.pi / 2)
        keep = gap.min(axis=1) > margin
    else:
        keep = np.ones(n_angles, bool)
    if keep.sum() < 0.9 * n_angles:
        warn(f"{n_angles - keep.sum()} of {n_angles} angles lie near singular directions")
    return tuple(float(a) for a in base[keep])


def _cut(a, mask):
    return a if mask is None else np.where(mask, a, 0.0)


def _reduced_sinograms(data: StarData, geom: StarGeometry, sino_spec: SinogramSpec, mask, order: int) -> np.ndarray:
    """``d^{1-m}/ds^{1-m} R(prod_j D_{gamma_j} S f)`` per component, shape ``(3, angles, offsets)``."""
    spec = data.spec
    out = []
    for comp in data.components():
        a = comp
        for g in geom.gammas:
            a = directional(a, spec.h, g)
        s = radon(ScalarField2(spec, _cut(a, mask)), sino_spec, order=order)
        v = s.values
        # the reduced field is compact, so integrals from the low end are exact
        for _ in range(geom.m - 1):
            v = cumulative_trapezoid(v, dx=s.ds, axis=1, initial=0.0)
        out.append(v)
    return np.stack(out)


def star_invert(
    data: StarData,
    geom: StarGeometry,
    sino_spec: SinogramSpec | None = None,
    grid: GridSpec | None = None,
    n_angles: int = 360,
    margin_deg: float = 0.5,
    support_radius: float | None = 1.0,
    radon_order: int = 3,
) -> SymTensorField2:
    """Recover ``f`` from ``S f``.

    Parameters
    ----------
    sino_spec : SinogramSpec, optional
        Offsets of the sinogram; angles are always chosen by ``star_angles``.
        Default: grid spacing over ``1.1 r2``.
    grid : GridSpec, optional
        Output grid; defaults to the data grid.
    support_radius : float or None
        ``prod_j D_{gamma_j} S f`` is supported in ``supp f``; it is cut to
        this disk before the Radon transform.

    Raises
    ------
    NotInvertibleError
        If the star is symmetric.
    """
    if is_symmetric(geom):
        raise NotInvertibleError("star transform is not invertible: the star is symmetric")
    sets = singular_sets(geom)
    if sets.z2_everywhere:
        raise NotInvertibleError("star transform is not invertible: type-2 singular set is the whole circle")
    spec = data.spec
    grid = grid or spec
    sino_spec = sino_spec or SinogramSpec.for_grid(spec)
    angles = star_angles(geom, n_angles, margin_deg, sets)
    sino_spec = SinogramSpec(len(angles), sino_spec.n_offsets, sino_spec.s_max, angles)
    mask = None if support_radius is None else spec.disk_mask(support_radius + 1e-9)

    G = _reduced_sinograms(data, geom, sino_spec, mask, radon_order)

    rf = np.empty_like(G)
    worst = 0.0
    for k, th in enumerate(angles):
        P, _ = p_matrix(geom, _unit_at(th))
        A = -P * W[None, :]
        det = _det3(A)
        adj = _adjugate(A)
        cond = np.linalg.norm(A) * np.linalg.norm(adj) / abs(det) if det else math.inf
        worst = max(worst, cond)
        rf[:, k, :] = (adj @ G[:, k, :]) / det
    if worst > COND_WARN:
        warn(f"per-angle system condition number reaches {worst:.2e}")

    offsets = sino_spec.offset_array()
    comps = [inverse_radon_fbp(Sinogram(np.asarray(angles), offsets, rf[i]), grid).values for i in range(3)]
    return SymTensorField2(grid, *comps)


def radon_identity_residual(f: SymTensorField2, geom: StarGeometry, xi_angles, sino_spec: SinogramSpec | None = None, radon_order: int = 3):
    """``d/ds R(S f) - Q(xi) W R f`` at the given angles, in the polynomial form.

    Both sides are multiplied by ``kappa``: the left side becomes
    ``d^{1-m}/ds^{1-m} R(prod_j D_{gamma_j} S f)`` and the right side
    ``-P W R f``. Returns ``(lhs, rhs)`` of shape ``(3, angles, offsets)``.
    """
    spec = f.spec
    base = sino_spec or SinogramSpec.for_grid(spec)
    ss = SinogramSpec(len(xi_angles), base.n_offsets, base.s_max, tuple(xi_angles))
    data = star_forward(f, geom)
    mask = spec.disk_mask(1.0 + 1e-9)
    lhs = _reduced_sinograms(data, geom, ss, mask, radon_order)
    rf = np.stack([radon(ScalarField2(spec, c), ss, order=radon_order).values for c in f.components()])
    rhs = np.empty_like(rf)
    for k, th in enumerate(xi_angles):
        P, _ = p_matrix(geom, _unit_at(th))
        rhs[:, k, :] = (-P * W[None, :]) @ rf[:, k, :]
    return lhs, rhs
