"""Divergent beam transforms, their moments, and the tensor V-line transforms.

Pointwise evaluators integrate the bilinear interpolant of a grid field along a
single ray with the composite trapezoid rule. The grid evaluators compute the
same sums at every vertex at once: with a step that is a fixed fraction of the
grid spacing, the k-th sample point of every ray sits at the same sub-cell
offset, so each quadrature node is a shifted copy of the field with constant
bilinear weights.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    GridSpec,
    InputError,
    ScalarField2,
    SymTensorField2,
    VLineGeometry,
    norm,
)

TRANSFORMS = ("L", "T", "M")


@dataclass(frozen=True)
class RayQuadratureConfig:
    """Quadrature along rays.

    Parameters
    ----------
    step : float, optional
        Arc-length spacing of the trapezoid nodes. Defaults to half the grid
        spacing.
    max_len : float, optional
        Truncation length of each ray. Defaults to the diagonal of the grid
        box, which every ray starting inside the box has left by then.
    """

    step: float | None = None
    max_len: float | None = None

    def __post_init__(self):
        if self.step is not None and not self.step > 0:
            raise InputError(f"quadrature step must be positive, got {self.step!r}")
        if self.max_len is not None and not self.max_len > 0:
            raise InputError(f"max_len must be positive, got {self.max_len!r}")

    def resolve(self, spec: GridSpec) -> tuple[float, float]:
        step = self.step if self.step is not None else 0.5 * spec.h
        max_len = self.max_len if self.max_len is not None else spec.diagonal
        return step, max_len


DEFAULT_QUADRATURE = RayQuadratureConfig()


def _unit(w) -> tuple[float, float]:
    if abs(norm(w) - 1.0) > 1e-12:
        raise InputError(f"ray direction must be a unit vector, |w| = {norm(w)!r}")
    return float(w[0]), float(w[1])


def _check_k(k: int) -> int:
    if int(k) != k or k < 0:
        raise InputError(f"moment order must be a nonnegative integer, got {k!r}")
    return int(k)


# ---------------------------------------------------------------------------
# pointwise evaluation


def _bilinear(values: np.ndarray, spec: GridSpec, p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    """Bilinear interpolant at points given in index units; zero off the grid."""
    i0 = np.floor(p1)
    j0 = np.floor(p2)
    a = p1 - i0
    b = p2 - j0
    i0 = i0.astype(np.int64)
    j0 = j0.astype(np.int64)
    out = np.zeros(p1.shape)
    nx, ny = spec.shape
    for di, dj, wt in ((0, 0, (1 - a) * (1 - b)), (1, 0, a * (1 - b)), (0, 1, (1 - a) * b), (1, 1, a * b)):
        ii = i0 + di
        jj = j0 + dj
        ok = (ii >= 0) & (ii < nx) & (jj >= 0) & (jj < ny)
        out[ok] += wt[ok] * values[ii[ok], jj[ok]]
    return out


def _ray_samples(spec: GridSpec, w, x, cfg: RayQuadratureConfig):
    step, max_len = cfg.resolve(spec)
    n = int(math.ceil(max_len / step))
    t = step * np.arange(n + 1)
    p1 = (x[0] - spec.x_min) / spec.h + t * (w[0] / spec.h)
    p2 = (x[1] - spec.y_min) / spec.h + t * (w[1] / spec.h)
    weights = np.full(n + 1, step)
    weights[0] = weights[-1] = 0.5 * step
    return t, p1, p2, weights


def moment_divergent_beam(hf: ScalarField2, w, x, k: int, cfg: RayQuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """``X^k_w h(x)``, the integral of ``h(x + t w) t^k`` over ``t >= 0``."""
    k = _check_k(k)
    w = _unit(w)
    t, p1, p2, weights = _ray_samples(hf.spec, w, x, cfg)
    vals = _bilinear(hf.values, hf.spec, p1, p2)
    if k:
        weights = weights * t**k
    return float(np.dot(weights, vals))


def divergent_beam(hf: ScalarField2, w, x, cfg: RayQuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """``X_w h(x)``, the integral of ``h(x + t w)`` over ``t >= 0``."""
    return moment_divergent_beam(hf, w, x, 0, cfg)


def vline_scalar(hf: ScalarField2, geom: VLineGeometry, x, cfg: RayQuadratureConfig = DEFAULT_QUADRATURE, k: int = 0) -> float:
    """``V h = X_u h + X_v h`` (or its k-th moment)."""
    return moment_divergent_beam(hf, geom.u, x, k, cfg) + moment_divergent_beam(hf, geom.v, x, k, cfg)


def vline_scalar_signed(hf: ScalarField2, geom: VLineGeometry, x, cfg: RayQuadratureConfig = DEFAULT_QUADRATURE, k: int = 0) -> float:
    """``V^- h = X_u h - X_v h`` (or its k-th moment)."""
    return moment_divergent_beam(hf, geom.u, x, k, cfg) - moment_divergent_beam(hf, geom.v, x, k, cfg)


def _combine(which: str, geom: VLineGeometry, V, Vm):
    """Simplified componentwise forms of L, T, M.

    ``V`` and ``Vm`` map component names to V and V^- of that component.
    """
    u1, u2 = geom.u1, geom.u2
    if which == "L":
        return u1 * u1 * V["f11"] + 2 * u1 * u2 * Vm["f12"] + u2 * u2 * V["f22"]
    if which == "T":
        return u2 * u2 * V["f11"] - 2 * u1 * u2 * Vm["f12"] + u1 * u1 * V["f22"]
    if which == "M":
        return -u1 * u2 * Vm["f11"] + geom.delta * V["f12"] + u1 * u2 * Vm["f22"]
    raise InputError(f"unknown transform {which!r}; expected one of {TRANSFORMS}")


def _vlt_point(which, f: SymTensorField2, geom, x, k, cfg):
    k = _check_k(k)
    V, Vm = {}, {}
    for name in ("f11", "f12", "f22"):
        hf = ScalarField2(f.spec, getattr(f, name))
        xu = moment_divergent_beam(hf, geom.u, x, k, cfg)
        xv = moment_divergent_beam(hf, geom.v, x, k, cfg)
        V[name], Vm[name] = xu + xv, xu - xv
    return float(_combine(which, geom, V, Vm))


def vlt_L(f, geom, x, cfg=DEFAULT_QUADRATURE):
    """Longitudinal V-line transform at the vertex ``x``."""
    return _vlt_point("L", f, geom, x, 0, cfg)


def vlt_T(f, geom, x, cfg=DEFAULT_QUADRATURE):
    """Transverse V-line transform at the vertex ``x``."""
    return _vlt_point("T", f, geom, x, 0, cfg)


def vlt_M(f, geom, x, cfg=DEFAULT_QUADRATURE):
    """Mixed V-line transform at the vertex ``x``."""
    return _vlt_point("M", f, geom, x, 0, cfg)


def vlt_Lk(f, geom, x, k, cfg=DEFAULT_QUADRATURE):
    return _vlt_point("L", f, geom, x, k, cfg)


def vlt_Tk(f, geom, x, k, cfg=DEFAULT_QUADRATURE):
    return _vlt_point("T", f, geom, x, k, cfg)


def vlt_Mk(f, geom, x, k, cfg=DEFAULT_QUADRATURE):
    return _vlt_point("M", f, geom, x, k, cfg)


# ---------------------------------------------------------------------------
# grid evaluation


def beam_grid(values: np.ndarray, spec: GridSpec, w, ks=(0,), cfg: RayQuadratureConfig = DEFAULT_QUADRATURE) -> list[np.ndarray]:
    """``X^k_w h`` at every grid vertex for each ``k`` in ``ks``.

    Uses the same nodes, weights and interpolant as the pointwise evaluator.
    """
    w = _unit(w)
    ks = [_check_k(k) for k in ks]
    step, max_len = cfg.resolve(spec)
    nx, ny = spec.shape
    # no ray starting on the grid is still inside the box beyond t_exit
    t_exit = min(
        (spec.x_max - spec.x_min) / abs(w[0]) if w[0] else math.inf,
        (spec.y_max - spec.y_min) / abs(w[1]) if w[1] else math.inf,
    )
    n_full = int(math.ceil(max_len / step))
    n = min(n_full, int(math.ceil(t_exit / step)) + 1)
    d1, d2 = step * w[0] / spec.h, step * w[1] / spec.h
    pad = int(math.ceil(n * max(abs(d1), abs(d2)))) + 2
    hp = np.zeros((nx + 2 * pad, ny + 2 * pad))
    hp[pad:pad + nx, pad:pad + ny] = values
    outs = [np.zeros(spec.shape) for _ in ks]
    for m in range(n + 1):
        # the last node carries half weight only if it is the true truncation point
        wt = 0.5 * step if (m == 0 or m == n_full) else step
        s1, s2 = m * d1, m * d2
        i0, j0 = math.floor(s1), math.floor(s2)
        a, b = s1 - i0, s2 - j0
        if i0 >= nx or j0 >= ny or i0 + 1 < -nx or j0 + 1 < -ny:
            break
        r, c = pad + i0, pad + j0
        sample = (1 - a) * (1 - b) * hp[r:r + nx, c:c + ny]
        if a:
            sample += a * (1 - b) * hp[r + 1:r + 1 + nx, c:c + ny]
        if b:
            sample += (1 - a) * b * hp[r:r + nx, c + 1:c + 1 + ny]
            if a:
                sample += a * b * hp[r + 1:r + 1 + nx, c + 1:c + 1 + ny]
        t = m * step
        for out, k in zip(outs, ks):
            out += (wt * t**k) * sample if k else wt * sample
    return outs


def beam_field(hf: ScalarField2, w, k: int = 0, cfg: RayQuadratureConfig = DEFAULT_QUADRATURE) -> ScalarField2:
    """``X^k_w h`` as a grid field."""
    return ScalarField2(hf.spec, beam_grid(hf.values, hf.spec, w, (k,), cfg)[0])


def vline_grids(values: np.ndarray, spec: GridSpec, geom: VLineGeometry, k: int = 0, cfg=DEFAULT_QUADRATURE):
    """``(V h, V^- h)`` on the grid, or their k-th moments."""
    xu = beam_grid(values, spec, geom.u, (k,), cfg)[0]
    xv = beam_grid(values, spec, geom.v, (k,), cfg)[0]
    return xu + xv, xu - xv


def transforms(f: SymTensorField2, geom: VLineGeometry, which=("L", "T", "M"), ks=(0,), cfg=DEFAULT_QUADRATURE, threads: int = 1) -> dict[str, ScalarField2]:
    """Several transforms and moments at once, sharing the ray sums.

    Returns a dict keyed ``"L"``, ``"L1"``, ``"T2"`` and so on. With
    ``threads > 1`` the six beam sums run in a thread pool; each is computed
    independently, so the result does not depend on ``threads``.
    """
    ks = sorted({_check_k(k) for k in ks})
    for w in which:
        if w not in TRANSFORMS:
            raise InputError(f"unknown transform {w!r}; expected one of {TRANSFORMS}")
    if threads < 1:
        raise InputError(f"threads must be at least 1, got {threads!r}")
    names = [n for n in ("f11", "f12", "f22") if getattr(f, n).any()]
    jobs = [(n, w) for n in names for w in (geom.u, geom.v)]

    def run(job):
        return beam_grid(getattr(f, job[0]), f.spec, job[1], ks, cfg)

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            sums = list(pool.map(run, jobs))
    else:
        sums = [run(j) for j in jobs]
    V = {k: {n: np.zeros(f.spec.shape) for n in ("f11", "f12", "f22")} for k in ks}
    Vm = {k: {n: np.zeros(f.spec.shape) for n in ("f11", "f12", "f22")} for k in ks}
    for i, n in enumerate(names):
        xu, xv = sums[2 * i], sums[2 * i + 1]
        for k, a, b in zip(ks, xu, xv):
            V[k][n], Vm[k][n] = a + b, a - b
    out = {}
    for w in which:
        for k in ks:
            out[w + (str(k) if k else "")] = ScalarField2(f.spec, _combine(w, geom, V[k], Vm[k]))
    return out


def transform_field(f: SymTensorField2, geom: VLineGeometry, which: str, k: int = 0, cfg=DEFAULT_QUADRATURE) -> ScalarField2:
    """Evaluate one of L, T, M (or a moment ``k``) at every grid vertex.

    ``which`` may also carry the moment order, as in ``"L1"``.
    """
    if len(which) > 1 and which[1:].isdigit():
        which, k = which[0], int(which[1:])
    (res,) = transforms(f, geom, (which,), (k,), cfg).values()
    return res
