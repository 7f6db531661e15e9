"""Acceptance suite: one pass/fail line per criterion.

Shared by ``vlt2 selftest`` and ``tests/test_acceptance.py``. Every number
printed is rounded to a fixed number of digits and no wall-clock time is
printed, so two runs with the same seed give identical bytes.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (
    GeometryError,
    GridSpec,
    NotInvertibleError,
    ScalarField2,
    VectorField2,
    VLineGeometry,
    Vec2,
    directional,
    rel_l2,
)
from .forward import beam_grid, transforms
from .numerics import SinogramSpec
from .phantoms import (
    BumpSpec,
    bump,
    bump_tensor,
    counterexample_field,
    default_phantom,
    kernel_field_L,
    kernel_field_M,
    kernel_field_T,
    random_bump_spec,
    structured_field,
)
from .recon import (
    COMBINATIONS,
    VltData,
    moment_recurrence_residual,
    recover_f12_from_L_L1,
    recover_full_L_L1_T,
    recover_full_LTM,
    recover_orthogonal_case,
    recover_trace,
)
from .special_fields import (
    recover_dg,
    recover_dperp_g,
    recover_potential_d2,
    recover_potential_ddperp,
    recover_potential_ddperp_from_M,
    recover_potential_dperp2,
)
from .star import (
    StarGeometry,
    build_Q,
    gamma_vectors,
    radon_identity_residual,
    star_forward,
    star_invert,
)

DEFAULT_SEED = 20240917
PROTOTYPE = BumpSpec(Vec2(0.0, 0.0), 1.0, 1.0)
HYPERBOLIC = VLineGeometry(0.6)
ELLIPTIC = VLineGeometry(0.8)
ORTHOGONAL = VLineGeometry(1 / math.sqrt(2))


@dataclass(frozen=True)
class SelftestConfig:
    """Resolution and seed of the acceptance suite."""

    n: int = 128
    seed: int = DEFAULT_SEED


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"criterion {self.number:2d} {'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


@dataclass
class _Checks:
    """Collects sub-checks of one criterion."""

    parts: list[str] = field(default_factory=list)
    ok: bool = True

    def add(self, label: str, value: float, passed: bool, fmt: str = ".3e"):
        self.parts.append(f"{label}={value:{fmt}}{'' if passed else '!'}")
        self.ok &= bool(passed)

    def flag(self, label: str, passed: bool):
        self.parts.append(f"{label}={'ok' if passed else 'NO'}")
        self.ok &= bool(passed)

    def detail(self) -> str:
        return " ".join(self.parts)


def _order(coarse: float, fine: float, h_coarse: float, h_fine: float) -> float:
    return math.log(coarse / fine) / math.log(h_coarse / h_fine)


def _d1(grid: GridSpec) -> np.ndarray:
    return grid.disk_mask(1.0)


# ---------------------------------------------------------------------------
# criteria


def commutation(cfg: SelftestConfig) -> _Checks:
    """``X_u(D_u h) = -h`` on five random bumps, 128 and 256 points."""
    c = _Checks()
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    u = HYPERBOLIC.u
    worst, worst_ratio = 0.0, math.inf
    for _ in range(5):
        spec = random_bump_spec(rng, 0.65, 0.95)
        res = []
        for n in (cfg.n, 2 * cfg.n):
            g = GridSpec.square(n)
            h = bump(spec, g).values
            r = beam_grid(directional(h, g.h, u), g, u)[0] + h
            res.append(np.abs(r[_d1(g)]).max() / np.abs(h).max())
        worst = max(worst, res[0])
        worst_ratio = min(worst_ratio, res[0] / res[1])
    c.add("max_rel_residual", worst, worst <= 0.01)
    c.add("min_refinement_ratio", worst_ratio, worst_ratio >= 3.5, ".2f")
    c.flag("runtime<=30s", time.perf_counter() - t0 <= 30.0)
    return c


def kernel_annihilation(cfg: SelftestConfig) -> _Checks:
    """Kernel fields of L, T, M from the prototype potential."""
    c = _Checks()
    geom = HYPERBOLIC
    builders = (("L", lambda p: kernel_field_L(p, None, geom)), ("T", lambda p: kernel_field_T(p, None, geom)), ("M", lambda p: kernel_field_M(p, None, geom)))
    for tag, build in builders:
        vals, hs = [], []
        for n in (cfg.n, 2 * cfg.n):
            g = GridSpec.square(n)
            f = build(bump(PROTOTYPE, g))
            w = transforms(f, geom, (tag,))[tag].values
            vals.append(np.abs(w).max() / (f.max_abs() * g.inscribed_radius))
            hs.append(g.h)
        c.add(f"{tag}_rel", vals[0], vals[0] <= 1e-3)
        p = _order(vals[0], vals[1], hs[0], hs[1])
        c.add(f"{tag}_order", p, p >= 1.7, ".2f")
    return c


def _phantom_data(n: int, geom: VLineGeometry, which=("L", "T", "M"), ks=(0,)):
    g = GridSpec.square(n)
    f = default_phantom(g)
    return g, f, VltData(geom, transforms(f, geom, which, ks))


def trace_recovery(cfg: SelftestConfig) -> _Checks:
    c = _Checks()
    g, f, data = _phantom_data(cfg.n, HYPERBOLIC, ("L", "T"))
    e = rel_l2(recover_trace(data).values, f.trace(), _d1(g))
    c.add("rel_l2", e, e <= 0.02)
    return c


def _componentwise(c: _Checks, prefix: str, rec, truth, mask, tol):
    for name, a, b in zip(("f11", "f12", "f22"), rec.components(), truth.components()):
        e = rel_l2(a, b, mask)
        c.add(f"{prefix}{name}", e, e <= tol)


def orthogonal_case(cfg: SelftestConfig) -> _Checks:
    c = _Checks()
    g, f, data = _phantom_data(cfg.n, ORTHOGONAL)
    _componentwise(c, "", recover_orthogonal_case(data), f, _d1(g), 0.03)
    return c


def full_ltm(cfg: SelftestConfig) -> _Checks:
    c = _Checks()
    t0 = time.perf_counter()
    worst_res = 0.0
    for geom, tag in ((HYPERBOLIC, "u1=0.6:"), (ELLIPTIC, "u1=0.8:")):
        g, f, data = _phantom_data(cfg.n, geom)
        report = []
        rec = recover_full_LTM(data, tol=1e-10, report=report)
        _componentwise(c, tag, rec, f, _d1(g), 0.05)
        worst_res = max([worst_res] + [r.residual for r in report])
    c.add("elliptic_residual", worst_res, worst_res <= 1e-10)
    c.flag("runtime<=300s", time.perf_counter() - t0 <= 300.0)
    return c


def moment_recurrence(cfg: SelftestConfig) -> _Checks:
    """Second-moment recurrence on the prototype bump, 96 and 192 points, full-grid max."""
    c = _Checks()
    geom = HYPERBOLIC
    res, hs = {}, []
    for n in (96, 192):
        g = GridSpec.square(n)
        f = bump_tensor(g, (PROTOTYPE,) * 3)
        data = VltData(geom, transforms(f, geom, ("L", "T", "M"), (0, 1, 2)))
        res[n] = {w: np.abs(moment_recurrence_residual(data, w).values).max() for w in "LTM"}
        hs.append(g.h)
    for w in "LTM":
        p = _order(res[96][w], res[192][w], hs[0], hs[1])
        c.add(f"{w}_max96", res[96][w], True)
        c.add(f"{w}_order", p, 1.7 <= p <= 2.3, ".3f")
    return c


def counterexample(cfg: SelftestConfig) -> _Checks:
    c = _Checks()
    g = GridSpec.square(cfg.n)
    geom = HYPERBOLIC
    f = counterexample_field(bump(PROTOTYPE, g), geom)
    tol = 1e-3 * f.max_abs() * g.inscribed_radius
    d = transforms(f, geom, ("L",), (0, 1))
    for tag in ("L", "L1"):
        v = np.abs(d[tag].values).max()
        c.add(f"max|{tag}|", v, v <= tol)
    f12 = np.abs(recover_f12_from_L_L1(VltData(geom, d)).values).max()
    c.add("max|f12_rec|", f12, f12 <= 1e-3 * f.max_abs())
    return c


def moment_combinations(cfg: SelftestConfig) -> _Checks:
    c = _Checks()
    geom = HYPERBOLIC
    g, f, data = _phantom_data(cfg.n, geom, ("L", "T", "M"), (0, 1))
    for method, (fn, _) in COMBINATIONS.items():
        _componentwise(c, f"{method}:", fn(data), f, _d1(g), 0.06)
    _, _, odata = _phantom_data(64, ORTHOGONAL, ("L", "T"), (0, 1))
    try:
        recover_full_L_L1_T(odata)
        rejected = False
    except GeometryError:
        rejected = True
    c.flag("l-l1-t_rejects_u1=u2", rejected)
    return c


def structured(cfg: SelftestConfig) -> _Checks:
    c = _Checks()
    g = GridSpec.square(cfg.n)
    D1 = _d1(g)
    gv = VectorField2(g, bump(BumpSpec(Vec2(0.05, 0.03), 0.9, 1.0), g).values, bump(BumpSpec(Vec2(-0.04, 0.06), 0.88, -0.8), g).values)
    phi = bump(BumpSpec(Vec2(0.03, -0.02), 0.92, 1.0), g).values

    def err_vec(r):
        return max(rel_l2(r.g1, gv.g1, D1), rel_l2(r.g2, gv.g2, D1))

    def err(p):
        return rel_l2(p.values, phi, D1)

    def agree(a, b):
        return rel_l2(a.values, b.values, D1)

    for geom, tag in ((ELLIPTIC, "ell"), (HYPERBOLIC, "hyp")):
        d = transforms(structured_field("dg", gv), geom)
        e = err_vec(recover_dg(d["L"], d["M"], geom))
        c.add(f"dg_{tag}", e, e <= 0.05)
        d = transforms(structured_field("dperp_g", gv), geom)
        e = err_vec(recover_dperp_g(d["T"], d["M"], geom))
        c.add(f"dperp_g_{tag}", e, e <= 0.05)
    geom = HYPERBOLIC
    pf = ScalarField2(g, phi)
    d = transforms(structured_field("d2", pf), geom)
    a, b = recover_potential_d2(d["L"], geom, "L"), recover_potential_d2(d["M"], geom, "M")
    c.add("d2_L", err(a), err(a) <= 0.03)
    c.add("d2_M", err(b), err(b) <= 0.03)
    c.add("d2_L_vs_M", agree(a, b), agree(a, b) <= 0.06)
    d = transforms(structured_field("dperp2", pf), geom)
    a, b = recover_potential_dperp2(d["T"], geom, "T"), recover_potential_dperp2(d["M"], geom, "M")
    c.add("dperp2_T", err(a), err(a) <= 0.03)
    c.add("dperp2_M", err(b), err(b) <= 0.03)
    c.add("dperp2_T_vs_M", agree(a, b), agree(a, b) <= 0.06)
    d = transforms(structured_field("ddperp", pf), geom)
    a, b = recover_potential_ddperp(d["L"], geom, "L"), recover_potential_ddperp(d["T"], geom, "T")
    m = recover_potential_ddperp_from_M(d["M"], geom)
    c.add("ddperp_L", err(a), err(a) <= 0.03)
    c.add("ddperp_T", err(b), err(b) <= 0.03)
    c.add("ddperp_M", err(m), err(m) <= 0.03)
    c.add("ddperp_L_vs_T", agree(a, b), agree(a, b) <= 0.06)
    c.add("ddperp_M_vs_L", agree(m, a), agree(m, a) <= 0.06)
    return c


def star_checks(cfg: SelftestConfig) -> _Checks:
    c = _Checks()
    g = GridSpec.square(cfg.n)
    f = default_phantom(g)
    # (a) two branches u, v with unit weights give (L, M, T)
    geom = HYPERBOLIC
    s = star_forward(f, StarGeometry((geom.u, geom.v), (1.0, 1.0)))
    d = transforms(f, geom)
    gap = max(np.abs(a - d[t].values).max() / np.abs(d[t].values).max() for a, t in zip(s.components(), "LMT"))
    c.add("a:m2_vs_LMT", gap, gap <= 1e-10)
    # (b) determinant by cofactors and by the P formula
    rng = np.random.default_rng(cfg.seed + 1)
    worst = 0.0
    done = 0
    while done < 1000:
        m = int(rng.integers(2, 7))
        sg = StarGeometry.from_angles(rng.uniform(0, 360, m), rng.uniform(0.2, 2.0, m) * rng.choice([-1, 1], m))
        xi = rng.normal(size=2)
        try:
            q = build_Q(sg, xi, rtol=math.inf)
        except GeometryError:
            continue
        worst = max(worst, abs(q.det - q.det_formula) / max(float(np.prod(np.linalg.norm(q.rows, axis=1))), 1e-300))
        done += 1
    c.add("b:det_mismatch", worst, worst <= 1e-9)
    # (c) Radon-domain identity, three branches
    sg = StarGeometry.from_angles([90, 210, 330])
    angles = tuple(np.deg2rad([10.0, 37.0, 71.0, 100.0, 143.0]))
    lhs, rhs = radon_identity_residual(f, sg, angles)
    e = float(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs))
    c.add("c:radon_identity_rel", e, e <= 0.01)
    # (d) inversion round trip
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rec = star_invert(star_forward(f, sg), sg, SinogramSpec.for_grid(g), n_angles=360)
    for name, a, b in zip(("f11", "f12", "f22"), rec.components(), f.components()):
        e = rel_l2(a, b, _d1(g))
        c.add(f"d:{name}", e, e <= 0.06)
    # (e) symmetric stars are rejected
    sym = StarGeometry.from_angles([30, 210], [1.5, 1.5])
    try:
        star_invert(star_forward(f, sym), sym)
        rejected = False
    except NotInvertibleError as exc:
        rejected = "not invertible" in str(exc)
    c.flag("e:symmetric_rejected", rejected)
    # (f) zero-set containment and the two-branch example
    bad = 0
    for sg in (StarGeometry.from_angles([0, 90]), StarGeometry.from_angles([90, 210, 330]), StarGeometry.from_angles([20, 75, 160, 250], [1.0, -0.7, 1.3, 0.4])):
        for th in np.pi * (np.arange(7200) + 0.5) / 7200:
            try:
                gm, gd, gp = gamma_vectors(sg, (math.cos(th), math.sin(th)))
            except GeometryError:
                continue
            if np.abs(gm).max() <= 1e-9 and (np.abs(gp).max() > 1e-9 or np.abs(gd).max() > 1e-9):
                bad += 1
            if np.abs(gp).max() <= 1e-9 and np.abs(gm).max() > 1e-9:
                bad += 1
    c.flag("f:containment", bad == 0)
    gm, gd, _ = gamma_vectors(StarGeometry.from_angles([0, 90]), (1 / math.sqrt(2), 1 / math.sqrt(2)))
    ex = np.abs(gd).max() <= 1e-12 and np.allclose(gm, -math.sqrt(2) * np.array([1.0, 0.0, 1.0]), atol=1e-12)
    c.flag("f:example", ex)
    return c


CRITERIA: dict[int, tuple[str, Callable[[SelftestConfig], _Checks]]] = {
    1: ("commutation identity", commutation),
    2: ("kernel annihilation", kernel_annihilation),
    3: ("trace recovery", trace_recovery),
    4: ("orthogonal case", orthogonal_case),
    5: ("full L,T,M recovery", full_ltm),
    6: ("moment recurrence", moment_recurrence),
    7: ("counterexample field", counterexample),
    8: ("moment-based recoveries", moment_combinations),
    9: ("structured recoveries", structured),
    10: ("star transform", star_checks),
}


def run_criteria(cfg: SelftestConfig = SelftestConfig(), numbers=None, emit: Callable[[str], None] | None = None) -> list[CriterionResult]:
    """Run criteria 1 to 10 (or ``numbers``) and return their results."""
    out = []
    for k in numbers or sorted(CRITERIA):
        name, fn = CRITERIA[k]
        checks = fn(cfg)
        r = CriterionResult(k, name, checks.ok, checks.detail())
        out.append(r)
        if emit:
            emit(r.line())
    return out


def report(results: list[CriterionResult]) -> str:
    return "".join(r.line() + "\n" for r in results)


def determinism(first: str, second: str, all_passed: bool) -> CriterionResult:
    """Criterion 11: two runs pass and print identical bytes."""
    same = first.encode() == second.encode()
    detail = f"identical_bytes={'ok' if same else 'NO'} both_passed={'ok' if all_passed else 'NO'}"
    return CriterionResult(11, "determinism", same and all_passed, detail)


def run_selftest(cfg: SelftestConfig = SelftestConfig(), repeat: int = 2, emit: Callable[[str], None] | None = print) -> list[CriterionResult]:
    """Criteria 1 to 10, repeated ``repeat`` times; criterion 11 compares the runs."""
    first = run_criteria(cfg, emit=emit)
    results = list(first)
    if repeat >= 2:
        second = run_criteria(cfg)
        passed = all(r.passed for r in first) and all(r.passed for r in second)
        r11 = determinism(report(first), report(second), passed)
        results.append(r11)
        if emit:
            emit(r11.line())
    return results
