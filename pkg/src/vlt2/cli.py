"""Command-line front end.

Subcommands: ``phantom``, ``forward``, ``invert``, ``star`` and ``selftest``.
Exit codes: 0 success, 2 input error, 3 solver error, 4 geometry for which
the requested procedure does not exist (not invertible, degenerate).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    GeometryError,
    GridSpec,
    InputError,
    ScalarField2,
    SolverError,
    SymTensorField2,
    VectorField2,
    VLineGeometry,
    Vlt2Error,
    rel_l2,
)
from .fieldfile import read_field, write_csv, write_field
from .forward import RayQuadratureConfig, transforms
from .phantoms import (
    STRUCTURED_KINDS,
    BumpSpec,
    bump,
    counterexample_field,
    default_phantom,
    kernel_field_L,
    kernel_field_M,
    kernel_field_T,
    random_bump_spec,
    structured_field,
)
from .recon import COMBINATIONS, TAGS, VltData, recover_full_LTM, recover_orthogonal_case, recover_trace
from .special_fields import (
    recover_dg,
    recover_dperp_g,
    recover_potential_d2,
    recover_potential_ddperp,
    recover_potential_ddperp_from_M,
    recover_potential_dperp2,
)
from .star import StarData, StarGeometry, is_symmetric, singular_sets, star_forward, star_invert

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_GEOMETRY = 0, 2, 3, 4
METHODS = ("trace", "ortho", "ltm", *COMBINATIONS, "dg", "dperpg", "d2", "dperp2", "ddperp", "star")
PHANTOM_KINDS = ("default", "random", *STRUCTURED_KINDS, "kernel-L", "kernel-T", "kernel-M", "counterexample")
STAR_FILES = ("S_long", "S_mixed", "S_trans")


@dataclass(frozen=True)
class RunConfig:
    """Settings shared by the subcommands, validated at parse time."""

    geometry: VLineGeometry | None = None
    star: StarGeometry | None = None
    grid: int = 128
    step: float | None = None
    tol: float = 1e-10
    noise: float = 0.0
    seed: int = 0
    threads: int = 1


def parse_geometry(text: str) -> VLineGeometry:
    """``u1=<r>`` with ``0 < r < 1``."""
    key, _, val = text.partition("=")
    if key.strip() != "u1" or not val:
        raise InputError(f"geometry must look like u1=<r>, got {text!r}")
    try:
        return VLineGeometry(float(val))
    except ValueError as exc:
        raise InputError(str(exc)) from None


def parse_star(text: str) -> StarGeometry:
    """``"a1:c1,a2:c2,..."`` with angles in degrees; a missing weight means 1."""
    angles, weights = [], []
    try:
        for item in text.split(","):
            a, _, c = item.strip().partition(":")
            angles.append(float(a))
            weights.append(float(c) if c else 1.0)
    except ValueError:
        raise InputError(f"cannot parse star {text!r}; expected 'a1:c1,a2:c2,...'") from None
    return StarGeometry.from_angles(angles, weights)


def resolve_threads(flag: int | None) -> int:
    env = os.environ.get("VLT2_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise InputError(f"VLT2_THREADS must be an integer, got {env!r}") from None
    else:
        n = 1 if flag is None else flag
    if n < 1:
        raise InputError("thread count must be at least 1")
    return n


def config_from_args(args) -> RunConfig:
    geometry = parse_geometry(args.geometry) if getattr(args, "geometry", None) else None
    star = parse_star(args.star) if getattr(args, "star", None) else None
    if getattr(args, "noise", 0.0) < 0:
        raise InputError("noise must be non-negative")
    return RunConfig(
        geometry=geometry,
        star=star,
        grid=getattr(args, "grid", 128),
        step=getattr(args, "step", None),
        tol=getattr(args, "tol", 1e-10),
        noise=getattr(args, "noise", 0.0),
        seed=getattr(args, "seed", 0),
        threads=resolve_threads(getattr(args, "threads", None)),
    )


def _need(value, what: str):
    if value is None:
        raise InputError(f"{what} is required")
    return value


def _save(field, out: str | None, csv: str | None):
    if out:
        write_field(out, field)
    if csv:
        write_csv(csv, field)


# ---------------------------------------------------------------------------
# phantom


def make_phantom(kind: str, grid: GridSpec, cfg: RunConfig):
    """Return ``(field, generator)``; the generator is ``None`` for plain phantoms."""
    rng = np.random.default_rng(cfg.seed)
    if kind == "default":
        return default_phantom(grid), None
    if kind == "random":
        comps = [bump(random_bump_spec(rng, 0.65, 0.95), grid).values for _ in range(3)]
        return SymTensorField2(grid, *comps), None
    phi = bump(BumpSpec(), grid)
    if kind in ("dg", "dperp_g"):
        gen = VectorField2(grid, bump(BumpSpec(), grid).values, bump(BumpSpec((0.05, -0.03), 0.9, -0.7), grid).values)
        return structured_field(kind, gen), gen
    if kind in ("d2", "dperp2", "ddperp"):
        return structured_field(kind, phi), phi
    geom = _need(cfg.geometry, "--geometry")
    if kind == "kernel-L":
        return kernel_field_L(phi, None, geom), phi
    if kind == "kernel-T":
        return kernel_field_T(phi, None, geom), phi
    if kind == "kernel-M":
        return kernel_field_M(phi, None, geom), phi
    if kind == "counterexample":
        return counterexample_field(phi, geom), phi
    raise InputError(f"unknown phantom kind {kind!r}")


def cmd_phantom(args) -> int:
    cfg = config_from_args(args)
    grid = GridSpec.square(cfg.grid)
    field, gen = make_phantom(args.kind, grid, cfg)
    _save(field, args.out, args.csv)
    if args.generator_out:
        if gen is None:
            raise InputError(f"phantom kind {args.kind!r} has no generator")
        write_field(args.generator_out, gen)
    print(f"phantom {args.kind} {grid.nx}x{grid.ny} max|f|={field.max_abs():.6e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# forward


def _add_noise(arrays: dict[str, np.ndarray], sigma: float, seed: int) -> dict[str, np.ndarray]:
    """Additive Gaussian noise with standard deviation ``sigma * max|data|`` per grid."""
    if sigma == 0:
        return arrays
    rng = np.random.default_rng(seed)
    return {k: a + sigma * np.abs(a).max() * rng.standard_normal(a.shape) for k, a in sorted(arrays.items())}


def cmd_forward(args) -> int:
    cfg = config_from_args(args)
    field = read_field(args.field)
    if not isinstance(field, SymTensorField2):
        raise InputError("forward needs a tensor2 field")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    qcfg = RayQuadratureConfig(step=cfg.step)
    if cfg.star is not None:
        s = star_forward(field, cfg.star, qcfg)
        arrays = dict(zip(STAR_FILES, s.components()))
    else:
        geom = _need(cfg.geometry, "--geometry or --star")
        tags = [t.strip() for t in args.transforms.split(",") if t.strip()]
        for t in tags:
            if t not in TAGS:
                raise InputError(f"unknown transform {t!r}; expected a subset of {TAGS}")
        which = sorted({t[0] for t in tags})
        ks = sorted({int(t[1:]) if len(t) > 1 else 0 for t in tags})
        d = transforms(field, geom, which, ks, qcfg, threads=cfg.threads)
        arrays = {t: d[t].values for t in tags}
    arrays = _add_noise(arrays, cfg.noise, cfg.seed)
    for name, a in sorted(arrays.items()):
        write_field(out / f"{name}.vlt2", ScalarField2(field.spec, a))
    print(f"forward wrote {', '.join(sorted(arrays))} to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# invert


def load_vlt_data(directory: str | Path, geom: VLineGeometry) -> VltData:
    d = Path(directory)
    grids = {}
    for tag in TAGS:
        p = d / f"{tag}.vlt2"
        if p.exists():
            f = read_field(p)
            if not isinstance(f, ScalarField2):
                raise InputError(f"{p} is not a scalar field")
            grids[tag] = f
    if not grids:
        raise InputError(f"no V-line data found in {d}")
    return VltData(geom, grids)


def load_star_data(directory: str | Path) -> StarData:
    d = Path(directory)
    comps = []
    for name in STAR_FILES:
        p = d / f"{name}.vlt2"
        if not p.exists():
            raise InputError(f"missing star data file {p}")
        comps.append(read_field(p))
    return StarData(*comps)


def invert(method: str, directory: str | Path, cfg: RunConfig, source: str | None = None):
    """Run one reconstruction method on a data directory."""
    if method == "star":
        return star_invert(load_star_data(directory), _need(cfg.star, "--star"))
    geom = _need(cfg.geometry, "--geometry")
    data = load_vlt_data(directory, geom)
    if method == "trace":
        return recover_trace(data)
    if method == "ortho":
        return recover_orthogonal_case(data)
    if method == "ltm":
        return recover_full_LTM(data, tol=cfg.tol)
    if method in COMBINATIONS:
        return COMBINATIONS[method][0](data)
    if method == "dg":
        data.need("L", "M")
        return recover_dg(data.grids["L"], data.grids["M"], geom, tol=cfg.tol)
    if method == "dperpg":
        data.need("T", "M")
        return recover_dperp_g(data.grids["T"], data.grids["M"], geom, tol=cfg.tol)
    defaults = {"d2": "L", "dperp2": "T", "ddperp": "L"}
    if method in defaults:
        src = source or defaults[method]
        data.need(src)
        if method == "d2":
            return recover_potential_d2(data.grids[src], geom, src)
        if method == "dperp2":
            return recover_potential_dperp2(data.grids[src], geom, src)
        if src == "M":
            return recover_potential_ddperp_from_M(data.grids["M"], geom, tol=cfg.tol)
        return recover_potential_ddperp(data.grids[src], geom, src)
    raise InputError(f"unknown method {method!r}; expected one of {METHODS}")


def _compare(rec, truth) -> str:
    mask = rec.spec.disk_mask(1.0)
    if type(rec) is not type(truth) or rec.spec != truth.spec:
        raise InputError("truth field does not match the reconstruction's kind or grid")
    if isinstance(rec, SymTensorField2):
        pairs = zip(("f11", "f12", "f22"), rec.components(), truth.components())
    elif isinstance(rec, VectorField2):
        pairs = zip(("g1", "g2"), (rec.g1, rec.g2), (truth.g1, truth.g2))
    else:
        pairs = [("value", rec.values, truth.values)]
    return " ".join(f"{n}={rel_l2(a, b, mask):.4e}" for n, a, b in pairs)


def cmd_invert(args) -> int:
    cfg = config_from_args(args)
    rec = invert(args.method, args.data, cfg, args.source)
    _save(rec, args.out, args.csv)
    msg = f"invert {args.method} done"
    if args.truth:
        truth = read_field(args.truth)
        if args.method == "trace" and isinstance(truth, SymTensorField2):
            truth = ScalarField2(truth.spec, truth.trace())
        msg += " rel_l2_on_D1: " + _compare(rec, truth)
    print(msg)
    return EXIT_OK


# ---------------------------------------------------------------------------
# star


def cmd_star(args) -> int:
    cfg = config_from_args(args)
    geom = _need(cfg.star, "--star")
    if args.check_geometry:
        if is_symmetric(geom):
            print("star geometry is symmetric: not invertible", file=sys.stderr)
            return EXIT_GEOMETRY
        sets = singular_sets(geom)
        if sets.z2_everywhere:
            print("type-2 singular set is the whole circle: not invertible", file=sys.stderr)
            return EXIT_GEOMETRY
        fmt = lambda angles: ", ".join(f"{math.degrees(a):.6f}" for a in angles) or "none"
        print(f"invertible; singular directions (deg) type 1: {fmt(sets.z1)}; type 2: {fmt(sets.z2)}")
        return EXIT_OK
    if args.field:
        field = read_field(args.field)
        if not isinstance(field, SymTensorField2):
            raise InputError("star needs a tensor2 field")
        data = star_forward(field, geom, RayQuadratureConfig(step=cfg.step))
        if cfg.noise:
            noisy = _add_noise(dict(zip(STAR_FILES, data.components())), cfg.noise, cfg.seed)
            data = StarData(*(ScalarField2(field.spec, noisy[k]) for k in STAR_FILES))
    elif args.data:
        data = load_star_data(args.data)
    else:
        raise InputError("star needs --check-geometry, --field or --data")
    rec = star_invert(data, geom, n_angles=args.angles)
    _save(rec, args.out, args.csv)
    msg = "star inversion done"
    if args.field:
        msg += " rel_l2_on_D1: " + _compare(rec, field)
    print(msg)
    return EXIT_OK


# ---------------------------------------------------------------------------
# selftest


def cmd_selftest(args) -> int:
    from .selftest import SelftestConfig, run_selftest

    results = run_selftest(SelftestConfig(n=args.grid, seed=args.seed), repeat=args.repeat, emit=print)
    return EXIT_OK if all(r.passed for r in results) else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vlt2", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, geometry=True, star=False):
        if geometry:
            sp.add_argument("--geometry", help="V-line branches, u1=<r> with 0 < r < 1")
        if star:
            sp.add_argument("--star", help="star branches 'a1:c1,a2:c2,...' (degrees:weight)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=None, help="worker threads (VLT2_THREADS overrides)")

    sp = sub.add_parser("phantom", help="write a test field")
    common(sp)
    sp.add_argument("--kind", choices=PHANTOM_KINDS, default="default")
    sp.add_argument("--grid", type=int, default=128)
    sp.add_argument("--out", required=True)
    sp.add_argument("--generator-out", help="also write the potential or vector generator")
    sp.add_argument("--csv", help="also write CSV (x, y, components)")
    sp.set_defaults(func=cmd_phantom)

    sp = sub.add_parser("forward", help="simulate V-line or star data")
    common(sp, star=True)
    sp.add_argument("--field", required=True)
    sp.add_argument("--transforms", default="L,T,M,L1,T1,M1", help="comma-separated tags, e.g. L,T,M,L1")
    sp.add_argument("--step", type=float, default=None, help="ray quadrature step (default h/2)")
    sp.add_argument("--noise", type=float, default=0.0, help="Gaussian sigma relative to max|data|")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_forward)

    sp = sub.add_parser("invert", help="reconstruct from a data directory")
    common(sp, star=True)
    sp.add_argument("--data", required=True, help="directory written by 'forward'")
    sp.add_argument("--method", choices=METHODS, required=True)
    sp.add_argument("--source", choices=("L", "T", "M"), help="data source for potential methods")
    sp.add_argument("--tol", type=float, default=1e-10, help="elliptic solver tolerance")
    sp.add_argument("--truth", help="field file to report errors against")
    sp.add_argument("--out")
    sp.add_argument("--csv")
    sp.set_defaults(func=cmd_invert)

    sp = sub.add_parser("star", help="star geometry check, or simulate and invert")
    common(sp, geometry=False, star=True)
    sp.add_argument("--check-geometry", action="store_true")
    sp.add_argument("--field", help="simulate star data of this field, then invert")
    sp.add_argument("--data", help="directory with S_long, S_mixed, S_trans")
    sp.add_argument("--angles", type=int, default=360)
    sp.add_argument("--step", type=float, default=None)
    sp.add_argument("--noise", type=float, default=0.0)
    sp.add_argument("--out")
    sp.add_argument("--csv")
    sp.set_defaults(func=cmd_star)

    sp = sub.add_parser("selftest", help="run the acceptance suite")
    sp.add_argument("--grid", type=int, default=128)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--repeat", type=int, choices=(1, 2), default=2, help="2 also checks byte-identical reruns")
    sp.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "selftest" and args.seed is None:
        from .selftest import DEFAULT_SEED

        args.seed = DEFAULT_SEED
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except GeometryError as exc:
        print(f"geometry error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except Vlt2Error as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
