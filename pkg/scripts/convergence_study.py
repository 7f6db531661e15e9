"""Grid-refinement study: reconstruction error and observed order versus grid size.

Usage: python3 scripts/convergence_study.py [--grids 48 64 96 128 192] [--u1 0.6]
"""

import argparse
import math

from vlt2.core import GridSpec, VLineGeometry, rel_l2
from vlt2.forward import transform_field, transforms
from vlt2.phantoms import BumpSpec, bump, default_phantom, kernel_field_L
from vlt2.recon import VltData, recover_full_LTM, recover_trace


def errors(n, geom):
    grid = GridSpec.square(n)
    f = default_phantom(grid)
    mask = grid.disk_mask(1.0)
    data = VltData(geom, transforms(f, geom))
    trace = rel_l2(recover_trace(data).values, f.trace(), mask)
    ltm = max(rel_l2(a, b, mask) for a, b in zip(recover_full_LTM(data).components(), f.components()))
    k = kernel_field_L(bump(BumpSpec(), grid), None, geom)
    kernel = abs(transform_field(k, geom, "L").values).max() / k.max_abs()
    return grid.h, {"trace": trace, "ltm": ltm, "kernel_L": kernel}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--grids", type=int, nargs="+", default=[48, 64, 96, 128, 192])
    p.add_argument("--u1", type=float, default=0.6)
    a = p.parse_args()
    geom = VLineGeometry(a.u1)
    prev = None
    print(f"u1={a.u1}")
    print(f"{'n':>5} {'h':>9} " + " ".join(f"{k:>10} {'order':>6}" for k in ("trace", "ltm", "kernel_L")))
    for n in a.grids:
        h, e = errors(n, geom)
        cols = []
        for k, v in e.items():
            order = math.log(prev[1][k] / v) / math.log(prev[0] / h) if prev and v > 0 else float("nan")
            cols.append(f"{v:10.3e} {order:6.2f}")
        print(f"{n:5d} {h:9.5f} " + " ".join(cols))
        prev = (h, e)


if __name__ == "__main__":
    main()
