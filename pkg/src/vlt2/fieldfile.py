"""Binary field files and CSV export.

A file is one ASCII header line followed by the raw values::

    VLT2 <kind> <nx> <ny> <x_min> <x_max> <y_min> <y_max>\\n

``kind`` is ``scalar``, ``vector`` or ``tensor2``. Bounds are written with
``repr`` so they read back exactly. The payload is row-major little-endian
float64, one component after the other: ``(g1, g2)`` or ``(f11, f12, f22)``.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .core import GridSpec, InputError, ScalarField2, SymTensorField2, VectorField2

MAGIC = "VLT2"
KINDS = {"scalar": 1, "vector": 2, "tensor2": 3}
DTYPE = np.dtype("<f8")

Field = ScalarField2 | VectorField2 | SymTensorField2


def _kind(field: Field) -> tuple[str, list[np.ndarray]]:
    if isinstance(field, ScalarField2):
        return "scalar", [field.values]
    if isinstance(field, VectorField2):
        return "vector", [field.g1, field.g2]
    if isinstance(field, SymTensorField2):
        return "tensor2", list(field.components())
    raise InputError(f"cannot store {type(field).__name__}")


def header(spec: GridSpec, kind: str) -> bytes:
    vals = (spec.x_min, spec.x_max, spec.y_min, spec.y_max)
    return (f"{MAGIC} {kind} {spec.nx} {spec.ny} " + " ".join(repr(float(v)) for v in vals) + "\n").encode("ascii")


def to_bytes(field: Field) -> bytes:
    kind, comps = _kind(field)
    payload = b"".join(np.ascontiguousarray(c, dtype=DTYPE).tobytes(order="C") for c in comps)
    return header(field.spec, kind) + payload


def from_bytes(raw: bytes) -> Field:
    nl = raw.find(b"\n")
    if nl < 0:
        raise InputError("field file has no header line")
    parts = raw[:nl].decode("ascii", errors="replace").split()
    if len(parts) != 8 or parts[0] != MAGIC or parts[1] not in KINDS:
        raise InputError("not a VLT2 field file")
    kind = parts[1]
    try:
        nx, ny = int(parts[2]), int(parts[3])
        bounds = [float(p) for p in parts[4:]]
    except ValueError as exc:
        raise InputError(f"bad field file header: {exc}") from None
    spec = GridSpec(nx, ny, *bounds)
    ncomp = KINDS[kind]
    body = raw[nl + 1:]
    if len(body) != nx * ny * ncomp * DTYPE.itemsize:
        raise InputError(f"payload has {len(body)} bytes, expected {nx * ny * ncomp * DTYPE.itemsize}")
    comps = np.frombuffer(body, dtype=DTYPE).reshape(ncomp, nx, ny).astype(float)
    if kind == "scalar":
        return ScalarField2(spec, comps[0])
    if kind == "vector":
        return VectorField2(spec, comps[0], comps[1])
    return SymTensorField2(spec, comps[0], comps[1], comps[2])


def write_field(path: str | Path, field: Field) -> None:
    Path(path).write_bytes(to_bytes(field))


def read_field(path: str | Path) -> Field:
    return from_bytes(Path(path).read_bytes())


def write_csv(path: str | Path, field: Field) -> None:
    """One row per vertex: ``x, y`` then one column per component."""
    kind, comps = _kind(field)
    names = {"scalar": ["value"], "vector": ["g1", "g2"], "tensor2": ["f11", "f12", "f22"]}[kind]
    X1, X2 = field.spec.mesh()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", *names])
        cols = [X1.ravel(), X2.ravel(), *(c.ravel() for c in comps)]
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])
