"""Shared solvers: axis integration, Radon transform and filtered backprojection,
and the elliptic, hyperbolic and degenerate second-order problems that appear
in the reconstructions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, sparse
from scipy.integrate import cumulative_trapezoid
from scipy.sparse.linalg import cg

from .core import GridSpec, InputError, ScalarField2, SolverError

AXIS_DIRECTIONS = ("+e1", "-e1", "+e2")


# ---------------------------------------------------------------------------
# integration along grid axes


def integrate_along(a: np.ndarray, h: float, direction: str) -> np.ndarray:
    """``int_0^inf a(x + t dir) dt`` on a raw array, truncated at the grid edge.

    The integral is accumulated from the far edge inwards with the trapezoid
    rule, so ``a`` must vanish (or be negligible) at that edge.
    """
    if direction == "+e1":
        return cumulative_trapezoid(a[::-1], dx=h, axis=0, initial=0.0)[::-1]
    if direction == "-e1":
        return cumulative_trapezoid(a, dx=h, axis=0, initial=0.0)
    if direction == "+e2":
        return cumulative_trapezoid(a[:, ::-1], dx=h, axis=1, initial=0.0)[:, ::-1]
    if direction == "-e2":
        return cumulative_trapezoid(a, dx=h, axis=1, initial=0.0)
    raise InputError(f"unknown direction {direction!r}; expected one of {AXIS_DIRECTIONS}")


def primitive(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Antiderivative along ``axis`` of a derivative of a compactly supported function.

    Averages the cumulative integrals from both grid edges. Both are exact in
    the continuum; the average halves the error accumulated along the line.
    """
    fwd = cumulative_trapezoid(a, dx=h, axis=axis, initial=0.0)
    total = np.take(fwd, [-1], axis=axis)
    return fwd - 0.5 * total


def integrate_along_axis(hf: ScalarField2, direction: str) -> ScalarField2:
    """Field version of :func:`integrate_along`."""
    return ScalarField2(hf.spec, integrate_along(hf.values, hf.spec.h, direction))


# ---------------------------------------------------------------------------
# Radon transform


@dataclass(frozen=True)
class SinogramSpec:
    """Sampling of a sinogram.

    Parameters
    ----------
    n_angles : int
        Number of angles, uniform in ``[0, pi)`` unless ``angles`` is given.
    n_offsets : int
        Number of offsets, uniform in ``[-s_max, s_max]``.
    s_max : float
        Largest offset; must cover the support of the data.
    angles : tuple of float, optional
        Explicit angle list (radians), for non-uniform coverage.
    """

    n_angles: int = 256
    n_offsets: int = 257
    s_max: float = 1.375
    angles: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.n_offsets < 3 or (self.angles is None and self.n_angles < 1):
            raise InputError("sinogram needs at least one angle and three offsets")
        if not self.s_max > 0:
            raise InputError("s_max must be positive")

    @classmethod
    def for_grid(cls, grid: GridSpec, n_angles: int = 256, factor: float = 1.1) -> "SinogramSpec":
        """Offsets spaced at the grid spacing over ``[-factor r2, factor r2]``."""
        s_max = factor * grid.inscribed_radius
        n_off = 2 * int(math.ceil(s_max / grid.h)) + 1
        return cls(n_angles, n_off, s_max)

    def angle_array(self) -> np.ndarray:
        if self.angles is not None:
            return np.asarray(self.angles, dtype=float)
        return np.pi * np.arange(self.n_angles) / self.n_angles

    def offset_array(self) -> np.ndarray:
        return np.linspace(-self.s_max, self.s_max, self.n_offsets)


@dataclass(frozen=True, eq=False)
class Sinogram:
    angles: np.ndarray
    offsets: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.shape != (len(self.angles), len(self.offsets)):
            raise InputError("sinogram values do not match its angle/offset axes")

    @property
    def ds(self) -> float:
        return float(self.offsets[1] - self.offsets[0])

    def with_values(self, values: np.ndarray) -> "Sinogram":
        return Sinogram(self.angles, self.offsets, values)


def _line_samples(spec: GridSpec, theta: float, offsets: np.ndarray, tau: np.ndarray):
    c, s = math.cos(theta), math.sin(theta)
    S, Tau = np.meshgrid(offsets, tau, indexing="ij")
    x1 = S * c - Tau * s
    x2 = S * s + Tau * c
    return (x1 - spec.x_min) / spec.h, (x2 - spec.y_min) / spec.h


def radon(hf: ScalarField2, sino_spec: SinogramSpec, order: int = 1) -> Sinogram:
    """Line integrals of the interpolant of ``hf``.

    Each line ``{x . xi = s}`` with ``xi = (cos theta, sin theta)`` is sampled
    at half the grid spacing and integrated with the trapezoid rule. The
    interpolant is bilinear (``order=1``) or a cubic spline (``order=3``);
    the latter removes most of the O(h^2) anisotropy of bilinear sampling.
    """
    spec = hf.spec
    angles = sino_spec.angle_array()
    offsets = sino_spec.offset_array()
    half = 0.5 * spec.diagonal
    dtau = 0.5 * spec.h
    n_tau = int(math.ceil(half / dtau))
    tau = dtau * np.arange(-n_tau, n_tau + 1)
    if order not in (1, 3):
        raise InputError(f"interpolation order must be 1 or 3, got {order!r}")
    coef = hf.values if order == 1 else ndimage.spline_filter(hf.values, order=3, mode="constant")
    out = np.empty((len(angles), len(offsets)))
    for i, th in enumerate(angles):
        p1, p2 = _line_samples(spec, th, offsets, tau)
        vals = ndimage.map_coordinates(coef, [p1, p2], order=order, mode="constant", cval=0.0, prefilter=False)
        # endpoints lie outside the box, where the interpolant is zero
        out[i] = dtau * vals.sum(axis=1)
    return Sinogram(angles, offsets, out)


def radon_s_derivative(sino: Sinogram) -> Sinogram:
    """``d/ds`` by central differences, one-sided second order at the ends."""
    return sino.with_values(np.gradient(sino.values, sino.ds, axis=1, edge_order=2))


def radon_s_integral(sino: Sinogram) -> Sinogram:
    """Cumulative ``int_{-s_max}^s`` along offsets (trapezoid)."""
    return sino.with_values(cumulative_trapezoid(sino.values, dx=sino.ds, axis=1, initial=0.0))


def ram_lak_filter(n_offsets: int, ds: float, rolloff: float = 0.9) -> tuple[np.ndarray, int]:
    """Frequency response of the band-limited ramp filter with a cosine taper.

    Built from the spatial Ram-Lak kernel so the DC term is correct. Returns
    the response and the padded length it applies to.
    """
    size = max(64, 1 << int(math.ceil(math.log2(2 * n_offsets))))
    n = np.concatenate((np.arange(0, size // 2 + 1), np.arange(-size // 2 + 1, 0)))
    kern = np.zeros(size)
    kern[0] = 0.25 / ds**2
    odd = n % 2 == 1
    kern[odd] = -1.0 / (np.pi * n[odd] * ds) ** 2
    resp = np.real(np.fft.rfft(kern)) * ds
    freq = np.fft.rfftfreq(size)  # cycles per sample, Nyquist at 0.5
    nu = freq / 0.5
    taper = np.ones_like(nu)
    band = nu > rolloff
    taper[band] = 0.5 * (1 + np.cos(np.pi * (nu[band] - rolloff) / (1 - rolloff)))
    return resp * taper, size


def _angle_weights(angles: np.ndarray) -> np.ndarray:
    """Quadrature weights on the projective circle from half the neighbour gaps."""
    order = np.argsort(angles)
    a = angles[order]
    gaps = np.diff(np.concatenate((a, [a[0] + np.pi])))
    w_sorted = 0.5 * (gaps + np.roll(gaps, 1))
    w = np.empty_like(w_sorted)
    w[order] = w_sorted
    return w


def filter_sinogram(sino: Sinogram) -> np.ndarray:
    resp, size = ram_lak_filter(len(sino.offsets), sino.ds)
    spec = np.fft.rfft(sino.values, n=size, axis=1)
    return np.fft.irfft(spec * resp, n=size, axis=1)[:, : len(sino.offsets)]


def inverse_radon_fbp(sino: Sinogram, spec: GridSpec) -> ScalarField2:
    """Filtered backprojection onto ``spec`` with linear interpolation in ``s``."""
    q = filter_sinogram(sino)
    weights = _angle_weights(np.asarray(sino.angles, dtype=float))
    X1, X2 = spec.mesh()
    s0, ds = sino.offsets[0], sino.ds
    n_off = len(sino.offsets)
    out = np.zeros(spec.shape)
    for qi, th, wt in zip(q, sino.angles, weights):
        pos = (X1 * math.cos(th) + X2 * math.sin(th) - s0) / ds
        out += wt * np.interp(pos, np.arange(n_off), qi, left=0.0, right=0.0)
    return ScalarField2(spec, out)


# ---------------------------------------------------------------------------
# second-order problems


@dataclass(frozen=True, eq=False)
class EllipticProblem:
    """``-(a d1^2 + b d2^2) w = rhs`` with ``w = 0`` on the grid boundary."""

    a: float
    b: float
    rhs: ScalarField2

    def __post_init__(self):
        if not self.a > 0 or not self.b >= 0:
            raise InputError(f"need a > 0 and b >= 0, got a={self.a!r}, b={self.b!r}")

    @property
    def degenerate(self) -> bool:
        return self.b == 0


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float


def _dirichlet_operator(n1: int, n2: int, a: float, b: float, h: float) -> sparse.csr_matrix:
    def lap1d(n):
        return sparse.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])

    return ((a * sparse.kron(lap1d(n1), sparse.identity(n2)) + b * sparse.kron(sparse.identity(n1), lap1d(n2))) / h**2).tocsr()


def solve_elliptic(p: EllipticProblem, tol: float = 1e-10, maxiter: int | None = None, report: list | None = None) -> ScalarField2:
    """Five-point finite differences and conjugate gradients.

    The relative residual of the returned solution is at most ``tol``; it is
    appended to ``report`` as a :class:`SolveReport` when a list is passed.

    Raises
    ------
    SolverError
        If CG does not reach ``tol`` within ``maxiter`` iterations.
    """
    if p.degenerate:
        raise InputError("b = 0 is the degenerate regime; use solve_degenerate_double_integral")
    spec = p.rhs.spec
    n1, n2 = spec.nx - 2, spec.ny - 2
    A = _dirichlet_operator(n1, n2, p.a, p.b, spec.h)
    rhs = p.rhs.values[1:-1, 1:-1].ravel()
    bnorm = float(np.linalg.norm(rhs))
    out = spec.zeros()
    if bnorm == 0.0:
        if report is not None:
            report.append(SolveReport(0, 0.0))
        return ScalarField2(spec, out)
    maxiter = maxiter or 20 * (n1 + n2) + 1000
    its = [0]

    def count(_):
        its[0] += 1

    x = np.zeros_like(rhs)
    # the recursive CG residual can drift from the true one; restart until the true residual passes
    for _ in range(4):
        x, info = cg(A, rhs, x0=x, rtol=0.5 * tol, atol=0.0, maxiter=maxiter, callback=count)
        res = float(np.linalg.norm(rhs - A @ x)) / bnorm
        if res <= tol:
            break
    else:
        raise SolverError(f"conjugate gradients did not converge: relative residual {res:.3e} > {tol:.1e} after {its[0]} iterations")
    if report is not None:
        report.append(SolveReport(its[0], res))
    out[1:-1, 1:-1] = x.reshape(n1, n2)
    return ScalarField2(spec, out)


def solve_hyperbolic(a: float, c: float, rhs: ScalarField2, line_anchor: float | None = None) -> ScalarField2:
    """``a d1^2 w - c d2^2 w = rhs`` by explicit leapfrog marching in ``x1``.

    ``w`` and ``d1 w`` vanish on the line ``x1 = line_anchor`` (default: the
    left grid edge), and ``w = 0`` on the top and bottom edges.

    Raises
    ------
    SolverError
        If the step violates the CFL condition ``(c / a) (h1 / h2)^2 <= 1``.
    """
    if not (a > 0 and c > 0):
        raise InputError(f"need a > 0 and c > 0, got a={a!r}, c={c!r}")
    spec = rhs.spec
    h = spec.h
    cfl = c / a
    if cfl > 1.0 + 1e-12:
        raise SolverError(f"CFL condition violated ((c/a)(h1/h2)^2 = {cfl:.3f} > 1); refine the grid in x1")
    i0 = 0 if line_anchor is None else int(math.floor((line_anchor - spec.x_min) / h + 1e-9))
    if not 0 <= i0 < spec.nx - 1:
        raise InputError("line_anchor outside the grid")
    if line_anchor is not None and np.abs(rhs.values[: i0 + 1]).max() > 0:
        raise InputError("rhs must vanish left of the Cauchy line")
    f = rhs.values
    w = np.zeros(spec.shape)
    for i in range(i0 + 1, spec.nx - 1):
        lap2 = np.zeros(spec.ny)
        lap2[1:-1] = w[i, :-2] - 2 * w[i, 1:-1] + w[i, 2:]
        w[i + 1] = 2 * w[i] - w[i - 1] + cfl * lap2 + (h * h / a) * f[i]
        w[i + 1, 0] = w[i + 1, -1] = 0.0
    return ScalarField2(spec, w)


def solve_degenerate_double_integral(a: float, rhs: ScalarField2) -> ScalarField2:
    """``a d1^2 w = rhs`` with ``w`` and ``d1 w`` zero at the left edge."""
    if not a > 0:
        raise InputError(f"need a > 0, got a={a!r}")
    h = rhs.spec.h
    once = cumulative_trapezoid(rhs.values, dx=h, axis=0, initial=0.0)
    twice = cumulative_trapezoid(once, dx=h, axis=0, initial=0.0)
    return ScalarField2(rhs.spec, twice / a)


def warn(msg: str):
    warnings.warn(msg, RuntimeWarning, stacklevel=3)
