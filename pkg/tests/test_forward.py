import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.integrate import quad
from scipy.interpolate import RegularGridInterpolator

from vlt2.core import GridSpec, InputError, directional_derivative, ScalarField2, SymTensorField2, VLineGeometry, Vec2
from vlt2.forward import (
    RayQuadratureConfig,
    beam_field,
    divergent_beam,
    moment_divergent_beam,
    transform_field,
    transforms,
    vline_grids,
    vline_scalar,
    vline_scalar_signed,
    vlt_L,
    vlt_Lk,
    vlt_M,
    vlt_Mk,
    vlt_T,
    vlt_Tk,
)
from vlt2.phantoms import (
    BumpSpec,
    bump,
    bump_tensor,
    counterexample_field,
    default_phantom,
    kernel_field_L,
    random_bump_spec,
)

PROTO = BumpSpec()
U = (0.6, 0.8)

# X_u and X_u^1 of the analytic prototype bump, u = (0.6, 0.8), by adaptive quadrature
FROZEN_BEAM = [
    ((0.0, -0.5), 0.3113465483940184, 0.1590553940171312),
    ((0.2, 0.1), 0.146252755437312, 0.036034020341065086),
    ((-0.3, -0.9), 0.37410797443846633, 0.33669736850664295),
]


@pytest.fixture(scope="module")
def proto128(grid128):
    return bump(PROTO, grid128)


@pytest.fixture(scope="module")
def phantom64(grid64):
    return default_phantom(grid64)


# -- divergent beam -----------------------------------------------------------


def test_zero_field(grid64):
    z = ScalarField2.zeros(grid64)
    assert divergent_beam(z, U, (0.1, 0.2)) == 0.0
    assert moment_divergent_beam(z, U, (0.1, 0.2), 3) == 0.0
    zf = SymTensorField2.zeros(grid64)
    geom = VLineGeometry(0.6)
    for fn in (vlt_L, vlt_T, vlt_M):
        assert fn(zf, geom, (0.0, 0.0)) == 0.0
    for fn in (vlt_Lk, vlt_Tk, vlt_Mk):
        assert fn(zf, geom, (0.0, 0.0), 2) == 0.0
    assert not transform_field(zf, geom, "L").values.any()


@pytest.mark.parametrize("x, xu, xu1", FROZEN_BEAM)
def test_beam_matches_frozen_oracle(proto128, x, xu, xu1):
    assert divergent_beam(proto128, U, x) == pytest.approx(xu, rel=1e-3)
    assert moment_divergent_beam(proto128, U, x, 1) == pytest.approx(xu1, rel=2e-3)


@pytest.mark.parametrize("k", [0, 1])
def test_beam_matches_interpolant_quadrature(grid64, k):
    h = bump(BumpSpec(Vec2(0.1, 0.05), 0.7, 1.0), grid64)
    interp = RegularGridInterpolator((grid64.x1, grid64.x2), h.values, bounds_error=False, fill_value=0.0)
    x = (-0.3, -0.9)
    # the interpolant has kinks where the ray crosses grid lines
    kinks = np.concatenate([(grid64.x1 - x[0]) / U[0], (grid64.x2 - x[1]) / U[1]])
    kinks = np.sort(kinks[(kinks > 0) & (kinks < grid64.diagonal)])
    nodes = np.concatenate([[0.0], kinks, [grid64.diagonal]])
    piece = lambda t: interp([[x[0] + t * U[0], x[1] + t * U[1]]])[0] * t**k  # noqa: E731
    ref = sum(quad(piece, a, b)[0] for a, b in zip(nodes[:-1], nodes[1:]))
    val = moment_divergent_beam(h, U, x, k, RayQuadratureConfig(step=grid64.h / 64))
    assert val == pytest.approx(ref, rel=1e-6)


def test_ray_missing_support(proto128):
    assert divergent_beam(proto128, U, (0.9, 0.9)) == 0.0
    assert divergent_beam(proto128, U, (-1.2, 1.0)) == 0.0


def test_start_outside_grid_integrates_tail(proto128):
    inside = divergent_beam(proto128, (0.0, 1.0), (0.0, -1.2))
    outside = divergent_beam(proto128, (0.0, 1.0), (0.0, -1.2 - 0.5 * proto128.spec.h * 40))
    assert outside == pytest.approx(inside, rel=1e-12)


def test_moment_zero_is_beam(proto128):
    x = (0.1, -0.3)
    assert moment_divergent_beam(proto128, U, x, 0) == divergent_beam(proto128, U, x)


def test_bad_inputs(proto128):
    with pytest.raises(InputError):
        moment_divergent_beam(proto128, U, (0, 0), -1)
    with pytest.raises(InputError):
        divergent_beam(proto128, (1.0, 1.0), (0, 0))
    with pytest.raises(InputError):
        RayQuadratureConfig(step=0.0)
    with pytest.raises(InputError):
        transform_field(SymTensorField2.zeros(proto128.spec), VLineGeometry(0.6), "Q")


def test_grid_evaluation_matches_pointwise(phantom64, geom):
    g = phantom64.spec
    i, j = 20, 17
    x = (g.x1[i], g.x2[j])
    res = transforms(phantom64, geom, ("L", "T", "M"), (0, 1))
    for name, fn in (("L", vlt_L), ("T", vlt_T), ("M", vlt_M)):
        assert res[name].values[i, j] == pytest.approx(fn(phantom64, geom, x), rel=1e-12, abs=1e-14)
    for name, fn in (("L1", vlt_Lk), ("T1", vlt_Tk), ("M1", vlt_Mk)):
        assert res[name].values[i, j] == pytest.approx(fn(phantom64, geom, x, 1), rel=1e-12, abs=1e-14)
    assert_allclose(transform_field(phantom64, geom, "T1").values, res["T1"].values, rtol=0, atol=0)


def test_threads_do_not_change_result(phantom64, geom):
    one = transforms(phantom64, geom, ("L", "M"), (0, 2))
    many = transforms(phantom64, geom, ("L", "M"), (0, 2), threads=3)
    for key in one:
        assert one[key].values.tobytes() == many[key].values.tobytes()


# -- scalar V-line ------------------------------------------------------------


def test_signed_vline_vanishes_for_even_fields(proto128):
    geom = VLineGeometry(0.6)
    for x2 in (-0.8, -0.2, 0.4):
        assert abs(vline_scalar_signed(proto128, geom, (0.0, x2))) < 1e-14


@given(st.integers(0, 2**32 - 1))
def test_vline_is_sum_of_beams(seed):
    g = GridSpec.square(48)
    h = bump(random_bump_spec(np.random.default_rng(seed)), g)
    geom = VLineGeometry(0.7)
    x = (0.05, -0.4)
    xu, xv = divergent_beam(h, geom.u, x), divergent_beam(h, geom.v, x)
    assert abs(vline_scalar(h, geom, x) - (xu + xv)) <= 1e-12
    assert abs(vline_scalar_signed(h, geom, x) - (xu - xv)) <= 1e-12


# -- identities ---------------------------------------------------------------


def _commutation_error(n):
    g = GridSpec.square(n)
    h = bump(BumpSpec(Vec2(0.1, -0.1), 0.75, 1.0), g)
    out = beam_field(directional_derivative(h, U), U).values + h.values
    return np.abs(out[g.disk_mask(1.0)]).max()


def test_commutation_second_order():
    ratio = _commutation_error(129) / _commutation_error(257)
    assert ratio >= 3.5


def test_L_plus_T_is_V_of_trace(phantom64, geom):
    res = transforms(phantom64, geom, ("L", "T"))
    V, _ = vline_grids(phantom64.trace(), phantom64.spec, geom)
    assert np.abs(res["L"].values + res["T"].values - V).max() <= 1e-10


def test_orthogonal_identities(phantom64):
    geom = VLineGeometry(np.sqrt(0.5))
    spec = phantom64.spec
    res = transforms(phantom64, geom)
    _, vm12 = vline_grids(phantom64.f12, spec, geom)
    _, vmdiff = vline_grids(phantom64.f22 - phantom64.f11, spec, geom)
    # linearity of the beam sums makes these exact up to rounding
    assert np.abs(res["L"].values - res["T"].values - 2 * vm12).max() <= 1e-10
    assert np.abs(res["M"].values - 0.5 * vmdiff).max() <= 1e-10


def test_kernel_field_annihilated(grid128, geom):
    phi = bump(PROTO, grid128)
    f = kernel_field_L(phi, None, geom)
    L = transform_field(f, geom, "L").values
    scale = np.abs(transform_field(f, geom, "T").values).max()
    assert np.abs(L).max() <= 2e-2 * scale


def test_counterexample_invisible_to_L_and_L1(grid128, geom):
    f = counterexample_field(bump(PROTO, grid128), geom)
    res = transforms(f, geom, ("L", "T"), (0, 1))
    assert np.abs(res["L"].values).max() <= 1e-12
    assert np.abs(res["L1"].values).max() <= 1e-12
    assert np.abs(res["T"].values).max() > 0.1


def test_strip_constancy_and_moment_extension():
    # box wide enough to hold points of the strip S_u outside the unit disk
    g = GridSpec.square(161, 2.0)
    geom = VLineGeometry(0.6)
    f = bump_tensor(g, (PROTO, PROTO, PROTO))
    u = np.array(geom.u)
    x = -1.05 * u
    # a is a whole number of quadrature steps, so ray nodes coincide
    a = 16 * 0.5 * g.h
    y = x - a * u
    for fn in (vlt_L, vlt_T, vlt_M):
        assert fn(f, geom, y) == pytest.approx(fn(f, geom, x), rel=1e-12)
    for fn, fk in ((vlt_L, vlt_Lk), (vlt_T, vlt_Tk), (vlt_M, vlt_Mk)):
        assert fk(f, geom, y, 1) == pytest.approx(fk(f, geom, x, 1) + a * fn(f, geom, x), rel=1e-12)
