import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from vlt2.core import (
    IDENTITY,
    GridSpec,
    InputError,
    ScalarField2,
    SymTensor2,
    SymTensorField2,
    VectorField2,
    VLineGeometry,
    Vec2,
    directional_derivative,
    divergence,
    divergence_perp,
    gradient,
    gradient_perp,
    inner,
    perp,
    sym_outer,
    rel_l2,
    sym_derivative,
    sym_derivative_perp,
)
from vlt2.phantoms import BumpSpec, bump, bump_gradient, bump_values

finite = st.floats(-1e3, 1e3, allow_nan=False)
angles = st.floats(0.0, 2 * math.pi)


def unit(t):
    return Vec2(math.cos(t), math.sin(t))


# -- algebra ----------------------------------------------------------------


@pytest.mark.parametrize(
    "w, expected",
    [((1.0, 0.0), (0.0, 1.0)), ((0.0, 1.0), (-1.0, 0.0)), ((0.6, 0.8), (-0.8, 0.6))],
)
def test_perp_examples(w, expected):
    assert perp(Vec2(*w)) == Vec2(*expected)


def test_perp_twice_is_minus_identity(rng):
    w = rng.normal(size=(10_000, 2))
    pp = np.array([perp(perp(v)) for v in w])
    assert_array_equal(pp, -w)


def test_sym_outer_examples():
    assert sym_outer((1, 0), (0, 1)) == (0, 0.5, 0)
    assert sym_outer((1, 2), (3, 4)) == (3, 5, 8)
    u = (0.6, 0.8)
    assert_allclose(sym_outer(u, u), (0.36, 0.48, 0.64))


@given(finite, finite, finite)
def test_inner_identity_is_trace(a, b, c):
    assert inner(IDENTITY, SymTensor2(a, b, c)) == a + c


def test_inner_examples():
    assert inner((1, 1, 1), (1, 1, 1)) == 4
    u = (0.6, 0.8)
    g = (1.5, -2.0, 0.25)
    assert_allclose(inner(sym_outer(u, u), g), 0.36 * 1.5 + 2 * 0.48 * -2.0 + 0.64 * 0.25, rtol=1e-15)


@given(angles, angles)
def test_inner_of_squares(s, t):
    a, b = unit(s), unit(t)
    d = a[0] * b[0] + a[1] * b[1]
    assert abs(inner(sym_outer(a, a), sym_outer(b, b)) - d * d) <= 1e-12


# -- grids and containers ---------------------------------------------------


def test_grid_validation():
    with pytest.raises(InputError):
        GridSpec(2, 5, 0, 1, 0, 1)
    with pytest.raises(InputError):
        GridSpec(5, 5, 0, 1, 0, 2)
    g = GridSpec.square(65)
    assert g.h == pytest.approx(2.5 / 64)
    assert g.shape == (65, 65)
    assert g.inscribed_radius == 1.25
    assert g.refined().h == pytest.approx(g.h / 2)


def test_fields_reject_bad_values(grid64):
    bad = grid64.zeros()
    bad[3, 3] = np.nan
    with pytest.raises(InputError):
        ScalarField2(grid64, bad)
    with pytest.raises(InputError):
        ScalarField2(grid64, np.zeros((3, 3)))
    with pytest.raises(InputError):
        ScalarField2.zeros(grid64) + ScalarField2.zeros(GridSpec.square(32))


def test_tensor_field_ring_and_trace(grid64, rng):
    f = SymTensorField2(grid64, *rng.normal(size=(3, 64, 64)))
    assert_array_equal(f.trace(), f.f11 + f.f22)
    assert_array_equal(f.project(IDENTITY), f.trace())
    assert not f.vanishes_on_ring()
    assert SymTensorField2.zeros(grid64).vanishes_on_ring()


@pytest.mark.parametrize("u1", [0.0, 1.0, -0.2, 1.5])
def test_geometry_rejects_degenerate(u1):
    with pytest.raises(InputError):
        VLineGeometry(u1)


def test_geometry_properties():
    g = VLineGeometry(0.6)
    assert g.u == (0.6, 0.8)
    assert g.v == (-0.6, 0.8)
    assert g.delta == pytest.approx(-0.28)
    assert VLineGeometry(math.sqrt(0.5)).is_orthogonal
    assert VLineGeometry.from_vector((-0.6, 0.8)) == g
    with pytest.raises(InputError):
        VLineGeometry.from_vector((0.6, 0.9))
    with pytest.raises(InputError):
        VLineGeometry.from_vector((0.6, -0.8))


# -- finite differences -----------------------------------------------------


def test_derivative_of_constant_and_linear(grid64):
    X1, _ = grid64.mesh()
    const = ScalarField2(grid64, np.full(grid64.shape, 3.0))
    assert_allclose(directional_derivative(const, (0.6, 0.8)).values, 0.0, atol=1e-12)
    lin = ScalarField2(grid64, X1)
    assert_allclose(directional_derivative(lin, (0.6, 0.8)).values, 0.6, atol=1e-12)


def _bump_error(n):
    spec = BumpSpec(Vec2(0.1, -0.05), 0.8, 1.0)
    g = GridSpec.square(n)
    X1, X2 = g.mesh()
    d1, _ = bump_gradient(spec, X1, X2)
    err = directional_derivative(bump(spec, g), (1.0, 0.0)).values - d1
    return np.abs(err[2:-2, 2:-2]).max()


def test_directional_derivative_second_order():
    ratio = _bump_error(129) / _bump_error(257)
    assert 3.5 <= ratio <= 4.5


def test_sym_derivative_of_symmetric_constant_jacobian(grid64):
    X1, X2 = grid64.mesh()
    g = VectorField2(grid64, X2, X1)
    f = sym_derivative(g)
    assert_allclose(f.f11, 0.0, atol=1e-12)
    assert_allclose(f.f12, 1.0, atol=1e-12)
    assert_allclose(f.f22, 0.0, atol=1e-12)


def test_sym_derivative_zero(grid64):
    assert sym_derivative(VectorField2.zeros(grid64)).max_abs() == 0.0
    assert sym_derivative_perp(VectorField2.zeros(grid64)).max_abs() == 0.0
    z = SymTensorField2.zeros(grid64)
    assert not divergence(z).g1.any() and not divergence_perp(z).g2.any()


def _hessian_error(n):
    spec = BumpSpec(Vec2(0.0, 0.1), 0.85, 1.0)
    g = GridSpec.square(n)
    f = sym_derivative(gradient(bump(spec, g)))
    X1, X2 = g.mesh()
    # second-difference oracle on analytic samples at spacing h/4
    e = g.h / 4
    p = lambda a, b: bump_values(spec, X1 + a, X2 + b)  # noqa: E731
    h11 = (p(e, 0) - 2 * p(0, 0) + p(-e, 0)) / e**2
    h12 = (p(e, e) - p(e, -e) - p(-e, e) + p(-e, -e)) / (4 * e * e)
    h22 = (p(0, e) - 2 * p(0, 0) + p(0, -e)) / e**2
    s = np.s_[3:-3, 3:-3]
    return max(np.abs(a - b)[s].max() for a, b in zip(f.components(), (h11, h12, h22)))


def test_sym_derivative_of_gradient_is_hessian():
    # second differences of a steep bump are pre-asymptotic below ~256 points
    ratio = _hessian_error(257) / _hessian_error(513)
    assert 3.5 <= ratio <= 4.5


def test_divergence_identities(grid128):
    phi = bump(BumpSpec(Vec2(0.05, 0.0), 0.8, 1.0), grid128)
    dd = sym_derivative(gradient(phi))
    pp = sym_derivative_perp(gradient_perp(phi))
    scale = dd.max_abs()
    s = np.s_[4:-4, 4:-4]
    # discrete partials along different axes commute, so both vanish to rounding
    for vec in (divergence_perp(dd), divergence(pp)):
        for comp in vec.components():
            assert np.abs(comp[s]).max() <= 1e-10 * scale / grid128.h


def test_rel_l2():
    a = np.array([1.0, 2.0, 2.0])
    assert rel_l2(a, a) == 0.0
    assert rel_l2(np.zeros(3), a) == 1.0
    assert rel_l2(a, np.zeros(3)) == 3.0
    assert rel_l2(a, 2 * a, mask=np.array([True, False, False])) == 0.5
