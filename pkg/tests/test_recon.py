import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from vlt2.core import GeometryError, GridSpec, InputError, ScalarField2, SymTensorField2, VLineGeometry, rel_l2
from vlt2.forward import transforms, vline_grids
from vlt2.phantoms import BumpSpec, bump, bump_tensor, counterexample_field, default_phantom, kernel_field_L
from vlt2.recon import (
    COMBINATIONS,
    VltData,
    invert_signed_vline,
    invert_vline,
    moment_recurrence_residual,
    predict_L1_orthogonal,
    recover_difference_from_M_M1,
    recover_f12_from_L_L1,
    recover_f12_from_M_M1,
    recover_f12_from_T_T1,
    recover_full_LTM,
    recover_orthogonal_case,
    recover_trace,
    recover_weighted_trace_from_L_L1,
    recover_weighted_trace_from_T_T1,
)

ORTHO = VLineGeometry(math.sqrt(0.5))
ALL_TAGS = ("L", "T", "M")
ALL_KS = (0, 1, 2)


def _data(f, geom):
    return VltData(geom, transforms(f, geom, ALL_TAGS, ALL_KS))


@pytest.fixture(scope="module")
def phantom(grid128):
    return default_phantom(grid128)


@pytest.fixture(scope="module", params=[0.6, 0.8], ids=["hyperbolic", "elliptic"])
def case(request, phantom):
    geom = VLineGeometry(request.param)
    return geom, _data(phantom, geom)


@pytest.fixture(scope="module")
def ortho_data(phantom):
    return _data(phantom, ORTHO)


@pytest.fixture(scope="module")
def d1(grid128):
    return grid128.disk_mask(1.0)


def errors(rec, truth, mask):
    return [rel_l2(a, b, mask) for a, b in zip(rec.components(), truth.components())]


# -- plumbing ----------------------------------------------------------------


def test_vltdata_validation(grid64):
    geom = VLineGeometry(0.6)
    with pytest.raises(InputError):
        VltData(geom, {"L": ScalarField2.zeros(grid64), "T": ScalarField2.zeros(GridSpec.square(32))})
    with pytest.raises(InputError):
        VltData(geom, {"Q": ScalarField2.zeros(grid64)})
    with pytest.raises(InputError, match="missing data: T"):
        recover_trace(VltData(geom, {"L": ScalarField2.zeros(grid64)}))


def test_zero_data_gives_zero(grid64, geom):
    zero = {t: ScalarField2.zeros(grid64) for t in ("L", "T", "M", "L1", "T1", "M1")}
    data = VltData(geom, zero)
    assert not recover_trace(data).values.any()
    assert recover_full_LTM(data).max_abs() == 0.0
    for fn in (recover_f12_from_L_L1, recover_weighted_trace_from_L_L1, recover_f12_from_T_T1, recover_f12_from_M_M1):
        assert not fn(data).values.any()
    for fn, _ in COMBINATIONS.values():
        assert fn(data).max_abs() == 0.0
    assert recover_orthogonal_case(VltData(ORTHO, zero)).max_abs() == 0.0


# -- scalar V-line inversion ---------------------------------------------------


@pytest.mark.parametrize("u1", [0.6, 0.8, math.sqrt(0.5)])
def test_vline_inversions(grid128, d1, u1):
    geom = VLineGeometry(u1)
    phi = bump(BumpSpec(), grid128)
    V, Vm = vline_grids(phi.values, grid128, geom)
    assert rel_l2(invert_vline(ScalarField2(grid128, V), geom).values, phi.values, d1) <= 0.01
    # the prototype is even in x1, so use an off-centre bump for V^-
    psi = bump(BumpSpec((0.2, 0.1), 0.7, 1.0), grid128)
    _, Vm = vline_grids(psi.values, grid128, geom)
    assert rel_l2(invert_signed_vline(ScalarField2(grid128, Vm), geom).values, psi.values, d1) <= 0.01


# -- trace and the L, T, M procedures -----------------------------------------------


def test_trace_round_trip(case, phantom, d1):
    _, data = case
    assert rel_l2(recover_trace(data).values, phantom.trace(), d1) <= 0.02


def test_trace_of_trace_free_field(grid128, geom):
    phi = bump(BumpSpec(), grid128).values
    f = SymTensorField2(grid128, phi, 0.5 * phi, -phi)
    data = VltData(geom, transforms(f, geom, ("L", "T")))
    assert np.abs(recover_trace(data).values).max() <= 0.01 * f.max_abs()


def test_orthogonal_round_trip(ortho_data, phantom, d1):
    assert max(errors(recover_orthogonal_case(ortho_data), phantom, d1)) <= 0.03


def test_orthogonal_symmetric_diagonal(grid128):
    phi = bump(BumpSpec(), grid128).values
    f = SymTensorField2(grid128, phi, grid128.zeros(), phi)
    data = VltData(ORTHO, transforms(f, ORTHO))
    rec = recover_orthogonal_case(data)
    assert np.abs(rec.f22 - rec.f11).max() <= 1e-12
    assert np.abs(rec.f12).max() <= 1e-12


def test_orthogonal_rejects_other_geometry(case):
    _, data = case
    with pytest.raises(InputError, match="recover_full_LTM"):
        recover_orthogonal_case(data)


@pytest.mark.parametrize("route", ["integrate", "elliptic"])
def test_full_ltm_round_trip(case, phantom, d1, route):
    _, data = case
    rep = []
    rec = recover_full_LTM(data, report=rep, f11_route=route)
    assert max(errors(rec, phantom, d1)) <= 0.05
    assert all(r.residual <= 1e-10 for r in rep)


def test_full_ltm_dispatches_orthogonal(ortho_data):
    a, b = recover_full_LTM(ortho_data), recover_orthogonal_case(ortho_data)
    for x, y in zip(a.components(), b.components()):
        assert x.tobytes() == y.tobytes()


def test_full_ltm_bad_route(case):
    with pytest.raises(InputError):
        recover_full_LTM(case[1], f11_route="guess")


@pytest.mark.parametrize("route", ["integrate", "elliptic"])
def test_full_ltm_sees_kernel_perturbation(grid128, phantom, d1, route):
    geom = VLineGeometry(0.8)
    k = kernel_field_L(bump(BumpSpec(), grid128), None, geom)
    perturbed = phantom + 0.5 * k
    res = transforms(perturbed, geom)
    base = transforms(phantom, geom, ("L",))
    # L barely moves, T and M do, and the perturbed truth is still recovered
    assert np.abs(res["L"].values - base["L"].values).max() <= 2e-3 * np.abs(base["L"].values).max()
    assert max(errors(recover_full_LTM(VltData(geom, res), f11_route=route), perturbed, d1)) <= 0.05


@pytest.mark.parametrize("fn", [recover_full_LTM, COMBINATIONS["l-l1-t"][0], COMBINATIONS["t-t1-l"][0]])
def test_trace_consistency(case, fn):
    _, data = case
    rec = fn(data)
    assert np.abs(rec.trace() - recover_trace(data).values).max() <= 1e-8


# -- moment procedures ------------------------------------------------------------------


def test_f12_and_weighted_trace_from_L_L1(case, phantom, d1):
    geom, data = case
    assert rel_l2(recover_f12_from_L_L1(data).values, phantom.f12, d1) <= 0.05
    wt = geom.u1**2 * phantom.f11 + geom.u2**2 * phantom.f22
    assert rel_l2(recover_weighted_trace_from_L_L1(data).values, wt, d1) <= 0.03


def test_transverse_and_mixed_pieces(case, phantom, d1):
    geom, data = case
    assert rel_l2(recover_f12_from_T_T1(data).values, phantom.f12, d1) <= 0.05
    wt = geom.u2**2 * phantom.f11 + geom.u1**2 * phantom.f22
    assert rel_l2(recover_weighted_trace_from_T_T1(data).values, wt, d1) <= 0.03
    assert rel_l2(recover_f12_from_M_M1(data).values, phantom.f12, d1) <= 0.05
    assert rel_l2(recover_difference_from_M_M1(data).values, phantom.f11 - phantom.f22, d1) <= 0.05


def test_counterexample_gives_zero_pieces(grid128, geom):
    phi = bump(BumpSpec(), grid128)
    f = counterexample_field(phi, geom)
    data = VltData(geom, transforms(f, geom, ("L",), (0, 1)))
    assert np.abs(recover_f12_from_L_L1(data).values).max() <= 1e-10
    assert np.abs(recover_weighted_trace_from_L_L1(data).values).max() <= 1e-10


@pytest.mark.parametrize("name", sorted(COMBINATIONS))
def test_combination_round_trip(case, phantom, d1, name):
    fn, _ = COMBINATIONS[name]
    assert max(errors(fn(case[1]), phantom, d1)) <= 0.06


def test_combinations_agree(case, d1):
    _, data = case
    recs = {name: fn(data) for name, (fn, _) in COMBINATIONS.items()}
    names = sorted(recs)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            assert max(errors(recs[a], recs[b], d1)) <= 0.12, (a, b)


def test_orthogonal_rejections(ortho_data):
    for name in ("l-l1-t", "t-t1-l", "m-m1-l", "m-m1-t"):
        with pytest.raises(GeometryError):
            COMBINATIONS[name][0](ortho_data)


@pytest.mark.parametrize("name", ["l-l1-m", "t-t1-m"])
def test_orthogonal_accepted(ortho_data, phantom, d1, name):
    assert max(errors(COMBINATIONS[name][0](ortho_data), phantom, d1)) <= 0.06


# -- moment identities --------------------------------------------------------------------


def _recurrence(n, which):
    g = GridSpec.square(n)
    geom = VLineGeometry(0.6)
    f = bump_tensor(g, (BumpSpec(),) * 3)
    data = VltData(geom, transforms(f, geom, (which,), ALL_KS))
    r = moment_recurrence_residual(data, which).values
    m = g.disk_mask(1.0)
    return np.abs(r[m]).max() / np.abs(data.grids[which].values).max(), g.h


@pytest.mark.parametrize("which", ["L", "T", "M"])
def test_moment_recurrence_second_order(which):
    (e0, h0), (e1, h1) = _recurrence(64, which), _recurrence(128, which)
    assert e1 <= 5e-3
    assert math.log(e0 / e1) / math.log(h0 / h1) >= 1.7


def test_moment_recurrence_zero_and_bad_tag(grid64):
    zero = {t: ScalarField2.zeros(grid64) for t in ("L", "L1", "L2")}
    data = VltData(VLineGeometry(0.6), zero)
    assert not moment_recurrence_residual(data).values.any()
    with pytest.raises(InputError):
        moment_recurrence_residual(data, "Q")


def test_orthogonal_L1_is_determined(ortho_data, phantom, d1):
    L, L1 = ortho_data.grids["L"], ortho_data.grids["L1"]
    tr = ScalarField2(L.spec, phantom.trace())
    pred = predict_L1_orthogonal(L, tr, ORTHO)
    assert rel_l2(pred.values, L1.values, d1) <= 0.02
    with pytest.raises(InputError):
        predict_L1_orthogonal(L, tr, VLineGeometry(0.6))


# -- linearity ------------------------------------------------------------------------------


@settings(max_examples=5)
@given(st.integers(0, 2**32 - 1), st.floats(-2, 2), st.floats(-2, 2))
def test_recoveries_are_linear(seed, alpha, beta):
    g = GridSpec.square(40)
    geom = VLineGeometry(0.6)
    rng = np.random.default_rng(seed)
    tags = ("L", "T", "M", "L1", "T1", "M1")
    p = {t: rng.normal(size=g.shape) for t in tags}
    q = {t: rng.normal(size=g.shape) for t in tags}

    def data(x):
        return VltData(geom, {t: ScalarField2(g, x[t]) for t in tags})

    combo = data({t: alpha * p[t] + beta * q[t] for t in tags})
    procs = [lambda d: recover_full_LTM(d, tol=1e-13)] + [fn for fn, _ in COMBINATIONS.values()]
    for fn in procs:
        lhs = fn(combo)
        rp, rq = fn(data(p)), fn(data(q))
        scale = max(rp.max_abs(), rq.max_abs())
        for a, b, c in zip(lhs.components(), rp.components(), rq.components()):
            assert_allclose(a, alpha * b + beta * c, rtol=0, atol=1e-6 * scale)
