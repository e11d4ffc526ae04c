import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from melanprager.tensor import (
    MaterialParams,
    apply_C,
    apply_S,
    deviator,
    identity,
    inner,
    matrix_C,
    matrix_S,
    ncomp,
    norm,
    norm_C_sq,
    norm_S_sq,
    pack,
    trace,
    unpack,
)
from oracles import compliance, dev, frob, full, stiffness_by_solve

finite = st.floats(-1e3, 1e3, allow_nan=False)


def packed_arrays(dim):
    return arrays(float, (ncomp(dim),), elements=finite)


@pytest.mark.parametrize("dim", [2, 3])
def test_pack_layout_matches_hand_unpacking(dim, rng):
    a = rng.normal(size=(5, ncomp(dim)))
    np.testing.assert_array_equal(unpack(a), full(a))
    np.testing.assert_array_equal(pack(full(a)), a)


def test_pack_reads_upper_triangle_and_rejects_non_square():
    np.testing.assert_array_equal(pack(np.array([[1.0, 2.0], [0.0, 3.0]])), [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        pack(np.zeros((2, 3)))


@pytest.mark.parametrize("dim", [2, 3])
@given(data=st.data())
def test_inner_norm_trace_deviator_match_full_matrices(dim, data):
    a = data.draw(packed_arrays(dim))
    b = data.draw(packed_arrays(dim))
    A, B = full(a), full(b)
    assert inner(a, b) == pytest.approx(np.sum(A * B), rel=1e-12, abs=1e-9)
    assert norm(a) == pytest.approx(frob(A), rel=1e-12, abs=1e-12)
    assert trace(a) == pytest.approx(np.trace(A), rel=1e-12, abs=1e-12)
    np.testing.assert_allclose(full(deviator(a)), dev(A), rtol=1e-12, atol=1e-9)


@pytest.mark.parametrize("dim", [2, 3])
def test_deviator_is_traceless_and_idempotent(dim, rng):
    a = rng.normal(size=(50, ncomp(dim)))
    np.testing.assert_allclose(trace(deviator(a)), 0.0, atol=1e-14)
    np.testing.assert_allclose(deviator(deviator(a)), deviator(a), atol=1e-14)
    np.testing.assert_allclose(deviator(identity(dim)), 0.0, atol=1e-15)


@pytest.mark.parametrize("dim", [2, 3])
def test_compliance_matches_full_formula(dim, rng):
    p = MaterialParams(2.5, 0.27, 1.0, 1.0, dim)
    a = rng.normal(size=(20, ncomp(dim)))
    np.testing.assert_allclose(full(apply_S(p, a)), compliance(2.5, 0.27, full(a)), rtol=1e-13, atol=1e-14)


@pytest.mark.parametrize("dim", [2, 3])
def test_stiffness_is_inverse_of_compliance(dim, rng):
    p = MaterialParams(3.0, 0.31, 1.0, 1.0, dim)
    a = rng.normal(size=(20, ncomp(dim)))
    np.testing.assert_allclose(apply_C(p, apply_S(p, a)), a, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(full(apply_C(p, a)), stiffness_by_solve(3.0, 0.31, full(a)), rtol=1e-10, atol=1e-12)


def test_stiffness_2d_closed_form():
    # uniaxial strain in d=2: C e = E/(1+nu) (e + nu/(1-nu) tr e I)
    p = MaterialParams(1.0, 0.25, 1.0, 1.0, 2)
    got = unpack(apply_C(p, pack(np.diag([1.0, 0.0]))))
    np.testing.assert_allclose(got, np.diag([0.8 * (1 + 1 / 3), 0.8 / 3]), rtol=1e-14)


@pytest.mark.parametrize("dim", [2, 3])
@given(e=st.floats(0.1, 10), nu=st.floats(-0.9, 0.45), seed=st.integers(0, 2**16))
def test_energy_norms_are_equivalent_with_c_S(dim, e, nu, seed):
    p = MaterialParams(e, nu, 1.0, 1.0, dim)
    a = np.random.default_rng(seed).normal(size=(10, ncomp(dim)))
    n2 = norm(a) ** 2
    for q in (norm_S_sq(p, a), norm_C_sq(p, a)):
        assert np.all(q <= p.c_S * n2 * (1 + 1e-12))
        assert np.all(n2 <= p.c_S * q * (1 + 1e-12))


@pytest.mark.parametrize("dim", [2, 3])
def test_operator_matrices_are_symmetric_in_frobenius_metric(dim):
    p = MaterialParams(1.7, 0.2, 1.0, 1.0, dim)
    for M in (matrix_S(p), matrix_C(p)):
        e = np.eye(ncomp(dim))
        G = np.array([[inner(e[i], M @ e[j]) for j in range(len(e))] for i in range(len(e))])
        np.testing.assert_allclose(G, G.T, atol=1e-14)
    np.testing.assert_allclose(matrix_S(p) @ matrix_C(p), np.eye(ncomp(dim)), atol=1e-13)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(youngs=0.0, poisson=0.3, viscosity=1.0, hardening=1.0),
        dict(youngs=1.0, poisson=0.5, viscosity=1.0, hardening=1.0, dim=3),
        dict(youngs=1.0, poisson=1.0, viscosity=1.0, hardening=1.0),
        dict(youngs=1.0, poisson=0.3, viscosity=0.0, hardening=1.0),
        dict(youngs=1.0, poisson=0.3, viscosity=1.0, hardening=0.0),
        dict(youngs=1.0, poisson=0.3, viscosity=1.0, hardening=1.0, dim=4),
    ],
)
def test_material_params_reject_invalid(kwargs):
    with pytest.raises(ValueError):
        MaterialParams(**kwargs)


def test_hardening_ratio_and_c_S():
    p = MaterialParams(2.0, 0.25, 1.0, 0.4, 2)
    assert p.b == pytest.approx(0.4 * 1.25 / 2.0)
    assert p.c_S == pytest.approx(max(1.25 / 2, 0.75 / 2, 2 / 1.25, 2 / 0.75))
