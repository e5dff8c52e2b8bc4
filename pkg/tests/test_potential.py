import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import eig

from conftest import random_normalized
from mixlab import (
    Alphabet,
    ConfigError,
    Context,
    NumericalError,
    Potential,
    check_primitive,
    exact_variations,
    is_normalized,
    normalize,
    psi_variation_bound,
)
from mixlab.potential import table_variations


def test_markov_variations(binary, markov_q):
    phi = Potential.from_transition(binary, markov_q)
    v = exact_variations(phi)
    # var_0 = log(.9/.1), var_1 = log(.8/.1) at a = 1 (ratio of .1 to .8)
    assert v.table == pytest.approx((math.log(9), math.log(8)), rel=1e-15)
    assert v[2] == 0.0
    assert phi.normalized


def test_table_variations_order0():
    assert table_variations(np.array([0.0, 2.0, -1.0]), 3, 1).tolist() == [3.0, 0.0]


def test_uniform_is_normalized(binary):
    assert is_normalized(Potential.uniform(binary))
    chk = is_normalized(Potential.constant(binary, 0.0))
    assert not chk and chk.deviation == pytest.approx(1.0)
    assert chk.witness is not None


def test_normalize_against_dense_eigensolver():
    A = Alphabet("abc")
    rng = np.random.default_rng(1)
    phi = Potential(A, 2, rng.normal(size=27))
    res = normalize(phi)
    M = np.zeros((9, 9))
    for u in range(9):
        for a in range(3):
            M[u, (u * 3 + a) % 9] += math.exp(phi.table[u * 3 + a])
    w, V = eig(M)
    i = int(np.argmax(w.real))
    rho = np.abs(V[:, i].real)
    assert res.log_lambda == pytest.approx(math.log(w[i].real), rel=1e-13)
    assert np.allclose(res.rho, rho / rho.sum(), rtol=1e-11)
    assert np.max(np.abs(np.exp(res.psi.table.reshape(9, 3)).sum(axis=1) - 1)) < 1e-14


def test_normalized_markov_has_zero_pressure(binary, markov_q):
    phi = Potential.from_transition(binary, markov_q)
    res = normalize(phi)
    assert abs(res.log_lambda) < 1e-14
    assert np.allclose(res.psi.table, phi.table, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(-5, 5), st.floats(0.1, 10))
def test_normalization_ignores_shift_and_rho_scale(seed, c, scale):
    A = Alphabet("01")
    phi = Potential(A, 2, np.random.default_rng(seed).normal(size=8))
    base = normalize(phi).psi.table
    assert np.allclose(normalize(phi.shifted(c)).psi.table, base, atol=1e-11)
    assert np.allclose(normalize(phi, rho_scale=scale).psi.table, base, atol=1e-11)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_relabeling_commutes_with_normalization(seed):
    A = Alphabet("abc")
    phi = Potential(A, 1, np.random.default_rng(seed).normal(size=9))
    perm = [2, 0, 1]
    left = normalize(phi.relabeled(perm)).psi.table
    right = normalize(phi).psi.relabeled(perm).table
    assert np.allclose(left, right, atol=1e-11)


def test_family_variations_and_truncation(binary):
    phi = Potential.geometric_family(binary, 1.0, 0.5, bias=[0.0, 0.3])
    v = phi.variations
    assert v[0] == pytest.approx(0.3 + 0.5)
    assert v[3] == pytest.approx(0.125)
    t = phi.truncate(6)
    ev = exact_variations(t)
    # enumerated variations of the truncation stay below the family bound
    assert all(ev[m] <= v[m] + 1e-12 for m in range(8))
    # six weights sum to W_1 - W_7
    assert ev[0] == pytest.approx(v[0] - 0.5**7, rel=1e-12)


def test_evaluate_with_error_radius(binary):
    phi = Potential.polynomial_family(binary, 1.0, 3.0)
    x = Context(binary, "0110")
    deep, _ = phi.evaluate_with_error(x, "1", depth=200)
    val, rad = phi.evaluate_with_error(x, "1", depth=4)
    assert abs(val - deep) <= rad
    assert rad == pytest.approx(6.0**-3)


def test_from_json_forms(binary):
    table = Potential.from_json({"alphabet": "01", "memory_order": 1,
                                 "table": {"00": 0.1, "01": 0.2, "10": 0.3, "11": 0.4}})
    assert table.table.tolist() == [0.1, 0.2, 0.3, 0.4]
    trans = Potential.from_json('{"alphabet": "01", "transition": [[0.5, 0.5], [0.25, 0.75]]}')
    assert trans.normalized and trans.memory_order == 1
    fam = Potential.from_json({"family": "polynomial", "params": {"C": 1, "p": 2, "truncate": 3}})
    assert fam.memory_order == 3
    again = Potential.from_json(table.to_json())
    assert np.array_equal(again.table, table.table)


@pytest.mark.parametrize("bad", [
    {"alphabet": "01", "memory_order": 1, "table": {"00": 0.1}},
    {"alphabet": "01", "family": "weird", "params": {}},
    {"alphabet": "01", "transition": [[1.0, 0.0], [0.5, 0.5]]},
    {"alphabet": "01"},
    "not json",
])
def test_from_json_rejects(bad):
    with pytest.raises(ConfigError):
        Potential.from_json(bad)


def test_check_primitive():
    check_primitive(np.array([[1, 1], [1, 0]]))
    with pytest.raises(NumericalError, match="periodic"):
        check_primitive(np.array([[0, 1], [1, 0]]))
    with pytest.raises(NumericalError, match="reducible"):
        check_primitive(np.array([[1, 0], [1, 1]]))


def test_psi_variation_bound_and_normalized_fixed_point(binary):
    psi = random_normalized(binary, 3, seed=4)
    assert psi.normalized
    assert np.allclose(normalize(psi).psi.table, psi.table, atol=1e-12)
    phi = Potential.geometric_family(binary, 1.0, 0.5)
    assert psi_variation_bound(phi, 2) == pytest.approx(0.5)

