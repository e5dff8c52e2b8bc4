import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_normalized
from mixlab import (
    Alphabet,
    ConfigError,
    Context,
    CylinderFunction,
    GammaSequence,
    Potential,
    TransitionKernel,
    conditional_laws,
    exact_correlations,
    kernel_from_potential,
    sample_chain,
    sample_paths,
    stationary_measure,
    transfer_iterate,
)


@pytest.fixture
def q_kernel(binary, markov_q):
    return kernel_from_potential(Potential.from_transition(binary, markov_q))


def test_kernel_rows_and_probs(q_kernel, binary):
    assert q_kernel.prob("1", Context(binary, "0")) == pytest.approx(0.1)
    assert q_kernel.row(Context(binary, "1")).tolist() == pytest.approx([0.2, 0.8])
    assert q_kernel.memory_order == 1


def test_kernel_validation(binary):
    with pytest.raises(ConfigError):
        TransitionKernel(binary, [[0.5, 0.6], [0.5, 0.5]])
    with pytest.raises(ConfigError):
        TransitionKernel(binary, [[1.0, 0.0], [0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(ConfigError):
        TransitionKernel(binary, [[0.5, 0.5], [0.5, 0.5]], indexing="other")
    with pytest.raises(ConfigError):
        kernel_from_potential(Potential.constant(binary, 0.0))


def test_gamma_indexings_on_markov_q(q_kernel):
    rr30 = q_kernel.gamma_sequence("rr30").values(3)
    eq101 = q_kernel.gamma_sequence("eq101").values(3)
    enum = q_kernel.gamma_sequence("enumerated").values(3)
    assert rr30.tolist() == pytest.approx([8 / 9, 7 / 8, 0.0], rel=1e-14)
    assert eq101.tolist() == pytest.approx([7 / 8, 0.0, 0.0], rel=1e-14)
    # 1 - min ratio: 1 - 0.1/0.8
    assert enum.tolist() == pytest.approx([7 / 8, 0.0, 0.0], rel=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3))
def test_enumerated_gamma_matches_eq101(seed, order):
    psi = random_normalized(Alphabet("012"), order, seed)
    k = kernel_from_potential(psi)
    a = k.gamma_sequence("enumerated").values(order + 2)
    b = k.gamma_sequence("eq101").values(order + 2)
    assert np.allclose(a, b, atol=1e-12)
    assert np.all(b <= k.gamma_sequence("rr30").values(order + 2) + 1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_enumerated_gamma_is_certified(seed):
    """P(a|x) >= (1 - gamma_m) P(a|y) whenever x and y agree on m symbols."""
    A = Alphabet("01")
    psi = random_normalized(A, 3, seed)
    k = kernel_from_potential(psi)
    g = k.gamma_sequence("enumerated").values(4)
    words = ["".join(w) for w in itertools.product("01", repeat=3)]
    for x, y in itertools.product(words, repeat=2):
        m = 0
        while m < 3 and x[-1 - m] == y[-1 - m]:
            m += 1
        px = k.row(Context(A, x))
        py = k.row(Context(A, y))
        assert np.all(px >= (1 - g[m]) * py - 1e-14)


def test_stationary_and_conditional_laws(q_kernel, binary, markov_q):
    mu = stationary_measure(q_kernel)
    assert mu.weights.tolist() == pytest.approx([2 / 3, 1 / 3], rel=1e-14)
    laws = conditional_laws(q_kernel, Context(binary, "1"), 20)
    for n in (0, 1, 5, 20):
        assert np.allclose(laws[n], np.linalg.matrix_power(markov_q, n)[1], atol=1e-15)


def test_transfer_iterate_is_matrix_power(binary, markov_q):
    psi = Potential.from_transition(binary, markov_q)
    g = CylinderFunction.indicator(binary, "0")
    for n in (0, 1, 3, 10):
        expected = np.linalg.matrix_power(markov_q, n)[1, 0]
        assert transfer_iterate(psi, g, Context(binary, "1"), n) == pytest.approx(expected, abs=1e-15)


def test_exact_correlations_brute_force():
    """Order-2 kernel: enumerate every path of the stationary chain."""
    A = Alphabet("01")
    psi = random_normalized(A, 2, seed=3)
    k = kernel_from_potential(psi)
    mu = stationary_measure(k, 2).weights
    f = CylinderFunction.from_function(A, 2, lambda w: float(w.count("1")))
    g = CylinderFunction.indicator(A, "1", position=2)
    Ef = float(mu @ f.lift(2))
    Eg = float(mu @ g.lift(2))
    for n in range(5):
        total = 0.0
        for start in range(4):
            for path in itertools.product(range(2), repeat=n):
                ctx, p = start, mu[start]
                for a in path:
                    p *= k.table[ctx, a]
                    ctx = (ctx * 2 + a) % 4
                total += p * f.values[start] * g.values[ctx]
        assert exact_correlations(psi, f, g, n)[n] == pytest.approx(total - Ef * Eg, abs=1e-15)


def test_constant_f_has_zero_correlation(q_kernel, binary):
    f = CylinderFunction.constant(binary, 3.0)
    g = CylinderFunction.indicator(binary, "0")
    assert np.max(np.abs(exact_correlations(q_kernel, f, g, 30))) < 1e-15


def test_cylinder_functions(binary):
    ind = CylinderFunction.indicator(binary, "1", position=2)
    assert ind(Context(binary, "10")) == 1.0 and ind(Context(binary, "01")) == 0.0
    assert ind.variations().table == (1.0, 1.0)
    assert ind.sup_norm == 1.0 and ind.oscillation == 1.0
    assert CylinderFunction.from_json(binary, 2.5).values.tolist() == [2.5]
    assert CylinderFunction.from_json(binary, {"indicator": "0"}).depth == 1
    assert CylinderFunction.from_json(binary, ind.to_json()) == ind
    with pytest.raises(ConfigError):
        CylinderFunction.from_json(binary, {"depth": 1})
    with pytest.raises(ConfigError):
        CylinderFunction(binary, 2, [1.0, 2.0])


def test_sampled_frequencies_match_stationary(q_kernel, binary):
    paths = sample_paths(q_kernel, Context(binary, "0"), 2000, 100, seed=1)
    freq0 = float((paths[:, 200:] == 0).mean())
    # 180k correlated draws; the integrated autocorrelation time of Q is (1+.7)/(1-.7)
    se = math.sqrt((2 / 9) * (1.7 / 0.3) / paths[:, 200:].size)
    assert abs(freq0 - 2 / 3) < 5 * se


def test_sampled_transitions_order2():
    A = Alphabet("01")
    k = kernel_from_potential(random_normalized(A, 2, seed=9))
    paths = sample_paths(k, Context(A, "00"), 500, 200, seed=2)
    ctx = paths[:, :-2].astype(int) * 2 + paths[:, 1:-1]
    nxt = paths[:, 2:]
    for c in range(4):
        sel = nxt[ctx == c]
        p = k.table[c, 1]
        se = math.sqrt(p * (1 - p) / sel.size)
        assert abs(sel.mean() - p) < 5 * se


def test_sample_chain_is_run_zero(q_kernel, binary):
    traj = sample_chain(q_kernel, Context(binary, "1"), 50, seed=4)
    batch = sample_paths(q_kernel, Context(binary, "1"), 50, 3, seed=4)
    assert np.array_equal(traj.samples, batch[0])
    rows = list(traj.rows())
    assert rows[0][:2] == (4, 0) and len(rows) == 50


def test_infinite_memory_matches_truncation():
    A = Alphabet("01")
    fam = Potential.geometric_family(A, 1.0, 0.5, normalized=True)
    k_inf = TransitionKernel(A, potential=fam)
    k_fin = kernel_from_potential(fam.truncate(10))
    past = Context(A, "0110100111")
    # the truncation drops weight mass W_11 = 2^-11; normalization can double it
    gap = np.max(np.abs(np.log(k_inf.row(past)) - np.log(k_fin.row(past))))
    assert 0 < gap <= 2 * 0.5**11
    a = sample_paths(k_inf, past, 200, 50, seed=8)
    b = sample_paths(k_fin, past, 200, 50, seed=8)
    # the two kernels differ by less than the variation tail beyond depth 10
    assert (a != b).mean() < 0.01


def test_memoryless_gamma_is_zero(binary):
    k = TransitionKernel(binary, [[0.3, 0.7]])
    assert k.gamma_sequence("enumerated").values(5).tolist() == [0.0] * 5
    assert isinstance(k.gamma_sequence("enumerated"), GammaSequence)
