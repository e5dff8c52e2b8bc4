"""Acceptance criteria 1-12 at their stated tolerances.

Each test carries a ``criterion`` marker; the conftest prints one PASS/FAIL
line per criterion at the end of the run.  Oracles are computed here
independently of the library code paths they check.
"""
import itertools
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import random_normalized
from mixlab import (
    Alphabet,
    BlockSchedule,
    Context,
    CylinderFunction,
    GammaSequence,
    Potential,
    block_gamma,
    conditional_laws,
    convolution_check,
    diagonal_weight,
    domination_test,
    exact_correlations,
    generating_functions,
    kernel_from_potential,
    maximal_coupling,
    normalize,
    renewal_radius,
    return_probabilities,
    verify_bounds,
)
from mixlab import _backend, cli
from mixlab.potential import table_variations

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

RENEWAL_FAMILIES = {
    "constant 0.2": GammaSequence.constant(0.2),
    "2^-(n+1)": GammaSequence.geometric(0.5, 0.5),
    "(n+1)^-2": GammaSequence.polynomial(1.0, 2.0, head=[0.25]),
}


def _forward_gamma_star(gamma, n_max):
    """Distribution of the dominating chain pushed forward step by step in plain Python."""
    g = [float(x) for x in gamma]
    d = [1.0] + [0.0] * n_max
    out = [1.0]
    for t in range(1, n_max + 1):
        zero = math.fsum(d[j] * g[j] for j in range(t))
        for j in range(t - 1, -1, -1):
            d[j + 1] = d[j] * (1.0 - g[j])
        d[0] = zero
        out.append(zero)
    return np.array(out)


# 1 -------------------------------------------------------------------------


@pytest.mark.criterion(1, "renewal identity, three gamma families, n <= 2000")
@pytest.mark.parametrize("name", list(RENEWAL_FAMILIES))
def test_c01_renewal_identity(name):
    gamma = RENEWAL_FAMILIES[name]
    t0 = time.perf_counter()
    prof = return_probabilities(gamma, 2000)
    elapsed = time.perf_counter() - t0
    gs, pmf = prof.gamma_star, prof.tau_pmf
    conv = np.convolve(pmf, gs)[: len(gs)]
    resid = float(np.max(np.abs(gs[1:] - conv[1:])))
    print(f"{name}: residual {resid:.3e}, {elapsed:.3f}s")
    assert resid < 1e-12
    assert elapsed < 1.0


# 2 -------------------------------------------------------------------------


@pytest.mark.criterion(2, "constant gamma: gamma*_n = gamma exactly for n <= 10^4")
@pytest.mark.parametrize("backend", _backend.available())
def test_c02_constant_closed_form(backend):
    prof = return_probabilities(GammaSequence.constant(0.2), 10_000, backend=backend)
    err = float(np.max(np.abs(prof.gamma_star[1:] - 0.2)))
    print(f"{backend}: max error {err:.3e}")
    assert err < 1e-14


# 3 -------------------------------------------------------------------------


@pytest.mark.criterion(3, "gamma_n = 0.5 2^-n: log gamma*_n linear on [50, 300]")
def test_c03_exponential_regime():
    t0 = time.perf_counter()
    gs = return_probabilities(GammaSequence.geometric(0.5, 0.5), 300).gamma_star
    n = np.arange(50, 301)
    y = np.log(gs[50:301])
    slope, icpt = np.polyfit(n, y, 1)
    r2 = 1 - np.sum((y - (slope * n + icpt)) ** 2) / np.sum((y - y.mean()) ** 2)
    elapsed = time.perf_counter() - t0
    print(f"slope {slope:.6f}, R^2 {r2:.12f}, {elapsed:.3f}s")
    assert r2 > 0.99
    assert slope < 0
    assert elapsed < 1.0


# 4 -------------------------------------------------------------------------


@pytest.mark.criterion(4, "gamma_n = (n+1)^-2: gamma*_n / gamma_n bounded on [500, 5000]")
def test_c04_polynomial_regime():
    t0 = time.perf_counter()
    gamma = RENEWAL_FAMILIES["(n+1)^-2"]
    gs = return_probabilities(gamma, 5000).gamma_star
    n = np.arange(500, 5001)
    ratio = gs[n] / (n + 1.0) ** -2
    early = ratio[n <= 2500].max()
    late = ratio[n >= 2500].max()
    elapsed = time.perf_counter() - t0
    print(f"max early {early:.6f}, max late {late:.6f}, {elapsed:.3f}s")
    assert np.all(np.isfinite(ratio))
    assert late <= 1.1 * early
    assert elapsed < 5.0


# 5 -------------------------------------------------------------------------


@pytest.mark.criterion(5, "clock domination, order-3 kernel, enumerated gamma, 10^5 runs")
def test_c05_domination(binary):
    psi = random_normalized(binary, 3, seed=5)
    kernel = kernel_from_potential(psi).with_gamma("enumerated")
    words = ["".join(w) for w in itertools.product("01", repeat=3)]
    t0 = time.perf_counter()
    total = 0
    for i, (a, b) in enumerate(itertools.combinations(words, 2)):
        rep = domination_test(kernel, Context(binary, a), Context(binary, b), 50, 10, 100_000, seed=500 + i)
        total += len(rep.violations)
    elapsed = time.perf_counter() - t0
    print(f"violations {total}, {elapsed:.1f}s")
    assert total == 0
    assert elapsed < 120


# 6 -------------------------------------------------------------------------


@pytest.mark.criterion(6, "order-5 conditional laws: all past pairs within gamma*_n, n <= 100")
@pytest.mark.parametrize("indexing", ["rr30", "enumerated"])
def test_c06_relaxation_of_conditional_laws(binary, indexing):
    psi = random_normalized(binary, 5, seed=6)
    kernel = kernel_from_potential(psi)
    gs = return_probabilities(kernel.gamma_sequence(indexing), 100).gamma_star
    words = ["".join(w) for w in itertools.product("01", repeat=5)]
    # law of the most recent symbol after n steps
    last = {w: conditional_laws(kernel, Context(binary, w), 100).reshape(101, -1, 2).sum(axis=1) for w in words}
    violations = 0
    for x, y in itertools.product(words, repeat=2):
        gap = np.max(np.abs(last[x] - last[y]), axis=1)
        violations += int(np.sum(gap[1:] > gs[1:]))
    assert violations == 0


# 7 -------------------------------------------------------------------------


@pytest.mark.criterion(7, "Markov Q: exact correlation below both unit-step bounds, C certified")
def test_c07_markov_dominance(binary, markov_q):
    phi = Potential.from_transition(binary, markov_q)
    f = g = CylinderFunction.indicator(binary, "0")
    n = np.arange(201)
    oracle = (2 / 3) * (1 / 3) * 0.7**n
    corr = exact_correlations(phi, f, g, 200)
    assert np.max(np.abs(corr - oracle)) < 1e-12
    rep = verify_bounds(phi, f, g, 200)
    assert rep.ok, rep.violations[:3]
    assert np.all(oracle <= rep.sum_bound)
    assert np.all(oracle <= rep.C_bound)
    assert math.isfinite(rep.C)
    assert rep.info["C_certified"]


# 8 -------------------------------------------------------------------------


def _max_diagonal_by_vertices(mu, nu):
    """Largest diagonal mass over the vertices of the transportation polytope."""
    A = len(mu)
    cells = [(i, j) for i in range(A) for j in range(A)]
    rows = []
    for i in range(A):
        rows.append([1.0 if c[0] == i else 0.0 for c in cells])
    for j in range(A):
        rows.append([1.0 if c[1] == j else 0.0 for c in cells])
    M = np.array(rows)
    rhs = np.concatenate([mu, nu])
    best = -np.inf
    for basis in itertools.combinations(range(A * A), 2 * A - 1):
        sub = M[:, basis]
        if np.linalg.matrix_rank(sub) < 2 * A - 1:
            continue
        x, *_ = np.linalg.lstsq(sub, rhs, rcond=None)
        if np.max(np.abs(sub @ x - rhs)) > 1e-12 or np.min(x) < -1e-12:
            continue
        full = np.zeros(A * A)
        full[list(basis)] = x
        best = max(best, float(full.reshape(A, A).trace()))
    return best


@pytest.mark.criterion(8, "maximal coupling on 1000 random pairs, vertex check for |A| <= 3")
def test_c08_maximal_coupling():
    rng = np.random.default_rng(8)
    worst = {"marg": 0.0, "delta": 0.0, "vertex": -np.inf}
    for i in range(1000):
        A = 2 + i % 5
        mu = rng.dirichlet(np.ones(A))
        nu = rng.dirichlet(np.ones(A))
        J = maximal_coupling(mu, nu)
        assert np.all(J.matrix >= 0)
        worst["marg"] = max(worst["marg"], np.max(np.abs(J.first_marginal - mu)), np.max(np.abs(J.second_marginal - nu)))
        delta = diagonal_weight(J)
        tv = 0.5 * np.sum(np.abs(mu - nu))
        worst["delta"] = max(worst["delta"], abs(delta - (1 - tv)))
        assert delta >= min(np.min(mu / nu), np.min(nu / mu)) - 1e-12
        assert delta >= np.min(mu / nu) - 1e-12
        if A <= 3:
            worst["vertex"] = max(worst["vertex"], _max_diagonal_by_vertices(mu, nu) - delta)
    print(worst)
    assert worst["marg"] < 1e-12
    assert worst["delta"] < 1e-12
    assert worst["vertex"] <= 1e-12


# 9 -------------------------------------------------------------------------


def _random_order2(seed):
    rng = np.random.default_rng(seed)
    return Potential(Alphabet("01"), 2, rng.normal(size=8))


@pytest.mark.criterion(9, "normalization of 200 random order-2 potentials")
def test_c09_rows_sum_to_one():
    worst = 0.0
    for s in range(200):
        psi = normalize(_random_order2(s)).psi
        sums = np.exp(psi.table.reshape(4, 2)).sum(axis=1)
        worst = max(worst, float(np.max(np.abs(sums - 1))))
    assert worst < 1e-10


@pytest.mark.criterion(9, "normalization of 200 random order-2 potentials")
def test_c09_normalized_inputs_are_fixed_points():
    for s in range(200):
        psi = normalize(_random_order2(s)).psi
        again = normalize(psi).psi
        assert np.max(np.abs(again.table - psi.table)) < 1e-10


@pytest.mark.criterion(9, "normalization of 200 random order-2 potentials")
def test_c09_psi_variations_below_phi_tail():
    failures = []
    for s in range(200):
        phi = _random_order2(s)
        psi = normalize(phi).psi
        v_psi = table_variations(psi.table, 2, 3)
        v_phi = table_variations(phi.table, 2, 3)
        tail = np.cumsum(v_phi[::-1])[::-1]
        excess = v_psi - tail
        if np.any(excess > 1e-9):
            m = int(np.argmax(excess))
            failures.append((s, m, float(v_psi[m]), float(tail[m])))
    assert not failures, f"{len(failures)} of 200 potentials exceed the tail, first: {failures[:3]}"


# 10 ------------------------------------------------------------------------


@pytest.mark.criterion(10, "block bound on a truncated geometric-variation potential, n_m = m")
def test_c10_block_bound(binary):
    phi = Potential.from_json({"alphabet": "01", "family": "geometric",
                               "params": {"C": 1.0, "theta": 0.5, "bias": [0.0, 0.3], "truncate": 4}})
    assert not phi.normalized
    sched = BlockSchedule.linear(1)
    gbar = block_gamma(phi, sched)
    assert math.isfinite(gbar.tail_bound(0))
    f = g = CylinderFunction.indicator(binary, "0")
    rep = verify_bounds(phi, f, g, 100, schedule=sched)
    exact = np.abs(exact_correlations(normalize(phi).psi, f, g, 100))
    assert np.all(np.isfinite(rep.t2_bound))
    assert np.all(exact <= rep.t2_bound)
    assert math.isfinite(rep.info["theorem2_C"])


# 11 ------------------------------------------------------------------------


@pytest.mark.criterion(11, "generating functions and convolution identity for constant gamma")
@pytest.mark.parametrize("g", [0.2, 0.5])
def test_c11_generating_functions(g):
    gamma = GammaSequence.constant(g)
    radius = renewal_radius(gamma)
    # F(s) = g s / (1 - (1-g) s) reaches 1 at s = 1
    assert abs(radius - 1.0) < 1e-9
    for s in (0.1, 0.5, 0.9 * radius):
        gf = generating_functions(gamma, s, 2000)
        assert gf.identity_gap <= gf.tolerance
        assert abs(gf.F - g * s / (1 - (1 - g) * s)) < 1e-12
    assert convolution_check(gamma, 200) < 1e-12


# 12 ------------------------------------------------------------------------

CLI_RUNS = [
    ("simulate", "simulate_uniform.json"),
    ("couple", "couple_order2.json"),
    ("renewal", "renewal_constant.json"),
    ("classify", "classify_geometric.json"),
    ("verify", "verify_markov.json"),
    ("verify", "verify_montecarlo.json"),
    ("normalize", "normalize_order2.json"),
]


@pytest.mark.criterion(12, "CLI reruns are byte-identical")
@pytest.mark.parametrize("command,config", CLI_RUNS)
def test_c12_reproducible_cli(tmp_path, command, config):
    outs = []
    for rep in ("a", "b"):
        out = tmp_path / rep
        code = cli.main([command, "--config", str(CONFIGS / config), "--out", str(out), "--threads", "2"])
        assert code == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1]
    assert any(name.endswith(".csv") or name.endswith(".json") for name in outs[0])
    meta = json.loads(next(v for k, v in outs[0].items() if k.endswith(".meta.json")))
    assert {"config_hash", "seed", "version"} <= set(meta)
