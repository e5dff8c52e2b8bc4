"""Correlation upper bounds and their comparison with measured correlations.

All unit-time bounds are built from ``gamma*_n = P(S_n = 0)``, the return
probabilities of the dominating chain driven by the kernel's gamma sequence.
The block bound is computed on the block clock ``m`` and mapped to unit time
through ``n_m <= t < n_{m+1}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .chain import (
    CylinderFunction,
    TransitionKernel,
    _cdf_table,
    exact_correlations,
    kernel_from_potential,
    stationary_measure,
)
from .coupling import BlockSchedule, block_gamma
from .errors import BoundViolation, ConfigError, NumericalError
from .potential import Potential, normalize
from .renewal import GammaSequence, return_probabilities, tau_distribution
from .sequences import seminorm_ratio

__all__ = [
    "ConstantC",
    "Theorem1Bounds",
    "Theorem2Bounds",
    "BoundReport",
    "certify_constant",
    "theorem1_bounds",
    "theorem1_profile",
    "theorem2_bounds",
    "theorem2_profile",
    "holder_bound",
    "holder_profile",
    "single_coordinate_bound",
    "verify_bounds",
    "auto_schedule",
]

_CUTOFF0 = 64
_CUTOFF_MAX = 1 << 16


def _h(x: float) -> float:
    """``x / (1 - exp(-x))``, increasing, with ``h(0) = 1``."""
    return 1.0 if x == 0 else x / -math.expm1(-x)


@dataclass(frozen=True)
class ConstantC:
    """``C = var_0 + sup_k var_k / P(tau = k)`` with how the supremum was certified."""

    value: float
    window_max: float
    limit_estimate: float
    tail_bound: float
    cutoff: int
    oscillation: float
    certified: bool


def certify_constant(var_at: np.ndarray, var0: float, gamma: GammaSequence,
                     tail_factor=None) -> ConstantC:
    """Evaluate the constant over a growing cutoff.

    ``var_at[k]`` supplies the numerator for ``k = 0..`` (at least
    ``2**16 + 1`` entries).  ``tail_factor(K)``, when given, must bound
    ``sup_{k > K} var_at[k] * P(tau = inf) / P(tau = k)``; dividing it by the
    lower end of the certified ``P(tau = inf)`` interval gives a rigorous tail.
    The cutoff doubles from 64 until the ratio's relative oscillation over
    the trailing half of the window is below 1%.
    """
    K = _CUTOFF0
    while True:
        tau = tau_distribution(gamma, K)
        num = var_at[1 : K + 1]
        den = tau.pmf[1 : K + 1]
        if np.any((den == 0) & (num > 0)):
            k = int(np.argmax((den == 0) & (num > 0))) + 1
            raise NumericalError(f"P(tau = {k}) = 0 while var_{k} > 0: the constant is infinite")
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(num > 0, num / np.where(den > 0, den, 1.0), 0.0)
        trail = ratio[K // 2 - 1 :]
        top = float(trail.max())
        osc = 0.0 if top == 0 else float((top - trail.min()) / top)
        if osc < 0.01:
            break
        if K >= _CUTOFF_MAX:
            raise NumericalError(f"ratio var_k / P(tau=k) still oscillates by {osc:.1%} at cutoff {K}")
        K *= 2
    wmax = float(ratio.max())
    limit = float(ratio[-1])
    p_inf_lo = tau.infinity_bounds[0]
    if var_at[K + 1 :].max(initial=0.0) == 0.0 and var_at[K] == 0.0:
        tail, certified = 0.0, True
    elif tail_factor is not None and p_inf_lo > 0:
        tail, certified = tail_factor(K) / p_inf_lo, True
    else:
        tail, certified = 0.0, False
    value = var0 + max(wmax, 1.01 * limit, tail)
    return ConstantC(value, wmax, limit, tail, K, osc, certified)


def _kernel_and_gamma(phi: Potential, indexing: str, gamma: GammaSequence | None):
    if not phi.normalized:
        raise ConfigError("the unit-step bounds need a normalized potential")
    v = phi.variations
    if not v.summable:
        raise ConfigError("variations are not summable: the constant C is infinite")
    kernel = kernel_from_potential(phi, indexing=indexing if indexing != "enumerated" else "rr30")
    g = gamma if gamma is not None else kernel.gamma_sequence(indexing)
    return kernel, g


@dataclass(frozen=True)
class Theorem1Bounds:
    sum_bound: np.ndarray
    C_bound: np.ndarray
    C: ConstantC
    gamma_star: np.ndarray
    indexing: str


def theorem1_profile(phi: Potential, f_norm1: float, g_seminorm: float, n_max: int,
                     indexing: str = "rr30", gamma: GammaSequence | None = None) -> Theorem1Bounds:
    """Both unit-step bounds for ``n = 0..n_max``.

    ``sum_bound[n] = |f|_1 |g|_phi sum_{k<=n} var_k gamma*_{n-k}`` and
    ``C_bound[n] = C |f|_1 |g|_phi gamma*_n``.  ``gamma`` overrides the
    sequence derived from the variations (the constant is then not certified
    beyond the window).
    """
    if f_norm1 < 0 or g_seminorm < 0:
        raise ConfigError("norms must be nonnegative")
    _, g = _kernel_and_gamma(phi, indexing, gamma)
    v = phi.variations
    gs = return_probabilities(g, max(n_max, 1)).gamma_star[: n_max + 1]
    var = v.values(n_max + 1)
    conv = np.convolve(var, gs)[: n_max + 1]
    scale = f_norm1 * g_seminorm
    tail_factor = None
    if gamma is None and indexing in ("rr30", "eq101"):
        # for k > K: var_k / P(tau=k) <= h(var_K) / P(tau = inf) under either indexing
        tail_factor = lambda K: _h(v[K])  # noqa: E731
    C = certify_constant(v.values(_CUTOFF_MAX + 2), v[0], g, tail_factor)
    return Theorem1Bounds(scale * conv, scale * C.value * gs, C, gs, indexing)


def theorem1_bounds(phi: Potential, f_norm1: float, g_seminorm: float, n: int,
                    indexing: str = "rr30", gamma: GammaSequence | None = None) -> tuple[float, float, float]:
    """``(sum_bound, C_bound, C)`` at a single ``n``."""
    p = theorem1_profile(phi, f_norm1, g_seminorm, n, indexing, gamma)
    return float(p.sum_bound[n]), float(p.C_bound[n]), p.C.value


@dataclass(frozen=True)
class Theorem2Bounds:
    """Block-clock bounds ``sum_bound[m]``, ``C_bound[m]`` and the schedule used."""

    sum_bound: np.ndarray
    C_bound: np.ndarray
    C: ConstantC
    gamma_bar_star: np.ndarray
    schedule: BlockSchedule

    def at_unit_time(self, t: int) -> tuple[float, float]:
        """Bounds at unit time ``t``: those of the block ``m`` with ``n_m <= t < n_{m+1}``."""
        m = 0
        while self.schedule[m + 1] <= t:
            m += 1
        if m >= len(self.sum_bound):
            raise ConfigError(f"unit time {t} lies beyond the computed blocks")
        return float(self.sum_bound[m]), float(self.C_bound[m])


def theorem2_profile(phi: Potential, schedule: BlockSchedule, f_norm1: float, g_seminorm: float,
                     m_max: int) -> Theorem2Bounds:
    """Block bounds for ``m = 0..m_max``: ``|f|_1 |g|_phi sum_{k<=m} var_{n_k} bar gamma*_{m-k}``."""
    if not schedule.is_subadditive():
        raise ConfigError("block schedule is not subadditive")
    v = phi.variations
    gbar = block_gamma(phi, schedule)
    gs = return_probabilities(gbar, max(m_max, 1)).gamma_star[: m_max + 1]
    nk = schedule.values(_CUTOFF_MAX + 2)
    var_nk = np.array([v[int(j)] for j in nk[: m_max + 1]])
    conv = np.convolve(var_nk, gs)[: m_max + 1]
    scale = f_norm1 * g_seminorm
    var_all = np.array([v[int(j)] for j in nk])

    def tail_factor(K):
        # var_{n_k} <= R_{k-1} and P(tau=k) = bar gamma_{k-1} P(tau > k-1), bar gamma = 1 - exp(-3 R)
        R = v.tail_sum(schedule[K])
        return _h(3.0 * R) / 3.0

    C = certify_constant(var_all, v[0], gbar, tail_factor)
    return Theorem2Bounds(scale * conv, scale * C.value * gs, C, gs, schedule)


def theorem2_bounds(phi: Potential, schedule: BlockSchedule, f_norm1: float, g_seminorm: float,
                    n: int) -> tuple[float, float]:
    """``(sum_bound, C_bound)`` on block index ``n``."""
    p = theorem2_profile(phi, schedule, f_norm1, g_seminorm, n)
    return float(p.sum_bound[n]), float(p.C_bound[n])


def holder_profile(phi: Potential, g_theta_norm: float, theta: float, f_norm1: float, n_max: int,
                   indexing: str = "rr30", gamma: GammaSequence | None = None) -> np.ndarray:
    """``|f|_1 |g|_theta sum_{k<=n} theta^(n-k) gamma*_k`` for ``n = 0..n_max``."""
    if not 0 < theta < 1:
        raise ConfigError("theta must lie in (0, 1)")
    _, g = _kernel_and_gamma(phi, indexing, gamma)
    gs = return_probabilities(g, max(n_max, 1)).gamma_star
    out = np.empty(n_max + 1)
    acc = 0.0
    for n in range(n_max + 1):
        acc = theta * acc + gs[n]
        out[n] = acc
    return f_norm1 * g_theta_norm * out


def holder_bound(phi: Potential, g_theta_norm: float, theta: float, f_norm1: float, n: int, **kw) -> float:
    return float(holder_profile(phi, g_theta_norm, theta, f_norm1, n, **kw)[n])


def single_coordinate_bound(phi: Potential, g_sup: float, f_norm1: float, n: int,
                            indexing: str = "rr30", gamma: GammaSequence | None = None) -> float:
    """``|f|_1 |g|_inf gamma*_n`` for ``g`` depending on ``x_{-1}`` only."""
    _, g = _kernel_and_gamma(phi, indexing, gamma)
    return f_norm1 * g_sup * float(return_probabilities(g, max(n, 1)).gamma_star[n])


def auto_schedule(phi: Potential, schedule: BlockSchedule | None = None) -> BlockSchedule:
    """``n_m = m`` when the rests are summable along it; validate a user schedule otherwise."""
    v = phi.variations
    if not v.summable:
        raise ConfigError("variations are not summable")
    if schedule is None:
        if v.kind == "polynomial" and v.support is None and dict(v.params)["p"] <= 2:
            p = dict(v.params)["p"]
            raise ConfigError(
                f"polynomial variations with p = {p} <= 2: rests decay like m^{1 - p:g} and are not summable "
                "under any subadditive schedule"
            )
        schedule = BlockSchedule.linear(1)
    if not schedule.is_subadditive():
        raise ConfigError("schedule is not subadditive")
    block_gamma(phi, schedule)  # raises when the rests are not summable
    return schedule


# ---------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class BoundReport:
    """Per-``n`` measured correlation alongside every applicable bound."""

    n: np.ndarray
    measured: np.ndarray
    ci: np.ndarray
    sum_bound: np.ndarray
    C_bound: np.ndarray
    t2_bound: np.ndarray
    holder: np.ndarray
    single_coord: np.ndarray
    C: float
    f_norm1: float
    g_seminorm: float
    method: str
    indexing: str
    seed: int | None
    schedule: BlockSchedule | None
    violations: tuple = field(default=())
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def rows(self):
        """CSV rows ``(n, measured, ci, sum_bound, C_bound, t2_bound, holder, single_coord)``."""
        for i, n in enumerate(self.n.tolist()):
            yield (n, self.measured[i], self.ci[i], self.sum_bound[i], self.C_bound[i],
                   self.t2_bound[i], self.holder[i], self.single_coord[i])

    def header(self) -> dict:
        return {
            "C": self.C,
            "f_norm1": self.f_norm1,
            "g_seminorm": self.g_seminorm,
            "method": self.method,
            "indexing": self.indexing,
            "seed": self.seed,
            "schedule": None if self.schedule is None else self.schedule.to_json(),
            "violations": [list(v) for v in self.violations],
            **self.info,
        }

    def raise_on_violation(self):
        if self.violations:
            n, name, meas, bound = self.violations[0]
            raise BoundViolation(f"n={n}: measured {meas:.6g} exceeds {name} bound {bound:.6g} "
                                 f"({len(self.violations)} violations)")


def _mc_correlations(kernel: TransitionKernel, f: CylinderFunction, g: CylinderFunction, n_max: int,
                     runs: int, seed: int, threads):
    """Stationary Monte-Carlo correlations: start contexts drawn from the exact stationary law."""
    A = len(kernel.alphabet)
    D = max(kernel.memory_order, f.depth, g.depth, 1)
    mu = stationary_measure(kernel, D)
    start = rng.generator(seed, "maximal").choice(A**D, size=runs, p=mu.weights)
    fD, gD = f.lift(D), g.lift(D)
    fc = fD[start] - float(mu.weights @ fD)
    rows = kernel.lifted_rows(D)
    cdf = _cdf_table(rows)
    unif = rng.generator(seed, "chain").random((runs, n_max))
    ctx = start.copy()
    meas = np.empty(n_max + 1)
    ci = np.empty(n_max + 1)
    for n in range(n_max + 1):
        prod = fc * gD[ctx]
        meas[n] = prod.mean()
        ci[n] = prod.std(ddof=1) / math.sqrt(runs)
        if n < n_max:
            a = (unif[:, n, None] >= cdf[ctx]).sum(axis=1)
            ctx = (ctx * A + a) % A**D
    return meas, ci


def verify_bounds(phi: Potential, f: CylinderFunction, g: CylinderFunction, n_max: int,
                  method: str = "exact", seed: int | None = None, runs: int = 100_000,
                  indexing: str = "rr30", gamma_scale: float = 1.0, schedule: BlockSchedule | None = None,
                  theta: float | None = None, threads: int | None = None, sigmas: float = 4.0) -> BoundReport:
    """Measure ``|E f(past) g(future) - E f E g|`` and compare it with every applicable bound.

    ``phi`` may be non-normalized: the measure and the unit-step bounds then
    come from its normalization, while the block bound uses ``phi`` itself.
    ``gamma_scale`` multiplies the gamma sequence (values below 1 break the
    certificate and are meant for sabotage tests).  A measurement above a bound
    by more than ``1e-10`` (exact) or ``sigmas`` standard errors (Monte Carlo)
    is recorded as a violation.
    """
    if method not in ("exact", "montecarlo"):
        raise ConfigError("method must be 'exact' or 'montecarlo'")
    if method == "montecarlo" and seed is None:
        raise ConfigError("Monte-Carlo verification needs a seed")
    if not phi.is_finite:
        raise ConfigError("verify_bounds needs a finite-memory potential")
    info = {}
    if phi.normalized:
        psi = phi
    else:
        res = normalize(phi)
        psi = res.psi
        info["log_lambda"] = res.log_lambda
    kernel = kernel_from_potential(psi, indexing=indexing if indexing != "enumerated" else "rr30")
    base_gamma = kernel.gamma_sequence(indexing)
    gamma = None if gamma_scale == 1.0 else base_gamma.scaled(gamma_scale)

    mu = stationary_measure(kernel, max(psi.memory_order, f.depth, 1))
    f_norm1 = float(mu.weights @ np.abs(f.lift(mu.order)))
    g_sem = seminorm_ratio(g.variations(), psi.variations)
    if not math.isfinite(g_sem):
        raise ConfigError("g is not in the seminorm space of the potential")

    if method == "exact":
        measured = np.abs(exact_correlations(kernel, f, g, n_max))
        ci = np.zeros(n_max + 1)
        slack = lambda b: 1e-10 * max(1.0, b)  # noqa: E731
    else:
        meas, ci = _mc_correlations(kernel, f, g, n_max, runs, rng.check_seed(seed), threads)
        measured = np.abs(meas)
        slack = None

    t1 = theorem1_profile(psi, f_norm1, g_sem, n_max, indexing, gamma)
    g_sup = max(g.sup_norm, g.oscillation)
    nan = np.full(n_max + 1, np.nan)
    single = f_norm1 * g_sup * t1.gamma_star if g.depth <= 1 else nan
    holder = nan
    if theta is not None:
        g_theta = max(g.variations()[k] / theta**k for k in range(max(g.depth, 1)))
        holder = holder_profile(psi, g_theta, theta, f_norm1, n_max, indexing, gamma)
    t2 = nan
    if not phi.normalized or schedule is not None:
        sched = auto_schedule(phi, schedule)
        g_sem_phi = seminorm_ratio(g.variations(), phi.variations)
        # blocks needed to cover unit times up to n_max
        M = 0
        while sched[M] <= n_max:
            M += 1
        t2p = theorem2_profile(phi, sched, f_norm1, g_sem_phi, M)
        t2 = np.array([t2p.at_unit_time(t)[0] for t in range(n_max + 1)])
        info["theorem2_C"] = t2p.C.value
        info["theorem2_clock"] = "block index m with n_m <= n < n_{m+1}"
        schedule = sched

    violations = []
    for name, arr in (("sum", t1.sum_bound), ("C", t1.C_bound), ("theorem2", t2),
                      ("holder", holder), ("single_coordinate", single)):
        for n in range(n_max + 1):
            b = arr[n]
            if np.isnan(b):
                continue
            tol = slack(b) if slack else sigmas * ci[n]
            if measured[n] > b + tol:
                violations.append((n, name, float(measured[n]), float(b)))

    info["C_certified"] = t1.C.certified
    info["C_cutoff"] = t1.C.cutoff
    info["gamma_scale"] = gamma_scale
    return BoundReport(
        np.arange(n_max + 1), measured, ci, t1.sum_bound, t1.C_bound, t2, holder, single,
        t1.C.value, f_norm1, g_sem, method, indexing, seed, schedule, tuple(violations), info,
    )
