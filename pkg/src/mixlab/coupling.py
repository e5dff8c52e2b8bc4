"""Maximal couplings, the coupled pair chain with its disagreement clock, and block couplings.

Pairs are drawn diagonal-first: with probability ``Delta = sum min(mu, nu)``
a shared symbol comes from the overlap, otherwise the two symbols are drawn
independently from the normalized positive parts of ``mu - nu`` and
``nu - mu``.  Each draw consumes three uniforms ``(u0, u1, u2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import zeta

from . import _backend, _fallback, rng
from .chain import TransitionKernel, _cdf_table
from .config import AGREEMENT_CAP, ENUMERATION_BUDGET
from .errors import BudgetError, ConfigError
from .potential import Potential
from .renewal import GammaSequence
from .sequences import Context, VariationSequence, agreement_length

__all__ = [
    "JointDistribution",
    "CoupledPath",
    "CoupledSample",
    "BlockSchedule",
    "BlockKernel",
    "DisagreementEstimate",
    "maximal_coupling",
    "initial_agreement",
    "diagonal_weight",
    "draw_pair",
    "sample_coupled_paths",
    "sample_coupled_chain",
    "disagreement_probability",
    "block_kernel",
    "block_gamma",
    "sample_block_coupled_paths",
    "sample_block_coupled_chain",
]


def _check_prob(p, name):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ConfigError(f"{name} must be a vector")
    if np.any(p < 0):
        raise ConfigError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ConfigError(f"{name} sums to {p.sum()!r}, not 1")
    return p


@dataclass(frozen=True)
class JointDistribution:
    """Probability matrix on ``A x A``."""

    matrix: np.ndarray = field(compare=False)

    @property
    def first_marginal(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    @property
    def second_marginal(self) -> np.ndarray:
        return self.matrix.sum(axis=0)

    def rows(self):
        """CSV rows ``(a, b, p)``."""
        A = self.matrix.shape[0]
        for a in range(A):
            for b in range(A):
                yield a, b, float(self.matrix[a, b])


def maximal_coupling(mu, nu) -> JointDistribution:
    """Joint law with diagonal ``min(mu, nu)`` and off-diagonal mass ``(mu-nu)^+ (nu-mu)^+ / sum (mu-nu)^+``."""
    mu = _check_prob(mu, "mu")
    nu = _check_prob(nu, "nu")
    if mu.shape != nu.shape:
        raise ConfigError("mu and nu have different lengths")
    J = np.diag(np.minimum(mu, nu))
    pos = np.clip(mu - nu, 0.0, None)
    neg = np.clip(nu - mu, 0.0, None)
    den = pos.sum()
    if den > 0:
        off = np.outer(pos, neg) / den
        np.fill_diagonal(off, 0.0)
        J = J + off
    return JointDistribution(J)


def diagonal_weight(joint: JointDistribution) -> float:
    return float(np.trace(joint.matrix))


def draw_pair(mu, nu, u3) -> tuple[int, int]:
    """One pair from the maximal coupling using uniforms ``u3 = (u0, u1, u2)``."""
    mu = _check_prob(mu, "mu")
    nu = _check_prob(nu, "nu")
    P = np.array([mu, nu])
    a, b = _fallback.coupled_step(P[:1], P[1:], _cdf_table(P[:1]), np.array([False]), np.asarray(u3, float)[None, :])
    return int(a[0]), int(b[0])


# ---------------------------------------------------------------------------
# coupled chains


@dataclass(frozen=True)
class CoupledSample:
    """``runs`` coupled paths; ``clock[r, t]`` is the backward agreement length at time ``t``."""

    x: Context
    y: Context
    u: np.ndarray = field(compare=False)
    v: np.ndarray = field(compare=False)
    clock: np.ndarray = field(compare=False)
    seed: int

    @property
    def runs(self) -> int:
        return self.u.shape[0]

    def disagreement(self) -> np.ndarray:
        """Empirical ``P(u_t != v_t)`` per time."""
        return (self.u != self.v).mean(axis=0)


@dataclass(frozen=True)
class CoupledPath:
    """One coupled pair of paths with pasts ``x`` and ``y``."""

    x: Context
    y: Context
    u: np.ndarray = field(compare=False)
    v: np.ndarray = field(compare=False)
    clock: np.ndarray = field(compare=False)
    seed: int
    block_clock: np.ndarray | None = field(default=None, compare=False)

    @property
    def u_samples(self) -> str:
        return self.x.alphabet.decode(self.u)

    @property
    def v_samples(self) -> str:
        return self.x.alphabet.decode(self.v)

    def rows(self):
        """CSV rows ``(t, u, v, clock)``."""
        syms = self.x.alphabet.symbols
        for t, (a, b, c) in enumerate(zip(self.u.tolist(), self.v.tolist(), self.clock.tolist())):
            yield t, syms[a], syms[b], c


def initial_agreement(x: Context, y: Context, cap: int = AGREEMENT_CAP) -> int:
    """Clock value before the first step: agreement counted over the given words only.

    Padding beyond the words is not evidence of agreement, so identical pasts
    start at their common length rather than at ``cap``.  This never exceeds
    the true agreement length, so the clock stays a valid lower bound.
    """
    return min(agreement_length(x, y, cap), max(len(x), len(y)), cap)


def _clock(u, v, agree0, cap):
    R, n = u.shape
    clock = np.empty((R, n), dtype=np.int64)
    T = np.full(R, min(agree0, cap), dtype=np.int64)
    for t in range(n):
        T = np.where(u[:, t] == v[:, t], np.minimum(T + 1, cap), 0)
        clock[:, t] = T
    return clock


def _infinite_coupled(kernel, x, y, unif, agree0, cap):
    R, n, _ = unif.shape
    D = kernel.depth
    wu = np.tile(np.array(x.indices(D), dtype=np.int64), (R, 1))
    wv = np.tile(np.array(y.indices(D), dtype=np.int64), (R, 1))
    u = np.empty((R, n), dtype=np.int8)
    v = np.empty((R, n), dtype=np.int8)
    for t in range(n):
        p = kernel.rows(wu)
        q = kernel.rows(wv)
        same = np.all(wu == wv, axis=1)
        a, b = _fallback.coupled_step(p, q, _cdf_table(p), same, unif[:, t, :])
        u[:, t], v[:, t] = a, b
        if D:
            wu[:, :-1], wv[:, :-1] = wu[:, 1:], wv[:, 1:]
            wu[:, -1], wv[:, -1] = a, b
    return u, v, _clock(u, v, agree0, cap)


def sample_coupled_paths(kernel: TransitionKernel, x: Context, y: Context, n: int, runs: int, seed: int,
                         threads: int | None = None, backend: str | None = None,
                         cap: int = AGREEMENT_CAP) -> CoupledSample:
    """``runs`` independent realizations of the maximally coupled pair chain."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    seed = rng.check_seed(seed)
    agree0 = initial_agreement(x, y, cap)
    be = _backend.get(backend)

    def work(c, start, stop):
        unif = rng.generator(seed, "coupled", c).random((stop - start, n, 3))
        if kernel.is_finite:
            k = kernel.memory_order
            return be.sample_coupled(np.ascontiguousarray(kernel.table), kernel.cdf,
                                     x.encode(k), y.encode(k), agree0, cap, unif)
        return _infinite_coupled(kernel, x, y, unif, agree0, cap)

    parts = rng.map_chunks(work, runs, threads)
    u = np.concatenate([p[0] for p in parts])
    v = np.concatenate([p[1] for p in parts])
    clock = np.concatenate([p[2] for p in parts])
    return CoupledSample(x, y, u, v, clock, seed)


def sample_coupled_chain(kernel: TransitionKernel, x: Context, y: Context, n: int, seed: int,
                         backend: str | None = None) -> CoupledPath:
    s = sample_coupled_paths(kernel, x, y, n, 1, seed, backend=backend)
    return CoupledPath(x, y, s.u[0], s.v[0], s.clock[0], s.seed)


@dataclass(frozen=True)
class DisagreementEstimate:
    n: int
    estimate: float
    stderr: float
    runs: int

    def upper(self, sigmas: float = 3.0) -> float:
        return self.estimate + sigmas * self.stderr


def disagreement_probability(kernel, x, y, n: int, runs: int, seed: int, threads: int | None = None) -> DisagreementEstimate:
    """Monte-Carlo ``P(u_n != v_n)`` (time index ``n`` counted from 0) with binomial standard error."""
    s = sample_coupled_paths(kernel, x, y, n + 1, runs, seed, threads)
    p = float((s.u[:, n] != s.v[:, n]).mean())
    return DisagreementEstimate(n, p, math.sqrt(p * (1 - p) / runs), runs)


# ---------------------------------------------------------------------------
# blocks


@dataclass(frozen=True)
class BlockSchedule:
    """Block boundaries ``n_0 = 0 < n_1 < ...``.

    ``points`` lists the first boundaries explicitly; beyond them the
    boundaries grow by ``step`` each time.
    """

    points: tuple[int, ...] = (0,)
    step: int = 1

    def __post_init__(self):
        pts = tuple(int(p) for p in self.points)
        object.__setattr__(self, "points", pts)
        if not pts or pts[0] != 0:
            raise ConfigError("a block schedule starts at n_0 = 0")
        if any(b <= a for a, b in zip(pts, pts[1:])) or self.step < 1:
            raise ConfigError("block schedule must be strictly increasing")

    @classmethod
    def linear(cls, step: int = 1) -> "BlockSchedule":
        return cls((0,), int(step))

    def __getitem__(self, m: int) -> int:
        if m < len(self.points):
            return self.points[m]
        return self.points[-1] + self.step * (m - len(self.points) + 1)

    def values(self, M: int) -> np.ndarray:
        return np.array([self[m] for m in range(M + 1)])

    def block_length(self, m: int) -> int:
        """Length of block ``m``: ``n_{m+1} - n_m``."""
        return self[m + 1] - self[m]

    def is_subadditive(self, m_max: int = 64) -> bool:
        v = self.values(2 * m_max)
        return all(v[m + k] - v[m] <= v[k] for m in range(m_max + 1) for k in range(m_max + 1))

    def to_json(self) -> dict:
        return {"points": list(self.points), "step": self.step}

    @classmethod
    def from_json(cls, data) -> "BlockSchedule":
        if isinstance(data, list):
            return cls(tuple(data), int(data[-1] - data[-2]) if len(data) > 1 else 1)
        return cls(tuple(data.get("points", (0,))), int(data.get("step", 1)))


@dataclass(frozen=True)
class BlockKernel:
    """``P_n(w | x)`` for words ``w`` of length ``n``, indexed by the code of ``w``."""

    kernel: TransitionKernel
    length: int
    table: np.ndarray = field(compare=False)
    next_context: np.ndarray = field(compare=False)

    def row(self, x: Context) -> np.ndarray:
        return self.table[x.encode(self.kernel.memory_order)].copy()


def block_kernel(kernel: TransitionKernel, n: int) -> BlockKernel:
    """Product ``P(a_1|x) P(a_2|x a_1) ... P(a_n|x a_1..a_{n-1})`` over all words."""
    kernel._need_finite()
    if n < 1:
        raise ConfigError("block length must be >= 1")
    A = len(kernel.alphabet)
    nctx = A**kernel.memory_order
    if nctx * A**n > ENUMERATION_BUDGET:
        raise BudgetError(f"block of length {n} exceeds the enumeration budget")
    T = np.ones((nctx, 1))
    ctx = np.arange(nctx)[:, None]
    for _ in range(n):
        rows = kernel.table[ctx]  # (nctx, W, A)
        T = (T[:, :, None] * rows).reshape(nctx, -1)
        ctx = ((ctx[:, :, None] * A + np.arange(A)) % nctx).reshape(nctx, -1)
    return BlockKernel(kernel, n, T, ctx)


def block_gamma(phi: Potential, schedule: BlockSchedule, k_max: int = 1 << 16) -> GammaSequence:
    """``bar gamma_k = 1 - exp(-3 R_k)`` with rests ``R_k = sum_{j >= n_k} var_j(phi)``.

    The tail bound of the returned sequence is ``3 sum_{k >= m} R_k``, evaluated
    in closed form (geometric variations) or through
    ``R(n) <= C p/(p-1) (n+1)^(1-p)`` and ``n_k >= k`` (polynomial variations).
    Raises :class:`ConfigError` when the rests are not summable along the schedule.
    """
    v = phi.variations
    if not v.summable:
        raise ConfigError("block_gamma needs summable variations")
    rest_sum = _rest_sum_bound(v, schedule, k_max)
    if not math.isfinite(rest_sum(0)):
        raise ConfigError("rests are not summable along the schedule")

    def fn(m):
        return -np.expm1(-3.0 * np.array([v.tail_sum(schedule[int(k)]) for k in np.ravel(m)]))

    def tail(m):
        return 3.0 * rest_sum(m)

    sup = v.support
    support = None
    if sup is not None:
        support = next(k for k in range(k_max + 1) if schedule[k] >= sup)
    return GammaSequence(
        fn, tail, kind="block", params={"variations": v.to_json(), "schedule": schedule.to_json()},
        weighted_tail=lambda m, s: s**m * tail(m) if s <= 1 else math.inf, support=support,
    )


def _rest_sum_bound(v: VariationSequence, schedule: BlockSchedule, k_max: int):
    """Function ``m -> upper bound on sum_{k >= m} tail_sum(n_k)``."""
    p = dict(v.params)
    T = len(v.table)
    # first block index from which the schedule is linear and past the explicit table
    K1 = len(schedule.points) - 1
    while schedule[K1] < T:
        K1 += 1
    s = schedule.step

    def explicit(m, stop):
        return math.fsum(v.tail_sum(schedule[k]) for k in range(m, stop))

    if v.support is not None:
        K = next(k for k in range(k_max + 1) if schedule[k] >= v.support)
        return lambda m: explicit(m, max(K, m))
    if v.kind == "geometric":
        C, th = p["C"], p["theta"]

        def bound(m):
            start = max(m, K1)
            return explicit(m, start) + C * th ** schedule[start] / ((1 - th) * (1 - th**s))

        return bound
    pp = p["p"]
    if pp <= 2:
        return lambda m: math.inf
    Cp = p["C"] * pp / (pp - 1)

    def bound(m):
        start = max(m, K1)
        return explicit(m, start) + Cp * float(zeta(pp - 1, start + 1.0))

    return bound


def _draw_blocks(T_u, T_v, same, unif):
    cdf_u = _cdf_table(T_u)
    return _fallback.coupled_step(T_u, T_v, cdf_u, same, unif)


def sample_block_coupled_paths(kernel: TransitionKernel, x: Context, y: Context, schedule: BlockSchedule,
                               M: int, runs: int, seed: int, threads: int | None = None,
                               cap: int = AGREEMENT_CAP):
    """Block-wise maximal coupling over ``M`` blocks, returning unit paths and block clocks.

    Block ``m`` is drawn from the maximal coupling of the two block-kernel
    rows given each path's full realized prefix.  With ``n_m = m`` the draws
    coincide with :func:`sample_coupled_paths` for the same seed.
    """
    kernel._need_finite()
    seed = rng.check_seed(seed)
    if M < 1:
        raise ConfigError("M must be >= 1")
    A = len(kernel.alphabet)
    k = kernel.memory_order
    nctx = A**k
    lengths = [schedule.block_length(m) for m in range(M)]
    blocks = {L: block_kernel(kernel, L) for L in set(lengths)}
    N = schedule[M]
    agree0 = initial_agreement(x, y, cap)
    # the block clock starts from the number of whole first-length blocks already agreeing
    bagree0 = agree0 // lengths[0]
    cu0, cv0 = x.encode(k), y.encode(k)

    def work(c, start, stop):
        R = stop - start
        unif = rng.generator(seed, "coupled", c).random((R, M, 3))
        u = np.empty((R, N), dtype=np.int8)
        v = np.empty((R, N), dtype=np.int8)
        bclock = np.empty((R, M), dtype=np.int64)
        cu = np.full(R, cu0, dtype=np.int64)
        cv = np.full(R, cv0, dtype=np.int64)
        Tb = np.full(R, min(bagree0, cap), dtype=np.int64)
        for m in range(M):
            L = lengths[m]
            bk = blocks[L]
            wa, wb = _draw_blocks(bk.table[cu], bk.table[cv], cu == cv, unif[:, m, :])
            digits_a = np.array(np.unravel_index(wa, (A,) * L)).T
            digits_b = np.array(np.unravel_index(wb, (A,) * L)).T
            t0 = schedule[m]
            u[:, t0 : t0 + L] = digits_a
            v[:, t0 : t0 + L] = digits_b
            Tb = np.where(wa == wb, np.minimum(Tb + 1, cap), 0)
            bclock[:, m] = Tb
            cu = bk.next_context[cu, wa] if nctx > 1 else cu
            cv = bk.next_context[cv, wb] if nctx > 1 else cv
        return u, v, bclock

    parts = rng.map_chunks(work, runs, threads)
    u = np.concatenate([p[0] for p in parts])
    v = np.concatenate([p[1] for p in parts])
    bclock = np.concatenate([p[2] for p in parts])
    return CoupledSample(x, y, u, v, _clock(u, v, agree0, cap), seed), bclock


def sample_block_coupled_chain(kernel, x, y, schedule: BlockSchedule, M: int, seed: int) -> CoupledPath:
    s, bclock = sample_block_coupled_paths(kernel, x, y, schedule, M, 1, seed)
    return CoupledPath(x, y, s.u[0], s.v[0], s.clock[0], s.seed, bclock[0])
