"""The dominating house-of-cards chain and its return probabilities.

The chain ``S`` lives on the naturals, starts at 0, climbs ``i -> i+1`` with
probability ``1 - gamma_i`` and falls back to 0 with probability ``gamma_i``.
``gamma_star[n] = P(S_n = 0)`` is the quantity every correlation bound is
built from; ``tau`` is the first return time to 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy.special import zeta

from . import _backend
from .errors import ConfigError, NumericalError
from .sequences import VariationSequence

__all__ = [
    "GammaSequence",
    "TauDistribution",
    "RenewalProfile",
    "RadiusEstimate",
    "DecayReport",
    "AlphaEstimate",
    "GeneratingFunctions",
    "tau_distribution",
    "return_probabilities",
    "renewal_residual",
    "state_distributions",
    "exceedance_probabilities",
    "small_state_probabilities",
    "generating_functions",
    "renewal_radius",
    "radius_estimate",
    "classify_decay",
    "condpoly_alpha",
    "convolution_check",
    "DominationReport",
    "domination_test",
]

_CHECK_LEN = 4096
_TINY = 1e-290


class GammaSequence:
    """Nonincreasing sequence ``gamma_m`` in ``[0, 1)`` with ``gamma_0 < 1``.

    Instances are built through the class-method constructors; each carries a
    vectorized evaluator and an upper bound on its tail sums, which is what
    makes ``P(tau = inf)`` and generating-function remainders certifiable.
    """

    __slots__ = ("kind", "params", "head", "_fn", "_tail", "_wtail", "_support", "_exact_tail")

    def __init__(
        self,
        fn: Callable[[np.ndarray], np.ndarray],
        tail: Callable[[int], float],
        *,
        kind: str,
        params: dict | None = None,
        head: Iterable[float] = (),
        weighted_tail: Callable[[int, float], float] | None = None,
        support: int | None = None,
        exact_tail: bool = False,
    ):
        self.kind = kind
        self.params = dict(params or {})
        self.head = tuple(float(h) for h in head)
        self._fn = fn
        self._tail = tail
        self._wtail = weighted_tail
        self._support = support
        self._exact_tail = exact_tail
        self._validate()

    def _validate(self):
        v = self.values(_CHECK_LEN)
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ConfigError("gamma values must be finite and nonnegative")
        if v[0] >= 1.0:
            raise ConfigError(f"gamma_0 must be < 1, got {v[0]!r}")
        if np.any(np.diff(v) > 1e-15):
            raise ConfigError("gamma must be nonincreasing")

    # constructors ---------------------------------------------------------
    @classmethod
    def constant(cls, g: float) -> "GammaSequence":
        g = float(g)

        def wtail(m, s):
            if g == 0:
                return 0.0
            return g * s**m / (1.0 - s) if s < 1 else math.inf

        return cls(
            lambda m: np.full(m.shape, g),
            lambda m: 0.0 if g == 0 else math.inf,
            kind="constant",
            params={"gamma": g},
            weighted_tail=wtail,
            support=0 if g == 0 else None,
            exact_tail=True,
        )

    @classmethod
    def zero(cls) -> "GammaSequence":
        return cls.constant(0.0)

    @classmethod
    def from_table(cls, values: Iterable[float]) -> "GammaSequence":
        """Explicit finite table, zero afterwards."""
        tbl = np.asarray(list(values), dtype=float)

        def fn(m):
            out = np.zeros(m.shape)
            inside = m < len(tbl)
            out[inside] = tbl[m[inside].astype(int)]
            return out

        def tail(m):
            return math.fsum(tbl[m:])

        def wtail(m, s):
            k = np.arange(m, len(tbl))
            return float(np.sum(tbl[m:] * float(s) ** k)) if len(k) else 0.0

        nz = np.nonzero(tbl)[0]
        return cls(
            fn, tail, kind="table", params={}, head=tbl, weighted_tail=wtail,
            support=int(nz[-1]) + 1 if len(nz) else 0, exact_tail=True,
        )

    @classmethod
    def geometric(cls, C: float, theta: float, head: Iterable[float] = ()) -> "GammaSequence":
        """``gamma_m = C * theta**m`` past an optional explicit head."""
        C, theta = float(C), float(theta)
        if not 0 < theta < 1:
            raise ConfigError("geometric gamma needs 0 < theta < 1")
        hd = tuple(float(h) for h in head)

        def tail(m):
            start = max(m, len(hd))
            return math.fsum(hd[m:]) + C * theta**start / (1 - theta)

        def wtail(m, s):
            start = max(m, len(hd))
            h = math.fsum(v * s**k for k, v in enumerate(hd) if k >= m)
            q = theta * s
            return h + (C * q**start / (1 - q) if q < 1 else math.inf)

        return cls(
            _with_head(lambda m: C * theta**m, hd), tail, kind="geometric",
            params={"C": C, "theta": theta}, head=hd, weighted_tail=wtail, exact_tail=True,
        )

    @classmethod
    def polynomial(cls, C: float, p: float, head: Iterable[float] = ()) -> "GammaSequence":
        """``gamma_m = C * (m + 1) ** -p`` past an optional explicit head."""
        C, p = float(C), float(p)
        if p <= 0:
            raise ConfigError("polynomial gamma needs p > 0")
        hd = tuple(float(h) for h in head)

        def tail(m):
            start = max(m, len(hd))
            if p <= 1:
                return math.inf
            return math.fsum(hd[m:]) + C * float(zeta(p, start + 1.0))

        def wtail(m, s):
            if s <= 1:
                return s**m * tail(m)
            return math.inf

        return cls(
            _with_head(lambda m: C * (m + 1.0) ** (-p), hd), tail, kind="polynomial",
            params={"C": C, "p": p}, head=hd, weighted_tail=wtail, exact_tail=True,
        )

    @classmethod
    def from_exponents(
        cls, exponents: VariationSequence, scale: float = 1.0, shift: int = 0, *, kind: str = "variations"
    ) -> "GammaSequence":
        """``gamma_m = 1 - exp(-scale * exponents[m + shift])``."""

        def fn(m):
            return -np.expm1(-scale * exponents.values(int(m.max(initial=-1)) + shift + 1)[m.astype(int) + shift])

        def tail(m):
            return scale * exponents.tail_sum(m + shift)

        sup = exponents.support
        return cls(
            fn, tail, kind=kind, params={"scale": scale, "shift": shift, "exponents": exponents.to_json()},
            weighted_tail=lambda m, s: s**m * tail(m) if s <= 1 else math.inf,
            support=None if sup is None else max(sup - shift, 0),
        )

    @classmethod
    def from_json(cls, data: dict) -> "GammaSequence":
        try:
            kind = data["kind"]
            p = data.get("params", {})
            head = data.get("head", ())
            if kind == "constant":
                return cls.constant(p["gamma"])
            if kind == "table":
                return cls.from_table(data["table"])
            if kind == "geometric":
                return cls.geometric(p["C"], p["theta"], head)
            if kind == "polynomial":
                return cls.polynomial(p["C"], p["p"], head)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed gamma entry: {data!r}") from exc
        raise ConfigError(f"unknown gamma kind {data.get('kind')!r}")

    def to_json(self) -> dict:
        if self.kind == "table":
            return {"kind": "table", "table": list(self.head)}
        return {"kind": self.kind, "params": self.params, "head": list(self.head)}

    def scaled(self, factor: float) -> "GammaSequence":
        """Pointwise multiple ``factor * gamma`` (used to sabotage certified sequences)."""
        base = self
        return GammaSequence(
            lambda m: factor * base._fn(m), lambda m: factor * base._tail(m),
            kind=f"scaled-{self.kind}", params={"factor": factor, **self.params},
            weighted_tail=None if base._wtail is None else (lambda m, s: factor * base._wtail(m, s)),
            support=base._support, exact_tail=base._exact_tail,
        )

    # evaluation -------------------------------------------------------------
    def values(self, n: int) -> np.ndarray:
        return np.asarray(self._fn(np.arange(n)), dtype=float)

    def __getitem__(self, m: int) -> float:
        return float(self._fn(np.array([m]))[0])

    def tail_bound(self, m: int) -> float:
        """Upper bound on ``sum_{k >= m} gamma_k`` (``inf`` if not summable)."""
        return float(self._tail(int(m)))

    def weighted_tail_bound(self, m: int, s: float) -> float:
        """Upper bound on ``sum_{k >= m} gamma_k s**k``."""
        if self._wtail is None:
            return math.inf
        return float(self._wtail(int(m), float(s)))

    @property
    def summable(self) -> bool:
        return math.isfinite(self.tail_bound(0))

    @property
    def support(self) -> int | None:
        """Index from which gamma vanishes identically, if known."""
        return self._support

    @property
    def exact_tail(self) -> bool:
        return self._exact_tail

    def __repr__(self):
        return f"GammaSequence(kind={self.kind!r}, params={self.params!r}, head={self.head!r})"


def _with_head(fn, head):
    h = np.asarray(head, dtype=float)

    def inner(m):
        out = fn(np.asarray(m, dtype=float))
        out = np.array(out, dtype=float, copy=True)
        k = m < len(h)
        out[k] = h[m[k].astype(int)]
        return out

    return inner


# ---------------------------------------------------------------------------
# tau and return probabilities


@dataclass(frozen=True)
class TauDistribution:
    """Law of the first return time ``tau``.

    ``pmf[n] = P(tau = n)`` for ``0 <= n <= n_max`` (``pmf[0] = 0``).
    ``infinity`` is a point value of ``P(tau = inf)`` inside the certified
    interval ``infinity_bounds``.
    """

    pmf: np.ndarray
    survival: np.ndarray
    infinity: float
    infinity_bounds: tuple[float, float]

    @property
    def n_max(self) -> int:
        return len(self.pmf) - 1

    @property
    def finite_mass(self) -> float:
        """``P(tau < inf)`` from the point value of ``P(tau = inf)``."""
        return 1.0 - self.infinity


def tau_distribution(gamma: GammaSequence, n_max: int) -> TauDistribution:
    """First-return law: ``P(tau=1) = gamma_0``, ``P(tau=n) = gamma_{n-1} prod_{m<=n-2} (1-gamma_m)``."""
    if n_max < 1:
        raise ConfigError("n_max must be >= 1")
    g = gamma.values(n_max)
    survival = np.empty(n_max + 1)
    survival[0] = 1.0
    survival[1:] = np.cumprod(1.0 - g)
    pmf = np.zeros(n_max + 1)
    pmf[1:] = g * survival[:-1]
    lo, point, hi = _tau_infinity(gamma, n_max)
    return TauDistribution(pmf, survival, point, (lo, hi))


def _tau_infinity(gamma: GammaSequence, n_max: int) -> tuple[float, float, float]:
    """Certified interval for ``prod_m (1 - gamma_m)`` computed in log space."""
    sup = gamma.support
    if sup is not None:
        s = float(np.sum(np.log1p(-gamma.values(max(sup, 1)))))
        v = math.exp(s)
        return v, v, v
    if not gamma.summable:
        # the product diverges to zero; its partial value is an upper bound
        M = max(n_max, 1 << 12)
        hi = math.exp(float(np.sum(np.log1p(-gamma.values(M)))))
        return 0.0, 0.0, hi
    M = max(n_max, 1 << 10)
    while True:
        vals = gamma.values(M + 1)
        S = float(math.fsum(np.log1p(-vals[:M])))
        T = gamma.tail_bound(M)
        gM = vals[M]
        if gamma.exact_tail:
            # x <= -log(1-x) <= x + x^2 / (2(1-x)) summed over the tail
            hi = math.exp(S - T)
            lo = math.exp(S - T - gM * T / (2.0 * (1.0 - gM)))
        else:
            hi = math.exp(S)
            lo = math.exp(S - T / (1.0 - gM))
        if hi - lo <= 1e-14 * hi or M >= 1 << 22:
            point = hi if gamma.exact_tail else 0.5 * (lo + hi)
            return lo, point, hi
        M *= 4


@dataclass(frozen=True)
class RenewalProfile:
    """``gamma_star[n] = P(S_n = 0)`` together with the law of ``tau``."""

    gamma: np.ndarray
    gamma_star: np.ndarray
    tau: TauDistribution
    residual: float

    @property
    def n_max(self) -> int:
        return len(self.gamma_star) - 1

    @property
    def tau_pmf(self) -> np.ndarray:
        return self.tau.pmf

    @property
    def tau_infinity(self) -> float:
        return self.tau.infinity

    def rows(self):
        """CSV rows ``(n, gamma_n, gamma_star_n, tau_pmf_n)``."""
        for n in range(self.n_max + 1):
            yield n, self.gamma[n], self.gamma_star[n], self.tau.pmf[n]


def renewal_residual(gamma_star: np.ndarray, tau_pmf: np.ndarray) -> float:
    """``max_n |gamma*_n - sum_{k=1}^n P(tau=k) gamma*_{n-k}|`` over ``1 <= n <= N``."""
    N = len(gamma_star) - 1
    if N < 1:
        return 0.0
    conv = np.convolve(tau_pmf[: N + 1], gamma_star)[: N + 1]
    return float(np.max(np.abs(gamma_star[1:] - conv[1:])))


def return_probabilities(gamma: GammaSequence, n_max: int, *, backend: str | None = None) -> RenewalProfile:
    """Exact ``gamma*_n`` for ``0 <= n <= n_max`` by forward propagation of ``S``.

    ``S_n <= n``, so keeping ``n_max + 1`` states makes the propagation exact.
    The result is cross-checked against the renewal identity and a
    :class:`NumericalError` is raised if the two disagree beyond 1e-10.
    """
    if n_max < 1:
        raise ConfigError("n_max must be >= 1")
    g = np.ascontiguousarray(gamma.values(n_max + 1))
    gstar = _backend.get(backend).house_of_cards(g, n_max)
    tau = tau_distribution(gamma, n_max)
    res = renewal_residual(gstar, tau.pmf)
    if res > 1e-10:
        raise NumericalError(f"renewal identity residual {res:.3e} exceeds 1e-10")
    return RenewalProfile(g, gstar, tau, res)


def state_distributions(gamma: GammaSequence, n_max: int) -> np.ndarray:
    """Matrix ``D[n, j] = P(S_n = j)`` for ``0 <= n, j <= n_max``."""
    g = gamma.values(n_max + 1)
    D = np.zeros((n_max + 1, n_max + 1))
    D[0, 0] = 1.0
    for n in range(n_max):
        prev = D[n, : n + 1]
        D[n + 1, 0] = prev @ g[: n + 1]
        D[n + 1, 1 : n + 2] = prev * (1.0 - g[: n + 1])
    return D


def exceedance_probabilities(gamma: GammaSequence, n_max: int, k_max: int) -> np.ndarray:
    """``E[n, k] = P(S_n >= k)`` for ``0 <= n <= n_max``, ``0 <= k <= k_max``."""
    D = state_distributions(gamma, n_max)
    tail = np.cumsum(D[:, ::-1], axis=1)[:, ::-1]
    out = np.zeros((n_max + 1, k_max + 1))
    w = min(k_max, n_max) + 1
    out[:, :w] = tail[:, :w]
    out[:, 0] = 1.0
    return out


def small_state_probabilities(
    gamma: GammaSequence, gamma_star: np.ndarray, n: int, k: int, *, first_factor: int = 0
) -> float:
    """``sum_{j=0}^{min(k,n)} (prod_{m=first_factor}^{j-1} (1 - gamma_m)) gamma*_{n-j}``.

    With ``first_factor=0`` this equals ``P(S_n <= k)`` exactly.  With
    ``first_factor=1`` it is the displayed form whose product skips the first
    climb; it dominates the exact value.
    """
    g = gamma.values(k + 1)
    total = 0.0
    for j in range(min(k, n) + 1):
        prod = float(np.prod(1.0 - g[first_factor:j])) if j > first_factor else 1.0
        total += prod * gamma_star[n - j]
    return total


def convolution_check(gamma: GammaSequence, n_max: int) -> float:
    """Max deviation between forward propagation and ``sum_k (tau pmf)^{*k}``."""
    prof = return_probabilities(gamma, n_max)
    pmf = prof.tau.pmf
    total = np.zeros(n_max + 1)
    total[0] = 1.0
    power = pmf.copy()
    for _ in range(1, n_max + 1):
        if not power.any():
            break
        total += power
        power = np.convolve(power, pmf)[: n_max + 1]
    return float(np.max(np.abs(total - prof.gamma_star)))


# ---------------------------------------------------------------------------
# generating functions


@dataclass(frozen=True)
class GeneratingFunctions:
    s: float
    F: float
    G: float
    F_remainder: float
    G_remainder: float
    identity_gap: float
    tolerance: float
    certified: bool

    @property
    def holds(self) -> bool:
        return self.identity_gap <= self.tolerance


def generating_functions(gamma: GammaSequence, s: float, n_max: int) -> GeneratingFunctions:
    """Truncated ``F(s) = sum P(tau=n) s^n`` and ``G(s) = sum gamma*_n s^n``.

    The remainders are bounded with ``P(tau = N+1+j) <= P(tau > N) gamma_{N+j}``
    and ``gamma*_n <= 1``; the returned tolerance adds a floating-point
    allowance of a few ulps of ``G``.  Raises :class:`NumericalError` when the
    identity ``G = 1/(1-F)`` cannot apply (``F(s) >= 1``).
    """
    s = float(s)
    if s < 0:
        raise ConfigError("s must be >= 0")
    prof = return_probabilities(gamma, n_max)
    powers = s ** np.arange(n_max + 1)
    F = float(np.sum(prof.tau.pmf * powers))
    G = float(np.sum(prof.gamma_star * powers))
    surv = prof.tau.survival[n_max]
    F_rem = surv * gamma.weighted_tail_bound(n_max, s) * s
    if s < 1:
        G_rem = s ** (n_max + 1) / (1.0 - s)
        certified = math.isfinite(F_rem)
    else:
        # heuristic: geometric extrapolation of the last computed terms
        last = prof.gamma_star[-20:] * powers[-20:]
        ratio = float(last[-1] / last[0]) ** (1 / 19) if last[0] > 0 else 0.0
        G_rem = math.inf if ratio >= 1 else float(last[-1] * ratio / (1 - ratio))
        certified = False
    if F + F_rem >= 1.0:
        raise NumericalError(f"F({s}) >= 1: the series G diverges there")
    inv = 1.0 / (1.0 - F)
    gap = abs(G - inv)
    d = 1.0 - F - F_rem
    tol = G_rem + F_rem / (d * (1.0 - F)) + 64 * np.finfo(float).eps * (abs(G) + inv) * max(1.0, s) ** n_max
    return GeneratingFunctions(s, F, G, F_rem, G_rem, gap, tol, certified)


def renewal_radius(gamma: GammaSequence, n_max: int = 4000) -> float:
    """Radius of convergence of ``G``: the root of ``F(s) = 1`` (or of ``F``'s radius).

    For a non-summable sequence ``F(1) = 1`` and the radius is 1.
    """
    if not gamma.summable:
        return 1.0
    if gamma.support is not None:
        # F is a polynomial; solve F(s) = 1 directly
        tau = tau_distribution(gamma, max(gamma.support + 1, 2))
        coeffs = tau.pmf.copy()
        coeffs[0] -= 1.0
        roots = np.roots(coeffs[::-1])
        real = [r.real for r in roots if abs(r.imag) < 1e-12 and r.real > 0]
        return min(real) if real else math.inf
    tau = tau_distribution(gamma, n_max)
    rF = radius_estimate(gamma).value
    hi = rF if math.isfinite(rF) else 1e3

    pos = tau.pmf > 0
    logp = np.log(tau.pmf[pos])
    idx = np.arange(n_max + 1)[pos]

    def F(s):
        return float(np.sum(np.exp(logp + idx * math.log(s))))

    lo = 1.0
    if F(hi * (1 - 1e-9)) < 1.0:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if F(mid) < 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# asymptotics


@dataclass(frozen=True)
class RadiusEstimate:
    value: float
    window: tuple[int, int]
    residual: float
    converged: bool


def radius_estimate(gamma: GammaSequence, n: int = 2000) -> RadiusEstimate:
    """Estimate ``lim gamma_n ** (-1/n)`` (the radius of ``F``) on a trailing window.

    ``log gamma_n`` is regressed on ``(1, n, log(n+1))`` over ``[n/2, n]``;
    the radius is ``exp(-slope)``.  Zero or underflowing values inside the
    window, or a fit that keeps steepening, are reported as infinite.
    """
    if not gamma.summable:
        raise ConfigError("radius_estimate requires a summable gamma sequence")
    full = gamma.values(n + 1)
    small = np.nonzero(full < _TINY)[0]
    if len(small):
        # shrink the window to the range where values are normal floats
        n = int(small[0]) - 1
        if n < 40:
            return RadiusEstimate(math.inf, (n // 2, max(n, 0)), 0.0, True)
    lo, hi = n // 2, n
    idx = np.arange(lo, hi + 1)
    vals = full[lo : hi + 1]
    y = np.log(vals)
    X = np.column_stack([np.ones_like(idx, dtype=float), idx.astype(float), np.log(idx + 1.0)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.max(np.abs(X @ coef - y)))
    # curvature test for super-exponential decay: compare slopes of both window halves
    mid = (lo + hi) // 2
    s1 = (y[mid - lo] - y[0]) / (mid - lo)
    s2 = (y[-1] - y[mid - lo]) / (hi - mid)
    if s2 < s1 * 1.5 and s2 < -1e-3:
        return RadiusEstimate(math.inf, (lo, hi), resid, False)
    return RadiusEstimate(float(math.exp(-coef[1])), (lo, hi), resid, resid < 1e-6)


@dataclass(frozen=True)
class DecayReport:
    """Numerical evidence about the decay of ``gamma*_n``; every flag is heuristic."""

    regime: str
    horizon: int
    window: tuple[int, int]
    relaxes: bool
    positive_recurrent_sum: float
    gamma_summable: bool
    gamma_star_summable: bool
    exponential_rate: float
    exponential_r2: float
    polynomial_r2: float
    ratio_window_max: tuple[float, float]
    ratio_drift: float

    def to_json(self) -> dict:
        return {
            "regime": self.regime,
            "horizon": self.horizon,
            "window": list(self.window),
            "relaxes": self.relaxes,
            "partial_product_sum": self.positive_recurrent_sum,
            "gamma_summable": self.gamma_summable,
            "gamma_star_summable": self.gamma_star_summable,
            "exponential_rate": self.exponential_rate,
            "exponential_r2": self.exponential_r2,
            "polynomial_r2": self.polynomial_r2,
            "ratio_window_max": list(self.ratio_window_max),
            "ratio_drift": self.ratio_drift,
        }


def _r2(x, y):
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    ss_res = float(np.sum((y - X @ coef) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return coef, (1.0 - ss_res / ss_tot) if ss_tot > 0 else 1.0


def classify_decay(gamma: GammaSequence, horizon: int, window: tuple[int, int] | None = None) -> DecayReport:
    """Classify the decay of ``gamma*_n`` up to ``horizon``.

    Regimes: ``"positive"`` (``gamma*`` vanishes after finitely many steps),
    ``"exponential"``, ``"polynomial"``, ``"relaxing"`` (tends to zero without
    either signature) and ``"non-relaxing"``.  The regression window defaults
    to the trailing half of the horizon.
    """
    if horizon < 100:
        raise ConfigError("horizon must be >= 100")
    lo, hi = window or (horizon // 2, horizon)
    prof = return_probabilities(gamma, horizon)
    gs = prof.gamma_star
    g = prof.gamma
    surv = prof.tau.survival
    pp_sum = float(np.sum(surv[2:]))
    pp_half = float(np.sum(surv[2 : horizon // 2 + 1]))
    summ_g = gamma.summable
    half = gs[: horizon // 2 + 1].sum()
    full = gs.sum()
    gs_summable = summ_g or (full - half) < 1e-3 * full
    relaxes = bool(gs[-1] < 0.5 * gs[horizon // 2] or gs[-1] < 1e-12) and (
        summ_g or pp_sum > 1.5 * pp_half
    )

    n = np.arange(lo, hi + 1, dtype=float)
    seg = gs[lo : hi + 1]
    gseg = g[lo : hi + 1]
    if np.all(gs[1:] == 0):
        return DecayReport("positive", horizon, (lo, hi), True, pp_sum, summ_g, True,
                           math.inf, 1.0, 1.0, (0.0, 0.0), 0.0)
    positive = seg > 0
    if positive.sum() < 3:
        return DecayReport("positive", horizon, (lo, hi), True, pp_sum, summ_g, True,
                           math.inf, 1.0, 1.0, (0.0, 0.0), 0.0)
    y = np.log(seg[positive])
    coef_e, r2_e = _r2(n[positive], y)
    coef_p, r2_p = _r2(np.log(n[positive]), y)

    mid = (lo + hi) // 2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(gseg > 0, seg / gseg, np.inf)
    m1 = float(np.max(ratio[: mid - lo + 1]))
    m2 = float(np.max(ratio[mid - lo :]))
    drift = abs(m2 - m1) / m1 if math.isfinite(m1) and m1 > 0 else math.inf

    if not relaxes:
        regime = "non-relaxing"
    elif r2_e > 0.99 and r2_e >= r2_p and coef_e[1] < 0:
        regime = "exponential"
    elif math.isfinite(drift) and drift < 0.1:
        regime = "polynomial"
    else:
        regime = "relaxing"
    return DecayReport(
        regime, horizon, (lo, hi), relaxes, pp_sum, summ_g, bool(gs_summable),
        float(-coef_e[1]), float(r2_e), float(r2_p), (m1, m2), float(drift),
    )


@dataclass(frozen=True)
class AlphaEstimate:
    alpha: float
    threshold: float
    holds: bool
    per_i: tuple[float, ...]


def condpoly_alpha(gamma: GammaSequence, i_max: int = 10, k_max: int = 50) -> AlphaEstimate:
    """Finite-window estimate of ``sup_i limsup_k [P(tau=i)/P(tau=k i)]^(1/k)``.

    The limsup over ``k`` is replaced by the maximum over the trailing half
    ``k in [k_max/2, k_max]``.  The flag compares the estimate with
    ``1 / P(tau < inf)``.  Heuristic: a finite window cannot certify a limsup.
    """
    tau = tau_distribution(gamma, i_max * k_max)
    pmf = tau.pmf
    if not np.any(pmf[1:] > 0):
        raise NumericalError("P(tau = n) vanishes identically; alpha is undefined")
    per_i = []
    ks = np.arange(max(k_max // 2, 2), k_max + 1)
    for i in range(1, i_max + 1):
        if pmf[i] == 0:
            continue
        den = pmf[ks * i]
        if np.any(den <= 0):
            raise NumericalError(f"P(tau = k*{i}) underflows to 0 inside the window")
        per_i.append(float(np.max(np.exp((math.log(pmf[i]) - np.log(den)) / ks))))
    alpha = max(per_i)
    fin = tau.finite_mass
    threshold = math.inf if fin <= 0 else 1.0 / fin
    return AlphaEstimate(alpha, threshold, alpha < threshold, tuple(per_i))


# ---------------------------------------------------------------------------
# domination of the disagreement clock


@dataclass(frozen=True)
class DominationReport:
    """Exact ``P(S_n >= k)`` against Monte-Carlo ``P(T_n >= k)`` for ``1 <= n <= n_max``.

    Row ``n - 1`` of each array refers to the state after ``n`` steps.
    """

    exact: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    violations: tuple
    runs: int
    seed: int

    @property
    def ok(self) -> bool:
        return not self.violations


def domination_test(kernel, x, y, n_max: int, k_max: int, runs: int, seed: int,
                    gamma: GammaSequence | None = None, sigmas: float = 3.0,
                    threads: int | None = None) -> DominationReport:
    """Compare the dominating chain with the clock of the maximally coupled pair.

    ``gamma`` defaults to the kernel's certified sequence.  A cell is flagged
    when ``P(S_n >= k) > P_hat(T_n >= k) + sigmas * stderr``.
    """
    from .coupling import sample_coupled_paths

    g = kernel.gamma if gamma is None else gamma
    E = exceedance_probabilities(g, n_max, k_max)[1:]
    s = sample_coupled_paths(kernel, x, y, n_max, runs, seed, threads)
    ks = np.arange(k_max + 1)
    est = (s.clock[:, :, None] >= ks[None, None, :]).mean(axis=0)
    se = np.sqrt(est * (1 - est) / runs)
    bad = np.argwhere(E > est + sigmas * se)
    violations = tuple((int(i) + 1, int(k), float(E[i, k]), float(est[i, k])) for i, k in bad)
    return DominationReport(E, est, se, violations, runs, s.seed)
