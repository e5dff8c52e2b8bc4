"""Chains with a given past, stationary measures and exact transfer-operator iterates.

A finite-memory kernel of order ``k`` is a row-stochastic table indexed by
the code of the last ``k`` symbols.  Everything exact is computed on the
lifted Markov chain over ``A**D`` contexts (``D >= k``), whose state after a
step ``a`` is the last ``D`` symbols of ``u a``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _backend, rng
from .config import ENUMERATION_BUDGET
from .errors import BudgetError, ConfigError, NumericalError
from .potential import Potential, check_primitive, table_variations
from .renewal import GammaSequence
from .sequences import Alphabet, Context, VariationSequence

__all__ = [
    "TransitionKernel",
    "CylinderFunction",
    "Trajectory",
    "StationaryMeasure",
    "kernel_from_potential",
    "sample_chain",
    "sample_paths",
    "stationary_measure",
    "transfer_iterate",
    "propagate",
    "conditional_laws",
    "exact_correlation",
    "exact_correlations",
]

_INDEXINGS = ("rr30", "eq101", "enumerated")


def _cdf_table(P: np.ndarray) -> np.ndarray:
    """Row cumulative sums with ``inf`` from the last positive entry on."""
    cdf = np.cumsum(P, axis=1)
    A = P.shape[1]
    last = A - 1 - np.argmax((P > 0)[:, ::-1], axis=1)
    cdf[np.arange(A)[None, :] >= last[:, None]] = np.inf
    return np.ascontiguousarray(cdf)


class TransitionKernel:
    """Conditional law ``P(a | x)`` of the next symbol given the past.

    Parameters
    ----------
    alphabet : Alphabet
    table : array_like, optional
        ``(A**k, A)`` row-stochastic probabilities for a finite-memory kernel.
    potential : Potential, optional
        Normalized infinite-memory family; rows are ``exp(psi(xa))`` computed at
        the potential's truncation depth.
    gamma : GammaSequence, optional
        Sequence certified to satisfy ``P(a|x) / P(a|y) >= 1 - gamma_m``
        whenever the pasts agree on ``m`` symbols.  Defaults to the sequence
        selected by ``indexing``.
    indexing : {"rr30", "eq101", "enumerated"}
        ``rr30``: ``1 - exp(-var_m)``; ``eq101``: ``1 - exp(-var_{m+1})``;
        ``enumerated``: the exact infimum of the ratio over agreeing pasts.
    """

    def __init__(self, alphabet: Alphabet, table=None, *, potential: Potential | None = None,
                 gamma: GammaSequence | None = None, indexing: str = "rr30"):
        if indexing not in _INDEXINGS:
            raise ConfigError(f"indexing must be one of {_INDEXINGS}")
        self.alphabet = alphabet
        self.potential = potential
        self.indexing = indexing
        A = len(alphabet)
        if table is not None:
            P = np.array(table, dtype=float)
            if P.ndim != 2 or P.shape[1] != A:
                raise ConfigError(f"transition table must have {A} columns")
            k = 0
            while A**k < P.shape[0]:
                k += 1
            if A**k != P.shape[0]:
                raise ConfigError(f"transition table needs A**k rows, got {P.shape[0]}")
            if np.any(P < 0) or not np.all(np.isfinite(P)):
                raise ConfigError("transition probabilities must be finite and nonnegative")
            dev = np.max(np.abs(P.sum(axis=1) - 1.0))
            if dev > 1e-10:
                raise ConfigError(f"transition rows must sum to 1 (deviation {dev:.2e})")
            P /= P.sum(axis=1, keepdims=True)
            P.setflags(write=False)
            self.table = P
            self.memory_order = k
            self.depth = k
            self.cdf = _cdf_table(P)
        elif potential is not None:
            if potential.is_finite:
                raise ConfigError("pass finite potentials through kernel_from_potential")
            if not potential.normalized:
                raise ConfigError("kernel rows need a normalized potential")
            self.table = None
            self.memory_order = None
            self.depth = potential.depth
            self.cdf = None
        else:
            raise ConfigError("a kernel needs a transition table or an infinite-memory potential")
        self._gamma = gamma

    @classmethod
    def from_matrix(cls, alphabet: Alphabet, matrix, **kw) -> "TransitionKernel":
        return cls(alphabet, matrix, **kw)

    @property
    def is_finite(self) -> bool:
        return self.memory_order is not None

    # probabilities ----------------------------------------------------------
    def row(self, x: Context) -> np.ndarray:
        """``P(. | x)``."""
        if x.alphabet != self.alphabet:
            raise ConfigError("context alphabet differs from the kernel's")
        if self.is_finite:
            return self.table[x.encode(self.memory_order)].copy()
        return self.rows(np.array([x.indices(self.depth)]))[0]

    def rows(self, windows: np.ndarray) -> np.ndarray:
        """Rows for contexts given as index arrays of length :attr:`depth` (oldest first)."""
        if self.is_finite:
            A = len(self.alphabet)
            codes = np.zeros(len(windows), dtype=np.int64)
            for c in range(windows.shape[1] - self.memory_order, windows.shape[1]):
                codes = codes * A + windows[:, c]
            return self.table[codes]
        P = np.exp(self.potential.log_weights(windows))
        return P / P.sum(axis=1, keepdims=True)

    def prob(self, a: str, x: Context) -> float:
        return float(self.row(x)[self.alphabet.index(a)])

    # continuity -------------------------------------------------------------
    @property
    def variations(self) -> VariationSequence:
        if self.potential is None:
            raise ConfigError("kernel was not built from a potential; use enumerated_gamma")
        return self.potential.variations

    def gamma_sequence(self, indexing: str | None = None) -> GammaSequence:
        """Continuity sequence under the requested indexing."""
        indexing = indexing or self.indexing
        if indexing == "enumerated":
            return self.enumerated_gamma()
        if indexing not in _INDEXINGS:
            raise ConfigError(f"indexing must be one of {_INDEXINGS}")
        shift = 0 if indexing == "rr30" else 1
        return GammaSequence.from_exponents(self.variations, 1.0, shift, kind=f"variations-{indexing}")

    @property
    def gamma(self) -> GammaSequence:
        if self._gamma is None:
            self._gamma = self.gamma_sequence()
        return self._gamma

    def with_gamma(self, gamma: GammaSequence | str) -> "TransitionKernel":
        """Copy of the kernel carrying another gamma sequence (or indexing name)."""
        if isinstance(gamma, str):
            gamma = self.gamma_sequence(gamma)
        k = TransitionKernel.__new__(TransitionKernel)
        k.__dict__.update(self.__dict__)
        k._gamma = gamma
        return k

    def enumerated_gamma(self) -> GammaSequence:
        """``gamma_m = 1 - min P(a|x)/P(a|y)`` over pasts agreeing on ``m`` symbols."""
        if not self.is_finite:
            raise ConfigError("enumerated gamma needs finite memory")
        A = len(self.alphabet)
        k = self.memory_order
        vals = np.zeros(k + 1)
        for m in range(k):
            groups = self.table.reshape(A ** (k - m), A**m, A)
            lo = groups.min(axis=0)
            hi = groups.max(axis=0)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(hi > 0, lo / hi, 1.0)
            vals[m] = 1.0 - float(ratio.min())
        if vals[0] >= 1.0:
            raise NumericalError("some transition has a zero next to a positive entry: gamma_0 = 1")
        return GammaSequence.from_table(np.maximum.accumulate(vals[::-1])[::-1][:k] if k else [])

    def lifted_rows(self, D: int) -> np.ndarray:
        """``(A**D, A)`` table of ``P(a | u)`` for contexts ``u`` of length ``D >= k``."""
        self._need_finite()
        A = len(self.alphabet)
        if D < self.memory_order:
            raise ConfigError("lift depth must be at least the memory order")
        if A ** (D + 1) > ENUMERATION_BUDGET:
            raise BudgetError(f"lift to depth {D} exceeds the enumeration budget")
        return self.table[np.arange(A**D) % A**self.memory_order]

    def _need_finite(self):
        if not self.is_finite:
            raise ConfigError("operation needs a finite-memory kernel")

    def __repr__(self):
        order = self.memory_order if self.is_finite else "infinite"
        return f"TransitionKernel(order={order}, |A|={len(self.alphabet)}, indexing={self.indexing!r})"


def kernel_from_potential(psi: Potential, indexing: str = "rr30") -> TransitionKernel:
    """Kernel ``P(a|x) = exp(psi(xa))`` for a normalized potential."""
    if not psi.normalized:
        raise ConfigError("kernel_from_potential needs a normalized potential")
    if psi.is_finite:
        A = len(psi.alphabet)
        P = np.exp(psi.table.reshape(A**psi.memory_order, A))
        return TransitionKernel(psi.alphabet, P, potential=psi, indexing=indexing)
    return TransitionKernel(psi.alphabet, potential=psi, indexing=indexing)


# ---------------------------------------------------------------------------
# cylinder functions


@dataclass(frozen=True)
class CylinderFunction:
    """Function of the last ``depth`` symbols of a history; ``values`` indexed by their code."""

    alphabet: Alphabet
    depth: int
    values: np.ndarray = field(compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size != len(self.alphabet) ** self.depth:
            raise ConfigError(f"cylinder function of depth {self.depth} needs {len(self.alphabet) ** self.depth} values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, alphabet: Alphabet, c: float = 1.0) -> "CylinderFunction":
        return cls(alphabet, 0, [c])

    @classmethod
    def indicator(cls, alphabet: Alphabet, symbol: str, position: int = 1) -> "CylinderFunction":
        """``1{x_{-position} = symbol}``."""
        A = len(alphabet)
        codes = np.arange(A**position)
        first = codes // A ** (position - 1)
        return cls(alphabet, position, (first == alphabet.index(symbol)).astype(float))

    @classmethod
    def from_function(cls, alphabet: Alphabet, depth: int, fn: Callable[[str], float]) -> "CylinderFunction":
        A = len(alphabet)
        words = [alphabet.decode(np.unravel_index(i, (A,) * depth)) if depth else "" for i in range(A**depth)]
        return cls(alphabet, depth, [fn(w) for w in words])

    def __call__(self, x: Context) -> float:
        return float(self.values[x.encode(self.depth)])

    def lift(self, D: int) -> np.ndarray:
        """Values on contexts of length ``D >= depth``."""
        A = len(self.alphabet)
        return self.values[np.arange(A**D) % A**self.depth]

    def variations(self) -> VariationSequence:
        return VariationSequence.finite(table_variations(self.values, len(self.alphabet), self.depth)[: max(self.depth, 1)])

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def oscillation(self) -> float:
        return float(np.ptp(self.values))

    def to_json(self) -> dict:
        return {"depth": self.depth, "values": self.values.tolist()}

    @classmethod
    def from_json(cls, alphabet: Alphabet, data) -> "CylinderFunction":
        try:
            if isinstance(data, (int, float)):
                return cls.constant(alphabet, float(data))
            if "indicator" in data:
                return cls.indicator(alphabet, data["indicator"], int(data.get("position", 1)))
            if "constant" in data:
                return cls.constant(alphabet, float(data["constant"]))
            return cls(alphabet, int(data["depth"]), data["values"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed cylinder function: {data!r}") from exc


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class Trajectory:
    """Samples ``Z_0 ... Z_{n-1}`` of the chain with past ``past``."""

    past: Context
    samples: np.ndarray = field(compare=False)
    seed: int
    depth: int

    @property
    def symbols(self) -> str:
        return self.past.alphabet.decode(self.samples)

    def rows(self):
        """CSV rows ``(seed, t, symbol)``."""
        syms = self.past.alphabet.symbols
        for t, a in enumerate(self.samples.tolist()):
            yield self.seed, t, syms[a]


def _infinite_paths(kernel: TransitionKernel, past: Context, unif: np.ndarray) -> np.ndarray:
    R, n = unif.shape
    D = kernel.depth
    win = np.tile(np.array(past.indices(D), dtype=np.int64), (R, 1))
    out = np.empty((R, n), dtype=np.int8)
    for t in range(n):
        cdf = _cdf_table(kernel.rows(win))
        a = (unif[:, t, None] >= cdf).sum(axis=1)
        out[:, t] = a
        if D:
            win[:, :-1] = win[:, 1:]
            win[:, -1] = a
    return out


def sample_paths(kernel: TransitionKernel, past: Context, n: int, runs: int, seed: int,
                 threads: int | None = None, backend: str | None = None) -> np.ndarray:
    """``(runs, n)`` array of independent paths of the chain with past ``past``.

    Run ``r`` belongs to chunk ``r // CHUNK_RUNS`` and consumes uniforms from
    that chunk's stream only, so results do not depend on ``threads``.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    seed = rng.check_seed(seed)
    if past.alphabet != kernel.alphabet:
        raise ConfigError("past alphabet differs from the kernel's")
    be = _backend.get(backend)

    def work(c, start, stop):
        unif = rng.generator(seed, "chain", c).random((stop - start, n))
        if kernel.is_finite:
            return be.sample_paths(kernel.cdf, past.encode(kernel.memory_order), unif)
        return _infinite_paths(kernel, past, unif)

    return np.concatenate(rng.map_chunks(work, runs, threads), axis=0)


def sample_chain(kernel: TransitionKernel, past: Context, n: int, seed: int, backend: str | None = None) -> Trajectory:
    """One trajectory; identical to run 0 of :func:`sample_paths` with the same seed."""
    path = sample_paths(kernel, past, n, 1, seed, backend=backend)[0]
    return Trajectory(past, path, rng.check_seed(seed), kernel.depth)


# ---------------------------------------------------------------------------
# exact computations on the lifted chain


@dataclass(frozen=True)
class StationaryMeasure:
    """Invariant law of the lifted chain on contexts of length ``order``."""

    alphabet: Alphabet
    order: int
    weights: np.ndarray = field(compare=False)

    def expectation(self, f: CylinderFunction) -> float:
        if f.depth > self.order:
            raise ConfigError("function depth exceeds the measure's order")
        return float(self.weights @ f.lift(self.order))

    def marginal(self, order: int) -> np.ndarray:
        """Weights of the last ``order`` symbols."""
        A = len(self.alphabet)
        return self.weights.reshape(A ** (self.order - order), A**order).sum(axis=0)

    def rows(self):
        A = len(self.alphabet)
        for i, w in enumerate(self.weights.tolist()):
            word = self.alphabet.decode(np.unravel_index(i, (A,) * self.order)) if self.order else ""
            yield word, w


def propagate(rows: np.ndarray, dist: np.ndarray, steps: int = 1) -> np.ndarray:
    """Push a distribution on ``A**D`` contexts through ``steps`` transitions."""
    nctx, A = rows.shape
    for _ in range(steps):
        dist = (dist[:, None] * rows).reshape(A, nctx).sum(axis=0)
    return dist


def _lift_matrix(rows: np.ndarray) -> np.ndarray:
    nctx, A = rows.shape
    L = np.zeros((nctx, nctx))
    u = np.repeat(np.arange(nctx), A)
    v = (u * A + np.tile(np.arange(A), nctx)) % nctx
    np.add.at(L, (u, v), rows.ravel())
    return L


def stationary_measure(kernel: TransitionKernel, order: int | None = None) -> StationaryMeasure:
    """Unique invariant law on contexts of length ``max(k, 1)`` (or ``order``)."""
    kernel._need_finite()
    D = max(kernel.memory_order, 1) if order is None else order
    rows = kernel.lifted_rows(D)
    n = rows.shape[0]
    if n * n > ENUMERATION_BUDGET:
        raise BudgetError(f"lifted chain on {n} states exceeds the enumeration budget")
    L = _lift_matrix(rows)
    check_primitive(L)
    M = L.T - np.eye(n)
    M[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    pi = np.linalg.solve(M, rhs)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    if np.max(np.abs(propagate(rows, pi) - pi)) > 1e-10:
        raise NumericalError("stationary vector fails the invariance check")
    pi.setflags(write=False)
    return StationaryMeasure(kernel.alphabet, D, pi)


def _as_kernel(obj) -> TransitionKernel:
    if isinstance(obj, TransitionKernel):
        return obj
    if isinstance(obj, Potential):
        return kernel_from_potential(obj)
    raise ConfigError("expected a normalized Potential or a TransitionKernel")


def conditional_laws(kernel: TransitionKernel, x: Context, n_max: int, depth: int | None = None) -> np.ndarray:
    """``(n_max + 1, A**D)`` laws of the last ``D`` symbols after ``0..n_max`` steps from past ``x``."""
    kernel._need_finite()
    D = max(kernel.memory_order, 1) if depth is None else depth
    rows = kernel.lifted_rows(D)
    dist = np.zeros(rows.shape[0])
    dist[x.encode(D)] = 1.0
    out = np.empty((n_max + 1, rows.shape[0]))
    out[0] = dist
    for t in range(1, n_max + 1):
        dist = propagate(rows, dist)
        out[t] = dist
    return out


def transfer_iterate(psi, g: CylinderFunction, x: Context, n: int) -> float:
    """``E[g(x Z_0 ... Z_{n-1})]`` for the chain with past ``x``: the ``n``-th transfer iterate at ``x``."""
    kernel = _as_kernel(psi)
    kernel._need_finite()
    if n < 0:
        raise ConfigError("n must be >= 0")
    D = max(kernel.memory_order, g.depth, 1)
    rows = kernel.lifted_rows(D)
    dist = np.zeros(rows.shape[0])
    dist[x.encode(D)] = 1.0
    return float(propagate(rows, dist, n) @ g.lift(D))


def exact_correlations(psi, f: CylinderFunction, g: CylinderFunction, n_max: int) -> np.ndarray:
    """``E[f(past) g(past Z_0..Z_{n-1})] - E f E g`` under the stationary chain, ``n = 0..n_max``."""
    kernel = _as_kernel(psi)
    kernel._need_finite()
    D = max(kernel.memory_order, f.depth, g.depth, 1)
    mu = stationary_measure(kernel, D)
    rows = kernel.lifted_rows(D)
    fD, gD = f.lift(D), g.lift(D)
    mean = float(mu.weights @ fD) * float(mu.weights @ gD)
    w = mu.weights * fD
    out = np.empty(n_max + 1)
    for t in range(n_max + 1):
        out[t] = float(w @ gD) - mean
        w = propagate(rows, w)
    return out


def exact_correlation(psi, f: CylinderFunction, g: CylinderFunction, n: int) -> float:
    return float(exact_correlations(psi, f, g, n)[n])
