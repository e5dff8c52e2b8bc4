"""Alphabets, finite contexts standing for histories, and variation sequences.

A history ``x = (..., x_{-2}, x_{-1})`` is infinite; here it is represented by
a finite :class:`Context` (its most recent symbols) together with a rule that
fills in the remote past.  Words are stored oldest-to-newest, so ``word[-1]``
is ``x_{-1}``.

Integer encodings used throughout the package put the oldest symbol in the
most significant base-``|A|`` digit, so appending a symbol ``a`` to a context
of length ``k`` maps index ``c`` to ``(c * |A| + a) % |A|**k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import zeta

from .config import AGREEMENT_CAP
from .errors import ConfigError

__all__ = [
    "Alphabet",
    "Context",
    "VariationSequence",
    "agreement_length",
    "seminorm_ratio",
]


@dataclass(frozen=True)
class Alphabet:
    """Finite ordered set of distinct single-character symbols."""

    symbols: tuple[str, ...]

    def __init__(self, symbols: Iterable[str]):
        syms = tuple(str(s) for s in symbols)
        if len(syms) < 2:
            raise ConfigError("an alphabet needs at least two symbols")
        if len(set(syms)) != len(syms):
            raise ConfigError(f"alphabet symbols must be distinct: {syms!r}")
        if any(len(s) != 1 for s in syms):
            raise ConfigError("alphabet symbols must be single characters")
        object.__setattr__(self, "symbols", syms)

    @classmethod
    def binary(cls) -> "Alphabet":
        return cls("01")

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def index(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise ConfigError(f"symbol {symbol!r} not in alphabet {self.symbols!r}") from None

    def encode(self, word: str | Sequence[str]) -> tuple[int, ...]:
        return tuple(self.index(s) for s in word)

    def decode(self, indices: Iterable[int]) -> str:
        return "".join(self.symbols[int(i)] for i in indices)

    def to_json(self) -> list[str]:
        return list(self.symbols)


@dataclass(frozen=True)
class Context:
    """Finite surrogate for a history.

    Parameters
    ----------
    alphabet : Alphabet
    word : str
        Known most-recent symbols, oldest first.
    extension : {"pad", "periodic"}
        How the past beyond ``len(word)`` is filled: with a constant padding
        symbol, or by repeating ``word`` periodically.
    pad : str, optional
        Padding symbol; defaults to the first alphabet symbol.
    """

    alphabet: Alphabet
    word: str = ""
    extension: str = "pad"
    pad: str | None = None
    _idx: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.extension not in ("pad", "periodic"):
            raise ConfigError(f"unknown extension rule {self.extension!r}")
        word = "".join(self.word)
        object.__setattr__(self, "word", word)
        object.__setattr__(self, "_idx", self.alphabet.encode(word))
        pad = self.alphabet.symbols[0] if self.pad is None else self.pad
        self.alphabet.index(pad)
        object.__setattr__(self, "pad", pad)

    def __len__(self) -> int:
        return len(self.word)

    @property
    def period(self) -> int:
        """Period of the filled-in past beyond the word."""
        if self.extension == "periodic" and self.word:
            return len(self.word)
        return 1

    def symbol_index(self, j: int) -> int:
        """Alphabet index of ``x_{-j}`` for ``j >= 1``."""
        if j < 1:
            raise ValueError("history coordinates start at j = 1")
        L = len(self._idx)
        if j <= L:
            return self._idx[L - j]
        if self.extension == "periodic" and L:
            return self._idx[(L - j) % L]
        return self.alphabet.index(self.pad)

    def indices(self, depth: int) -> tuple[int, ...]:
        """The last ``depth`` symbols as indices, oldest first."""
        return tuple(self.symbol_index(j) for j in range(depth, 0, -1))

    def encode(self, depth: int) -> int:
        """Integer code of the last ``depth`` symbols (oldest most significant)."""
        A = len(self.alphabet)
        code = 0
        for s in self.indices(depth):
            code = code * A + s
        return code

    def extend(self, symbols: str | Sequence[str]) -> "Context":
        """History ``x a_1 ... a_n`` obtained by appending newer symbols."""
        return Context(self.alphabet, self.word + "".join(symbols), self.extension, self.pad)

    def __str__(self) -> str:
        return self.word


def agreement_length(x: Context, y: Context, cap: int = AGREEMENT_CAP) -> int:
    """Largest ``m`` with ``x_j = y_j`` for ``-m <= j <= -1``.

    Beyond both words the two filled-in pasts are periodic, so agreement over
    one full common period past the longer word means agreement forever; in
    that case ``cap`` is returned.
    """
    if x.alphabet != y.alphabet:
        raise ConfigError("contexts are over different alphabets")
    horizon = max(len(x), len(y)) + math.lcm(x.period, y.period)
    for j in range(1, min(horizon, cap) + 1):
        if x.symbol_index(j) != y.symbol_index(j):
            return j - 1
    return cap


_TAIL_KINDS = ("zero", "geometric", "polynomial")


@dataclass(frozen=True)
class VariationSequence:
    """Nonincreasing nonnegative sequence: an explicit table then an analytic tail.

    For ``m >= len(table)`` the value is ``C * theta**m`` (geometric) or
    ``C * (m + 1) ** -p`` (polynomial), or zero.
    """

    table: tuple[float, ...] = ()
    kind: str = "zero"
    params: tuple[tuple[str, float], ...] = ()

    def __init__(self, table: Iterable[float] = (), kind: str = "zero", params=None):
        tbl = tuple(float(v) for v in table)
        if kind not in _TAIL_KINDS:
            raise ConfigError(f"unknown tail kind {kind!r}")
        p = dict(params or {})
        if kind == "geometric":
            if not (0.0 < p.get("theta", -1) < 1.0) or p.get("C", -1) < 0:
                raise ConfigError("geometric tail needs C >= 0 and 0 < theta < 1")
        elif kind == "polynomial":
            if p.get("p", 0) <= 0 or p.get("C", -1) < 0:
                raise ConfigError("polynomial tail needs C >= 0 and p > 0")
        object.__setattr__(self, "table", tbl)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", tuple(sorted((k, float(v)) for k, v in p.items())))
        vals = np.array(tbl + (self._tail_value(len(tbl)),))
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ConfigError("variations must be finite and nonnegative")
        if np.any(np.diff(vals) > 1e-12 * max(1.0, float(vals.max(initial=0.0)))):
            raise ConfigError("variations must be nonincreasing")

    # constructors -------------------------------------------------------
    @classmethod
    def zero(cls) -> "VariationSequence":
        return cls()

    @classmethod
    def finite(cls, values: Iterable[float]) -> "VariationSequence":
        return cls(values)

    @classmethod
    def geometric(cls, C: float, theta: float, table: Iterable[float] = ()) -> "VariationSequence":
        return cls(table, "geometric", {"C": C, "theta": theta})

    @classmethod
    def polynomial(cls, C: float, p: float, table: Iterable[float] = ()) -> "VariationSequence":
        return cls(table, "polynomial", {"C": C, "p": p})

    # evaluation -----------------------------------------------------------
    @property
    def _p(self) -> dict:
        return dict(self.params)

    def _tail_value(self, m: int) -> float:
        p = self._p
        if self.kind == "geometric":
            return p["C"] * p["theta"] ** m
        if self.kind == "polynomial":
            return p["C"] * (m + 1.0) ** (-p["p"])
        return 0.0

    def __getitem__(self, m: int) -> float:
        if m < 0:
            raise IndexError(m)
        if m < len(self.table):
            return self.table[m]
        return self._tail_value(m)

    def values(self, n: int) -> np.ndarray:
        """First ``n`` values as an array."""
        m = np.arange(n, dtype=float)
        p = self._p
        if self.kind == "geometric":
            out = p["C"] * p["theta"] ** m
        elif self.kind == "polynomial":
            out = p["C"] * (m + 1.0) ** (-p["p"])
        else:
            out = np.zeros(n)
        k = min(n, len(self.table))
        out[:k] = self.table[:k]
        return out

    @property
    def support(self) -> int | None:
        """Index beyond which every value is zero, or None for an infinite support."""
        if self.kind != "zero" and self._p["C"] > 0:
            return None
        nz = [i for i, v in enumerate(self.table) if v > 0]
        return nz[-1] + 1 if nz else 0

    @property
    def summable(self) -> bool:
        return math.isfinite(self.tail_sum(0))

    def tail_sum(self, m: int) -> float:
        """``sum_{k >= m} values[k]``, exact up to floating point."""
        m = max(int(m), 0)
        head = math.fsum(self.table[m:])
        start = max(m, len(self.table))
        p = self._p
        if self.kind == "geometric":
            tail = p["C"] * p["theta"] ** start / (1.0 - p["theta"])
        elif self.kind == "polynomial":
            if p["C"] == 0:
                tail = 0.0
            elif p["p"] <= 1:
                return math.inf
            else:
                tail = p["C"] * float(zeta(p["p"], start + 1.0))
        else:
            tail = 0.0
        return head + tail

    def tail_sums(self, n: int) -> np.ndarray:
        """``[tail_sum(0), ..., tail_sum(n-1)]``."""
        return np.array([self.tail_sum(m) for m in range(n)])

    def scaled(self, factor: float) -> "VariationSequence":
        p = self._p
        if "C" in p:
            p["C"] *= factor
        return VariationSequence([v * factor for v in self.table], self.kind, p)

    # serialization --------------------------------------------------------
    def to_json(self) -> dict:
        return {"kind": self.kind, "params": self._p, "table": list(self.table)}

    @classmethod
    def from_json(cls, data: dict) -> "VariationSequence":
        try:
            return cls(data.get("table", ()), data.get("kind", "zero"), data.get("params"))
        except (TypeError, AttributeError) as exc:
            raise ConfigError(f"malformed variation sequence: {data!r}") from exc


def _ratio(a: float, b: float) -> float:
    if a == 0:
        return 0.0
    if b == 0:
        return math.inf
    return a / b


def seminorm_ratio(
    g_vars: VariationSequence, phi_vars: VariationSequence, k_max: int | None = None
) -> float:
    """``sup_k var_k(g) / var_k(phi)`` with ``0/0 = 0`` and ``x/0 = inf``.

    With ``k_max`` the supremum runs over ``0 <= k <= k_max``.  Without it the
    whole sequence is covered: tables are scanned explicitly and the analytic
    tails are compared in closed form.
    """
    if k_max is not None:
        g = g_vars.values(k_max + 1)
        f = phi_vars.values(k_max + 1)
        return max(_ratio(a, b) for a, b in zip(g, f))

    K = max(len(g_vars.table), len(phi_vars.table))
    best = max(_ratio(g_vars[k], phi_vars[k]) for k in range(K + 1))
    if best == math.inf:
        return best
    return max(best, _tail_sup(g_vars, phi_vars, K))


def _tail_sup(g: VariationSequence, f: VariationSequence, K: int) -> float:
    """Supremum of g_k / f_k over k >= K when both are in their analytic tails."""
    if g.kind == "zero" or g._p.get("C", 0) == 0:
        return 0.0
    if f.kind == "zero" or f._p.get("C", 0) == 0:
        return math.inf
    gp, fp = g._p, f._p
    ratio_C = gp["C"] / fp["C"]
    if g.kind == f.kind == "geometric":
        q = gp["theta"] / fp["theta"]
        return math.inf if q > 1 else ratio_C * q**K
    if g.kind == f.kind == "polynomial":
        e = fp["p"] - gp["p"]
        return math.inf if e > 0 else ratio_C * (K + 1.0) ** e
    if g.kind == "polynomial":
        # polynomial over geometric grows without bound
        return math.inf
    # geometric over polynomial: C theta^k (k+1)^p is unimodal in k
    theta, p = gp["theta"], fp["p"]
    peak = p / -math.log(theta) - 1.0
    cands = {K, max(K, math.floor(peak)), max(K, math.ceil(peak))}
    return max(ratio_C * theta**k * (k + 1.0) ** p for k in cands)
