"""Potentials on histories, their variations, and normalization.

A potential assigns a real value ``phi(xa)`` to a history ``x`` followed by a
new symbol ``a``.  Finite-memory potentials of order ``k`` are stored as a
table over ``A**(k+1)`` words ``x_{-k} ... x_{-1} a`` (oldest most
significant).  Infinite-memory potentials come from analytic families that
carry certified variation bounds.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components
from scipy.special import logsumexp

from .config import ENUMERATION_BUDGET, TRUNCATION_TOL
from .errors import BudgetError, ConfigError, NumericalError
from .sequences import Alphabet, Context, VariationSequence

__all__ = [
    "Potential",
    "NormalizationCheck",
    "NormalizationResult",
    "table_variations",
    "exact_variations",
    "is_normalized",
    "normalize",
    "psi_variation_bound",
    "check_primitive",
]

MAX_TRUNCATION_DEPTH = 4096


def table_variations(values: np.ndarray, A: int, depth: int) -> np.ndarray:
    """Enumerated variations of a function of the last ``depth`` symbols.

    Returns ``var_0, ..., var_depth`` where ``var_m`` is the largest spread of
    ``values`` over words sharing their last ``m`` symbols (so ``var_depth = 0``).
    """
    values = np.asarray(values, dtype=float)
    if values.size != A**depth:
        raise ConfigError(f"table has {values.size} entries, expected {A}**{depth}")
    out = np.zeros(depth + 1)
    for m in range(depth):
        groups = values.reshape(A ** (depth - m), A**m)
        out[m] = float(np.max(groups.max(axis=0) - groups.min(axis=0)))
    # guard against rounding making the sequence increase
    return np.minimum.accumulate(out)


# ---------------------------------------------------------------------------
# analytic families


@dataclass(frozen=True)
class _Family:
    """``phi(z) = bias[z_{-1}] + sum_{j>=2} w_j 1{z_{-j} = z_{-1}}``.

    The weights are the decrements of ``W_m = sum_{j>m} w_j``, which is
    ``C theta**m`` (geometric) or ``C (m+1)**-p`` (polynomial).  With
    ``normalized`` the log-sum-exp over the new symbol is subtracted.
    """

    kind: str
    C: float
    rate: float
    bias: tuple[float, ...]
    normalized: bool

    def W(self, m):
        m = np.asarray(m, dtype=float)
        if self.kind == "geometric":
            return self.C * self.rate**m
        return self.C * (m + 1.0) ** (-self.rate)

    def weights(self, depth: int) -> np.ndarray:
        """``w_2 ... w_{depth+1}``: weights of ``x_{-1} ... x_{-depth}``."""
        j = np.arange(2, depth + 2)
        return self.W(j - 1) - self.W(j)

    def variations(self) -> VariationSequence:
        span = max(self.bias) - min(self.bias)
        f = 2.0 if self.normalized else 1.0
        W1 = float(self.W(1))
        if self.kind == "geometric":
            return VariationSequence.geometric(f * self.C, self.rate, [span + f * W1])
        return VariationSequence.polynomial(f * self.C, self.rate, [span + f * W1])

    def log_weights(self, windows: np.ndarray) -> np.ndarray:
        """``phi(x a)`` for every row ``x`` of ``windows`` (oldest first) and every ``a``."""
        R, L = windows.shape
        A = len(self.bias)
        w = self.weights(L)[::-1]  # column c holds x_{-(L-c)}
        out = np.empty((R, A))
        for a in range(A):
            out[:, a] = self.bias[a] + (windows == a) @ w
        if self.normalized:
            out -= logsumexp(out, axis=1, keepdims=True)
        return out

    def to_json(self) -> dict:
        key = "theta" if self.kind == "geometric" else "p"
        return {"C": self.C, key: self.rate, "bias": list(self.bias), "normalized": self.normalized}


class Potential:
    """A potential ``phi(xa)``.

    Parameters
    ----------
    alphabet : Alphabet
    memory_order : int or None
        ``k`` for a finite-memory potential (the value depends on the last
        ``k + 1`` symbols of ``xa``); None for infinite memory.
    table : array_like, optional
        ``A**(k+1)`` finite values indexed by the code of ``x_{-k} ... x_{-1} a``.
    """

    def __init__(self, alphabet: Alphabet, memory_order: int | None, table=None, *, family: _Family | None = None):
        self.alphabet = alphabet
        A = len(alphabet)
        if memory_order is None:
            if family is None:
                raise ConfigError("an infinite-memory potential needs an analytic family")
            self.memory_order = None
            self.table = None
            self.family = family
            self._variations = family.variations()
            self.depth = _truncation_depth(self._variations)
            self.normalized = family.normalized
        else:
            k = int(memory_order)
            if k < 0:
                raise ConfigError("memory_order must be >= 0")
            if A ** (k + 1) > ENUMERATION_BUDGET:
                raise BudgetError(f"table of size {A}**{k + 1} exceeds the enumeration budget")
            tbl = np.asarray(table, dtype=float).ravel()
            if tbl.size != A ** (k + 1):
                raise ConfigError(f"table needs {A ** (k + 1)} entries, got {tbl.size}")
            if not np.all(np.isfinite(tbl)):
                raise ConfigError("potential values must be finite")
            tbl.setflags(write=False)
            self.memory_order = k
            self.table = tbl
            self.family = None
            self._variations = None
            self.depth = k
            self.normalized = bool(is_normalized(self, 1e-10))

    # constructors ---------------------------------------------------------
    @classmethod
    def constant(cls, alphabet: Alphabet, value: float = 0.0) -> "Potential":
        return cls(alphabet, 0, np.full(len(alphabet), float(value)))

    @classmethod
    def uniform(cls, alphabet: Alphabet) -> "Potential":
        return cls.constant(alphabet, -math.log(len(alphabet)))

    @classmethod
    def from_transition(cls, alphabet: Alphabet, matrix, memory_order: int | None = None) -> "Potential":
        """``phi(xa) = log P(a | last k symbols of x)`` from a row-stochastic table over ``A**k``."""
        P = np.asarray(matrix, dtype=float)
        A = len(alphabet)
        if P.ndim != 2 or P.shape[1] != A:
            raise ConfigError(f"transition matrix must have {A} columns")
        k = _log_int(P.shape[0], A) if memory_order is None else memory_order
        if P.shape[0] != A**k:
            raise ConfigError(f"transition matrix needs {A**k} rows for memory order {k}")
        if np.any(P <= 0):
            raise ConfigError("transition probabilities must be positive to define a potential")
        return cls(alphabet, k, np.log(P).ravel())

    @classmethod
    def from_function(cls, alphabet: Alphabet, memory_order: int, fn: Callable[[str], float]) -> "Potential":
        """Tabulate ``fn`` on every word of length ``memory_order + 1``."""
        A = len(alphabet)
        n = memory_order + 1
        words = [alphabet.decode(np.unravel_index(i, (A,) * n)) if n else "" for i in range(A**n)]
        return cls(alphabet, memory_order, [fn(w) for w in words])

    @classmethod
    def geometric_family(cls, alphabet: Alphabet, C: float, theta: float, bias=None, normalized: bool = False):
        """Infinite-memory family with variations ``var_m = C theta**m`` for ``m >= 1``."""
        if not 0 < theta < 1 or C < 0:
            raise ConfigError("geometric family needs C >= 0 and 0 < theta < 1")
        return cls(alphabet, None, family=_Family("geometric", float(C), float(theta), _bias(alphabet, bias), normalized))

    @classmethod
    def polynomial_family(cls, alphabet: Alphabet, C: float, p: float, bias=None, normalized: bool = False):
        """Infinite-memory family with variations ``var_m = C (m+1)**-p`` for ``m >= 1``."""
        if p <= 0 or C < 0:
            raise ConfigError("polynomial family needs C >= 0 and p > 0")
        return cls(alphabet, None, family=_Family("polynomial", float(C), float(p), _bias(alphabet, bias), normalized))

    # basic queries ----------------------------------------------------------
    @property
    def is_finite(self) -> bool:
        return self.memory_order is not None

    @property
    def variations(self) -> VariationSequence:
        """Exact variations (finite memory) or the family's certified bound."""
        if self._variations is None:
            self._variations = exact_variations(self)
        return self._variations

    def log_weights(self, windows: np.ndarray) -> np.ndarray:
        """``phi(x a)`` for contexts given as index rows (oldest first), shape ``(R, A)``."""
        windows = np.atleast_2d(np.asarray(windows, dtype=np.int64))
        A = len(self.alphabet)
        if self.is_finite:
            k = self.memory_order
            codes = np.zeros(windows.shape[0], dtype=np.int64)
            for c in range(windows.shape[1] - k, windows.shape[1]):
                codes = codes * A + windows[:, c]
            return self.table.reshape(A**k, A)[codes]
        return self.family.log_weights(windows)

    def evaluate(self, x: Context, a: str) -> float:
        """``phi(xa)``; infinite-memory families are cut at :attr:`depth`."""
        return self.evaluate_with_error(x, a)[0]

    def evaluate_with_error(self, x: Context, a: str, depth: int | None = None) -> tuple[float, float]:
        """``(value, radius)``: ``phi(xa)`` computed from ``depth`` past symbols.

        The radius bounds the change of the value over all histories sharing
        those symbols; it is zero whenever ``depth`` covers the memory.
        """
        if x.alphabet != self.alphabet:
            raise ConfigError("context alphabet differs from the potential's")
        ai = self.alphabet.index(a)
        if self.is_finite:
            k = self.memory_order
            d = k if depth is None else depth
            if d < k:
                vals = self.table.reshape(-1, len(self.alphabet))
                return float(vals[x.encode(k), ai]), float(self.variations[d + 1])
            return float(self.table[x.encode(k) * len(self.alphabet) + ai]), 0.0
        d = self.depth if depth is None else depth
        row = self.family.log_weights(np.array([x.indices(d)]))
        return float(row[0, ai]), float(self.variations[d + 1])

    def truncate(self, depth: int) -> "Potential":
        """Finite-memory potential of order ``depth`` keeping the first ``depth`` weights."""
        if self.is_finite:
            raise ConfigError("only analytic families can be truncated")
        A = len(self.alphabet)
        if A ** (depth + 1) > ENUMERATION_BUDGET:
            raise BudgetError(f"truncation depth {depth} exceeds the enumeration budget")
        ctx = np.array(np.unravel_index(np.arange(A**depth), (A,) * depth)).T if depth else np.zeros((1, 0), int)
        return Potential(self.alphabet, depth, self.family.log_weights(ctx).ravel())

    def shifted(self, c: float) -> "Potential":
        """``phi + c``."""
        if not self.is_finite:
            raise ConfigError("shifted is only defined for finite-memory potentials")
        return Potential(self.alphabet, self.memory_order, self.table + c)

    def relabeled(self, perm: Sequence[int]) -> "Potential":
        """Potential obtained by renaming symbol ``i`` to ``perm[i]``."""
        if not self.is_finite:
            raise ConfigError("relabeling is only defined for finite-memory potentials")
        A = len(self.alphabet)
        n = self.memory_order + 1
        perm = np.asarray(perm)
        digits = np.array(np.unravel_index(np.arange(A**n), (A,) * n))
        new_codes = np.ravel_multi_index(tuple(perm[digits]), (A,) * n)
        tbl = np.empty_like(self.table)
        tbl[new_codes] = self.table
        return Potential(self.alphabet, self.memory_order, tbl)

    # serialization ----------------------------------------------------------
    def to_json(self) -> dict:
        if not self.is_finite:
            return {"alphabet": self.alphabet.to_json(), "family": self.family.kind, "params": self.family.to_json()}
        A = len(self.alphabet)
        n = self.memory_order + 1
        keys = [self.alphabet.decode(np.unravel_index(i, (A,) * n)) for i in range(A**n)]
        return {
            "alphabet": self.alphabet.to_json(),
            "memory_order": self.memory_order,
            "table": {k: float(v) for k, v in zip(keys, self.table)},
        }

    @classmethod
    def from_json(cls, data: dict | str) -> "Potential":
        """Parse ``{alphabet, memory_order, table}``, ``{alphabet, transition}`` or ``{alphabet, family, params}``."""
        if isinstance(data, str):
            try:
                data = json.loads(data)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"potential is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("potential entry must be a JSON object")
        try:
            alphabet = Alphabet(data.get("alphabet", "01"))
            if "family" in data:
                p = dict(data.get("params", {}))
                kind = data["family"]
                trunc = p.pop("truncate", None)
                if kind == "geometric":
                    phi = cls.geometric_family(alphabet, p["C"], p["theta"], p.get("bias"), p.get("normalized", False))
                elif kind == "polynomial":
                    phi = cls.polynomial_family(alphabet, p["C"], p["p"], p.get("bias"), p.get("normalized", False))
                else:
                    raise ConfigError(f"unknown potential family {kind!r}")
                return phi if trunc is None else phi.truncate(int(trunc))
            if "transition" in data:
                return cls.from_transition(alphabet, data["transition"], data.get("memory_order"))
            k = int(data["memory_order"])
            tbl = data["table"]
            if isinstance(tbl, dict):
                A = len(alphabet)
                vals = np.full(A ** (k + 1), np.nan)
                for key, v in tbl.items():
                    if len(key) != k + 1:
                        raise ConfigError(f"table key {key!r} must have length {k + 1}")
                    code = 0
                    for s in alphabet.encode(key):
                        code = code * A + s
                    vals[code] = float(v)
                if np.any(np.isnan(vals)):
                    raise ConfigError("table is missing some context-symbol words")
                tbl = vals
            return cls(alphabet, k, tbl)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed potential entry: {exc}") from exc

    def __repr__(self):
        if self.is_finite:
            return f"Potential(order={self.memory_order}, |A|={len(self.alphabet)}, normalized={self.normalized})"
        return f"Potential(family={self.family.kind}, |A|={len(self.alphabet)}, normalized={self.normalized})"


def _bias(alphabet, bias):
    if bias is None:
        return tuple(0.0 for _ in alphabet)
    b = tuple(float(v) for v in bias)
    if len(b) != len(alphabet):
        raise ConfigError("bias needs one entry per symbol")
    return b


def _log_int(n: int, A: int) -> int:
    k = 0
    while A**k < n:
        k += 1
    if A**k != n:
        raise ConfigError(f"{n} is not a power of {A}")
    return k


def _truncation_depth(v: VariationSequence) -> int:
    """Smallest ``D`` whose remaining variation tail is below the truncation tolerance."""
    probe = v.tail_sum if v.summable else v.__getitem__
    for D in range(MAX_TRUNCATION_DEPTH):
        if probe(D + 1) < TRUNCATION_TOL:
            return D
    return MAX_TRUNCATION_DEPTH


# ---------------------------------------------------------------------------
# operations


def exact_variations(phi: Potential, m_max: int | None = None) -> VariationSequence:
    """Enumerated ``var_m(phi)`` for a finite-memory potential.

    ``var_m`` compares ``phi(z)`` and ``phi(w)`` over words ``z, w`` of length
    ``k + 1`` that share their last ``m`` symbols (the new symbol included),
    so ``var_m = 0`` for ``m > k``.
    """
    if not phi.is_finite:
        raise ConfigError("exact variations need finite memory; use phi.variations for the certified bound")
    k = phi.memory_order
    if m_max is not None and m_max < k:
        raise ConfigError(f"m_max must be >= memory order {k}")
    vals = table_variations(phi.table, len(phi.alphabet), k + 1)
    return VariationSequence.finite(vals[: k + 1])


@dataclass(frozen=True)
class NormalizationCheck:
    ok: bool
    deviation: float
    witness: Context | None

    def __bool__(self):
        return self.ok


def is_normalized(phi: Potential, tol: float = 1e-10, samples: int = 256, seed: int = 0) -> NormalizationCheck:
    """Check ``|sum_a exp(phi(xa)) - 1| <= tol`` on every context (or on sampled ones).

    Finite-memory potentials are checked on all ``A**k`` contexts; families on
    ``samples`` random contexts of the truncation depth.
    """
    A = len(phi.alphabet)
    if phi.is_finite:
        k = phi.memory_order
        sums = np.exp(phi.table.reshape(A**k, A)).sum(axis=1)
        words = None
    else:
        rng = np.random.Generator(np.random.Philox(seed))
        words = rng.integers(0, A, size=(samples, phi.depth))
        sums = np.exp(phi.family.log_weights(words)).sum(axis=1)
    dev = np.abs(sums - 1.0)
    i = int(np.argmax(dev))
    worst = float(dev[i])
    if worst <= tol:
        return NormalizationCheck(True, worst, None)
    if words is None:
        word = phi.alphabet.decode(np.unravel_index(i, (A,) * k)) if k else ""
    else:
        word = phi.alphabet.decode(words[i])
    return NormalizationCheck(False, worst, Context(phi.alphabet, word))


def check_primitive(adjacency) -> None:
    """Raise :class:`NumericalError` unless the nonnegative pattern is irreducible and aperiodic."""
    G = csr_matrix(np.asarray(adjacency) > 0)
    n = G.shape[0]
    if n == 1:
        if G[0, 0] == 0:
            raise NumericalError("single state without a self-loop")
        return
    ncomp, _ = connected_components(G, directed=True, connection="strong")
    if ncomp != 1:
        raise NumericalError("transfer matrix is reducible")
    order, pred = breadth_first_order(G, 0, directed=True, return_predecessors=True)
    level = np.zeros(n, dtype=np.int64)
    for v in order[1:]:
        level[v] = level[pred[v]] + 1
    rows, cols = G.nonzero()
    period = 0
    for d in np.unique(np.abs(level[rows] + 1 - level[cols])):
        period = math.gcd(period, int(d))
    if period != 1:
        raise NumericalError(f"transfer matrix is periodic with period {period}")


def _transfer_matrix(phi: Potential) -> np.ndarray:
    A = len(phi.alphabet)
    k = phi.memory_order
    n = A**k
    if n * n > ENUMERATION_BUDGET:
        raise BudgetError(f"transfer matrix on {n} contexts exceeds the enumeration budget")
    M = np.zeros((n, n))
    u = np.repeat(np.arange(n), A)
    a = np.tile(np.arange(A), n)
    np.add.at(M, (u, (u * A + a) % n), np.exp(phi.table))
    return M


def _collatz_wielandt(M: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    """Bracket ``min (Mv)_i / v_i <= lambda <= max (Mv)_i / v_i`` for positive ``v``."""
    r = (M @ v) / v
    return float(r.min()), float(r.max())


def _perron(M: np.ndarray, tol: float = 1e-14, max_iter: int = 100_000) -> tuple[float, np.ndarray]:
    """Leading eigenpair of a primitive nonnegative matrix, ``rho`` summing to 1.

    Power iteration runs until the Collatz-Wielandt bracket is within 1e-6,
    then Newton steps on the bordered system ``[M - lam, -v; 1^T, 0]`` shrink
    it below ``tol``.
    """
    n = M.shape[0]
    v = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        w = M @ v
        if np.any(w <= 0):
            raise NumericalError("Perron iterate lost positivity")
        lo, hi = float(np.min(w / v)), float(np.max(w / v))
        v = w / w.sum()
        if hi - lo <= 1e-6 * hi:
            break
    else:
        raise NumericalError("power iteration did not converge")
    lo, hi = _collatz_wielandt(M, v)
    lam = float(np.sum(M @ v) / np.sum(v))
    B = np.zeros((n + 1, n + 1))
    B[:n, :n] = M
    B[:n, n] = -v
    B[n, :n] = 1.0
    for _ in range(20):
        if hi - lo <= tol * hi:
            break
        B[:n, :n] = M - lam * np.eye(n)
        B[:n, n] = -v
        rhs = np.concatenate([-(M @ v - lam * v), [1.0 - v.sum()]])
        try:
            step = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular Newton system in the Perron solve") from exc
        v2 = v + step[:n]
        if np.any(v2 <= 0):
            break
        v = v2 / v2.sum()
        lam = float(np.sum(M @ v))
        lo, hi = _collatz_wielandt(M, v)
    if hi - lo > 1e3 * tol * hi:
        raise NumericalError(f"Perron eigenvalue bracket [{lo!r}, {hi!r}] did not close")
    return lam, v


@dataclass(frozen=True)
class NormalizationResult:
    """``psi = phi + log rho(xa) - log rho(x) - log_lambda`` and its ingredients.

    ``rho`` is the positive right eigenvector on contexts of length ``k``,
    scaled to sum to one.
    """

    psi: Potential
    rho: np.ndarray
    log_lambda: float
    memory_order: int

    def log_rho(self, x: Context) -> float:
        return float(np.log(self.rho[x.encode(self.memory_order)]))

    @property
    def log_rho_table(self) -> np.ndarray:
        return np.log(self.rho)


def normalize(phi: Potential, rho_scale: float = 1.0) -> NormalizationResult:
    """Normalize a finite-memory potential via the leading eigenpair of its transfer matrix.

    ``M[u, v] = exp(phi(ua))`` where ``v`` is the last ``k`` symbols of ``ua``.
    With ``M rho = lambda rho`` the potential
    ``psi(ua) = phi(ua) + log rho(v) - log rho(u) - log lambda``
    satisfies ``sum_a exp(psi(ua)) = 1``.  ``rho_scale`` rescales ``rho``
    before forming ``psi``, which must leave ``psi`` unchanged.
    """
    if not phi.is_finite:
        raise ConfigError("normalize needs a finite-memory potential")
    A = len(phi.alphabet)
    k = phi.memory_order
    M = _transfer_matrix(phi)
    check_primitive(M)
    lam, rho = _perron(M)
    log_rho = np.log(rho * rho_scale)
    n = A**k
    u = np.repeat(np.arange(n), A)
    v = (u * A + np.tile(np.arange(A), n)) % n
    psi_tbl = phi.table + log_rho[v] - log_rho[u] - math.log(lam)
    # absorb the last ulps so that rows sum to one as closely as floats allow
    drift = logsumexp(psi_tbl.reshape(n, A), axis=1)
    if np.max(np.abs(drift)) > 1e-9:
        raise NumericalError(f"eigenpair leaves row log-sums off by {np.max(np.abs(drift)):.3g}")
    psi_tbl = psi_tbl - np.repeat(drift, A)
    psi = Potential(phi.alphabet, k, psi_tbl)
    if not psi.normalized:
        raise NumericalError("normalized potential fails the 1e-10 row-sum check")
    return NormalizationResult(psi, rho, math.log(lam), k)


def psi_variation_bound(phi: Potential, m: int) -> float:
    """``sum_{k >= m} var_k(phi)``.

    This bounds ``var_m(log rho)`` for the eigenvector of :func:`normalize`.
    The normalized potential also carries the terms ``log rho(xa) - log rho(x)``,
    and enumeration shows ``var_m(psi)`` can exceed this tail by up to a
    factor of two at small ``m``.
    """
    v = phi.variations
    if not v.summable:
        raise ConfigError("psi_variation_bound needs summable variations")
    return v.tail_sum(m)
