"""Pure numpy implementations of the hot loops.

The samplers reproduce :mod:`mixlab._kernels` bit for bit: the same uniforms
are consumed in the same order and all running sums are sequential.
"""
from __future__ import annotations

import math

import numpy as np

NAME = "python"
DIAGONAL_TOL = 1e-12
TINY = 1e-300


def sample_paths(cdf: np.ndarray, ctx0: int, unif: np.ndarray) -> np.ndarray:
    """Single-chain paths; ``cdf`` rows are cumulative with ``inf`` past the last positive entry."""
    R, n = unif.shape
    nctx, A = cdf.shape
    out = np.empty((R, n), dtype=np.int8)
    ctx = np.full(R, ctx0, dtype=np.int64)
    for t in range(n):
        a = (unif[:, t, None] >= cdf[ctx]).sum(axis=1)
        out[:, t] = a
        ctx = (ctx * A + a) % nctx
    return out


def _pick(weights: np.ndarray, target: np.ndarray) -> np.ndarray:
    """First index whose running sum exceeds ``target``; the last positive index otherwise."""
    cum = np.cumsum(weights, axis=1)
    hit = target[:, None] < cum
    found = hit.any(axis=1)
    A = weights.shape[1]
    last_pos = A - 1 - np.argmax((weights > 0)[:, ::-1], axis=1)
    return np.where(found, np.argmax(hit, axis=1), last_pos)


def coupled_step(p, q, cdf_p, same, u3):
    """One diagonal-first draw from the maximal coupling of rows ``p`` and ``q``.

    ``same`` marks pairs whose rows are known to coincide; ``u3`` holds three
    uniforms per pair.  Returns the pair of symbol arrays.
    """
    m = np.minimum(p, q)
    delta = np.cumsum(m, axis=1)[:, -1]
    diag_all = same | (delta >= 1.0 - DIAGONAL_TOL)
    u0, u1, u2 = u3[:, 0], u3[:, 1], u3[:, 2]
    a = np.empty(len(p), dtype=np.int64)
    b = np.empty(len(p), dtype=np.int64)
    if diag_all.any():
        d = diag_all
        a[d] = (u1[d, None] >= cdf_p[d]).sum(axis=1)
        b[d] = a[d]
    rest = ~diag_all
    if rest.any():
        over = rest & (u0 < delta)
        if over.any():
            x = _pick(m[over], u1[over] * delta[over])
            a[over] = x
            b[over] = x
        off = rest & ~over
        if off.any():
            rp = p[off] - m[off]
            rq = q[off] - m[off]
            a[off] = _pick(rp, u1[off] * np.cumsum(rp, axis=1)[:, -1])
            b[off] = _pick(rq, u2[off] * np.cumsum(rq, axis=1)[:, -1])
    return a, b


def sample_coupled(prob, cdf, cu0, cv0, agree0, cap, unif):
    """Coupled paths and the backward agreement clock."""
    R, n, _ = unif.shape
    nctx, A = prob.shape
    u = np.empty((R, n), dtype=np.int8)
    v = np.empty((R, n), dtype=np.int8)
    clock = np.empty((R, n), dtype=np.int64)
    cu = np.full(R, cu0, dtype=np.int64)
    cv = np.full(R, cv0, dtype=np.int64)
    T = np.full(R, min(agree0, cap), dtype=np.int64)
    for t in range(n):
        a, b = coupled_step(prob[cu], prob[cv], cdf[cu], cu == cv, unif[:, t, :])
        u[:, t] = a
        v[:, t] = b
        T = np.where(a == b, np.minimum(T + 1, cap), 0)
        clock[:, t] = T
        cu = (cu * A + a) % nctx
        cv = (cv * A + b) % nctx
    return u, v, clock


def house_of_cards(gamma: np.ndarray, n_max: int) -> np.ndarray:
    """``P(S_n = 0)`` for ``0 <= n <= n_max`` by exact forward propagation.

    The reset mass is summed with ``math.fsum``; the compiled kernel uses a
    compensated sum instead, so the two agree to an ulp but not bit for bit.
    """
    d = np.zeros(n_max + 1)
    keep = 1.0 - gamma
    d[0] = 1.0
    out = np.empty(n_max + 1)
    out[0] = 1.0
    for t in range(1, n_max + 1):
        reset = math.fsum((d[:t] * gamma[:t]).tolist())
        d[1 : t + 1] = d[:t] * keep[:t]
        # flush subnormal mass, which is far below any reported precision
        d[1 : t + 1][d[1 : t + 1] < TINY] = 0.0
        d[0] = reset
        out[t] = reset
    return out
