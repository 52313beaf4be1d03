"""Pure numpy/Python fallbacks for the hot kernels.

Every function here is the reference for its compiled twin in ``_core``:
both accumulate in the same order (sequentially over the descriptor
dimension, window offsets in ascending order), so results agree bit for
bit.  Matrix kernels take an explicit column/row range so callers can
partition work across threads without changing any per-cell result.
"""

from __future__ import annotations

import math

import numpy as np

_M64 = (1 << 64) - 1

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a64(data) -> int:
    """FNV-1a over a byte sequence, 64-bit."""
    h = FNV_OFFSET
    for b in bytes(data):
        h ^= b
        h = (h * FNV_PRIME) & _M64
    return h


def _row_sqnorms(a: np.ndarray) -> np.ndarray:
    """Squared row norms accumulated sequentially over the last axis."""
    n, d = a.shape
    acc = np.zeros(n)
    for t in range(d):
        col = a[:, t]
        acc += col * col
    return acc


def similarity_block(db: np.ndarray, q: np.ndarray, measure: str,
                     out: np.ndarray, c0: int, c1: int) -> None:
    """Fill out[:, c0:c1] with pairwise similarities for query columns [c0, c1)."""
    n, d = db.shape
    qb = q[c0:c1]
    nb_cols = c1 - c0
    if measure == "cosine":
        acc = np.zeros((n, nb_cols))
        for t in range(d):
            acc += db[:, t : t + 1] * qb[:, t][None, :]
        na = _row_sqnorms(db)
        nq = _row_sqnorms(qb)
        denom = np.sqrt(na[:, None] * nq[None, :])
        zero = (na == 0.0)[:, None] | (nq == 0.0)[None, :]
        denom[zero] = 1.0
        block = acc / denom
        block[zero] = 0.0
        np.clip(block, -1.0, 1.0, out=block)
    elif measure == "neg_euclidean":
        acc = np.zeros((n, nb_cols))
        for t in range(d):
            diff = db[:, t : t + 1] - qb[:, t][None, :]
            acc += diff * diff
        block = -np.sqrt(acc)
    elif measure == "neg_mae":
        acc = np.zeros((n, nb_cols))
        for t in range(d):
            diff = db[:, t : t + 1] - qb[:, t][None, :]
            acc += np.abs(diff)
        block = -(acc / float(d))
    else:
        raise ValueError(f"unknown measure: {measure!r}")
    out[:, c0:c1] = block


def sweep_counts(values: np.ndarray, gt: np.ndarray, thresholds: np.ndarray):
    """Exact (TP, FP, FN) counts per threshold over flattened cells.

    TP = #(values >= t and gt), FP = #(values >= t and not gt),
    FN = #(values < t and gt).  Integer arithmetic only, so the
    sort-based shortcut used here is exactly equivalent to the compiled
    per-threshold counting loop.
    """
    order = np.argsort(values, kind="stable")
    sv = values[order]
    sg = gt[order].astype(np.int64)
    cum_pos = np.concatenate(([0], np.cumsum(sg)))
    total = int(cum_pos[-1])
    ncells = sv.shape[0]
    idx = np.searchsorted(sv, thresholds, side="left")
    fn = cum_pos[idx].astype(np.int64)
    tp = total - fn
    fp = (ncells - idx) - tp
    return tp, fp.astype(np.int64), fn


def seqpost_block(S: np.ndarray, velocities: np.ndarray, window: int,
                  min_valid_fraction: float, out: np.ndarray,
                  r0: int, r1: int) -> None:
    """Sequence postprocessing of rows [r0, r1).

    For each cell the candidate score under velocity v is the mean of the
    in-bounds samples S[i + floor(v*t + 0.5)][j + t] for t in
    [-(window-1)/2, (window-1)/2]; a velocity only competes when its
    in-bounds fraction reaches min_valid_fraction, and with no competing
    velocity the input value is copied through.
    """
    n, m = S.shape
    half = (window - 1) // 2
    nr = r1 - r0
    best = np.full((nr, m), -np.inf)
    has = np.zeros((nr, m), dtype=bool)
    for v in velocities:
        acc = np.zeros((nr, m))
        cnt = np.zeros((nr, m), dtype=np.int64)
        for t in range(-half, half + 1):
            di = math.floor(v * t + 0.5)
            # destination rows i in [r0, r1) with 0 <= i+di < n
            i_lo = max(r0, -di)
            i_hi = min(r1, n - di)
            j_lo = max(0, -t)
            j_hi = min(m, m - t)
            if i_lo >= i_hi or j_lo >= j_hi:
                continue
            a = i_lo - r0
            b = i_hi - r0
            acc[a:b, j_lo:j_hi] += S[i_lo + di : i_hi + di, j_lo + t : j_hi + t]
            cnt[a:b, j_lo:j_hi] += 1
        ok = (cnt / float(window)) >= min_valid_fraction
        safe = np.maximum(cnt, 1)
        mean = acc / safe
        better = ok & (~has | (mean > best))
        best[better] = mean[better]
        has |= ok
    out[r0:r1] = np.where(has, best, S[r0:r1])


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _M64


def fill_uniform(state: np.ndarray, out: np.ndarray) -> None:
    """xoshiro256** doubles in [0, 1), one per 64-bit draw; mutates state."""
    s0, s1, s2, s3 = (int(v) for v in state)
    scale = 2.0 ** -53
    for i in range(out.shape[0]):
        r = (_rotl((s1 * 5) & _M64, 7) * 9) & _M64
        t = (s1 << 17) & _M64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        out[i] = (r >> 11) * scale
    state[0] = np.uint64(s0)
    state[1] = np.uint64(s1)
    state[2] = np.uint64(s2)
    state[3] = np.uint64(s3)


def fill_gauss(state: np.ndarray, out: np.ndarray) -> None:
    """Standard normals via the polar method; mutates state.

    Consumption order: repeatedly draw (u1, u2) uniforms, map to
    (2*u1-1, 2*u2-1), reject unless 0 < s < 1 where s = u*u + v*v, then
    emit u*f followed by v*f with f = sqrt(-2*log(s)/s).  The second
    value of the final pair is discarded for odd counts; no spare is
    carried between calls.
    """
    s0, s1, s2, s3 = (int(v) for v in state)
    scale = 2.0 ** -53

    def nxt():
        nonlocal s0, s1, s2, s3
        r = (_rotl((s1 * 5) & _M64, 7) * 9) & _M64
        t = (s1 << 17) & _M64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        return (r >> 11) * scale

    count = out.shape[0]
    i = 0
    while i < count:
        u = 2.0 * nxt() - 1.0
        v = 2.0 * nxt() - 1.0
        s = u * u + v * v
        if s >= 1.0 or s == 0.0:
            continue
        f = math.sqrt(-2.0 * math.log(s) / s)
        out[i] = u * f
        i += 1
        if i < count:
            out[i] = v * f
            i += 1
    state[0] = np.uint64(s0)
    state[1] = np.uint64(s1)
    state[2] = np.uint64(s2)
    state[3] = np.uint64(s3)
