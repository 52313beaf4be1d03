# cython: language_level=3
"""Compiled accelerators for the hot kernels.

Each function mirrors its fallback in ``_kernels_py`` operation for
operation (same accumulation order, same rounding), so the two backends
produce bit-identical output.  Matrix kernels release the GIL and accept
a row/column range for thread-level partitioning.
"""

from libc.math cimport sqrt, fabs, floor, log
from libc.stdint cimport uint64_t, int64_t, uint8_t


def fnv1a64(const unsigned char[::1] data):
    """FNV-1a over a byte sequence, 64-bit."""
    cdef uint64_t h = 0xCBF29CE484222325UL
    cdef Py_ssize_t i, n = data.shape[0]
    with nogil:
        for i in range(n):
            h ^= <uint64_t>data[i]
            h *= 0x100000001B3UL
    return h


def similarity_block(const double[:, ::1] db, const double[:, ::1] q,
                     int measure, double[:, ::1] out,
                     Py_ssize_t c0, Py_ssize_t c1):
    """Fill out[:, c0:c1] with pairwise similarities for query columns [c0, c1).

    measure: 0 = cosine, 1 = neg_euclidean, 2 = neg_mae.
    """
    cdef Py_ssize_t n = db.shape[0], d = db.shape[1]
    cdef Py_ssize_t i, j, t
    cdef double acc, diff, r, na_i
    cdef double[::1] na, nq
    if measure == 0:
        import numpy as _np
        na_arr = _np.zeros(n)
        nq_arr = _np.zeros(q.shape[0])
        na = na_arr
        nq = nq_arr
        with nogil:
            for i in range(n):
                acc = 0.0
                for t in range(d):
                    acc += db[i, t] * db[i, t]
                na[i] = acc
            for j in range(c0, c1):
                acc = 0.0
                for t in range(d):
                    acc += q[j, t] * q[j, t]
                nq[j] = acc
            for i in range(n):
                na_i = na[i]
                for j in range(c0, c1):
                    if na_i == 0.0 or nq[j] == 0.0:
                        out[i, j] = 0.0
                        continue
                    acc = 0.0
                    for t in range(d):
                        acc += db[i, t] * q[j, t]
                    r = acc / sqrt(na_i * nq[j])
                    if r > 1.0:
                        r = 1.0
                    elif r < -1.0:
                        r = -1.0
                    out[i, j] = r
    elif measure == 1:
        with nogil:
            for i in range(n):
                for j in range(c0, c1):
                    acc = 0.0
                    for t in range(d):
                        diff = db[i, t] - q[j, t]
                        acc += diff * diff
                    out[i, j] = -sqrt(acc)
    elif measure == 2:
        with nogil:
            for i in range(n):
                for j in range(c0, c1):
                    acc = 0.0
                    for t in range(d):
                        diff = db[i, t] - q[j, t]
                        acc += fabs(diff)
                    out[i, j] = -(acc / <double>d)
    else:
        raise ValueError(f"unknown measure code: {measure}")


def sweep_counts(const double[::1] values, const uint8_t[::1] gt,
                 const double[::1] thresholds,
                 int64_t[::1] tp, int64_t[::1] fp, int64_t[::1] fn):
    """Exact per-threshold TP/FP/FN counts over flattened cells."""
    cdef Py_ssize_t ncells = values.shape[0], nthr = thresholds.shape[0]
    cdef Py_ssize_t k, c
    cdef double t
    cdef int64_t ctp, cfp, cfn
    with nogil:
        for k in range(nthr):
            t = thresholds[k]
            ctp = 0
            cfp = 0
            cfn = 0
            for c in range(ncells):
                if values[c] >= t:
                    if gt[c]:
                        ctp += 1
                    else:
                        cfp += 1
                elif gt[c]:
                    cfn += 1
            tp[k] = ctp
            fp[k] = cfp
            fn[k] = cfn


def seqpost_block(const double[:, ::1] S, const double[::1] velocities,
                  int window, double min_valid_fraction,
                  double[:, ::1] out, Py_ssize_t r0, Py_ssize_t r1):
    """Sequence postprocessing of rows [r0, r1); see the fallback docstring."""
    cdef Py_ssize_t n = S.shape[0], m = S.shape[1], nv = velocities.shape[0]
    cdef Py_ssize_t i, j, vi, k
    cdef long t, half = (window - 1) // 2, ii, jj
    cdef double acc, mean, best, v
    cdef int cnt
    cdef bint has
    # row offsets floor(v*t + 0.5) depend only on (velocity, t): hoist them
    import numpy as _np
    offsets_arr = _np.empty((nv, window), dtype=_np.int64)
    cdef long[:, ::1] offsets = offsets_arr
    with nogil:
        for vi in range(nv):
            v = velocities[vi]
            for k in range(window):
                t = k - half
                offsets[vi, k] = <long>floor(v * <double>t + 0.5)
        for i in range(r0, r1):
            for j in range(m):
                best = 0.0
                has = 0
                for vi in range(nv):
                    acc = 0.0
                    cnt = 0
                    for k in range(window):
                        ii = i + offsets[vi, k]
                        jj = j + (k - half)
                        if 0 <= ii < n and 0 <= jj < m:
                            acc += S[ii, jj]
                            cnt += 1
                    if (<double>cnt / <double>window) >= min_valid_fraction:
                        mean = acc / <double>cnt
                        if not has or mean > best:
                            best = mean
                            has = 1
                if has:
                    out[i, j] = best
                else:
                    out[i, j] = S[i, j]


cdef inline uint64_t _rotl(uint64_t x, int k) nogil:
    return (x << k) | (x >> (64 - k))


cdef inline uint64_t _next(uint64_t* s) nogil:
    cdef uint64_t r = _rotl(s[1] * 5UL, 7) * 9UL
    cdef uint64_t t = s[1] << 17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return r


def fill_uniform(uint64_t[::1] state, double[::1] out):
    """xoshiro256** doubles in [0, 1); mirrors the fallback exactly."""
    cdef uint64_t s[4]
    cdef Py_ssize_t i, n = out.shape[0]
    cdef double scale = 2.0 ** -53
    s[0] = state[0]
    s[1] = state[1]
    s[2] = state[2]
    s[3] = state[3]
    with nogil:
        for i in range(n):
            out[i] = <double>(_next(s) >> 11) * scale
    state[0] = s[0]
    state[1] = s[1]
    state[2] = s[2]
    state[3] = s[3]


def fill_gauss(uint64_t[::1] state, double[::1] out):
    """Polar-method standard normals; mirrors the fallback exactly."""
    cdef uint64_t s[4]
    cdef Py_ssize_t i = 0, n = out.shape[0]
    cdef double scale = 2.0 ** -53
    cdef double u, v, sq, f
    s[0] = state[0]
    s[1] = state[1]
    s[2] = state[2]
    s[3] = state[3]
    with nogil:
        while i < n:
            u = 2.0 * (<double>(_next(s) >> 11) * scale) - 1.0
            v = 2.0 * (<double>(_next(s) >> 11) * scale) - 1.0
            sq = u * u + v * v
            if sq >= 1.0 or sq == 0.0:
                continue
            f = sqrt(-2.0 * log(sq) / sq)
            out[i] = u * f
            i += 1
            if i < n:
                out[i] = v * f
                i += 1
    state[0] = s[0]
    state[1] = s[1]
    state[2] = s[2]
    state[3] = s[3]
