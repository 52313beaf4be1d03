"""Kernel dispatch: compiled extension when available, pure numpy otherwise.

The backend is selected once at import.  Both backends are kept
bit-identical (verified by the test suite), so which one runs never
changes a result, only how long it takes.  ``backend`` arguments exist
for benchmarking and for the equivalence tests; normal callers leave
them at None.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from vpreval import _kernels_py

try:
    from vpreval import _core  # type: ignore[attr-defined]

    HAVE_COMPILED = True
except ImportError:
    _core = None
    HAVE_COMPILED = False

DEFAULT_BACKEND = "compiled" if HAVE_COMPILED else "pure"

MEASURES = ("cosine", "neg_euclidean", "neg_mae")
_MEASURE_CODES = {"cosine": 0, "neg_euclidean": 1, "neg_mae": 2}


def _resolve(backend: str | None) -> str:
    if backend is None:
        return DEFAULT_BACKEND
    if backend not in ("compiled", "pure"):
        raise ValueError(f"unknown backend: {backend!r}")
    if backend == "compiled" and not HAVE_COMPILED:
        raise RuntimeError("compiled backend requested but the extension is not built")
    return backend


def fnv1a64(data, backend: str | None = None) -> int:
    if _resolve(backend) == "compiled":
        return int(_core.fnv1a64(bytes(data)))
    return _kernels_py.fnv1a64(data)


def _ranges(total: int, workers: int) -> list[tuple[int, int]]:
    workers = max(1, min(workers, total))
    step = (total + workers - 1) // workers
    return [(lo, min(lo + step, total)) for lo in range(0, total, step)]


def similarity_matrix(db: np.ndarray, q: np.ndarray, measure: str,
                      workers: int = 1, backend: str | None = None) -> np.ndarray:
    """Pairwise similarity of db rows (n,d) against q rows (m,d) -> (n,m).

    Per-cell results are independent of the column partitioning, so any
    worker count yields the same bits.
    """
    if measure not in _MEASURE_CODES:
        raise ValueError(f"unknown measure: {measure!r}")
    db = np.ascontiguousarray(db, dtype=np.float64)
    q = np.ascontiguousarray(q, dtype=np.float64)
    if db.shape[1] != q.shape[1]:
        raise ValueError(f"dimension mismatch: {db.shape[1]} vs {q.shape[1]}")
    n, m = db.shape[0], q.shape[0]
    out = np.empty((n, m))
    use = _resolve(backend)

    def run(c0: int, c1: int) -> None:
        if use == "compiled":
            _core.similarity_block(db, q, _MEASURE_CODES[measure], out, c0, c1)
        else:
            _kernels_py.similarity_block(db, q, measure, out, c0, c1)

    spans = _ranges(m, workers)
    if len(spans) == 1:
        run(0, m)
    else:
        with ThreadPoolExecutor(max_workers=len(spans)) as pool:
            list(pool.map(lambda s: run(*s), spans))
    return out


def sweep_counts(values: np.ndarray, gt: np.ndarray, thresholds: np.ndarray,
                 backend: str | None = None):
    """Exact TP/FP/FN per threshold over flattened cells; integer results.

    The default route is the sort/prefix-sum algorithm, which beats the
    direct counting loop at every size.  ``backend="compiled"`` selects
    the independent per-threshold counting kernel; the equivalence tests
    use the two routes as mutual oracles.
    """
    values = np.ascontiguousarray(values, dtype=np.float64).ravel()
    gt = np.ascontiguousarray(gt, dtype=np.uint8).ravel()
    thresholds = np.ascontiguousarray(thresholds, dtype=np.float64)
    if values.shape != gt.shape:
        raise ValueError("similarity and ground-truth cell counts differ")
    if backend == "compiled":
        _resolve(backend)
        k = thresholds.shape[0]
        tp = np.empty(k, dtype=np.int64)
        fp = np.empty(k, dtype=np.int64)
        fn = np.empty(k, dtype=np.int64)
        _core.sweep_counts(values, gt, thresholds, tp, fp, fn)
        return tp, fp, fn
    return _kernels_py.sweep_counts(values, gt, thresholds)


def seq_postprocess_values(S: np.ndarray, velocities, window: int,
                           min_valid_fraction: float, workers: int = 1,
                           backend: str | None = None) -> np.ndarray:
    """Sequence-window postprocessing of a similarity matrix; returns a new array."""
    S = np.ascontiguousarray(S, dtype=np.float64)
    vel = np.ascontiguousarray(velocities, dtype=np.float64)
    n = S.shape[0]
    out = np.empty_like(S)
    use = _resolve(backend)

    def run(r0: int, r1: int) -> None:
        if use == "compiled":
            _core.seqpost_block(S, vel, window, min_valid_fraction, out, r0, r1)
        else:
            _kernels_py.seqpost_block(S, vel, window, min_valid_fraction, out, r0, r1)

    spans = _ranges(n, workers)
    if len(spans) == 1:
        run(0, n)
    else:
        with ThreadPoolExecutor(max_workers=len(spans)) as pool:
            list(pool.map(lambda s: run(*s), spans))
    return out


def fill_uniform(state: np.ndarray, out: np.ndarray, backend: str | None = None) -> None:
    if _resolve(backend) == "compiled":
        _core.fill_uniform(state, out)
    else:
        _kernels_py.fill_uniform(state, out)


def fill_gauss(state: np.ndarray, out: np.ndarray, backend: str | None = None) -> None:
    if _resolve(backend) == "compiled":
        _core.fill_gauss(state, out)
    else:
        _kernels_py.fill_gauss(state, out)
