"""Pairwise comparison, similarity-matrix construction, candidate selection,
and sequence-based postprocessing.

File format owned here: binary similarity matrix, magic ``VPRS``,
little-endian u32 n, u32 m, n*m 32-bit floats row-major, then two
length-prefixed (u32) UTF-8 tags: measure, postprocess.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from vpreval import kernels
from vpreval.kernels import MEASURES
from vpreval.model import DescriptorSet, FormatError, SimilarityMatrix


@dataclass(frozen=True)
class SeqPostConfig:
    """Sequence postprocessing window and velocity grid."""

    window_length: int = 11
    velocities: tuple[float, ...] = tuple(np.linspace(0.8, 1.25, 10))
    min_valid_fraction: float = 0.5

    def __post_init__(self):
        if self.window_length < 1 or self.window_length % 2 == 0:
            raise ValueError("window_length must be odd and >= 1")
        if not self.velocities or any(v <= 0 for v in self.velocities):
            raise ValueError("velocities must be non-empty and positive")
        if not 0.0 <= self.min_valid_fraction <= 1.0:
            raise ValueError("min_valid_fraction must be in [0, 1]")

    @property
    def tag(self) -> str:
        # no commas: the tag must survive the manifest's comma-separated chain
        vs = "|".join(repr(float(v)) for v in self.velocities)
        return f"seqpost:L={self.window_length};v={vs};minfrac={repr(self.min_valid_fraction)}"


def compare(a, b, measure: str) -> float:
    """Similarity of two descriptors; higher = more similar.

    cosine is in [-1, 1] (0 when either vector is zero), neg_euclidean is
    -||a-b||_2, neg_mae is -mean(|a_i - b_i|).  Accumulation is sequential
    over the dimension, matching the matrix kernels bit for bit.
    """
    if measure not in MEASURES:
        raise ValueError(f"unknown measure: {measure!r}")
    av = [float(v) for v in np.asarray(a, dtype=np.float64).ravel()]
    bv = [float(v) for v in np.asarray(b, dtype=np.float64).ravel()]
    if len(av) != len(bv):
        raise ValueError(f"dimension mismatch: {len(av)} vs {len(bv)}")
    d = len(av)
    if measure == "cosine":
        na = 0.0
        nb = 0.0
        dot = 0.0
        for t in range(d):
            na += av[t] * av[t]
        for t in range(d):
            nb += bv[t] * bv[t]
        if na == 0.0 or nb == 0.0:
            return 0.0
        for t in range(d):
            dot += av[t] * bv[t]
        r = dot / math.sqrt(na * nb)
        return min(1.0, max(-1.0, r))
    if measure == "neg_euclidean":
        acc = 0.0
        for t in range(d):
            diff = av[t] - bv[t]
            acc += diff * diff
        return -math.sqrt(acc)
    acc = 0.0
    for t in range(d):
        acc += abs(av[t] - bv[t])
    return -(acc / float(d))


def build_matrix(db: DescriptorSet, q: DescriptorSet, measure: str,
                 workers: int = 1, backend: str | None = None) -> SimilarityMatrix:
    """Exhaustive pairwise comparison: S[i][j] = compare(db_i, q_j, measure)."""
    if db.dim != q.dim:
        raise ValueError(f"dimension mismatch: {db.dim} vs {q.dim}")
    values = kernels.similarity_matrix(db.data, q.data, measure,
                                       workers=workers, backend=backend)
    return SimilarityMatrix(values, measure_tag=measure)


def _values(S) -> np.ndarray:
    return S.values if isinstance(S, SimilarityMatrix) else np.asarray(S, dtype=np.float64)


def topk_candidates(S, k: int) -> np.ndarray:
    """Per query, the k database indices with the largest similarity.

    Ties break toward the lower database index; each row of the (m, k)
    result is sorted by descending similarity.
    """
    values = _values(S)
    n, m = values.shape
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}]")
    out = np.empty((m, k), dtype=np.int64)
    for j in range(m):
        order = np.argsort(-values[:, j], kind="stable")
        out[j] = order[:k]
    return out


def sequence_prior_candidates(S, prev_matches, j: int, k: int, w: int) -> np.ndarray:
    """Candidates for query j: its top-k plus a +-w window around each best
    match of query j-1, clipped to the database range.  k = 0 skips the
    top-k part."""
    values = _values(S)
    n = values.shape[0]
    if j < 1:
        raise ValueError("j must be >= 1 (query 0 has no predecessor)")
    prev = prev_matches[j - 1]
    prev_list = [int(prev)] if np.isscalar(prev) or isinstance(prev, (int, np.integer)) else [int(p) for p in prev]
    if not prev_list:
        raise ValueError(f"no recorded matches for query {j - 1}")
    cand: set[int] = set()
    if k > 0:
        cand.update(int(i) for i in topk_candidates(values, k)[j])
    for i in prev_list:
        lo = max(0, i - w)
        hi = min(n - 1, i + w)
        cand.update(range(lo, hi + 1))
    return np.array(sorted(cand), dtype=np.int64)


def seq_postprocess(S: SimilarityMatrix, cfg: SeqPostConfig = SeqPostConfig(),
                    workers: int = 1, backend: str | None = None) -> SimilarityMatrix:
    """Replace each cell with the best mean along candidate constant-velocity
    lines through it; cells with no sufficiently in-bounds line are copied."""
    out = kernels.seq_postprocess_values(
        S.values, np.asarray(cfg.velocities, dtype=np.float64),
        cfg.window_length, cfg.min_valid_fraction,
        workers=workers, backend=backend,
    )
    return SimilarityMatrix(out, measure_tag=S.measure_tag, postprocess_tag=cfg.tag)


def save_similarity(S: SimilarityMatrix, path) -> None:
    measure = S.measure_tag.encode("utf-8")
    post = S.postprocess_tag.encode("utf-8")
    with open(path, "wb") as f:
        f.write(b"VPRS" + struct.pack("<II", S.rows, S.cols))
        f.write(np.ascontiguousarray(S.values, dtype="<f4").tobytes())
        f.write(struct.pack("<I", len(measure)) + measure)
        f.write(struct.pack("<I", len(post)) + post)


def load_similarity(path) -> SimilarityMatrix:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != b"VPRS":
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 12:
        raise FormatError(f"{path}: truncated header")
    n, m = struct.unpack("<II", blob[4:12])
    need = 12 + 4 * n * m
    if len(blob) < need:
        raise FormatError(f"{path}: truncated payload")
    values = np.frombuffer(blob[12:need], dtype="<f4").astype(np.float64).reshape(n, m)
    pos = need

    def read_tag(pos: int) -> tuple[str, int]:
        if len(blob) < pos + 4:
            raise FormatError(f"{path}: truncated tag length at byte {pos}")
        (length,) = struct.unpack("<I", blob[pos : pos + 4])
        if len(blob) < pos + 4 + length:
            raise FormatError(f"{path}: truncated tag at byte {pos + 4}")
        return blob[pos + 4 : pos + 4 + length].decode("utf-8"), pos + 4 + length

    measure, pos = read_tag(pos)
    post, pos = read_tag(pos)
    if pos != len(blob):
        raise FormatError(f"{path}: trailing data at byte {pos}")
    return SimilarityMatrix(values, measure_tag=measure, postprocess_tag=post)
