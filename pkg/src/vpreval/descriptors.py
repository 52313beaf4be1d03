"""Holistic image descriptors: pixel descriptors, standardization, condition
clustering, and descriptor file I/O.

File formats owned here:
- text descriptors: line 1 ``VPRD n d``, then n lines of d space-separated
  decimal numbers (full round-trip precision).
- binary descriptors: magic ``VPRB``, little-endian u32 n, u32 d, then
  n*d little-endian 32-bit floats row-major.
- images: binary PGM ("P5", maxval <= 255) only.
- condition labels: CSV ``index,label`` with header.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from vpreval import kernels, rng
from vpreval.model import DescriptorSet, FormatError, canonical_descriptor_bytes

# Constant descriptor dimensions (sky rows, blank patches) are common;
# divisions by the standard deviation are floored at sqrt of this.
VARIANCE_FLOOR = 1e-6


@dataclass(frozen=True)
class PixelDescriptorConfig:
    """Downsampling target and local normalization patch for pixel descriptors."""

    target_width: int = 64
    target_height: int = 32
    patch_size: int = 8

    def __post_init__(self):
        if self.target_width < 4 or self.target_height < 4:
            raise ValueError("target dimensions must be >= 4")
        if self.patch_size < 0:
            raise ValueError("patch_size must be >= 0")
        if self.patch_size > 0 and (
            self.target_width % self.patch_size or self.target_height % self.patch_size
        ):
            raise ValueError("patch_size must divide both target dimensions")


@dataclass(frozen=True)
class StandardizationStats:
    """Per-dimension mean and (floored) std, reusable on other sets."""

    mean: np.ndarray
    std: np.ndarray
    cluster_id: int | None = None

    def __post_init__(self):
        mean = np.ascontiguousarray(np.asarray(self.mean, dtype=np.float64))
        std = np.ascontiguousarray(np.asarray(self.std, dtype=np.float64))
        if mean.shape != std.shape or mean.ndim != 1:
            raise ValueError("mean and std must be equal-length vectors")
        if np.any(std < math.sqrt(VARIANCE_FLOOR) * (1 - 1e-12)):
            raise ValueError("std entries below the variance floor")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        mean.setflags(write=False)
        std.setflags(write=False)


# --- PGM ------------------------------------------------------------------

def load_pgm(path) -> np.ndarray:
    """Load a binary PGM (P5, maxval <= 255) as an h x w uint8 matrix."""
    with open(path, "rb") as f:
        blob = f.read()
    pos = 0

    def skip_separators(pos: int) -> int:
        while pos < len(blob):
            c = blob[pos : pos + 1]
            if c in (b" ", b"\t", b"\r", b"\n"):
                pos += 1
            elif c == b"#":
                while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break
        return pos

    if blob[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (bad magic at byte 0)")
    pos = 2

    fields = []
    for _ in range(3):
        pos = skip_separators(pos)
        start = pos
        while pos < len(blob) and blob[pos : pos + 1].isdigit():
            pos += 1
        if pos == start:
            raise FormatError(f"{path}: expected integer in header at byte {start}")
        fields.append(int(blob[start:pos]))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"{path}: bad dimensions {width}x{height} in header")
    if not 1 <= maxval <= 255:
        raise FormatError(f"{path}: unsupported maxval {maxval} (only <= 255)")
    if pos >= len(blob) or blob[pos : pos + 1] not in (b" ", b"\t", b"\r", b"\n"):
        raise FormatError(f"{path}: missing whitespace before payload at byte {pos}")
    pos += 1
    expected = width * height
    payload = blob[pos : pos + expected]
    if len(payload) < expected:
        raise FormatError(
            f"{path}: truncated payload at byte {pos + len(payload)} "
            f"(got {len(payload)} of {expected} bytes)"
        )
    if len(blob) > pos + expected:
        raise FormatError(f"{path}: trailing data at byte {pos + expected}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


# --- pixel descriptor -----------------------------------------------------

def _box_resample_axis(a: np.ndarray, out_len: int) -> np.ndarray:
    """Exact area-average resample along the last axis."""
    in_len = a.shape[-1]
    if in_len == out_len:
        return a.copy()
    width = in_len / out_len
    out = np.zeros(a.shape[:-1] + (out_len,))
    for r in range(out_len):
        lo = r * in_len / out_len
        hi = (r + 1) * in_len / out_len
        i0 = int(math.floor(lo))
        i1 = min(int(math.ceil(hi)), in_len)
        for i in range(i0, i1):
            w = min(hi, i + 1.0) - max(lo, float(i))
            if w > 0:
                out[..., r] += a[..., i] * w
        out[..., r] /= width
    return out


def area_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Box-filter (area average) resize; exact for integer ratios."""
    img = np.asarray(image, dtype=np.float64)
    img = _box_resample_axis(img, out_w)
    img = _box_resample_axis(np.swapaxes(img, 0, 1), out_h)
    return np.swapaxes(img, 0, 1)


def _patch_normalize(img: np.ndarray, patch: int) -> np.ndarray:
    h, w = img.shape
    v = img.reshape(h // patch, patch, w // patch, patch)
    mu = v.mean(axis=(1, 3), keepdims=True)
    var = ((v - mu) ** 2).mean(axis=(1, 3), keepdims=True)
    std = np.sqrt(np.maximum(var, VARIANCE_FLOOR))
    return ((v - mu) / std).reshape(h, w)


def pixel_descriptor(image: np.ndarray,
                     config: PixelDescriptorConfig = PixelDescriptorConfig()) -> np.ndarray:
    """Downsampled (and optionally patch-normalized) pixels as one vector.

    The image is area-average resized to the target dimensions; with
    patch_size > 0 each non-overlapping patch is shifted to zero mean and
    scaled to unit variance (variance floor applies).  Row-major flatten.
    """
    small = area_resize(np.asarray(image, dtype=np.float64),
                        config.target_height, config.target_width)
    if config.patch_size > 0:
        small = _patch_normalize(small, config.patch_size)
    return small.reshape(-1)


# --- standardization ------------------------------------------------------

def compute_standardization(data: np.ndarray,
                            cluster_id: int | None = None) -> StandardizationStats:
    """Population mean/std per dimension, std floored at sqrt(VARIANCE_FLOOR)."""
    mean = data.mean(axis=0)
    var = data.var(axis=0)
    std = np.sqrt(np.maximum(var, VARIANCE_FLOOR))
    return StandardizationStats(mean, std, cluster_id)


def standardize(descriptor_set: DescriptorSet) -> tuple[DescriptorSet, StandardizationStats]:
    """Zero-mean unit-variance transform per dimension (population variance)."""
    if descriptor_set.count < 2:
        raise ValueError("standardization needs at least 2 descriptors")
    stats = compute_standardization(descriptor_set.data)
    out = (descriptor_set.data - stats.mean) / stats.std
    return descriptor_set.with_data(out), stats


def apply_standardization(descriptor_set: DescriptorSet,
                          stats: StandardizationStats) -> DescriptorSet:
    """Apply previously computed stats (e.g. database stats to queries)."""
    if descriptor_set.dim != stats.mean.shape[0]:
        raise ValueError("stats dimension does not match descriptor dimension")
    return descriptor_set.with_data((descriptor_set.data - stats.mean) / stats.std)


def standardize_by_cluster(descriptor_set: DescriptorSet,
                           labels: np.ndarray) -> DescriptorSet:
    """Standardize independently within each label group."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (descriptor_set.count,):
        raise ValueError("labels length must equal descriptor count")
    out = np.empty_like(descriptor_set.data)
    for lab in np.unique(labels):
        idx = np.nonzero(labels == lab)[0]
        if idx.size < 2:
            raise ValueError(f"cluster {int(lab)} has fewer than 2 members")
        stats = compute_standardization(descriptor_set.data[idx], cluster_id=int(lab))
        out[idx] = (descriptor_set.data[idx] - stats.mean) / stats.std
    return descriptor_set.with_data(out)


# --- condition clustering -------------------------------------------------

def _point_hashes(data: np.ndarray) -> np.ndarray:
    """Value-keyed 64-bit hash per row (independent of row order)."""
    return np.array(
        [kernels.fnv1a64(np.ascontiguousarray(row).tobytes()) for row in data],
        dtype=np.uint64,
    )


def _gumbel_keys(point_hashes: np.ndarray, seed: int, round_index: int) -> np.ndarray:
    """Per-point Gumbel noise derived from point value hashes, seed and round."""
    mix = rng.splitmix64((seed & ((1 << 64) - 1)) + round_index * 0x9E3779B97F4A7C15)
    g = np.array([rng.splitmix64(int(h) ^ mix) for h in point_hashes], dtype=np.uint64)
    u = ((g >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return -np.log(-np.log(u))


def cluster_conditions(descriptor_set: DescriptorSet, k: int, seed: int) -> np.ndarray:
    """Deterministic k-means labels (k-means++ init, Lloyd, cap 100 iterations).

    Initialization randomness is keyed on hashes of the point values (via
    Gumbel-max sampling proportional to the squared distance), and member
    sums are taken in value-hash order, so permuting input rows permutes
    the labels identically.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > descriptor_set.count:
        raise ValueError("k exceeds the number of descriptors")
    pts = descriptor_set.data
    n = pts.shape[0]
    if k == 1:
        return np.zeros(n, dtype=np.int64)

    hashes = _point_hashes(pts)
    centers = np.empty((k, pts.shape[1]))
    d2 = np.full(n, np.inf)
    for r in range(k):
        keys = _gumbel_keys(hashes, seed, r)
        if r == 0:
            pick = int(np.argmax(keys))
        else:
            with np.errstate(divide="ignore"):
                score = np.where(d2 > 0, np.log(d2), -np.inf) + keys
            pick = int(np.argmax(score))
        centers[r] = pts[pick]
        diff = pts - centers[r]
        d2 = np.minimum(d2, np.einsum("ij,ij->i", diff, diff))

    order = np.argsort(hashes, kind="stable")
    labels = np.full(n, -1, dtype=np.int64)
    for _ in range(100):
        dist = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(dist, axis=1).astype(np.int64)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = order[labels[order] == c]
            if members.size:
                centers[c] = np.add.reduce(pts[members], axis=0) / members.size
    return labels


# --- descriptor file I/O ---------------------------------------------------

def save_descriptors(descriptor_set: DescriptorSet, path, fmt: str = "binary") -> None:
    """Write a descriptor file; binary quantizes to 32-bit floats."""
    if fmt == "binary":
        payload = canonical_descriptor_bytes(descriptor_set.data)
        with open(path, "wb") as f:
            f.write(payload)
    elif fmt == "text":
        lines = [f"VPRD {descriptor_set.count} {descriptor_set.dim}"]
        for row in descriptor_set.data:
            lines.append(" ".join(repr(float(v)) for v in row))
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown format: {fmt!r}")


def load_descriptors(path) -> DescriptorSet:
    """Load a descriptor file, sniffing text vs binary from the magic."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic == b"VPRB":
            header = f.read(8)
            if len(header) < 8:
                raise FormatError(f"{path}: truncated header")
            n, d = struct.unpack("<II", header)
            if n < 1 or d < 1:
                raise FormatError(f"{path}: bad dimensions {n}x{d}")
            payload = f.read(4 * n * d)
            if len(payload) < 4 * n * d:
                raise FormatError(f"{path}: truncated payload ({len(payload)} bytes)")
            flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
            bad = np.nonzero(~np.isfinite(flat))[0]
            if bad.size:
                r, c = divmod(int(bad[0]), d)
                raise FormatError(f"{path}: non-finite value at row {r}, column {c}")
            return DescriptorSet(flat.reshape(n, d))
        if magic != b"VPRD":
            raise FormatError(f"{path}: unknown magic {magic!r}")
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 3 or header[0] != "VPRD":
            raise FormatError(f"{path}: bad text header")
        n, d = int(header[1]), int(header[2])
        rows = np.empty((n, d))
        for r in range(n):
            parts = f.readline().split()
            if len(parts) != d:
                raise FormatError(f"{path}: row {r} has {len(parts)} values, expected {d}")
            for c, tok in enumerate(parts):
                value = float(tok)
                if not math.isfinite(value):
                    raise FormatError(f"{path}: non-finite value at row {r}, column {c}")
                rows[r, c] = value
    return DescriptorSet(rows)


def save_labels(labels: np.ndarray, path) -> None:
    lines = ["index,label"]
    for i, lab in enumerate(np.asarray(labels, dtype=np.int64)):
        lines.append(f"{i},{int(lab)}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_labels(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != "index,label":
            raise FormatError(f"{path}: expected header 'index,label'")
        pairs = []
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise FormatError(f"{path}: malformed line {lineno}")
            pairs.append((int(parts[0]), int(parts[1])))
    pairs.sort()
    if [i for i, _ in pairs] != list(range(len(pairs))):
        raise FormatError(f"{path}: indices must cover 0..n-1 exactly")
    return np.array([lab for _, lab in pairs], dtype=np.int64)


def save_stats(stats: StandardizationStats, path) -> None:
    """Persist standardization stats: header, mean line, std line."""
    lines = [
        f"VPRSTATS {stats.mean.shape[0]}",
        " ".join(repr(float(v)) for v in stats.mean),
        " ".join(repr(float(v)) for v in stats.std),
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_stats(path) -> StandardizationStats:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2 or header[0] != "VPRSTATS":
            raise FormatError(f"{path}: bad stats header")
        d = int(header[1])
        mean = np.array([float(t) for t in f.readline().split()])
        std = np.array([float(t) for t in f.readline().split()])
    if mean.shape[0] != d or std.shape[0] != d:
        raise FormatError(f"{path}: stats vectors do not match declared dimension")
    return StandardizationStats(mean, std)
