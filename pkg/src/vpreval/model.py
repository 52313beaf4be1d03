"""Core data types shared across the toolkit, plus the experiment manifest.

The manifest is a machine-readable declaration of every property that can
make two place-recognition experiments incomparable: sensor setup,
viewpoint regime, intended output, dataset scale, environment, appearance
conditions, trajectory structure, plus the exact ground-truth criterion,
preprocessing chain, protocol and seed.  Its file format is flat UTF-8
``key = value`` lines with a closed key set; unknown keys are validation
violations, and writing is canonical so that write -> read -> write is
byte-identical.

All types here are immutable after construction (arrays are marked
read-only) and safe to share across worker threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from vpreval import kernels


class FormatError(ValueError):
    """A file did not match its declared format."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def canonical_descriptor_bytes(data: np.ndarray) -> bytes:
    """Canonical little-endian serialization of a descriptor matrix.

    Identical to the binary descriptor file: magic, u32 count, u32 dim,
    then row-major 32-bit floats.  Hashing is defined over these bytes.
    """
    n, d = data.shape
    head = b"VPRB" + struct.pack("<II", n, d)
    return head + np.ascontiguousarray(data, dtype="<f4").tobytes()


@dataclass(frozen=True)
class DescriptorSet:
    """n image descriptors of dimension d, with optional condition labels."""

    data: np.ndarray
    labels: np.ndarray | None = None
    source_hash: int = field(init=False, default=0)

    def __post_init__(self):
        data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("descriptor data must be a non-empty 2-D matrix")
        if not np.isfinite(data).all():
            raise ValueError("descriptor data contains non-finite entries")
        object.__setattr__(self, "data", _frozen(data))
        if self.labels is not None:
            labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
            if labels.shape != (data.shape[0],):
                raise ValueError("labels length must equal descriptor count")
            object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(
            self, "source_hash", kernels.fnv1a64(canonical_descriptor_bytes(data))
        )

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def with_data(self, data: np.ndarray) -> "DescriptorSet":
        return DescriptorSet(data, labels=self.labels)


def hash_descriptor_set(descriptor_set: DescriptorSet) -> int:
    """64-bit FNV-1a over the canonical serialization; order-sensitive."""
    return kernels.fnv1a64(canonical_descriptor_bytes(descriptor_set.data))


@dataclass(frozen=True)
class PoseTrack:
    """Planar poses (x, y, heading) for an ordered image sequence."""

    image_ids: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        ids = np.ascontiguousarray(np.asarray(self.image_ids, dtype=np.int64))
        x = np.ascontiguousarray(np.asarray(self.x, dtype=np.float64))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=np.float64))
        th = np.ascontiguousarray(np.asarray(self.theta, dtype=np.float64))
        if not (ids.ndim == x.ndim == y.ndim == th.ndim == 1):
            raise ValueError("pose fields must be 1-D")
        if not (len(ids) == len(x) == len(y) == len(th)) or len(ids) == 0:
            raise ValueError("pose fields must be equal-length and non-empty")
        if np.any(np.diff(ids) <= 0):
            raise ValueError("image ids must be strictly increasing")
        if not (np.isfinite(x).all() and np.isfinite(y).all() and np.isfinite(th).all()):
            raise ValueError("pose values must be finite")
        if np.any(th <= -np.pi) or np.any(th > np.pi):
            raise ValueError("theta must lie in (-pi, pi]")
        for name, arr in (("image_ids", ids), ("x", x), ("y", y), ("theta", th)):
            object.__setattr__(self, name, _frozen(arr))

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[int, float, float, float]]) -> "PoseTrack":
        rows = list(rows)
        return cls(
            np.array([r[0] for r in rows], dtype=np.int64),
            np.array([r[1] for r in rows]),
            np.array([r[2] for r in rows]),
            np.array([r[3] for r in rows]),
        )

    def __len__(self) -> int:
        return len(self.image_ids)


@dataclass(frozen=True)
class SimilarityMatrix:
    """n x m similarity values, higher = more similar, with provenance tags."""

    values: np.ndarray
    measure_tag: str
    postprocess_tag: str = "none"

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if v.ndim != 2 or v.size == 0:
            raise ValueError("similarity values must be a non-empty 2-D matrix")
        if not np.isfinite(v).all():
            raise ValueError("similarity values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class GtCriterion:
    """The explicit rule that defined a ground-truth matrix.

    mode "poses": a pair matches when planar distance <= d_max and the
    wrapped heading difference <= theta_max.  mode "indices": a pair
    matches when |db_index - alignment(query_index)| <= index_max
    (identity alignment if absent).  Only the active mode's fields are
    set.
    """

    mode: str
    d_max: float | None = None
    theta_max: float | None = None
    index_max: int | None = None
    alignment: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.mode == "poses":
            if self.d_max is None or self.theta_max is None:
                raise ValueError("poses mode requires d_max and theta_max")
            if self.d_max < 0 or self.theta_max < 0:
                raise ValueError("thresholds must be >= 0")
            if self.index_max is not None or self.alignment is not None:
                raise ValueError("index fields must be unset in poses mode")
        elif self.mode == "indices":
            if self.index_max is None or self.index_max < 0:
                raise ValueError("indices mode requires index_max >= 0")
            if self.d_max is not None or self.theta_max is not None:
                raise ValueError("pose fields must be unset in indices mode")
            if self.alignment is not None:
                object.__setattr__(self, "alignment", tuple(int(a) for a in self.alignment))
        else:
            raise ValueError(f"unknown criterion mode: {self.mode!r}")


@dataclass(frozen=True)
class GroundTruthMatrix:
    """Binary n x m matrix of same-place decisions under an explicit criterion."""

    values: np.ndarray
    criterion: GtCriterion | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values))
        if v.ndim != 2 or v.size == 0:
            raise ValueError("ground truth must be a non-empty 2-D matrix")
        if not np.isin(v, (0, 1)).all():
            raise ValueError("ground-truth entries must be 0 or 1")
        object.__setattr__(self, "values", _frozen(v.astype(np.uint8)))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def num_positives(self) -> int:
        return int(self.values.sum())


@dataclass(frozen=True)
class SweepResult:
    """Per-threshold TP/FP/FN counts, the source of every scalar metric."""

    thresholds: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    protocol: str
    num_gt_positives: int

    def __post_init__(self):
        thr = np.ascontiguousarray(np.asarray(self.thresholds, dtype=np.float64))
        tp = np.ascontiguousarray(np.asarray(self.tp, dtype=np.int64))
        fp = np.ascontiguousarray(np.asarray(self.fp, dtype=np.int64))
        fn = np.ascontiguousarray(np.asarray(self.fn, dtype=np.int64))
        if not (thr.shape == tp.shape == fp.shape == fn.shape) or thr.ndim != 1 or thr.size == 0:
            raise ValueError("sweep arrays must be equal-length, 1-D, non-empty")
        if np.any(np.diff(thr) <= 0):
            raise ValueError("thresholds must be strictly increasing")
        if np.any(tp < 0) or np.any(fp < 0) or np.any(fn < 0):
            raise ValueError("counts must be non-negative")
        if self.protocol not in ("all_matchings", "single_best"):
            raise ValueError(f"unknown protocol: {self.protocol!r}")
        if self.protocol == "all_matchings" and np.any(tp + fn != self.num_gt_positives):
            raise ValueError("TP + FN must equal the positive count at every threshold")
        for name, arr in (("thresholds", thr), ("tp", tp), ("fp", fp), ("fn", fn)):
            object.__setattr__(self, name, _frozen(arr))

    @property
    def points(self) -> list[tuple[float, int, int, int]]:
        return [
            (float(t), int(a), int(b), int(c))
            for t, a, b, c in zip(self.thresholds, self.tp, self.fp, self.fn)
        ]


# --- experiment manifest -------------------------------------------------

PROTOCOLS = ("all_matchings", "single_best")

_ENUMS = {
    "a1_sensors": ("vision_only", "vision_plus_odometry", "multi_sensor"),
    "a2_knowledge": ("offline", "online", "db_known"),
    "a3_exploration": ("closed_world", "open_world"),
    "b1_viewpoint_change": ("none", "small", "large"),
    "b2_place_set": ("discrete", "continuous"),
    "b3_dof": ("constrained", "full_6dof"),
    "g2_velocity": ("constant", "variable"),
    "protocol": PROTOCOLS,
    "gt_mode": ("poses", "indices"),
}

_BOOL_FIELDS = ("f3_in_sequence_change", "f4_condition_knowledge",
                "g1_sequences", "g3_loops", "g4_stops")

_CODE_OF = {
    "a1_sensors": "A1", "a2_knowledge": "A2", "a3_exploration": "A3",
    "a4_extra_knowledge": "A4", "b1_viewpoint_change": "B1",
    "b2_place_set": "B2", "b3_dof": "B3", "c1_intended_output": "C1",
    "d1_scale": "D1", "d2_runtime_budget": "D2", "d3_storage_budget": "D3",
    "e1_environment": "E1", "e2_platform": "E2",
    "f1_condition_model": "F1", "f3_in_sequence_change": "F3",
    "f4_condition_knowledge": "F4", "g1_sequences": "G1",
    "g2_velocity": "G2", "g3_loops": "G3", "g4_stops": "G4",
}

# canonical key order for the file format
MANIFEST_KEYS = (
    "version",
    "a1_sensors", "a2_knowledge", "a3_exploration", "a4_extra_knowledge",
    "b1_viewpoint_change", "b2_place_set", "b3_dof",
    "c1_intended_output",
    "d1_scale", "d2_runtime_budget", "d3_storage_budget",
    "e1_environment", "e2_platform",
    "f1_condition_model", "f3_in_sequence_change", "f4_condition_knowledge",
    "g1_sequences", "g2_velocity", "g3_loops", "g4_stops",
    "db_hash", "q_hash",
    "gt_mode", "gt_d_max_m", "gt_theta_max_rad", "gt_index_max",
    "preprocessing_chain", "protocol", "seed",
)


@dataclass(frozen=True)
class ExperimentManifest:
    """Declared properties of one experiment; None means "not declared"."""

    version: int = 1
    a1_sensors: str | None = None
    a2_knowledge: str | None = None
    a3_exploration: str | None = None
    a4_extra_knowledge: tuple[str, ...] | None = None
    b1_viewpoint_change: str | None = None
    b2_place_set: str | None = None
    b3_dof: str | None = None
    c1_intended_output: str | None = None
    d1_scale: tuple[int, int] | None = None
    d2_runtime_budget: str | None = None
    d3_storage_budget: str | None = None
    e1_environment: str | None = None
    e2_platform: str | None = None
    f1_condition_model: str | None = None
    f3_in_sequence_change: bool | None = None
    f4_condition_knowledge: bool | None = None
    g1_sequences: bool | None = None
    g2_velocity: str | None = None
    g3_loops: bool | None = None
    g4_stops: bool | None = None
    db_hash: int | None = None
    q_hash: int | None = None
    gt_mode: str | None = None
    gt_d_max_m: float | None = None
    gt_theta_max_rad: float | None = None
    gt_index_max: int | None = None
    preprocessing_chain: tuple[str, ...] | None = None
    protocol: str | None = None
    seed: int | None = None
    parse_issues: tuple[str, ...] = ()

    def updated(self, **changes) -> "ExperimentManifest":
        return replace(self, **changes)


def _render(key: str, value) -> str:
    if value is None:
        return ""
    if key in ("a4_extra_knowledge", "preprocessing_chain"):
        return "none" if not value else ",".join(value)
    if key in _BOOL_FIELDS:
        return "true" if value else "false"
    if key == "d1_scale":
        return f"{value[0]}x{value[1]}"
    if key in ("db_hash", "q_hash"):
        return format(value, "016x")
    if key in ("gt_d_max_m", "gt_theta_max_rad"):
        return repr(float(value))
    return str(value)


def _parse_value(key: str, raw: str):
    if raw == "":
        return None
    if key == "version":
        return int(raw)
    if key in ("a4_extra_knowledge", "preprocessing_chain"):
        if raw == "none":
            return ()
        return tuple(part.strip() for part in raw.split(","))
    if key in _BOOL_FIELDS:
        if raw == "true":
            return True
        if raw == "false":
            return False
        raise FormatError(f"{key}: expected true/false, got {raw!r}")
    if key == "d1_scale":
        parts = raw.split("x")
        if len(parts) != 2:
            raise FormatError(f"d1_scale: expected NxM, got {raw!r}")
        return (int(parts[0]), int(parts[1]))
    if key in ("db_hash", "q_hash"):
        return int(raw, 16)
    if key in ("gt_d_max_m", "gt_theta_max_rad"):
        return float(raw)
    if key in ("gt_index_max", "seed"):
        return int(raw)
    return raw


def write_manifest(manifest: ExperimentManifest,
                   comments: Sequence[str] = ()) -> str:
    """Render the manifest in canonical key order.

    ``comments`` become trailing ``# ...`` lines (used to echo run
    metrics); readers ignore them.
    """
    lines = []
    for key in MANIFEST_KEYS:
        value = _render(key, getattr(manifest, key))
        lines.append(f"{key} = {value}".rstrip())
    for c in comments:
        lines.append(f"# {c}")
    return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> ExperimentManifest:
    """Parse manifest text; malformed or unknown content lands in parse_issues."""
    values: dict[str, object] = {}
    issues: list[str] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            issues.append(f"malformed line {lineno}")
            continue
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in MANIFEST_KEYS:
            issues.append(f"unknown key: {key}")
            continue
        if key in seen:
            issues.append(f"duplicate key: {key}")
            continue
        seen.add(key)
        try:
            values[key] = _parse_value(key, raw)
        except (ValueError, FormatError) as exc:
            issues.append(f"{key}: {exc}")
    return ExperimentManifest(**values, parse_issues=tuple(issues))


def save_manifest(manifest: ExperimentManifest, path,
                  comments: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(write_manifest(manifest, comments))


def read_manifest(path) -> ExperimentManifest:
    with open(path, "r", encoding="utf-8") as f:
        return parse_manifest(f.read())


CHAIN_TAG_PREFIXES = ("standardize_by_cluster:", "seqpost:")
CHAIN_TAG_LITERALS = ("none", "standardize")


def chain_tag_valid(tag: str) -> bool:
    if tag in CHAIN_TAG_LITERALS:
        return True
    for prefix in CHAIN_TAG_PREFIXES:
        if tag.startswith(prefix) and len(tag) > len(prefix):
            if prefix == "standardize_by_cluster:":
                return tag[len(prefix):].isdigit() and int(tag[len(prefix):]) >= 1
            return True
    return False


def validate_manifest(manifest: ExperimentManifest, gt: GroundTruthMatrix | None = None) -> list[str]:
    """Return violation messages; empty means consistent and fully declared.

    When a ground-truth matrix is supplied, declared structure (A3/G3/G4)
    and scale are checked against what the matrix actually contains.
    """
    v: list[str] = []
    v.extend(manifest.parse_issues)
    if manifest.version != 1:
        v.append("version must be 1")
    for key, code in _CODE_OF.items():
        if getattr(manifest, key) is None:
            v.append(f"{code} unset")
    for key in ("db_hash", "q_hash", "gt_mode", "preprocessing_chain", "protocol", "seed"):
        if getattr(manifest, key) is None:
            v.append(f"{key} unset")
    for key, allowed in _ENUMS.items():
        value = getattr(manifest, key)
        if value is not None and value not in allowed:
            code = _CODE_OF.get(key, key)
            v.append(f"{code} invalid value {value!r}")
    c1 = manifest.c1_intended_output
    if c1 is not None:
        if c1.startswith("candidates_k:"):
            suffix = c1.partition(":")[2]
            if not suffix.isdigit() or int(suffix) < 1:
                v.append("C1 invalid candidates_k")
        elif c1 not in ("single_best", "all_matchings", "similarities"):
            v.append(f"C1 invalid value {c1!r}")
        if c1 == "single_best" and manifest.protocol == "all_matchings":
            v.append("C1 single_best conflicts with protocol all_matchings")
    f1 = manifest.f1_condition_model
    if f1 is not None and f1 not in ("constant", "continuous"):
        if f1.startswith("discrete:"):
            suffix = f1.partition(":")[2]
            if not suffix.isdigit() or int(suffix) < 1:
                v.append("F1 invalid discrete count")
        else:
            v.append(f"F1 invalid value {f1!r}")
    if manifest.d1_scale is not None:
        n, m = manifest.d1_scale
        if n < 1 or m < 1:
            v.append("D1 scale must be positive")
    if manifest.preprocessing_chain is not None:
        for tag in manifest.preprocessing_chain:
            if not chain_tag_valid(tag):
                v.append(f"preprocessing chain tag {tag!r} not recognized")
    if manifest.gt_mode == "poses":
        if manifest.gt_d_max_m is None or manifest.gt_theta_max_rad is None:
            v.append("gt poses mode requires gt_d_max_m and gt_theta_max_rad")
    elif manifest.gt_mode == "indices":
        if manifest.gt_index_max is None:
            v.append("gt indices mode requires gt_index_max")
    if gt is not None:
        if manifest.d1_scale is not None and manifest.d1_scale != (gt.rows, gt.cols):
            v.append("D1 scale does not match GT dimensions")
        from vpreval import groundtruth  # local import: groundtruth depends on model

        report = groundtruth.structure_report(gt)
        if manifest.g3_loops is False and report.loop_queries > 0:
            v.append("G3 contradicts GT structure")
        if manifest.g4_stops is False and (report.stop_segments_db or report.stop_segments_q):
            v.append("G4 contradicts GT structure")
        if manifest.a3_exploration == "closed_world" and report.exploration_queries > 0:
            v.append("A3 contradicts GT structure")
    return v


# --- shared flat key=value dialect (manifests, run configs) ---------------

def parse_kv_text(text: str) -> tuple[dict[str, str], list[str]]:
    """Parse ``key = value`` lines; returns (pairs, issues)."""
    pairs: dict[str, str] = {}
    issues: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            issues.append(f"malformed line {lineno}")
            continue
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key in pairs:
            issues.append(f"duplicate key: {key}")
            continue
        pairs[key] = raw.strip()
    return pairs, issues
