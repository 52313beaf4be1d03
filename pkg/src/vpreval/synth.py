"""Deterministic synthetic dataset generator.

A world is a set of unit-vector place embeddings (optionally with aliased
pairs) and unit-vector condition embeddings; a traversal visits places in
a plan (revisits encode loops, immediate repeats encode stops, indices
beyond the world's place count encode exploration) under a condition
schedule.  Frame descriptors are ``normalize(place + lc*condition +
ln*noise)``; poses put place k at (k * spacing, 0, heading 0) plus
Gaussian jitter; ground truth is place identity.

All randomness comes from named streams derived from the master seed
(place/condition/alias vectors from per-id streams; per-set noise and
jitter streams consumed frame by frame), so identical configs and seed
reproduce identical bits, and streams are consumed regardless of the
strength values so e.g. raising the noise strength rescales the very
same noise draws.

Traversal-plan file format: CSV ``frame,place_index,condition_a_weight``
with header, where the weight column records the share of the schedule's
first condition at each frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vpreval.model import (
    DescriptorSet,
    ExperimentManifest,
    FormatError,
    GroundTruthMatrix,
    GtCriterion,
    PoseTrack,
    SimilarityMatrix,
)
from vpreval.rng import Stream

ALIAS_PERTURBATION = 0.05


@dataclass(frozen=True)
class WorldConfig:
    """Static world: places, descriptor dimension, aliasing, strengths."""

    num_places: int
    dim: int = 128
    place_spacing: float = 1.0
    aliasing_pairs: int = 0
    condition_strength: float = 0.0
    noise_strength: float = 0.0
    viewpoint_jitter: float = 0.0

    def __post_init__(self):
        if self.num_places < 2:
            raise ValueError("num_places must be >= 2")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.condition_strength < 0 or self.noise_strength < 0:
            raise ValueError("strengths must be >= 0")
        if self.viewpoint_jitter < 0:
            raise ValueError("viewpoint_jitter must be >= 0")
        if self.aliasing_pairs < 0 or 2 * self.aliasing_pairs > self.num_places:
            raise ValueError("aliasing_pairs must fit within num_places")


@dataclass(frozen=True)
class ConditionSchedule:
    """constant(c) | switch(c1, c2, frame) | drift(c1, c2) over a traversal."""

    kind: str = "constant"
    first: int = 0
    second: int = 0
    switch_frame: int = 0

    def __post_init__(self):
        if self.kind not in ("constant", "switch", "drift"):
            raise ValueError(f"unknown schedule kind: {self.kind!r}")
        if self.first < 0 or self.second < 0:
            raise ValueError("condition ids must be >= 0")

    def weight_a(self, frame: int, total: int) -> float:
        """Share of the first condition at this frame."""
        if self.kind == "constant":
            return 1.0
        if self.kind == "switch":
            return 1.0 if frame < self.switch_frame else 0.0
        alpha = frame / (total - 1) if total > 1 else 0.0
        return 1.0 - alpha

    def label(self, frame: int, total: int) -> int:
        return self.first if self.weight_a(frame, total) > 0.5 else self.second

    def condition_ids(self) -> tuple[int, ...]:
        if self.kind == "constant" or self.first == self.second:
            return (self.first,)
        return (self.first, self.second)


@dataclass(frozen=True)
class TraversalConfig:
    """One pass through the world: plan, condition schedule, noise ramp.

    noise_ramp linearly scales the per-frame noise strength from 1x at the
    first frame to ramp x at the last (1.0 = homogeneous)."""

    visit_plan: tuple[int, ...]
    condition_schedule: ConditionSchedule = ConditionSchedule()
    noise_ramp: float = 1.0

    def __post_init__(self):
        plan = tuple(int(p) for p in self.visit_plan)
        if not plan:
            raise ValueError("visit plan must be non-empty")
        if any(p < 0 for p in plan):
            raise ValueError("place indices must be >= 0")
        object.__setattr__(self, "visit_plan", plan)
        sched = self.condition_schedule
        if sched.kind == "switch" and not 0 <= sched.switch_frame <= len(plan):
            raise ValueError("switch frame outside the traversal")
        if self.noise_ramp <= 0:
            raise ValueError("noise_ramp must be > 0")


@dataclass(frozen=True)
class SynthDataset:
    db: DescriptorSet
    db_poses: PoseTrack
    q: DescriptorSet
    q_poses: PoseTrack
    gt: GroundTruthMatrix
    manifest: ExperimentManifest
    world: WorldConfig
    db_traversal: TraversalConfig
    q_traversal: TraversalConfig
    seed: int


def _place_embedding(seed: int, world: WorldConfig, place: int,
                     cache: dict[int, np.ndarray]) -> np.ndarray:
    if place in cache:
        return cache[place]
    pair = (place - 1) // 2 if place % 2 == 1 else -1
    if place % 2 == 1 and place < world.num_places and pair < world.aliasing_pairs:
        base = _place_embedding(seed, world, place - 1, cache)
        delta = Stream(seed, f"alias/{pair}").unit_vector(world.dim) * ALIAS_PERTURBATION
        v = base + delta
        v = v / float(np.sqrt(np.dot(v, v)))
    else:
        v = Stream(seed, f"place/{place}").unit_vector(world.dim)
    cache[place] = v
    return v


def _condition_embedding(seed: int, dim: int, cond: int,
                         cache: dict[int, np.ndarray]) -> np.ndarray:
    if cond not in cache:
        cache[cond] = Stream(seed, f"condition/{cond}").unit_vector(dim)
    return cache[cond]


def _build_set(seed: int, world: WorldConfig, traversal: TraversalConfig, name: str,
               place_cache: dict[int, np.ndarray],
               cond_cache: dict[int, np.ndarray]) -> tuple[DescriptorSet, PoseTrack]:
    plan = traversal.visit_plan
    total = len(plan)
    sched = traversal.condition_schedule
    noise = Stream(seed, f"noise/{name}")
    jitter = Stream(seed, f"pose/{name}")

    data = np.empty((total, world.dim))
    labels = np.empty(total, dtype=np.int64)
    xs = np.empty(total)
    ys = np.empty(total)
    for f, place in enumerate(plan):
        base = _place_embedding(seed, world, place, place_cache)
        wa = sched.weight_a(f, total)
        if sched.kind == "drift" and sched.first != sched.second:
            ca = _condition_embedding(seed, world.dim, sched.first, cond_cache)
            cb = _condition_embedding(seed, world.dim, sched.second, cond_cache)
            cvec = wa * ca + (1.0 - wa) * cb
            cvec = cvec / float(np.sqrt(np.dot(cvec, cvec)))
        else:
            cid = sched.first if wa > 0.5 else sched.second
            cvec = _condition_embedding(seed, world.dim, cid, cond_cache)
        eta = noise.gaussians(world.dim)
        ramp = 1.0 + (traversal.noise_ramp - 1.0) * (f / (total - 1) if total > 1 else 0.0)
        raw = base + world.condition_strength * cvec + world.noise_strength * ramp * eta
        data[f] = raw / float(np.sqrt(np.dot(raw, raw)))
        labels[f] = sched.label(f, total)
        jxy = jitter.gaussians(2)
        xs[f] = place * world.place_spacing + world.viewpoint_jitter * jxy[0]
        ys[f] = world.viewpoint_jitter * jxy[1]
    poses = PoseTrack(np.arange(total, dtype=np.int64), xs, ys, np.zeros(total))
    return DescriptorSet(data, labels=labels), poses


def _has_noncontiguous_revisit(plan: tuple[int, ...]) -> bool:
    last_seen: dict[int, int] = {}
    for idx, p in enumerate(plan):
        if p in last_seen and last_seen[p] != idx - 1:
            return True
        last_seen[p] = idx
    return False


def _constant_stride(plan: tuple[int, ...]) -> bool:
    if len(plan) < 2:
        return True
    deltas = {plan[i + 1] - plan[i] for i in range(len(plan) - 1)}
    return len(deltas) <= 1


def _fill_manifest(world: WorldConfig, db_t: TraversalConfig, q_t: TraversalConfig,
                   seed: int, db: DescriptorSet, q: DescriptorSet) -> ExperimentManifest:
    db_places = set(db_t.visit_plan)
    exploration = any(p not in db_places for p in q_t.visit_plan)
    loops = _has_noncontiguous_revisit(db_t.visit_plan) or _has_noncontiguous_revisit(q_t.visit_plan)
    stops = any(
        plan[i + 1] == plan[i]
        for plan in (db_t.visit_plan, q_t.visit_plan)
        for i in range(len(plan) - 1)
    )
    if world.viewpoint_jitter == 0:
        b1 = "none"
    elif world.viewpoint_jitter < world.place_spacing / 2:
        b1 = "small"
    else:
        b1 = "large"
    schedules = (db_t.condition_schedule, q_t.condition_schedule)
    if world.condition_strength == 0:
        f1 = "constant"
        f3 = False
    elif any(s.kind == "drift" and s.first != s.second for s in schedules):
        f1 = "continuous"
        f3 = True
    else:
        ids = {c for s in schedules for c in s.condition_ids()}
        f1 = "constant" if len(ids) <= 1 else f"discrete:{len(ids)}"
        f3 = any(
            s.kind == "switch" and s.first != s.second and 0 < s.switch_frame < total
            for s, total in zip(schedules, (len(db_t.visit_plan), len(q_t.visit_plan)))
        )
    return ExperimentManifest(
        a1_sensors="vision_only",
        a2_knowledge="offline",
        a3_exploration="open_world" if exploration else "closed_world",
        a4_extra_knowledge=(),
        b1_viewpoint_change=b1,
        b2_place_set="discrete",
        b3_dof="constrained",
        c1_intended_output="similarities",
        d1_scale=(db.count, q.count),
        d2_runtime_budget="unbounded",
        d3_storage_budget="unbounded",
        e1_environment="synthetic_aliased" if world.aliasing_pairs else "synthetic",
        e2_platform="simulated",
        f1_condition_model=f1,
        f3_in_sequence_change=f3,
        f4_condition_knowledge=True,
        g1_sequences=True,
        g2_velocity="constant" if _constant_stride(db_t.visit_plan) and _constant_stride(q_t.visit_plan) else "variable",
        g3_loops=loops,
        g4_stops=stops,
        db_hash=db.source_hash,
        q_hash=q.source_hash,
        gt_mode="indices",
        gt_index_max=0,
        preprocessing_chain=(),
        protocol="all_matchings",
        seed=seed,
    )


def generate(world: WorldConfig, db_traversal: TraversalConfig,
             q_traversal: TraversalConfig, seed: int) -> SynthDataset:
    """Generate a full dataset: descriptors, labels, poses, GT, manifest."""
    place_cache: dict[int, np.ndarray] = {}
    cond_cache: dict[int, np.ndarray] = {}
    db, db_poses = _build_set(seed, world, db_traversal, "db", place_cache, cond_cache)
    q, q_poses = _build_set(seed, world, q_traversal, "q", place_cache, cond_cache)
    db_places = np.array(db_traversal.visit_plan, dtype=np.int64)
    q_places = np.array(q_traversal.visit_plan, dtype=np.int64)
    gt_values = (db_places[:, None] == q_places[None, :]).astype(np.uint8)
    gt = GroundTruthMatrix(gt_values, GtCriterion(mode="indices", index_max=0))
    manifest = _fill_manifest(world, db_traversal, q_traversal, seed, db, q)
    return SynthDataset(db, db_poses, q, q_poses, gt, manifest,
                        world, db_traversal, q_traversal, seed)


# --- conditional similarity histograms --------------------------------------

@dataclass(frozen=True)
class ConditionalHistograms:
    """Normalized histograms of similarity, grouped by ground truth
    ("same"/"different") and unordered condition-label pair."""

    edges: np.ndarray
    groups: dict[tuple[str, tuple[int, int]], np.ndarray]


def histogram_overlap(h1: np.ndarray, h2: np.ndarray) -> float:
    """Histogram intersection of two normalized histograms (same edges)."""
    return float(np.minimum(h1, h2).sum())


def conditional_histograms(S, gt, db_labels, q_labels, bins: int) -> ConditionalHistograms:
    """Route each cell by GT and condition pair; bin uniformly over
    [min(S), max(S)]; each group's histogram sums to 1; empty groups are
    omitted."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    values = S.values if isinstance(S, SimilarityMatrix) else np.asarray(S, dtype=np.float64)
    gtv = gt.values if isinstance(gt, GroundTruthMatrix) else np.asarray(gt, dtype=np.uint8)
    la = np.asarray(db_labels, dtype=np.int64)
    lb = np.asarray(q_labels, dtype=np.int64)
    if la.shape[0] != values.shape[0] or lb.shape[0] != values.shape[1]:
        raise ValueError("label lengths must match matrix dimensions")
    lo = values.min()
    hi = values.max()
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    pair_lo = np.minimum(la[:, None], lb[None, :])
    pair_hi = np.maximum(la[:, None], lb[None, :])
    groups: dict[tuple[str, tuple[int, int]], np.ndarray] = {}
    pairs = {(int(a), int(b)) for a, b in zip(pair_lo.ravel(), pair_hi.ravel())}
    for a, b in sorted(pairs):
        pair_mask = (pair_lo == a) & (pair_hi == b)
        for kind, kind_mask in (("same", gtv == 1), ("different", gtv == 0)):
            mask = pair_mask & kind_mask
            total = int(mask.sum())
            if total == 0:
                continue
            counts, _ = np.histogram(values[mask], bins=edges)
            groups[(kind, (a, b))] = counts.astype(np.float64) / total
    return ConditionalHistograms(edges, groups)


# --- traversal plan parsing and files ----------------------------------------

def parse_plan(spec: str) -> tuple[int, ...]:
    """Parse a plan string: comma-separated ``N``, ``NxR`` (repeat), ``A..B``
    (inclusive range, either direction), ``A..B:S`` (stride S >= 1)."""
    plan: list[int] = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            raise ValueError("empty plan token")
        if ".." in token:
            span, _, stride_s = token.partition(":")
            stride = int(stride_s) if stride_s else 1
            if stride < 1:
                raise ValueError(f"stride must be >= 1 in {token!r}")
            a_s, _, b_s = span.partition("..")
            a, b = int(a_s), int(b_s)
            if a <= b:
                plan.extend(range(a, b + 1, stride))
            else:
                plan.extend(range(a, b - 1, -stride))
        elif "x" in token:
            place_s, _, rep_s = token.partition("x")
            place, rep = int(place_s), int(rep_s)
            if rep < 1:
                raise ValueError(f"repeat must be >= 1 in {token!r}")
            plan.extend([place] * rep)
        else:
            plan.append(int(token))
    return tuple(plan)


def save_plan(traversal: TraversalConfig, path) -> None:
    plan = traversal.visit_plan
    total = len(plan)
    lines = ["frame,place_index,condition_a_weight"]
    for f, place in enumerate(plan):
        w = traversal.condition_schedule.weight_a(f, total)
        lines.append(f"{f},{place},{repr(float(w))}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_plan(path) -> tuple[int, ...]:
    places: list[int] = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != "frame,place_index,condition_a_weight":
            raise FormatError(f"{path}: expected plan CSV header")
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise FormatError(f"{path}: malformed line {lineno}")
            places.append(int(parts[1]))
    if not places:
        raise FormatError(f"{path}: no plan rows")
    return tuple(places)


def parse_schedule(spec: str) -> ConditionSchedule:
    """Parse ``constant:C`` | ``switch:A,B,FRAME`` | ``drift:A,B``."""
    kind, _, rest = spec.partition(":")
    if kind == "constant":
        return ConditionSchedule("constant", int(rest or 0))
    if kind == "switch":
        parts = rest.split(",")
        if len(parts) != 3:
            raise ValueError(f"switch schedule needs A,B,FRAME: {spec!r}")
        return ConditionSchedule("switch", int(parts[0]), int(parts[1]), int(parts[2]))
    if kind == "drift":
        parts = rest.split(",")
        if len(parts) != 2:
            raise ValueError(f"drift schedule needs A,B: {spec!r}")
        return ConditionSchedule("drift", int(parts[0]), int(parts[1]))
    raise ValueError(f"unknown schedule kind: {spec!r}")
