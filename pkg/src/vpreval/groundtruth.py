"""Ground-truth construction from poses or frame indices, and structural
analysis of GT matrices (loops, stops, exploration).

File formats owned here:
- pose file: CSV ``id,x,y,theta`` with header.
- GT pair file: CSV ``db_index,query_index`` with header (dimensions are
  carried by the accompanying manifest).
- alignment file: CSV ``query_index,db_index`` with header.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vpreval.model import FormatError, GroundTruthMatrix, GtCriterion, PoseTrack

__all__ = [
    "GtCriterion", "StructureReport", "gt_from_poses", "gt_from_indices",
    "structure_report", "save_poses", "load_poses", "save_gt_pairs",
    "load_gt_pairs", "load_alignment",
]


@dataclass(frozen=True)
class StructureReport:
    """Spatio-temporal structure visible in a GT matrix.

    Loops: queries whose matching database rows split into more than one
    contiguous run.  Stops: maximal vertical (database) or horizontal
    (query) runs of length >= 2, deduplicated to their index ranges;
    rectangles count distinct (vertical range, horizontal range) pairs
    that share a cell.  Exploration: all-zero query columns.
    """

    per_query_match_counts: dict[int, int]
    loop_queries: int
    stop_segments_db: tuple[tuple[int, int], ...]
    stop_segments_q: tuple[tuple[int, int], ...]
    stop_rectangles: int
    exploration_queries: int


def gt_from_poses(db_poses: PoseTrack, q_poses: PoseTrack, criterion: GtCriterion) -> GroundTruthMatrix:
    """GT[i][j] = 1 iff planar distance <= d_max and |wrapped heading diff| <= theta_max."""
    if criterion.mode != "poses":
        raise ValueError("criterion mode must be 'poses'")
    dx = db_poses.x[:, None] - q_poses.x[None, :]
    dy = db_poses.y[:, None] - q_poses.y[None, :]
    dist = np.sqrt(dx * dx + dy * dy)
    dth = np.abs(
        np.remainder(db_poses.theta[:, None] - q_poses.theta[None, :] + np.pi, 2 * np.pi)
        - np.pi
    )
    gt = (dist <= criterion.d_max) & (dth <= criterion.theta_max)
    return GroundTruthMatrix(gt.astype(np.uint8), criterion)


def gt_from_indices(n: int, m: int, criterion: GtCriterion) -> GroundTruthMatrix:
    """GT[i][j] = 1 iff |i - alignment(j)| <= index_max (identity alignment
    when absent)."""
    if criterion.mode != "indices":
        raise ValueError("criterion mode must be 'indices'")
    if criterion.alignment is None:
        alignment = np.arange(m, dtype=np.int64)
    else:
        alignment = np.asarray(criterion.alignment, dtype=np.int64)
        if alignment.shape != (m,):
            raise ValueError(f"alignment must cover all {m} queries")
    if np.any(alignment < 0) or np.any(alignment >= n):
        bad = int(np.nonzero((alignment < 0) | (alignment >= n))[0][0])
        raise ValueError(f"alignment out of range for query {bad}: {int(alignment[bad])}")
    rows = np.arange(n, dtype=np.int64)
    gt = np.abs(rows[:, None] - alignment[None, :]) <= criterion.index_max
    return GroundTruthMatrix(gt.astype(np.uint8), criterion)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as inclusive (start, end) pairs."""
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        return []
    splits = np.nonzero(np.diff(idx) > 1)[0]
    starts = np.concatenate(([0], splits + 1))
    ends = np.concatenate((splits, [idx.size - 1]))
    return [(int(idx[s]), int(idx[e])) for s, e in zip(starts, ends)]


def structure_report(gt: GroundTruthMatrix) -> StructureReport:
    """Scan a GT matrix for the patterns trajectories leave in it."""
    values = gt.values
    n, m = values.shape

    counts: dict[int, int] = {}
    loop_queries = 0
    vertical: list[tuple[int, int, int]] = []  # (col, r0, r1)
    for j in range(m):
        col_runs = _runs(values[:, j] != 0)
        c = int(values[:, j].sum())
        counts[c] = counts.get(c, 0) + 1
        if len(col_runs) > 1:
            loop_queries += 1
        for r0, r1 in col_runs:
            if r1 - r0 + 1 >= 2:
                vertical.append((j, r0, r1))

    horizontal: list[tuple[int, int, int]] = []  # (row, c0, c1)
    for i in range(n):
        for c0, c1 in _runs(values[i] != 0):
            if c1 - c0 + 1 >= 2:
                horizontal.append((i, c0, c1))

    rect_pairs: set[tuple[tuple[int, int], tuple[int, int]]] = set()
    for col, r0, r1 in vertical:
        for row, c0, c1 in horizontal:
            if r0 <= row <= r1 and c0 <= col <= c1:
                rect_pairs.add(((r0, r1), (c0, c1)))

    return StructureReport(
        per_query_match_counts=dict(sorted(counts.items())),
        loop_queries=loop_queries,
        stop_segments_db=tuple(sorted({(r0, r1) for _, r0, r1 in vertical})),
        stop_segments_q=tuple(sorted({(c0, c1) for _, c0, c1 in horizontal})),
        stop_rectangles=len(rect_pairs),
        exploration_queries=int((values.sum(axis=0) == 0).sum()),
    )


# --- file I/O ---------------------------------------------------------------

def save_poses(track: PoseTrack, path) -> None:
    lines = ["id,x,y,theta"]
    for i in range(len(track)):
        lines.append(
            f"{int(track.image_ids[i])},{repr(float(track.x[i]))},"
            f"{repr(float(track.y[i]))},{repr(float(track.theta[i]))}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_poses(path) -> PoseTrack:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != "id,x,y,theta":
            raise FormatError(f"{path}: expected header 'id,x,y,theta'")
        rows = []
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise FormatError(f"{path}: malformed line {lineno}")
            rows.append((int(parts[0]), float(parts[1]), float(parts[2]), float(parts[3])))
    if not rows:
        raise FormatError(f"{path}: no pose rows")
    return PoseTrack.from_rows(rows)


def save_gt_pairs(gt: GroundTruthMatrix, path) -> None:
    lines = ["db_index,query_index"]
    for i, j in np.argwhere(gt.values):
        lines.append(f"{int(i)},{int(j)}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_gt_pairs(path, rows: int, cols: int,
                  criterion: GtCriterion | None = None) -> GroundTruthMatrix:
    values = np.zeros((rows, cols), dtype=np.uint8)
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != "db_index,query_index":
            raise FormatError(f"{path}: expected header 'db_index,query_index'")
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise FormatError(f"{path}: malformed line {lineno}")
            i, j = int(parts[0]), int(parts[1])
            if not (0 <= i < rows and 0 <= j < cols):
                raise FormatError(f"{path}: pair ({i},{j}) outside {rows}x{cols} at line {lineno}")
            values[i, j] = 1
    return GroundTruthMatrix(values, criterion)


def load_alignment(path, num_queries: int) -> tuple[int, ...]:
    pairs: dict[int, int] = {}
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != "query_index,db_index":
            raise FormatError(f"{path}: expected header 'query_index,db_index'")
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise FormatError(f"{path}: malformed line {lineno}")
            pairs[int(parts[0])] = int(parts[1])
    missing = [j for j in range(num_queries) if j not in pairs]
    if missing:
        raise FormatError(f"{path}: alignment missing for query {missing[0]}")
    return tuple(pairs[j] for j in range(num_queries))
