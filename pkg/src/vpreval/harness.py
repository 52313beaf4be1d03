"""Pipeline orchestration from flat config files, plus the comparability
audits: dataset-fraction sensitivity, ground-truth-threshold sensitivity,
protocol divergence, and condition separability.

A run directory always contains manifest.txt (with run metrics echoed as
trailing comments), similarity.vprs, sweep.csv and metrics.csv, and is
byte-identical when rerun with identical inputs at any worker count.
Config files use the same ``key = value`` dialect as manifests.
"""

from __future__ import annotations

import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from vpreval import descriptors, groundtruth, metrics, similarity, synth
from vpreval.model import (
    DescriptorSet,
    ExperimentManifest,
    GroundTruthMatrix,
    GtCriterion,
    MANIFEST_KEYS,
    PoseTrack,
    SimilarityMatrix,
    SweepResult,
    parse_kv_text,
    parse_manifest,
    write_manifest,
)


class PipelineError(RuntimeError):
    """A pipeline stage failed; the stage name prefixes the message."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage


_BASE_KEYS = {
    "source", "output_dir", "seed", "workers",
    "db_descriptors", "q_descriptors", "db_labels", "q_labels",
    "db_poses", "q_poses",
    "synth_places", "synth_dim", "synth_spacing", "synth_aliasing_pairs",
    "synth_condition_strength", "synth_noise_strength", "synth_jitter",
    "synth_db_plan", "synth_q_plan", "synth_db_schedule", "synth_q_schedule",
    "synth_db_noise_ramp", "synth_q_noise_ramp",
    "chain", "measure",
    "seqpost", "seqpost_window", "seqpost_velocities", "seqpost_min_valid_fraction",
    "gt_source", "gt_d_max_m", "gt_theta_max_rad", "gt_index_max",
    "gt_alignment", "gt_pairs",
    "protocol", "thresholds", "recall_k",
}


def parse_velocities(spec: str) -> tuple[float, ...]:
    """``a:b:k`` for k values evenly spanning [a, b], or comma-separated floats."""
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"velocity spec must be a:b:k or comma list: {spec!r}")
        return tuple(np.linspace(float(parts[0]), float(parts[1]), int(parts[2])))
    return tuple(float(p) for p in spec.split(","))


def parse_chain(spec: str) -> tuple[str, ...]:
    if spec.strip() in ("", "none"):
        return ()
    tags = tuple(t.strip() for t in spec.split(","))
    for tag in tags:
        if tag == "standardize":
            continue
        if tag.startswith("standardize_by_cluster:"):
            k = tag.partition(":")[2]
            if k.isdigit() and int(k) >= 1:
                continue
        raise ValueError(f"unknown preprocessing tag: {tag!r}")
    return tags


@dataclass(frozen=True)
class RunConfig:
    """Everything one evaluation run depends on."""

    source: str
    output_dir: str | None = None
    seed: int = 0
    workers: int = 1
    db_descriptors: str | None = None
    q_descriptors: str | None = None
    db_labels: str | None = None
    q_labels: str | None = None
    db_poses: str | None = None
    q_poses: str | None = None
    synth_places: int = 0
    synth_dim: int = 128
    synth_spacing: float = 1.0
    synth_aliasing_pairs: int = 0
    synth_condition_strength: float = 0.0
    synth_noise_strength: float = 0.0
    synth_jitter: float = 0.0
    synth_db_plan: str | None = None
    synth_q_plan: str | None = None
    synth_db_schedule: str = "constant:0"
    synth_q_schedule: str = "constant:0"
    synth_db_noise_ramp: float = 1.0
    synth_q_noise_ramp: float = 1.0
    chain: tuple[str, ...] = ()
    measure: str = "cosine"
    seqpost: bool = False
    seqpost_window: int = 11
    seqpost_velocities: tuple[float, ...] = tuple(np.linspace(0.8, 1.25, 10))
    seqpost_min_valid_fraction: float = 0.5
    gt_source: str | None = None
    gt_d_max_m: float | None = None
    gt_theta_max_rad: float | None = None
    gt_index_max: int | None = None
    gt_alignment: str | None = None
    gt_pairs: str | None = None
    protocol: str = "all_matchings"
    thresholds: int = 100
    recall_k: tuple[int, ...] = ()
    manifest_overrides: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.source not in ("files", "synth"):
            raise ValueError(f"source must be files or synth, got {self.source!r}")
        if self.measure not in similarity.MEASURES:
            raise ValueError(f"unknown measure: {self.measure!r}")
        if self.protocol not in ("all_matchings", "single_best"):
            raise ValueError(f"unknown protocol: {self.protocol!r}")
        if self.thresholds < 2:
            raise ValueError("thresholds must be >= 2")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def seq_config(self) -> similarity.SeqPostConfig:
        return similarity.SeqPostConfig(
            window_length=self.seqpost_window,
            velocities=self.seqpost_velocities,
            min_valid_fraction=self.seqpost_min_valid_fraction,
        )


def config_from_pairs(pairs: dict[str, str]) -> RunConfig:
    kwargs: dict[str, object] = {}
    overrides: dict[str, str] = {}
    for key, raw in pairs.items():
        if key.startswith("manifest_"):
            mkey = key[len("manifest_"):]
            if mkey not in MANIFEST_KEYS:
                raise ValueError(f"unknown manifest override key: {key}")
            overrides[mkey] = raw
            continue
        if key not in _BASE_KEYS:
            raise ValueError(f"unknown config key: {key}")
        if key in ("seed", "workers", "synth_places", "synth_dim",
                   "synth_aliasing_pairs", "seqpost_window", "gt_index_max",
                   "thresholds"):
            kwargs[key] = int(raw)
        elif key in ("synth_spacing", "synth_condition_strength",
                     "synth_noise_strength", "synth_jitter",
                     "synth_db_noise_ramp", "synth_q_noise_ramp",
                     "seqpost_min_valid_fraction", "gt_d_max_m",
                     "gt_theta_max_rad"):
            kwargs[key] = float(raw)
        elif key == "seqpost":
            kwargs[key] = raw in ("1", "true")
        elif key == "seqpost_velocities":
            kwargs[key] = parse_velocities(raw)
        elif key == "chain":
            kwargs[key] = parse_chain(raw)
        elif key == "recall_k":
            kwargs[key] = tuple(int(p) for p in raw.split(",")) if raw else ()
        else:
            kwargs[key] = raw
    return RunConfig(**kwargs, manifest_overrides=overrides)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        pairs, issues = parse_kv_text(f.read())
    if issues:
        raise ValueError(f"{path}: {'; '.join(issues)}")
    return config_from_pairs(pairs)


# --- input loading -----------------------------------------------------------

@dataclass
class PipelineInputs:
    db: DescriptorSet
    q: DescriptorSet
    db_poses: PoseTrack | None
    q_poses: PoseTrack | None
    identity_gt: GroundTruthMatrix | None
    manifest: ExperimentManifest


def _plan_of(spec: str) -> tuple[int, ...]:
    if spec.endswith(".csv"):
        return synth.load_plan(spec)
    return synth.parse_plan(spec)


def synth_configs(cfg: RunConfig) -> tuple[synth.WorldConfig, synth.TraversalConfig, synth.TraversalConfig]:
    if not cfg.synth_db_plan or not cfg.synth_q_plan:
        raise ValueError("synth source requires synth_db_plan and synth_q_plan")
    world = synth.WorldConfig(
        num_places=cfg.synth_places,
        dim=cfg.synth_dim,
        place_spacing=cfg.synth_spacing,
        aliasing_pairs=cfg.synth_aliasing_pairs,
        condition_strength=cfg.synth_condition_strength,
        noise_strength=cfg.synth_noise_strength,
        viewpoint_jitter=cfg.synth_jitter,
    )
    db_t = synth.TraversalConfig(
        _plan_of(cfg.synth_db_plan),
        synth.parse_schedule(cfg.synth_db_schedule),
        noise_ramp=cfg.synth_db_noise_ramp,
    )
    q_t = synth.TraversalConfig(
        _plan_of(cfg.synth_q_plan),
        synth.parse_schedule(cfg.synth_q_schedule),
        noise_ramp=cfg.synth_q_noise_ramp,
    )
    return world, db_t, q_t


def load_inputs(cfg: RunConfig) -> PipelineInputs:
    if cfg.source == "synth":
        world, db_t, q_t = synth_configs(cfg)
        ds = synth.generate(world, db_t, q_t, cfg.seed)
        return PipelineInputs(ds.db, ds.q, ds.db_poses, ds.q_poses, ds.gt, ds.manifest)
    if not cfg.db_descriptors or not cfg.q_descriptors:
        raise ValueError("files source requires db_descriptors and q_descriptors")
    db = descriptors.load_descriptors(cfg.db_descriptors)
    q = descriptors.load_descriptors(cfg.q_descriptors)
    if cfg.db_labels:
        db = DescriptorSet(db.data, labels=descriptors.load_labels(cfg.db_labels))
    if cfg.q_labels:
        q = DescriptorSet(q.data, labels=descriptors.load_labels(cfg.q_labels))
    db_poses = groundtruth.load_poses(cfg.db_poses) if cfg.db_poses else None
    q_poses = groundtruth.load_poses(cfg.q_poses) if cfg.q_poses else None
    override_lines = "\n".join(f"{k} = {v}" for k, v in cfg.manifest_overrides.items())
    manifest = parse_manifest(override_lines)
    manifest = manifest.updated(
        d1_scale=(db.count, q.count),
        db_hash=db.source_hash,
        q_hash=q.source_hash,
        seed=cfg.seed,
    )
    return PipelineInputs(db, q, db_poses, q_poses, None, manifest)


def apply_chain(cfg: RunConfig, dset: DescriptorSet) -> DescriptorSet:
    """Run the preprocessing chain in declared order on one descriptor set."""
    out = dset
    for tag in cfg.chain:
        if tag == "standardize":
            out, _ = descriptors.standardize(out)
        elif tag.startswith("standardize_by_cluster:"):
            k = int(tag.partition(":")[2])
            labels = descriptors.cluster_conditions(out, k, cfg.seed)
            out = descriptors.standardize_by_cluster(out, labels)
        else:
            raise ValueError(f"unknown preprocessing tag: {tag!r}")
    return out


def build_gt(cfg: RunConfig, inputs: PipelineInputs, n: int, m: int) -> GroundTruthMatrix:
    source = cfg.gt_source or ("place_identity" if cfg.source == "synth" else None)
    if source == "place_identity":
        if inputs.identity_gt is None:
            raise ValueError("place_identity ground truth requires the synth source")
        return inputs.identity_gt
    if source == "poses":
        if inputs.db_poses is None or inputs.q_poses is None:
            raise ValueError("poses ground truth requires db and q pose tracks")
        if cfg.gt_d_max_m is None or cfg.gt_theta_max_rad is None:
            raise ValueError("poses ground truth requires gt_d_max_m and gt_theta_max_rad")
        criterion = GtCriterion("poses", d_max=cfg.gt_d_max_m, theta_max=cfg.gt_theta_max_rad)
        return groundtruth.gt_from_poses(inputs.db_poses, inputs.q_poses, criterion)
    if source == "indices":
        if cfg.gt_index_max is None:
            raise ValueError("indices ground truth requires gt_index_max")
        alignment = groundtruth.load_alignment(cfg.gt_alignment, m) if cfg.gt_alignment else None
        criterion = GtCriterion("indices", index_max=cfg.gt_index_max, alignment=alignment)
        return groundtruth.gt_from_indices(n, m, criterion)
    if source == "pairs":
        if not cfg.gt_pairs:
            raise ValueError("pairs ground truth requires gt_pairs")
        return groundtruth.load_gt_pairs(cfg.gt_pairs, n, m)
    raise ValueError(f"unknown gt_source: {source!r}")


def _manifest_gt_fields(gt: GroundTruthMatrix) -> dict[str, object]:
    c = gt.criterion
    if c is None:
        return {}
    if c.mode == "poses":
        return {"gt_mode": "poses", "gt_d_max_m": c.d_max,
                "gt_theta_max_rad": c.theta_max, "gt_index_max": None}
    return {"gt_mode": "indices", "gt_index_max": c.index_max,
            "gt_d_max_m": None, "gt_theta_max_rad": None}


# --- evaluation and output writing -------------------------------------------

@dataclass
class Evaluation:
    sweep: SweepResult
    scalars: dict[str, float]
    notes: tuple[str, ...] = ()


def evaluate_matrix(S_values: np.ndarray, gt_values: np.ndarray, protocol: str,
                    threshold_count: int, recall_ks: tuple[int, ...] = ()) -> Evaluation:
    thresholds = metrics.make_thresholds(S_values, threshold_count)
    if protocol == "single_best":
        sweep = metrics.sweep_single_best(S_values, gt_values, thresholds)
    else:
        sweep = metrics.sweep_all_matchings(S_values, gt_values, thresholds)
    scalars = metrics.scalar_metrics(sweep)
    notes: tuple[str, ...] = ()
    if scalars["auc"] == 0.0 and sweep.tp.max() == 0:
        notes = ("degenerate: no threshold retrieved a true positive",)
    for k in recall_ks:
        scalars[f"recall_at_{k}"] = metrics.recall_at_k(S_values, gt_values, k)
    return Evaluation(sweep, scalars, notes)


def _write_run_outputs(run_dir: Path, manifest: ExperimentManifest,
                       scalars: dict[str, float], sweep, S: SimilarityMatrix | None,
                       written: list[Path]) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    comments = [f"metric {name} = {repr(float(value))}" for name, value in scalars.items()]
    manifest_path = run_dir / "manifest.txt"
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(write_manifest(manifest, comments))
    written.append(manifest_path)
    if S is not None:
        sim_path = run_dir / "similarity.vprs"
        similarity.save_similarity(S, sim_path)
        written.append(sim_path)
    sweep_path = run_dir / "sweep.csv"
    with open(sweep_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(metrics.sweep_csv(sweep))
    written.append(sweep_path)
    metrics_path = run_dir / "metrics.csv"
    with open(metrics_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(metrics.metrics_csv(scalars))
    written.append(metrics_path)


def run_pipeline(cfg: RunConfig) -> Path:
    """Execute the configured pipeline; returns the run directory.

    Any stage error aborts with the stage name and removes partial
    outputs.  Reruns with identical inputs are byte-identical.
    """
    if not cfg.output_dir:
        raise ValueError("output_dir is required")
    out = Path(cfg.output_dir)
    created_dir = not out.exists()
    written: list[Path] = []
    stage = "config"
    try:
        stage = "inputs"
        inputs = load_inputs(cfg)
        stage = "preprocess"
        db = apply_chain(cfg, inputs.db)
        q = apply_chain(cfg, inputs.q)
        chain_tags = tuple(cfg.chain)
        stage = "similarity"
        S = similarity.build_matrix(db, q, cfg.measure, workers=cfg.workers)
        stage = "seqpost"
        if cfg.seqpost:
            S = similarity.seq_postprocess(S, cfg.seq_config, workers=cfg.workers)
            chain_tags = chain_tags + (S.postprocess_tag,)
        stage = "ground_truth"
        gt = build_gt(cfg, inputs, db.count, q.count)
        stage = "evaluate"
        ev = evaluate_matrix(S.values, gt.values, cfg.protocol, cfg.thresholds, cfg.recall_k)
        manifest = inputs.manifest.updated(
            preprocessing_chain=chain_tags,
            protocol=cfg.protocol,
            **_manifest_gt_fields(gt),
        )
        stage = "write"
        _write_run_outputs(out, manifest, ev.scalars, ev.sweep, S, written)
    except Exception as exc:
        for path in written:
            path.unlink(missing_ok=True)
        if created_dir and out.exists():
            shutil.rmtree(out, ignore_errors=True)
        raise PipelineError(stage, exc) from exc
    return out


# --- audits -------------------------------------------------------------------

@dataclass(frozen=True)
class AuditReport:
    """Per-variant scalar metrics plus the spread that makes results
    incomparable across setups; embeds each variant's exact manifest."""

    kind: str
    variants: dict[str, dict[str, float]]
    spread: float
    files: tuple[str, ...]
    flags: tuple[str, ...]
    warnings: tuple[str, ...]
    manifests: dict[str, str]

    def __post_init__(self):
        if len(self.variants) < 2:
            raise ValueError("an audit needs at least 2 variants")
        if self.spread < 0:
            raise ValueError("spread must be >= 0")


_SCALAR_COLUMNS = ("auc", "max_f1", "recall_at_100_precision", "extended_precision")


def _report_csv(variants: dict[str, dict[str, float]]) -> str:
    lines = ["variant," + ",".join(_SCALAR_COLUMNS)]
    for name, scalars in variants.items():
        row = ",".join(repr(float(scalars.get(col, 0.0))) for col in _SCALAR_COLUMNS)
        lines.append(f"{name},{row}")
    return "\n".join(lines) + "\n"


def _plot_script(kind: str, variant_names: list[str]) -> str:
    lines = [
        "# gnuplot script: precision-recall curves per variant",
        "set datafile separator ','",
        "set xlabel 'recall'",
        "set ylabel 'precision'",
        "set xrange [0:1]",
        "set yrange [0:1]",
        f"set title '{kind} audit'",
    ]
    if variant_names:
        lines.append("plot \\")
        plots = [
            f"  'variants/{name}/sweep.csv' using 6:5 with linespoints title '{name}'"
            for name in variant_names
        ]
        lines.append(", \\\n".join(plots))
    else:
        lines.append("# no variant produced a curve")
    return "\n".join(lines) + "\n"


def _write_report(out: Path, report: AuditReport, extra_lines: list[str]) -> None:
    with open(out / "report.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write(_report_csv(report.variants))
    lines = [f"audit = {report.kind}", f"spread = {repr(report.spread)}"]
    for flag in report.flags:
        lines.append(f"flag = {flag}")
    for warning in report.warnings:
        lines.append(f"warning = {warning}")
    lines.extend(extra_lines)
    for name in report.variants:
        lines.append(f"variant_dir = variants/{name}")
    with open(out / "report.txt", "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    # flagged variants have no sweep to plot
    plottable = [n for n in report.variants if (out / "variants" / n / "sweep.csv").exists()]
    with open(out / "plot.gp", "w", encoding="utf-8", newline="\n") as f:
        f.write(_plot_script(report.kind, plottable))


def _run_variant(cfg: RunConfig, out: Path, name: str,
                 db: DescriptorSet, q: DescriptorSet,
                 gt_values: np.ndarray, manifest: ExperimentManifest,
                 protocol: str | None = None,
                 precomputed: SimilarityMatrix | None = None):
    """Full pipeline on one variant; returns (scalars, manifest_text, flags)."""
    protocol = protocol or cfg.protocol
    flags: list[str] = []
    if precomputed is None:
        db2 = apply_chain(cfg, db)
        q2 = apply_chain(cfg, q)
        S = similarity.build_matrix(db2, q2, cfg.measure, workers=cfg.workers)
        chain_tags = tuple(cfg.chain)
        if cfg.seqpost:
            S = similarity.seq_postprocess(S, cfg.seq_config, workers=cfg.workers)
            chain_tags = chain_tags + (S.postprocess_tag,)
    else:
        S = precomputed
        chain_tags = tuple(cfg.chain)
        if cfg.seqpost:
            chain_tags = chain_tags + (S.postprocess_tag,)
    positives = int(np.asarray(gt_values).sum())
    if positives == 0:
        flags.append(f"{name}: zero ground-truth positives, metrics skipped")
        scalars = {c: 0.0 for c in _SCALAR_COLUMNS}
        sweep = None
    else:
        ev = evaluate_matrix(S.values, gt_values, protocol, cfg.thresholds)
        scalars = ev.scalars
        sweep = ev.sweep
        flags.extend(f"{name}: {note}" for note in ev.notes)
    manifest = manifest.updated(
        preprocessing_chain=chain_tags,
        protocol=protocol,
        d1_scale=(db.count, q.count),
    )
    written: list[Path] = []
    vdir = out / "variants" / name
    if sweep is not None:
        S_out = S if S.values.ndim == 2 else None
        _write_run_outputs(vdir, manifest, scalars, sweep, S_out, written)
    else:
        vdir.mkdir(parents=True, exist_ok=True)
        with open(vdir / "manifest.txt", "w", encoding="utf-8", newline="\n") as f:
            f.write(write_manifest(manifest))
    return scalars, write_manifest(manifest), flags


def _slice_set(dset: DescriptorSet, idx: np.ndarray) -> DescriptorSet:
    labels = dset.labels[idx] if dset.labels is not None else None
    return DescriptorSet(dset.data[idx], labels=labels)


def audit_fraction(cfg: RunConfig, num_fractions: int) -> AuditReport:
    """Evaluate the pipeline on contiguous dataset fractions plus a uniform
    subsample of equal size; different fractions of the same data can
    produce very different curves."""
    if num_fractions < 2:
        raise ValueError("num_fractions must be >= 2")
    if not cfg.output_dir:
        raise ValueError("output_dir is required")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs = load_inputs(cfg)
    if inputs.db.count != inputs.q.count:
        raise ValueError("fraction audit requires equally long db and q sequences")
    m = inputs.q.count
    base = m // num_fractions
    if base < 10:
        raise ValueError(f"slice smaller than 10 frames ({base})")
    full_gt = build_gt(cfg, inputs, inputs.db.count, inputs.q.count)

    index_sets: list[tuple[str, np.ndarray]] = []
    for s in range(num_fractions):
        lo = s * base
        hi = (s + 1) * base if s < num_fractions - 1 else m  # remainder to last slice
        index_sets.append((f"slice_{s}", np.arange(lo, hi)))
    index_sets.append(("uniform_subsample", np.arange(0, m, num_fractions)[:base]))

    variants: dict[str, dict[str, float]] = {}
    manifests: dict[str, str] = {}
    flags: list[str] = []
    slice_aucs: list[float] = []
    for name, idx in index_sets:
        db_v = _slice_set(inputs.db, idx)
        q_v = _slice_set(inputs.q, idx)
        gt_v = full_gt.values[np.ix_(idx, idx)]
        manifest = inputs.manifest.updated(
            db_hash=db_v.source_hash, q_hash=q_v.source_hash,
            **_manifest_gt_fields(full_gt),
        )
        scalars, mtext, vflags = _run_variant(cfg, out, name, db_v, q_v, gt_v, manifest)
        variants[name] = scalars
        manifests[name] = mtext
        flags.extend(vflags)
        if name.startswith("slice_"):
            slice_aucs.append(scalars["auc"])
    spread = max(slice_aucs) - min(slice_aucs)
    report = AuditReport("fraction", variants, spread, _report_files(out),
                         tuple(flags), (), manifests)
    _write_report(out, report, [f"fractions = {num_fractions}", f"slice_frames = {base}"])
    return report


def audit_gt_threshold(cfg: RunConfig, criteria: list[GtCriterion]) -> AuditReport:
    """One evaluation per ground-truth criterion over the same similarity
    matrix; the metric depends on a choice the matrix knows nothing about."""
    if len(criteria) < 2:
        raise ValueError("need at least 2 criteria")
    if len({c.mode for c in criteria}) != 1:
        raise ValueError("criteria must share a mode")
    if not cfg.output_dir:
        raise ValueError("output_dir is required")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs = load_inputs(cfg)
    db = apply_chain(cfg, inputs.db)
    q = apply_chain(cfg, inputs.q)
    S = similarity.build_matrix(db, q, cfg.measure, workers=cfg.workers)
    if cfg.seqpost:
        S = similarity.seq_postprocess(S, cfg.seq_config, workers=cfg.workers)

    variants: dict[str, dict[str, float]] = {}
    manifests: dict[str, str] = {}
    flags: list[str] = []
    positives: list[int] = []
    for i, criterion in enumerate(criteria):
        if criterion.mode == "poses":
            if inputs.db_poses is None or inputs.q_poses is None:
                raise ValueError("poses criteria require pose tracks")
            gt = groundtruth.gt_from_poses(inputs.db_poses, inputs.q_poses, criterion)
            name = f"gt_{i}_dmax_{criterion.d_max}"
        else:
            gt = groundtruth.gt_from_indices(db.count, q.count, criterion)
            name = f"gt_{i}_imax_{criterion.index_max}"
        positives.append(gt.num_positives)
        manifest = inputs.manifest.updated(**_manifest_gt_fields(gt))
        scalars, mtext, vflags = _run_variant(cfg, out, name, inputs.db, inputs.q,
                                              gt.values, manifest, precomputed=S)
        variants[name] = scalars
        manifests[name] = mtext
        flags.extend(vflags)
    aucs = [v["auc"] for v in variants.values()]
    report = AuditReport("gt_threshold", variants, max(aucs) - min(aucs),
                         _report_files(out), tuple(flags), (), manifests)
    extra = [f"gt_positives = {','.join(str(p) for p in positives)}"]
    _write_report(out, report, extra)
    return report


def audit_protocol(cfg: RunConfig) -> AuditReport:
    """The same similarity matrix and ground truth evaluated under the
    all-matchings and single-best protocols side by side."""
    if not cfg.output_dir:
        raise ValueError("output_dir is required")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs = load_inputs(cfg)
    db = apply_chain(cfg, inputs.db)
    q = apply_chain(cfg, inputs.q)
    S = similarity.build_matrix(db, q, cfg.measure, workers=cfg.workers)
    if cfg.seqpost:
        S = similarity.seq_postprocess(S, cfg.seq_config, workers=cfg.workers)
    gt = build_gt(cfg, inputs, db.count, q.count)

    warnings: list[str] = []
    if int(gt.values.sum(axis=0).max()) < 2:
        warnings.append("degenerate: no query has 2 or more positives; protocols coincide")

    variants: dict[str, dict[str, float]] = {}
    manifests: dict[str, str] = {}
    flags: list[str] = []
    base_manifest = inputs.manifest.updated(**_manifest_gt_fields(gt))
    for protocol in ("all_matchings", "single_best"):
        scalars, mtext, vflags = _run_variant(
            cfg, out, protocol, inputs.db, inputs.q, gt.values,
            base_manifest, protocol=protocol, precomputed=S,
        )
        variants[protocol] = scalars
        manifests[protocol] = mtext
        flags.extend(vflags)
    spread = abs(variants["all_matchings"]["auc"] - variants["single_best"]["auc"])
    report = AuditReport("protocol", variants, spread, _report_files(out),
                         tuple(flags), tuple(warnings), manifests)
    _write_report(out, report, [])
    return report


def audit_separability(cfg: RunConfig, bins: int = 50) -> AuditReport:
    """Conditional similarity histograms: can same-place pairs be told from
    different-place pairs once conditions change within a sequence?

    Flags when p(s | same place) overlaps the within-condition
    different-place distribution more than the cross-condition one.
    """
    if not cfg.output_dir:
        raise ValueError("output_dir is required")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs = load_inputs(cfg)
    if inputs.db.labels is None or inputs.q.labels is None:
        raise ValueError("separability audit requires condition labels for db and q")
    db = apply_chain(cfg, inputs.db)
    q = apply_chain(cfg, inputs.q)
    S = similarity.build_matrix(db, q, cfg.measure, workers=cfg.workers)
    if cfg.seqpost:
        S = similarity.seq_postprocess(S, cfg.seq_config, workers=cfg.workers)
    gt = build_gt(cfg, inputs, db.count, q.count)

    la = inputs.db.labels
    lb = inputs.q.labels
    hists = synth.conditional_histograms(S.values, gt.values, la, lb, bins)

    same_cond = la[:, None] == lb[None, :]
    gtv = gt.values
    masks = {
        "all_cells": np.ones_like(gtv, dtype=bool),
        "within_condition_cells": same_cond,
        "cross_condition_cells": ~same_cond,
    }
    edges = hists.edges

    def pooled(mask: np.ndarray) -> np.ndarray | None:
        total = int(mask.sum())
        if total == 0:
            return None
        counts, _ = np.histogram(S.values[mask], bins=edges)
        return counts.astype(np.float64) / total

    h_same = pooled(gtv == 1)
    h_within = pooled((gtv == 0) & same_cond)
    h_cross = pooled((gtv == 0) & ~same_cond)

    warnings: list[str] = []
    flags: list[str] = []
    if len(set(np.concatenate((la, lb)))) < 2:
        warnings.append("single condition: two-group report")
    overlap_within = synth.histogram_overlap(h_same, h_within) if h_same is not None and h_within is not None else None
    overlap_cross = synth.histogram_overlap(h_same, h_cross) if h_same is not None and h_cross is not None else None
    if overlap_within is None:
        warnings.append("no within-condition different-place cells")
    elif overlap_cross is not None and overlap_within > overlap_cross:
        flags.append(
            "within-condition distractors overlap same-place similarities more "
            f"than cross-condition ones ({repr(overlap_within)} > {repr(overlap_cross)})"
        )

    variants: dict[str, dict[str, float]] = {}
    manifests: dict[str, str] = {}
    base_manifest = inputs.manifest.updated(**_manifest_gt_fields(gt))
    for name, mask in masks.items():
        if not mask.any():
            continue
        cells = S.values[mask][None, :]
        gt_cells = gtv[mask][None, :]
        S_sub = SimilarityMatrix(cells, measure_tag=S.measure_tag,
                                 postprocess_tag=S.postprocess_tag)
        scalars, mtext, vflags = _run_variant(
            cfg, out, name, inputs.db, inputs.q, gt_cells, base_manifest,
            protocol="all_matchings", precomputed=S_sub,
        )
        variants[name] = scalars
        manifests[name] = mtext
        flags.extend(vflags)

    hist_lines = ["kind,label_a,label_b,bin_lo,bin_hi,mass"]
    for (kind, (a, b)), hist in sorted(hists.groups.items()):
        for k, mass in enumerate(hist):
            hist_lines.append(
                f"{kind},{a},{b},{repr(float(edges[k]))},{repr(float(edges[k + 1]))},{repr(float(mass))}"
            )
    with open(out / "histograms.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(hist_lines) + "\n")

    aucs = [v["auc"] for v in variants.values()]
    extra = []
    if overlap_within is not None:
        extra.append(f"overlap_same_vs_within = {repr(overlap_within)}")
    if overlap_cross is not None:
        extra.append(f"overlap_same_vs_cross = {repr(overlap_cross)}")
    report = AuditReport("separability", variants, max(aucs) - min(aucs),
                         _report_files(out) + (str(out / "histograms.csv"),),
                         tuple(flags), tuple(warnings), manifests)
    _write_report(out, report, extra)
    return report


def _report_files(out: Path) -> tuple[str, ...]:
    return (str(out / "report.txt"), str(out / "report.csv"), str(out / "plot.gp"))
