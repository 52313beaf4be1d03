"""Command-line interface.

Subcommands: gen, describe, standardize, compare, seqpost, gt, eval,
audit (fraction | gtdist | protocol | separability | structure), and
manifest validate.  Exit codes: 0 success, 1 usage error, 2 data error.
All randomness is governed by --seed / the config seed; no environment
variables are consulted.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from vpreval import descriptors, groundtruth, harness, similarity, synth
from vpreval.model import (
    DescriptorSet,
    FormatError,
    GtCriterion,
    read_manifest,
    save_manifest,
    validate_manifest,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # map argparse failures to exit code 1
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="vpreval", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--places", type=int, required=True)
    p.add_argument("--db-plan", required=True, help="plan DSL, e.g. 0..99 or 0..9,3x4,0..4")
    p.add_argument("--q-plan", required=True)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--spacing", type=float, default=1.0)
    p.add_argument("--aliasing-pairs", type=int, default=0)
    p.add_argument("--condition-strength", type=float, default=0.0)
    p.add_argument("--noise-strength", type=float, default=0.0)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--db-schedule", default="constant:0")
    p.add_argument("--q-schedule", default="constant:0")
    p.add_argument("--db-noise-ramp", type=float, default=1.0)
    p.add_argument("--q-noise-ramp", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("describe", help="pixel descriptors from a directory of PGM images")
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--patch", type=int, default=8)
    p.add_argument("--format", choices=("binary", "text"), default="binary")

    p = sub.add_parser("standardize", help="standardize a descriptor file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--by-cluster", type=int, default=0, metavar="K")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stats-in", help="apply previously saved stats instead of recomputing")
    p.add_argument("--stats-out", help="save the computed stats for reuse")
    p.add_argument("--format", choices=("binary", "text"), default="binary")

    p = sub.add_parser("compare", help="build a similarity matrix from two descriptor files")
    p.add_argument("--db", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--measure", choices=similarity.MEASURES, default="cosine")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("seqpost", help="sequence postprocessing of a similarity matrix")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=11)
    p.add_argument("--velocities", default="0.8:1.25:10")
    p.add_argument("--min-valid-fraction", type=float, default=0.5)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("gt", help="build a ground-truth pair file")
    gt_sub = p.add_subparsers(dest="gt_mode", required=True)
    gp = gt_sub.add_parser("poses")
    gp.add_argument("--db-poses", required=True)
    gp.add_argument("--q-poses", required=True)
    gp.add_argument("--d-max", type=float, required=True)
    gp.add_argument("--theta-max", type=float, required=True)
    gp.add_argument("--out", required=True)
    gi = gt_sub.add_parser("indices")
    gi.add_argument("--rows", type=int, required=True)
    gi.add_argument("--cols", type=int, required=True)
    gi.add_argument("--index-max", type=int, required=True)
    gi.add_argument("--alignment")
    gi.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="run the configured pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override output_dir")
    p.add_argument("--seed", type=int, help="override seed")
    p.add_argument("--workers", type=int, help="override workers")

    p = sub.add_parser("audit", help="comparability audits")
    audit_sub = p.add_subparsers(dest="audit_kind", required=True)
    pa = audit_sub.add_parser("fraction")
    pa.add_argument("--config", required=True)
    pa.add_argument("--fractions", type=int, required=True)
    pa.add_argument("--out")
    pa.add_argument("--seed", type=int)
    pa = audit_sub.add_parser("gtdist")
    pa.add_argument("--config", required=True)
    pa.add_argument("--index-max", type=int, action="append", default=[])
    pa.add_argument("--d-max", type=float, action="append", default=[])
    pa.add_argument("--theta-max", type=float, default=np.pi)
    pa.add_argument("--out")
    pa.add_argument("--seed", type=int)
    pa = audit_sub.add_parser("protocol")
    pa.add_argument("--config", required=True)
    pa.add_argument("--out")
    pa.add_argument("--seed", type=int)
    pa = audit_sub.add_parser("separability")
    pa.add_argument("--config", required=True)
    pa.add_argument("--bins", type=int, default=50)
    pa.add_argument("--out")
    pa.add_argument("--seed", type=int)
    pa = audit_sub.add_parser("structure")
    pa.add_argument("--gt", help="GT pair CSV")
    pa.add_argument("--rows", type=int)
    pa.add_argument("--cols", type=int)
    pa.add_argument("--config", help="build GT from a run config instead")

    p = sub.add_parser("manifest", help="manifest tools")
    man_sub = p.add_subparsers(dest="manifest_command", required=True)
    pm = man_sub.add_parser("validate")
    pm.add_argument("--path", required=True)
    pm.add_argument("--gt", help="GT pair CSV to cross-check structure")
    pm.add_argument("--rows", type=int)
    pm.add_argument("--cols", type=int)

    return parser


def _cmd_gen(args) -> int:
    world = synth.WorldConfig(
        num_places=args.places, dim=args.dim, place_spacing=args.spacing,
        aliasing_pairs=args.aliasing_pairs,
        condition_strength=args.condition_strength,
        noise_strength=args.noise_strength, viewpoint_jitter=args.jitter,
    )
    db_t = synth.TraversalConfig(synth.parse_plan(args.db_plan),
                                 synth.parse_schedule(args.db_schedule),
                                 noise_ramp=args.db_noise_ramp)
    q_t = synth.TraversalConfig(synth.parse_plan(args.q_plan),
                                synth.parse_schedule(args.q_schedule),
                                noise_ramp=args.q_noise_ramp)
    ds = synth.generate(world, db_t, q_t, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    descriptors.save_descriptors(ds.db, out / "db.vprb")
    descriptors.save_descriptors(ds.q, out / "q.vprb")
    descriptors.save_labels(ds.db.labels, out / "db_labels.csv")
    descriptors.save_labels(ds.q.labels, out / "q_labels.csv")
    groundtruth.save_poses(ds.db_poses, out / "db_poses.csv")
    groundtruth.save_poses(ds.q_poses, out / "q_poses.csv")
    groundtruth.save_gt_pairs(ds.gt, out / "gt_pairs.csv")
    synth.save_plan(db_t, out / "db_plan.csv")
    synth.save_plan(q_t, out / "q_plan.csv")
    save_manifest(ds.manifest, out / "manifest.txt")
    print(f"wrote dataset ({ds.db.count}x{ds.q.count}) to {out}")
    return 0


def _cmd_describe(args) -> int:
    config = descriptors.PixelDescriptorConfig(
        target_width=args.width, target_height=args.height, patch_size=args.patch
    )
    images = sorted(Path(args.images).glob("*.pgm"))
    if not images:
        raise FormatError(f"no .pgm files in {args.images}")
    rows = [descriptors.pixel_descriptor(descriptors.load_pgm(p), config) for p in images]
    dset = DescriptorSet(np.vstack(rows))
    descriptors.save_descriptors(dset, args.out, fmt=args.format)
    print(f"wrote {dset.count} descriptors of dimension {dset.dim} to {args.out}")
    return 0


def _cmd_standardize(args) -> int:
    dset = descriptors.load_descriptors(args.input)
    if args.stats_in and (args.by_cluster or args.stats_out):
        raise UsageError("--stats-in excludes --by-cluster/--stats-out")
    if args.stats_in:
        stats = descriptors.load_stats(args.stats_in)
        out = descriptors.apply_standardization(dset, stats)
    elif args.by_cluster:
        labels = descriptors.cluster_conditions(dset, args.by_cluster, args.seed)
        out = descriptors.standardize_by_cluster(dset, labels)
    else:
        out, stats = descriptors.standardize(dset)
        if args.stats_out:
            descriptors.save_stats(stats, args.stats_out)
    descriptors.save_descriptors(out, args.out, fmt=args.format)
    print(f"wrote standardized descriptors to {args.out}")
    return 0


def _cmd_compare(args) -> int:
    db = descriptors.load_descriptors(args.db)
    q = descriptors.load_descriptors(args.q)
    S = similarity.build_matrix(db, q, args.measure, workers=args.workers)
    similarity.save_similarity(S, args.out)
    print(f"wrote {S.rows}x{S.cols} similarity matrix to {args.out}")
    return 0


def _cmd_seqpost(args) -> int:
    S = similarity.load_similarity(args.input)
    cfg = similarity.SeqPostConfig(
        window_length=args.window,
        velocities=harness.parse_velocities(args.velocities),
        min_valid_fraction=args.min_valid_fraction,
    )
    out = similarity.seq_postprocess(S, cfg, workers=args.workers)
    similarity.save_similarity(out, args.out)
    print(f"wrote postprocessed matrix to {args.out}")
    return 0


def _cmd_gt(args) -> int:
    if args.gt_mode == "poses":
        criterion = GtCriterion("poses", d_max=args.d_max, theta_max=args.theta_max)
        gt = groundtruth.gt_from_poses(
            groundtruth.load_poses(args.db_poses),
            groundtruth.load_poses(args.q_poses),
            criterion,
        )
    else:
        alignment = None
        if args.alignment:
            alignment = groundtruth.load_alignment(args.alignment, args.cols)
        criterion = GtCriterion("indices", index_max=args.index_max, alignment=alignment)
        gt = groundtruth.gt_from_indices(args.rows, args.cols, criterion)
    groundtruth.save_gt_pairs(gt, args.out)
    print(f"wrote {gt.num_positives} GT pairs ({gt.rows}x{gt.cols}) to {args.out}")
    return 0


def _load_config(args) -> harness.RunConfig:
    cfg = harness.load_config(args.config)
    changes = {}
    if getattr(args, "out", None):
        changes["output_dir"] = args.out
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    return replace(cfg, **changes) if changes else cfg


def _cmd_eval(args) -> int:
    run_dir = harness.run_pipeline(_load_config(args))
    with open(run_dir / "metrics.csv", "r", encoding="utf-8") as f:
        print(f.read(), end="")
    print(f"run directory: {run_dir}")
    return 0


def _print_report(report: harness.AuditReport) -> None:
    print(f"audit: {report.kind}")
    for name, scalars in report.variants.items():
        parts = ", ".join(f"{k}={v:.6f}" for k, v in sorted(scalars.items()))
        print(f"  {name}: {parts}")
    print(f"spread (AUC): {report.spread:.6f}")
    for flag in report.flags:
        print(f"flag: {flag}")
    for warning in report.warnings:
        print(f"warning: {warning}")


def _cmd_audit(args) -> int:
    if args.audit_kind == "structure":
        return _cmd_structure(args)
    cfg = _load_config(args)
    if args.audit_kind == "fraction":
        report = harness.audit_fraction(cfg, args.fractions)
    elif args.audit_kind == "gtdist":
        if args.index_max and args.d_max:
            raise UsageError("use either --index-max or --d-max criteria, not both")
        if args.index_max:
            criteria = [GtCriterion("indices", index_max=k) for k in args.index_max]
        elif args.d_max:
            criteria = [GtCriterion("poses", d_max=d, theta_max=args.theta_max)
                        for d in args.d_max]
        else:
            raise UsageError("gtdist needs at least two --index-max or --d-max values")
        report = harness.audit_gt_threshold(cfg, criteria)
    elif args.audit_kind == "protocol":
        report = harness.audit_protocol(cfg)
    else:
        report = harness.audit_separability(cfg, bins=args.bins)
    _print_report(report)
    return 0


def _cmd_structure(args) -> int:
    if args.config:
        cfg = harness.load_config(args.config)
        inputs = harness.load_inputs(cfg)
        gt = harness.build_gt(cfg, inputs, inputs.db.count, inputs.q.count)
    elif args.gt and args.rows and args.cols:
        gt = groundtruth.load_gt_pairs(args.gt, args.rows, args.cols)
    else:
        raise UsageError("structure needs --config or --gt with --rows/--cols")
    report = groundtruth.structure_report(gt)
    print(f"loop_queries = {report.loop_queries}")
    print(f"stop_segments_db = {';'.join(f'{a}-{b}' for a, b in report.stop_segments_db)}")
    print(f"stop_segments_q = {';'.join(f'{a}-{b}' for a, b in report.stop_segments_q)}")
    print(f"stop_rectangles = {report.stop_rectangles}")
    print(f"exploration_queries = {report.exploration_queries}")
    hist = ";".join(f"{k}:{v}" for k, v in report.per_query_match_counts.items())
    print(f"match_count_histogram = {hist}")
    return 0


def _cmd_manifest(args) -> int:
    manifest = read_manifest(args.path)
    gt = None
    if args.gt:
        if not args.rows or not args.cols:
            raise UsageError("--gt needs --rows and --cols")
        gt = groundtruth.load_gt_pairs(args.gt, args.rows, args.cols)
    violations = validate_manifest(manifest, gt)
    if violations:
        for v in violations:
            print(v)
        return 2
    print("manifest valid")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "gen":
            return _cmd_gen(args)
        if args.command == "describe":
            return _cmd_describe(args)
        if args.command == "standardize":
            return _cmd_standardize(args)
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "seqpost":
            return _cmd_seqpost(args)
        if args.command == "gt":
            return _cmd_gt(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "audit":
            return _cmd_audit(args)
        if args.command == "manifest":
            return _cmd_manifest(args)
        raise UsageError(f"unknown command: {args.command}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, ValueError, OSError, harness.PipelineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
