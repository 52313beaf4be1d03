"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines.  Every tolerance is pinned here; nothing is deferred to later
calibration.
"""

import hashlib
import time
from pathlib import Path

import numpy as np

from vpreval import descriptors, groundtruth, harness, metrics, similarity, synth
from vpreval.model import GtCriterion, PoseTrack


def _report(num: int, ok: bool, detail: str) -> None:
    print(f"[criterion {num:02d}] {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


# --- criterion 1: metric oracle equivalence -----------------------------------------

def test_criterion_01_sweep_matches_brute_force():
    start = time.perf_counter()
    rs = np.random.RandomState(101)
    checked = 0
    for case in range(100):
        n = int(rs.randint(1, 31))
        m = int(rs.randint(1, 31))
        S = rs.rand(n, m)
        gt = (rs.rand(n, m) < 0.2).astype(np.uint8)
        gt[rs.randint(n), rs.randint(m)] = 1
        thresholds = np.unique(S)
        sweep = metrics.sweep_all_matchings(S, gt, thresholds)
        for t, tp, fp, fn in sweep.points:
            pred = S >= t
            assert tp == int((pred & (gt == 1)).sum())
            assert fp == int((pred & (gt == 0)).sum())
            assert fn == int(((~pred) & (gt == 1)).sum())
            checked += 1
    # a handful of instances against a plain triple loop as well
    for case in range(5):
        n = int(rs.randint(2, 9))
        m = int(rs.randint(2, 9))
        S = rs.rand(n, m)
        gt = (rs.rand(n, m) < 0.3).astype(np.uint8)
        gt[0, 0] = 1
        thresholds = np.unique(S)
        sweep = metrics.sweep_all_matchings(S, gt, thresholds)
        for t, tp, fp, fn in sweep.points:
            btp = bfp = bfn = 0
            for i in range(n):
                for j in range(m):
                    if S[i, j] >= t:
                        if gt[i, j]:
                            btp += 1
                        else:
                            bfp += 1
                    elif gt[i, j]:
                        bfn += 1
            assert (tp, fp, fn) == (btp, bfp, bfn)
    elapsed = time.perf_counter() - start
    _report(1, elapsed < 10.0,
            f"{checked} threshold rows over 105 instances match brute force, {elapsed:.1f}s < 10s")


# --- criterion 2: hand-checked fixtures ---------------------------------------------

def test_criterion_02_hand_checked_fixtures():
    S = np.array([[0.9, 0.1], [0.2, 0.8]])
    gt = np.eye(2, dtype=np.uint8)
    ok = metrics.sweep_all_matchings(S, gt, [0.5]).points == [(0.5, 2, 0, 0)]
    ok &= metrics.sweep_all_matchings(S, gt, [0.15]).points == [(0.15, 2, 1, 0)]
    S31 = np.array([[0.9], [0.1], [0.2]])
    gt31 = np.array([[0], [1], [0]], dtype=np.uint8)
    ok &= metrics.sweep_single_best(S31, gt31, [0.05]).points == [(0.05, 0, 1, 1)]
    curve = metrics.PrCurve(np.array([0.5, 1.0]), np.array([1.0, 0.5]),
                            np.array([0.0, 0.0]), "all_matchings")
    auc_ok = abs(metrics.auc(curve) - 0.875) < 1e-12
    f1_ok = abs(metrics.max_f1(curve) - 2.0 / 3.0) < 1e-12
    _report(2, bool(ok) and auc_ok and f1_ok,
            "2x2 and 3x1 sweep fixtures exact; AUC 0.875 and maxF1 2/3 within 1e-12")


# --- criterion 3: perfect separation -------------------------------------------------

def test_criterion_03_perfect_separation_suite():
    world = synth.WorldConfig(num_places=60, dim=64)
    plan = tuple(range(60))
    ds = synth.generate(world, synth.TraversalConfig(plan), synth.TraversalConfig(plan), seed=3)
    S = similarity.build_matrix(ds.db, ds.q, "cosine")
    ok = True
    for protocol in ("all_matchings", "single_best"):
        ev = harness.evaluate_matrix(S.values, ds.gt.values, protocol, 100)
        for name in ("auc", "max_f1", "recall_at_100_precision", "extended_precision"):
            ok &= ev.scalars[name] == 1.0
    _report(3, ok, "noiseless dataset: AUC = maxF1 = R@100P = EP = 1.0 exactly, both protocols")


# --- criterion 4: GT monotonicity -----------------------------------------------------

def test_criterion_04_gt_threshold_monotonicity():
    rs = np.random.RandomState(4242)

    def track():
        n = int(rs.randint(5, 12))
        return PoseTrack(
            np.arange(n, dtype=np.int64),
            rs.rand(n) * 10, rs.rand(n) * 10,
            rs.rand(n) * 2 * np.pi - np.pi + 1e-9,
        )

    checks = 0
    for _ in range(50):
        a, b = track(), track()
        for _ in range(5):
            d1, d2 = np.sort(rs.rand(2) * 8)
            t1, t2 = np.sort(rs.rand(2) * np.pi)
            g1 = groundtruth.gt_from_poses(a, b, GtCriterion("poses", d_max=d1, theta_max=t1))
            g2 = groundtruth.gt_from_poses(a, b, GtCriterion("poses", d_max=d2, theta_max=t2))
            assert np.all(g1.values <= g2.values)
            checks += 1
    _report(4, True, f"GT(c1) subseteq GT(c2) held elementwise in all {checks} nested pairs")


# --- criterion 5: protocol divergence -------------------------------------------------

def test_criterion_05_protocol_divergence():
    # every query: best GT cell (0.9) > all distractors (0.5) > second GT cell (0.1)
    n, m = 10, 4
    S = np.full((n, m), 0.5)
    gt = np.zeros((n, m), dtype=np.uint8)
    for j in range(m):
        S[j, j], gt[j, j] = 0.9, 1
        S[j + 5, j], gt[j + 5, j] = 0.1, 1
    thresholds = metrics.make_thresholds(S, 100)
    single = metrics.auc(metrics.pr_curve(metrics.sweep_single_best(S, gt, thresholds)))
    all_m = metrics.auc(metrics.pr_curve(metrics.sweep_all_matchings(S, gt, thresholds)))
    _report(5, single == 1.0 and all_m <= 0.9,
            f"single-best AUC = {single}, all-matchings AUC = {all_m:.4f} <= 0.9")


# --- criterion 6: fraction sensitivity ------------------------------------------------

def test_criterion_06_fraction_sensitivity(tmp_path):
    start = time.perf_counter()

    def spread(seed: int, ramp: float) -> float:
        cfg = harness.config_from_pairs({
            "source": "synth", "synth_places": "500", "synth_dim": "32",
            "synth_db_plan": "0..499", "synth_q_plan": "0..499",
            "synth_noise_strength": "0.08",
            "synth_db_noise_ramp": str(ramp), "synth_q_noise_ramp": str(ramp),
            "seed": str(seed), "thresholds": "100",
            "output_dir": str(tmp_path / f"frac_{seed}_{ramp}"),
        })
        return harness.audit_fraction(cfg, 5).spread

    ramp_hits = sum(spread(seed, 5.0) >= 0.2 for seed in range(10))
    homo_hits = sum(spread(seed, 1.0) < 0.1 for seed in range(10))
    elapsed = time.perf_counter() - start
    _report(6, ramp_hits >= 8 and homo_hits >= 8 and elapsed < 60.0,
            f"ramp spread >= 0.2 in {ramp_hits}/10, control < 0.1 in {homo_hits}/10, {elapsed:.1f}s < 60s")


# --- criterion 7: separability collapse ------------------------------------------------

def test_criterion_07_separability_collapse(tmp_path):
    flags = 0
    for seed in range(10):
        cfg = harness.config_from_pairs({
            "source": "synth", "synth_places": "40", "synth_dim": "32",
            "synth_db_plan": "0..39,0..39", "synth_q_plan": "0..39,0..39",
            "synth_db_schedule": "switch:0,1,40", "synth_q_schedule": "switch:0,1,40",
            "synth_condition_strength": "1.0", "synth_noise_strength": "0.5",
            "seed": str(seed), "output_dir": str(tmp_path / f"sep_{seed}"),
        })
        flags += bool(harness.audit_separability(cfg, bins=40).flags)
    _report(7, flags >= 9,
            f"in-sequence switch (condition strength = 2x noise) raised the flag in {flags}/10 seeds")


# --- criterion 8: standardization benefit ----------------------------------------------

def test_criterion_08_standardization_benefit():
    # db and q each under one constant condition, so per-set standardization
    # is per-condition standardization
    wins = 0
    for seed in range(10):
        world = synth.WorldConfig(num_places=60, dim=32,
                                  condition_strength=1.5, noise_strength=0.05)
        plan = tuple(range(60))
        ds = synth.generate(
            world,
            synth.TraversalConfig(plan),
            synth.TraversalConfig(plan, synth.ConditionSchedule("constant", 1)),
            seed,
        )
        aucs = {}
        for name, standardized in (("raw", False), ("std", True)):
            db, q = ds.db, ds.q
            if standardized:
                db, _ = descriptors.standardize(db)
                q, _ = descriptors.standardize(q)
            S = similarity.build_matrix(db, q, "cosine")
            ev = harness.evaluate_matrix(S.values, ds.gt.values, "all_matchings", 100)
            aucs[name] = ev.scalars["auc"]
        wins += aucs["std"] >= aucs["raw"]
    _report(8, wins >= 8, f"per-condition standardization AUC >= raw in {wins}/10 seeds")


# --- criterion 9: sequence benefit -------------------------------------------------------

def test_criterion_09_sequence_benefit():
    wins = 0
    for seed in range(20):
        world = synth.WorldConfig(num_places=150, dim=32, noise_strength=0.25)
        plan = tuple(range(150))
        ds = synth.generate(world, synth.TraversalConfig(plan), synth.TraversalConfig(plan), seed)
        S = similarity.build_matrix(ds.db, ds.q, "cosine")
        post = similarity.seq_postprocess(S, similarity.SeqPostConfig())

        def auc_of(values):
            ev = harness.evaluate_matrix(values, ds.gt.values, "all_matchings", 100)
            return ev.scalars["auc"]

        wins += auc_of(post.values) > auc_of(S.values)
    _report(9, wins >= 18, f"sequence postprocessing raised AUC in {wins}/20 seeds")


# --- criterion 10: monotone-transform invariance -------------------------------------------

def test_criterion_10_monotone_transform_invariance():
    rs = np.random.RandomState(1010)
    exact = 0
    for _ in range(20):
        n = int(rs.randint(4, 15))
        m = int(rs.randint(4, 15))
        S = rs.rand(n, m)
        gt = (rs.rand(n, m) < 0.25).astype(np.uint8)
        gt[rs.randint(n), rs.randint(m)] = 1

        def scalars(values):
            out = {}
            thresholds = metrics.make_thresholds(values, values.size + 1)
            for tag, fn in (("all", metrics.sweep_all_matchings),
                            ("best", metrics.sweep_single_best)):
                sweep = fn(values, gt, thresholds)
                out.update({f"{tag}_{k}": v for k, v in metrics.scalar_metrics(sweep).items()})
            out["r_at_2"] = metrics.recall_at_k(values, gt, 2)
            return out

        exact += scalars(S) == scalars(S ** 3 + 2 * S)
    _report(10, exact == 20, f"s -> s^3 + 2s changed no scalar metric in {exact}/20 instances (exact)")


# --- criterion 11: determinism and performance ----------------------------------------------

def _digest_dir(root: Path) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*")) if p.is_file()
    }


def test_criterion_11_determinism_and_performance(tmp_path):
    def cfg(name: str, workers: int) -> harness.RunConfig:
        return harness.config_from_pairs({
            "source": "synth", "synth_places": "1000", "synth_dim": "128",
            "synth_db_plan": "0..999", "synth_q_plan": "0..999",
            "synth_noise_strength": "0.02", "thresholds": "100",
            "seed": "0", "workers": str(workers),
            "output_dir": str(tmp_path / name),
        })

    start = time.perf_counter()
    first = harness.run_pipeline(cfg("run1", 1))
    elapsed = time.perf_counter() - start
    second = harness.run_pipeline(cfg("run2", 1))
    parallel = harness.run_pipeline(cfg("run4", 4))
    d1, d2, d4 = _digest_dir(first), _digest_dir(second), _digest_dir(parallel)
    _report(11, elapsed < 5.0 and d1 == d2 == d4,
            f"1000x1000 eval in {elapsed:.2f}s < 5s; byte-identical across reruns and 1 vs 4 workers")


# --- criterion 12: structure report ------------------------------------------------------------

def test_criterion_12_structure_report_planted_counts():
    ok_all = True
    for seed in range(20):
        rs = np.random.RandomState(900 + seed)
        P = int(rs.randint(20, 31))
        loop_len = int(rs.randint(2, 5))
        db_rep = int(rs.randint(2, 5))
        q_rep = int(rs.randint(2, 5))
        explore = int(rs.randint(1, 4))
        seg_start = int(rs.randint(0, P - loop_len))
        segment = set(range(seg_start, seg_start + loop_len))
        outside = [p for p in range(P) if p not in segment]
        db_stop_place = int(rs.choice(outside))
        rect_planted = bool(seed % 2)
        if rect_planted:
            q_stop_place = db_stop_place
        else:
            q_stop_place = int(rs.choice([p for p in outside if p != db_stop_place]))

        db_plan = []
        for p in range(P):
            db_plan.append(p)
            if p == db_stop_place:
                db_plan.extend([p] * (db_rep - 1))
        db_plan.extend(range(seg_start, seg_start + loop_len))
        q_plan = []
        for p in range(P):
            q_plan.append(p)
            if p == q_stop_place:
                q_plan.extend([p] * (q_rep - 1))
        q_plan.extend(range(P, P + explore))

        world = synth.WorldConfig(num_places=P, dim=16)
        ds = synth.generate(world, synth.TraversalConfig(tuple(db_plan)),
                            synth.TraversalConfig(tuple(q_plan)), seed)
        report = groundtruth.structure_report(ds.gt)
        expected_loops = loop_len + (q_rep - 1 if q_stop_place in segment else 0)
        ok = (
            report.loop_queries == expected_loops
            and len(report.stop_segments_db) == 1
            and len(report.stop_segments_q) == 1
            and report.stop_rectangles == (1 if rect_planted else 0)
            and report.exploration_queries == explore
        )
        ok_all &= ok
        assert ok, (
            f"seed {seed}: got loops={report.loop_queries} (want {expected_loops}), "
            f"db stops={report.stop_segments_db}, q stops={report.stop_segments_q}, "
            f"rect={report.stop_rectangles} (want {int(rect_planted)}), "
            f"exploration={report.exploration_queries} (want {explore})"
        )
    _report(12, ok_all, "planted loop/stop/exploration counts detected exactly in 20/20 constructions")
