"""Acceptance checks; each prints one PASS/FAIL line (run with ``-s`` to see them)."""

import itertools
import json
import math
import time

import numpy as np
import pytest

from symtrack.assignment import assignment_cost, hungarian
from symtrack.cli import main, run_gradcheck
from symtrack.config import load_config
from symtrack.constraints import ContextConfig, mine_contextual, mine_spatiotemporal, propagate_transitive
from symtrack.core import validate_sequence
from symtrack.embedder import LossConfig, symtriplet_loss
from symtrack.linker import LinkerConfig, agglomerate, link_across_shots
from symtrack.metrics import clear_mot, identity_metrics, identity_overlap_counts, mot_report, weighted_purity
from symtrack.pipeline import purity_at_k, run
from symtrack.synth import generate, oracle_labels
from symtrack.tracklets import build_tracklets

from conftest import span
from test_assignment import brute_min
from test_linker import reference_hac, random_instance
from test_metrics import brute_idtp, two_targets

SEEDS = range(10)


def report(n, ok, detail):
    print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_1_gradient_fidelity():
    t0 = time.perf_counter()
    worst = run_gradcheck(seed=0, samples=50, tolerance=1e-4)
    elapsed = time.perf_counter() - t0
    ok = all(v <= 1e-4 for v in worst.values()) and elapsed < 60
    detail = "  ".join(f"{k}={v:.2e}" for k, v in worst.items())
    report(1, ok, f"{detail}  ({elapsed:.1f}s)")


def test_criterion_2_symtriplet_geometry():
    rng = np.random.default_rng(0)
    cfg = LossConfig("symtriplet")
    eta = 1e-4
    worst_sum, failures, n = 0.0, 0, 0
    sq = lambda v: float(v @ v)
    while n < 1000:
        ek, el, em = rng.normal(size=(3, 64))
        loss, gk, gl, gm = symtriplet_loss(ek, el, em, cfg)
        if loss <= 0:
            continue
        n += 1
        worst_sum = max(worst_sum, float(np.abs(gk + gl + gm).max()))
        k2, l2, m2 = ek - eta * gk, el - eta * gl, em - eta * gm
        pulled = sq(k2 - l2) < sq(ek - el)
        pushed = sq(k2 - m2) + sq(l2 - m2) > sq(ek - em) + sq(el - em)
        failures += not (pulled and pushed)
    ok = worst_sum <= 1e-10 and failures == 0
    report(2, ok, f"max |sum of grads|={worst_sum:.1e}  pull/push failures={failures}/1000")


def test_symtriplet_first_order_rates():
    # along the negative gradient, d/dt D(k,l) = -6 D(k,l) and
    # d/dt [D(k,m) + D(l,m)] = 12 (m - k).(m - l)
    rng = np.random.default_rng(1)
    cfg = LossConfig("symtriplet")
    for _ in range(200):
        ek, el, em = rng.normal(size=(3, 4))
        loss, gk, gl, gm = symtriplet_loss(ek, el, em, cfg)
        if loss <= 0:
            continue
        dk, dl, dm = -gk, -gl, -gm
        pull = 2 * (el - ek) @ (dl - dk)
        push = 2 * (em - ek) @ (dm - dk) + 2 * (em - el) @ (dm - dl)
        assert pull == pytest.approx(-6 * (el - ek) @ (el - ek))
        assert push == pytest.approx(12 * (em - ek) @ (em - el))


def _violations(cs, labels):
    pos = sum(labels[a] != labels[b] for a, b in cs.positives)
    neg = sum(labels[a] == labels[b] for a, b in cs.negatives)
    return pos, neg


def test_criterion_3_constraint_soundness():
    problems = []
    gains = 0
    for seed in range(20):
        cfg = load_config(overrides={"seed": seed}, env={})
        det, shots, gt = generate(cfg.scenario)
        seq = validate_sequence(det, shots)
        labels = oracle_labels(seq, gt)
        tracklets = build_tracklets(seq, cfg.affinity)
        st = propagate_transitive(mine_spatiotemporal(tracklets), tracklets)
        if _violations(st, labels) != (0, 0):
            problems.append(f"seed {seed} spatio-temporal {_violations(st, labels)}")
        ctx = mine_contextual(tracklets, seq, ContextConfig(merge_threshold=cfg.context.merge_threshold), mine_spatiotemporal(tracklets))
        full = propagate_transitive(ctx, tracklets)
        if _violations(full, labels) != (0, 0):
            problems.append(f"seed {seed} contextual {_violations(full, labels)}")
        ident = {t.tracklet_id: labels[t.detections[0]] for t in tracklets}
        cross_shot_same = any(
            a.shot_id != b.shot_id and ident[a.tracklet_id] == ident[b.tracklet_id]
            for a, b in itertools.combinations(tracklets, 2)
        )
        if cross_shot_same:
            if len(full.negatives) > len(st.negatives):
                gains += 1
            else:
                problems.append(f"seed {seed}: negatives did not grow ({len(st.negatives)} -> {len(full.negatives)})")
    report(3, not problems, f"20 scenarios, negative count grew in {gains}; " + ("; ".join(problems) or "no violations"))


@pytest.fixture(scope="module")
def benchmark():
    """Raw and adapted purity at ideal k for every loss and seed."""
    out = {"raw": [], "seconds": {}}
    for kind in ("symtriplet", "triplet", "contrastive"):
        out[kind] = []
        t0 = time.perf_counter()
        for seed in SEEDS:
            cfg = load_config(overrides={"seed": seed, "loss": {"kind": kind}}, env={})
            det, shots, gt = generate(cfg.scenario)
            seq = validate_sequence(det, shots)
            labels = oracle_labels(seq, gt)
            res = run(
                seq,
                affinity=cfg.affinity,
                context=cfg.context,
                mining=cfg.mining,
                model_cfg=cfg.model,
                loss=cfg.loss,
                train_cfg=cfg.train,
                linker=cfg.linker,
                seed=seed,
            )
            k = cfg.scenario.n_identities
            out[kind].append(purity_at_k(res.tracklets, res.embeddings, labels, k))
            if kind == "symtriplet":
                raw = {d.id: d.feature for d in seq.detections}
                out["raw"].append(purity_at_k(res.tracklets, raw, labels, k))
        out["seconds"][kind] = time.perf_counter() - t0
    return out


def test_criterion_4_adaptation_benefit(benchmark):
    raw, adapted = benchmark["raw"], benchmark["symtriplet"]
    elapsed = benchmark["seconds"]["symtriplet"]
    wins = sum(a >= 0.95 for a in adapted)
    ok = max(raw) <= 0.80 and wins >= 9 and elapsed < 600
    report(
        4,
        ok,
        f"raw purity max={max(raw):.3f} mean={np.mean(raw):.3f}; adapted >= 0.95 in {wins}/10 "
        f"(min {min(adapted):.3f}); {elapsed:.0f}s",
    )


def test_criterion_5_loss_ordering(benchmark):
    means = {k: float(np.mean(benchmark[k])) for k in ("symtriplet", "triplet", "contrastive")}
    ok = means["symtriplet"] >= means["triplet"] and means["symtriplet"] >= means["contrastive"]
    report(5, ok, "  ".join(f"{k}={v:.4f}" for k, v in means.items()))


def test_criterion_6_hungarian_oracle():
    t0 = time.perf_counter()
    bad = 0
    for shape in [(3, 3), (4, 4), (5, 5), (6, 6), (3, 5)]:
        rng = np.random.default_rng(100 + shape[0] * 10 + shape[1])
        for _ in range(100):
            C = rng.uniform(0, 100, size=shape)
            bad += not math.isclose(assignment_cost(C, hungarian(C)), brute_min(C), abs_tol=1e-9)
    elapsed = time.perf_counter() - t0
    report(6, bad == 0 and elapsed < 10, f"{bad} mismatches over 500 matrices ({elapsed:.2f}s)")


def test_criterion_7_hac_conformance():
    rng = np.random.default_rng(2024)
    bad = 0
    for _ in range(50):
        n = int(rng.integers(2, 13))
        D = random_instance(rng, n)
        theta = float(rng.uniform(1, 30))
        bad += sorted(agglomerate(D, theta=theta).clusters) != reference_hac(D, theta=theta)
        bad += sorted(agglomerate(D, k=1).clusters) != reference_hac(D, k=1)
    # stop at theta: a pair at exactly theta merges, just above does not
    D = np.array([[0.0, 2.0], [2.0, 0.0]])
    stop_ok = len(agglomerate(D, theta=2.0).clusters) == 1 and len(agglomerate(D, theta=1.999).clusters) == 2
    # conjunctive filter on constructed tracklets
    ts = [span(i, 10 * i, range(10 * i, 10 * i + 3)) for i in range(3)]
    e = {d: np.array([0.0 if t.tracklet_id < 2 else 100.0]) for t in ts for d in t.detections}
    keep = lambda **kw: [t.tracklet_ids for t in link_across_shots(ts, e, LinkerConfig(theta=1.0, **kw))]
    filter_ok = (
        keep(min_cluster_tracklets=2, min_cluster_frames=4) == [(0, 1)]
        and len(keep(min_cluster_tracklets=2, min_cluster_frames=3)) == 2
        and len(keep(min_cluster_tracklets=1, min_cluster_frames=99)) == 2
    )
    ok = bad == 0 and stop_ok and filter_ok
    report(7, ok, f"{bad} mismatches on 100 clusterings; stop-at-theta {stop_ok}; conjunctive filter {filter_ok}")


def test_criterion_8_metric_sanity():
    gt = two_targets(20)
    perfect = mot_report(gt, gt)
    labels = {i: i % 3 for i in range(12)}
    purity = weighted_purity([[i for i in range(12) if i % 3 == c] for c in range(3)], labels)
    swap = {f: [(g if f < 10 else 3 - g, b) for g, b in rows] for f, rows in gt.items()}
    ids = clear_mot(swap, gt)["ids"]
    fp_ok = True
    hyp = {f: list(rows) for f, rows in gt.items()}
    for extra in range(1, 6):
        hyp[extra].append((100 + extra, (900.0, 900.0, 5.0, 5.0)))
        fp_ok &= math.isclose(clear_mot(hyp, gt)["mota"], 1 - extra / 40)
    rng = np.random.default_rng(8)
    brute_ok = True
    for _ in range(30):
        ng, nh = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        g = {f: [(i, (20.0 * i, 0.0, 10.0, 10.0)) for i in range(1, ng + 1)] for f in range(10)}
        h = {f: [(int(rng.integers(1, nh + 1)), b) for _, b in rows if rng.random() < 0.8] for f, rows in g.items()}
        counts, gtot, htot = identity_overlap_counts(h, g)
        if htot:
            idr = identity_metrics(h, g)[1]
            brute_ok &= math.isclose(idr, brute_idtp(counts, sorted(gtot), sorted(htot)) / sum(gtot.values()))
    ok = perfect.mota == 1 and perfect.idf1 == 1 and purity == 1 and ids == 2 and fp_ok and brute_ok
    report(
        8,
        ok,
        f"perfect MOTA={perfect.mota} IDF1={perfect.idf1} purity={purity}; swap IDS={ids}; "
        f"FP step exact {fp_ok}; brute-force identity match {brute_ok}",
    )


def test_criterion_9_determinism(tmp_path):
    scene = tmp_path / "scene"
    assert main(["simulate", "--out", str(scene), "--seed", "2"]) == 0
    for name in ("a", "b"):
        assert main(["track", "--in", str(scene), "--out", str(tmp_path / name), "--seed", "2"]) == 0
    same = all(
        (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        for f in ("trajectories.txt", "manifest.json", "assignments.txt")
    )
    stages = json.loads((tmp_path / "a" / "manifest.json").read_text())["stages"]
    report(9, same and len(stages) == 9, f"byte-identical trajectories and manifest: {same}")
