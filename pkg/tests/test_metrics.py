import itertools

import numpy as np
import pytest

from symtrack.metrics import (
    clear_mot,
    identity_metrics,
    identity_overlap_counts,
    iou,
    mot_report,
    weighted_purity,
)


def test_purity_examples():
    labels = {0: "a", 1: "a", 2: "b", 3: "b", 4: "a"}
    assert weighted_purity([[0, 1], [2, 3]], labels) == 1.0
    assert weighted_purity([[0, 1, 2, 3]], labels) == 0.5
    labels = {0: "a", 1: "a", 2: "a", 3: "b", 4: "a"}
    assert weighted_purity([[0, 1, 2], [3, 4]], labels) == pytest.approx(0.8)


def test_purity_relabeling_invariance(rng):
    for _ in range(50):
        labels = {i: int(rng.integers(0, 4)) for i in range(30)}
        assign = rng.integers(0, 5, size=30)
        clusters = [[i for i in range(30) if assign[i] == c] for c in range(5)]
        base = weighted_purity(clusters, labels)
        perm = rng.permutation(4)
        relabeled = {i: int(perm[v]) + 100 for i, v in labels.items()}
        assert weighted_purity(clusters[::-1], relabeled) == pytest.approx(base)


def test_purity_merge_and_split_pure():
    labels = {i: 0 for i in range(6)} | {i: 1 for i in range(6, 10)}
    split = [[0, 1], [2, 3, 4, 5], [6, 7, 8, 9]]
    merged = [[0, 1, 2, 3, 4, 5], [6, 7, 8, 9]]
    assert weighted_purity(merged, labels) >= weighted_purity(split, labels)
    assert weighted_purity(split, labels) == weighted_purity(merged, labels) == 1.0


def test_purity_empty():
    with pytest.raises(ValueError):
        weighted_purity([], {})


def test_iou():
    assert iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0
    assert iou((0, 0, 10, 10), (20, 0, 10, 10)) == 0.0
    assert iou((0, 0, 10, 10), (5, 0, 10, 10)) == pytest.approx(50 / 150)


def two_targets(n=10):
    gt = {f: [(1, (0.0, 0.0, 10.0, 10.0)), (2, (100.0, 0.0, 10.0, 10.0))] for f in range(n)}
    return gt


def test_perfect_tracking():
    gt = two_targets()
    r = mot_report(gt, gt)
    assert (r.recall, r.precision, r.mota, r.motp, r.ids, r.frag) == (1.0, 1.0, 1.0, 1.0, 0, 0)
    assert (r.idp, r.idr, r.idf1) == (1.0, 1.0, 1.0)


def test_identity_swap():
    gt = two_targets()
    hyp = {f: [((1 if f < 5 else 2), b) if g == 1 else ((2 if f < 5 else 1), b) for g, b in rows] for f, rows in gt.items()}
    r = clear_mot(hyp, gt)
    assert r["ids"] == 2
    assert r["mota"] == pytest.approx(1 - 2 / 20)


def test_empty_hypotheses():
    gt = two_targets()
    r = mot_report({}, gt)
    assert r.recall == 0 and r.mota == 0 and r.num_fp == 0 and r.ids == 0
    assert r.idr == 0 and r.idf1 == 0


def test_each_fp_costs_one_over_gt():
    gt = two_targets()
    hyp = {f: list(rows) for f, rows in gt.items()}
    for extra in range(1, 5):
        hyp[extra].append((99 + extra, (500.0, 500.0, 5.0, 5.0)))
        assert clear_mot(hyp, gt)["mota"] == pytest.approx(1 - extra / 20)


def test_frag_counts_interruptions():
    gt = {f: [(1, (0.0, 0.0, 10.0, 10.0))] for f in range(10)}
    hyp = {f: [(1, (0.0, 0.0, 10.0, 10.0))] for f in range(10) if f not in (3, 4, 7)}
    r = clear_mot(hyp, gt)
    assert r["frag"] == 2 and r["ids"] == 0


def test_hypothesis_outside_gt_range():
    with pytest.raises(ValueError):
        clear_mot({50: []}, two_targets())


def test_split_track_identity_metrics():
    # one target over 10 frames, covered by two hypothesis ids for 5 frames each
    gt = {f: [(1, (0.0, 0.0, 10.0, 10.0))] for f in range(10)}
    hyp = {f: [((1 if f < 5 else 2), (0.0, 0.0, 10.0, 10.0))] for f in range(10)}
    idp, idr, idf1 = identity_metrics(hyp, gt)
    assert (idp, idr, idf1) == pytest.approx((0.5, 0.5, 0.5))


def brute_idtp(counts, gids, hids):
    best = 0
    small, large = (gids, hids) if len(gids) <= len(hids) else (hids, gids)
    for perm in itertools.permutations(large, len(small)):
        pairs = zip(small, perm) if small is gids else zip(perm, small)
        best = max(best, sum(counts[g, h] for g, h in pairs))
    return best


def test_identity_assignment_matches_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(40):
        ng, nh = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        gt, hyp = {}, {}
        for f in range(12):
            gt[f] = [(g, (20.0 * g, 0.0, 10.0, 10.0)) for g in range(1, ng + 1)]
            hyp[f] = [(int(rng.integers(1, nh + 1)), b) for _, b in gt[f] if rng.random() < 0.8]
        counts, gtot, htot = identity_overlap_counts(hyp, gt)
        idp, idr, _ = identity_metrics(hyp, gt)
        if htot:
            idtp = brute_idtp(counts, sorted(gtot), sorted(htot))
            assert idr == pytest.approx(idtp / sum(gtot.values()))
            assert idp == pytest.approx(idtp / sum(htot.values()))


def test_report_formats():
    gt = two_targets()
    r = mot_report(gt, gt)
    assert "mota" in r.as_table()
    header, row = r.as_csv().strip().split("\n")
    assert header.split(",")[0] == "recall" and len(row.split(",")) == len(header.split(","))
