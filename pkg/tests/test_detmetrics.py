import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpmkit.annotations import NormBox
from cpmkit.detmetrics import (
    COCO_THRESHOLDS,
    Detection,
    GroundTruth,
    MatchResult,
    average_precision,
    evaluate,
    iou,
    map_range,
    match_detections,
    precision_recall_f1,
)
from cpmkit.errors import DomainError

from oracles import ap_oracle, iou_oracle, map_oracle, match_oracle


def random_box(rng):
    x1, y1 = rng.uniform(0, 8), rng.uniform(0, 8)
    return (x1, y1, x1 + rng.uniform(0.5, 4), y1 + rng.uniform(0.5, 4))


def random_instance(rng, max_dets=6, max_gts=4, n_classes=3, n_images=2):
    gts = [GroundTruth(rng.randrange(n_classes), random_box(rng), f"im{rng.randrange(n_images)}")
           for _ in range(rng.randint(0, max_gts))]
    dets = []
    for _ in range(rng.randint(0, max_dets)):
        if gts and rng.random() < 0.6:
            g = rng.choice(gts)
            jitter = [rng.uniform(-0.6, 0.6) for _ in range(4)]
            box = tuple(sorted((g.box[0] + jitter[0], g.box[2] + jitter[2]))) 
            boxy = tuple(sorted((g.box[1] + jitter[1], g.box[3] + jitter[3])))
            box = (box[0], boxy[0], box[1], boxy[1])
            cls, image = (g.class_id if rng.random() < 0.8 else rng.randrange(n_classes)), g.image
        else:
            box, cls, image = random_box(rng), rng.randrange(n_classes), f"im{rng.randrange(n_images)}"
        conf = rng.choice([0.3, 0.5, 0.9]) if rng.random() < 0.3 else round(rng.random(), 3)
        dets.append(Detection(cls, box, conf, image))
    return dets, gts


def as_oracle(dets, gts):
    return ([(d.class_id, d.confidence, d.image, d.box) for d in dets],
            [(g.class_id, g.image, g.box) for g in gts])


def test_iou_examples():
    a = (0.0, 0.0, 2.0, 2.0)
    assert iou(a, a) == 1.0
    assert iou(a, (5.0, 5.0, 6.0, 6.0)) == 0.0
    assert iou(a, (1.0, 1.0, 3.0, 3.0)) == pytest.approx(1 / 7, abs=1e-12)
    assert iou((1, 1, 1, 1), (1, 1, 1, 1)) == 0.0


boxes = st.tuples(st.floats(0, 10), st.floats(0, 10), st.floats(0.01, 5), st.floats(0.01, 5)).map(
    lambda t: (t[0], t[1], t[0] + t[2], t[1] + t[3])
)


@given(boxes, boxes)
def test_iou_properties(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == iou(b, a)
    assert v == pytest.approx(iou_oracle(a, b), abs=1e-12)
    assert iou(a, a) == 1.0


def test_iou_scale_invariance():
    a, b = (0.1, 0.2, 0.5, 0.6), (0.3, 0.1, 0.7, 0.5)
    sx, sy = 640, 480
    scaled = lambda r: (r[0] * sx, r[1] * sy, r[2] * sx, r[3] * sy)
    assert iou(scaled(a), scaled(b)) == pytest.approx(iou(a, b), abs=1e-12)


def test_detection_accepts_normbox():
    d = Detection(0, NormBox(0.5, 0.5, 0.2, 0.4), 0.5)
    assert d.box == pytest.approx((0.4, 0.3, 0.6, 0.7))
    with pytest.raises(DomainError):
        Detection(0, (0, 0, 1, 1), 1.5)


def test_match_examples():
    g = [GroundTruth(0, (0, 0, 2, 2))]
    m = match_detections([Detection(0, (0, 0, 2, 2), 0.9)], g, 0.5)
    assert m.det_gt == [0] and m.gt_det == [0]
    m = match_detections([Detection(0, (0, 0, 2, 2), 0.4), Detection(0, (0, 0, 2, 2.1), 0.8)], g, 0.5)
    assert m.det_gt == [None, 0]
    with pytest.raises(DomainError):
        match_detections([], g, 1.0)


def test_match_is_per_image():
    g = [GroundTruth(0, (0, 0, 2, 2), "a")]
    m = match_detections([Detection(0, (0, 0, 2, 2), 0.9, "b")], g, 0.5)
    assert m.tp == 0


def test_match_matches_protocol_oracle():
    rng = random.Random(11)
    for _ in range(500):
        dets, gts = random_instance(rng, n_classes=1)
        for thr in (0.3, 0.5, 0.75):
            m = match_detections(dets, gts, thr)
            od, og = as_oracle(dets, gts)
            assert m.flags_in_rank_order() == match_oracle([d[1:] for d in od], [g[1:] for g in og], thr)
            assert m.tp + m.fp == len(dets)
            matched = [j for j in m.det_gt if j is not None]
            assert len(matched) == len(set(matched)) <= min(len(dets), len(gts))


@pytest.mark.parametrize("tp, fp, gt, expected", [
    (2, 0, 2, (1.0, 1.0, 1.0)),
    (0, 3, 2, (0.0, 0.0, 0.0)),
    (1, 1, 2, (0.5, 0.5, 0.5)),
    (0, 0, 0, (1.0, 1.0, 1.0)),
])
def test_precision_recall_f1(tp, fp, gt, expected):
    m = MatchResult([0] * tp + [None] * fp, [])
    assert precision_recall_f1(m, gt) == expected


def test_ap_examples():
    gts = [GroundTruth(0, (0, 0, 1, 1)), GroundTruth(0, (5, 5, 6, 6))]
    perfect = [Detection(0, g.box, 0.9) for g in gts]
    assert average_precision(perfect, gts, 0.5) == 1.0
    assert average_precision([Detection(0, (10, 10, 11, 11), 0.9)], gts, 0.5) == 0.0
    mixed = [Detection(0, (0, 0, 1, 1), 0.9), Detection(0, (20, 20, 21, 21), 0.8), Detection(0, (5, 5, 6, 6), 0.7)]
    # envelope 1.0 for recall <= 0.5 (51 points), 2/3 above (50 points)
    assert average_precision(mixed, gts, 0.5) == pytest.approx(253 / 303, abs=1e-12)
    od, og = as_oracle(mixed, gts)
    assert ap_oracle([d[1:] for d in od], [g[1:] for g in og], 0.5) == pytest.approx(253 / 303, abs=1e-12)


def test_ap_without_ground_truth():
    assert average_precision([], [], 0.5) == 1.0
    assert average_precision([Detection(0, (0, 0, 1, 1), 0.5)], [], 0.5) == 0.0


def test_ap_rank_only():
    rng = random.Random(5)
    for _ in range(200):
        dets, gts = random_instance(rng, n_classes=1)
        base = average_precision(dets, gts, 0.5)
        squashed = [Detection(d.class_id, d.box, d.confidence ** 3 * 0.5, d.image) for d in dets]
        assert average_precision(squashed, gts, 0.5) == base


def test_ap_matches_oracle_random():
    rng = random.Random(3)
    for _ in range(1000):
        dets, gts = random_instance(rng, n_classes=1)
        od, og = as_oracle(dets, gts)
        for thr in (0.5, 0.75):
            assert abs(average_precision(dets, gts, thr) - ap_oracle([d[1:] for d in od], [g[1:] for g in og], thr)) <= 1e-12


def test_map_examples():
    gts = [GroundTruth(c, (c, c, c + 1.0, c + 1.0), "a") for c in range(3)]
    perfect = [Detection(g.class_id, g.box, 0.8, g.image) for g in gts]
    s = map_range(perfect, gts)
    assert s.mean_ap == 1.0 and s.map_by_threshold == (1.0,) * 10
    assert map_range([], gts).mean_ap == 0.0
    assert map_range(perfect, gts, [0.5]).mean_ap == 1.0
    with pytest.raises(DomainError):
        map_range(perfect, gts, [])


def test_map_two_class_fixture_matches_oracle():
    gts = [
        GroundTruth(0, (0, 0, 2, 2), "a"), GroundTruth(0, (4, 4, 6, 6), "a"), GroundTruth(1, (1, 1, 3, 4), "a"),
        GroundTruth(0, (0, 0, 3, 3), "b"), GroundTruth(1, (5, 5, 7, 7), "b"),
    ]
    dets = [
        Detection(0, (0.1, 0, 2, 2.2), 0.95, "a"), Detection(0, (4.5, 4.2, 6.3, 6), 0.6, "a"),
        Detection(0, (8, 8, 9, 9), 0.7, "a"), Detection(1, (1, 1.2, 3, 4.3), 0.85, "a"),
        Detection(0, (0.4, 0.3, 3, 3.2), 0.5, "b"), Detection(1, (5.5, 5, 7, 7.4), 0.65, "b"),
        Detection(1, (0, 0, 1, 1), 0.9, "b"),
    ]
    od, og = as_oracle(dets, gts)
    for thresholds in ([0.5], list(COCO_THRESHOLDS)):
        assert map_range(dets, gts, thresholds).mean_ap == pytest.approx(map_oracle(od, og, thresholds), abs=1e-12)


def test_empty_class_skipping():
    gts = [GroundTruth(0, (0, 0, 1, 1))]
    dets = [Detection(0, (0, 0, 1, 1), 0.9)]
    s = map_range(dets, gts, [0.5], classes=[0, 5])
    assert s.mean_ap == 1.0 and s.skipped_classes == (5,)
    s = map_range(dets, gts, [0.5], classes=[0, 5], skip_empty_classes=False)
    assert s.per_class_ap[5] == (1.0,)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_map5095_never_exceeds_map50(seed):
    dets, gts = random_instance(random.Random(seed))
    s = map_range(dets, gts, COCO_THRESHOLDS)
    assert s.mean_ap <= s.map_by_threshold[0] + 1e-12


def test_evaluate_summary():
    gts = [GroundTruth(0, (0, 0, 1, 1), "a"), GroundTruth(1, (2, 2, 3, 3), "a")]
    dets = [Detection(0, (0, 0, 1, 1), 0.9, "a"), Detection(1, (2, 2, 3, 3), 0.1, "a")]
    out = evaluate(dets, gts, conf_threshold=0.25, class_names=["x", "y"])
    assert out["map50"] == 1.0 and out["map50_95"] == 1.0
    assert (out["precision"], out["recall"]) == (1.0, 0.5)
    assert [c["name"] for c in out["per_class"]] == ["x", "y"]
