import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpmkit.errors import DomainError
from cpmkit.raster import LuminanceGrid
from cpmkit.reconcile import (
    NO_OBSERVATION_NOTE,
    ConfigError,
    DegenerateConfigurationError,
    MarkerObservation,
    QrObservation,
    QualityThresholds,
    Reason,
    ReconcileConfig,
    ReflectionError,
    SimilarityTransform,
    TargetWindow,
    TooFewPointsError,
    apply_transform,
    assess_quality,
    build_report,
    estimate_similarity,
    match_observations,
)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_similarity(rng):
    return SimilarityTransform(rng.uniform(0.5, 2.0), random_rotation(rng), rng.uniform(-10, 10, 3))


def pairs_under(t, pts):
    return [(p, apply_transform(t, p)) for p in pts]


def test_identity_and_translation():
    pts = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]
    fit = estimate_similarity([(p, p) for p in pts])
    assert fit.transform.scale == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(fit.transform.rotation, np.eye(3), atol=1e-12)
    assert fit.rms_residual < 1e-12 and fit.n_points == 4
    fit = estimate_similarity([(p, np.add(p, (3, -2, 5))) for p in pts])
    assert np.allclose(fit.transform.translation, (3, -2, 5), atol=1e-12)


def test_random_recovery():
    rng = np.random.default_rng(1)
    for _ in range(100):
        t = random_similarity(rng)
        fit = estimate_similarity(pairs_under(t, rng.uniform(-20, 20, (10, 3))))
        got = fit.transform
        assert abs(got.scale - t.scale) < 1e-8
        assert np.abs(got.rotation - t.rotation).max() < 1e-8
        assert np.abs(got.translation - t.translation).max() < 1e-8
        assert fit.rms_residual < 1e-9


def test_coplanar_markers_are_fine():
    rng = np.random.default_rng(2)
    t = random_similarity(rng)
    pts = np.column_stack([rng.uniform(-5, 5, (6, 2)), np.zeros(6)])
    fit = estimate_similarity(pairs_under(t, pts))
    assert abs(fit.transform.scale - t.scale) < 1e-8
    assert np.abs(fit.transform.rotation - t.rotation).max() < 1e-8


def test_equivariance():
    rng = np.random.default_rng(3)
    pts = rng.uniform(-5, 5, (8, 3))
    dst = pts + rng.normal(scale=0.05, size=pts.shape)
    base = estimate_similarity(zip(pts, dst)).transform
    g = random_similarity(rng)
    moved = [apply_transform(g, q) for q in dst]
    fit = estimate_similarity(zip(pts, moved)).transform
    expect = g.compose(base)
    assert fit.scale == pytest.approx(expect.scale, rel=1e-9)
    assert np.allclose(fit.rotation, expect.rotation, atol=1e-9)
    assert np.allclose(fit.translation, expect.translation, atol=1e-8)


def test_noise_band():
    rng = np.random.default_rng(4)
    sigma = 0.01
    for _ in range(20):
        t = random_similarity(rng)
        pts = rng.uniform(-10, 10, (30, 3))
        dst = [apply_transform(t, p) + rng.normal(scale=sigma, size=3) for p in pts]
        fit = estimate_similarity(zip(pts, dst))
        # 3D noise norm is about sqrt(3) sigma; the fit absorbs a little of it
        assert 0.5 * sigma < fit.rms_residual < 3 * sigma
        assert abs(fit.transform.scale - t.scale) < 1e-2


def test_too_few_and_collinear():
    with pytest.raises(TooFewPointsError):
        estimate_similarity([((0, 0, 0), (0, 0, 0)), ((1, 0, 0), (1, 0, 0))])
    line = [((i, 2 * i, -i), (i, i, i)) for i in range(5)]
    with pytest.raises(DegenerateConfigurationError):
        estimate_similarity(line)
    same = [((1, 1, 1), (i, 0, 0)) for i in range(4)]
    with pytest.raises(DegenerateConfigurationError):
        estimate_similarity(same)


def test_reflection_rejected():
    pts = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1)]
    mirrored = [((x, y, z), (x, y, -z)) for x, y, z in pts]
    with pytest.raises(ReflectionError):
        estimate_similarity(mirrored)


def test_transform_algebra():
    rng = np.random.default_rng(5)
    t = random_similarity(rng)
    ident = t.compose(t.inverse())
    assert ident.scale == pytest.approx(1.0)
    assert np.allclose(ident.rotation, np.eye(3), atol=1e-12)
    assert np.allclose(ident.translation, 0, atol=1e-12)
    with pytest.raises(DomainError):
        SimilarityTransform(1.0, np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(DomainError):
        SimilarityTransform(0.0, np.eye(3), np.zeros(3))


def test_target_validation():
    with pytest.raises(DomainError):
        TargetWindow("W", (0, 0, 0), (0, 0, 2))
    with pytest.raises(DomainError):
        TargetWindow("", (0, 0, 0))
    with pytest.raises(DomainError):
        QrObservation("W", (0, 0), "")


# -- matching ----------------------------------------------------------------

IDENT = SimilarityTransform.identity()


def site(n):
    return [TargetWindow(f"W{i:02d}", (float(i), 0.0, 3.0)) for i in range(n)]


def test_match_examples():
    targets = site(3)
    obs = [
        QrObservation("W00", (0.0, 0.05, 3.0)),
        QrObservation("W01", (1.0, 0.5, 3.0)),
        QrObservation("W01", (1.0, 0.8, 3.0)),
        QrObservation("ZZ", (9.0, 9.0, 9.0)),
    ]
    r = match_observations(targets, obs, IDENT, 0.1)
    assert [w for w, _ in r.confirmed] == ["W00"]
    assert [w for w, _ in r.position_mismatch] == ["W01"]
    assert r.position_mismatch[0][1] == pytest.approx(0.5)
    assert r.duplicates[0][1] == pytest.approx(0.8)
    assert [(p.window_id, p.reason, p.note) for p in r.pending] == [("W02", Reason.NO_OBSERVATION, NO_OBSERVATION_NOTE)]
    assert [p.window_id for p in r.unknown_observations] == ["ZZ"]
    assert r.unknown_observations[0].reason is Reason.ID_NOT_IN_TARGETS


def test_displaced_by_twice_tolerance():
    tol = 0.1
    targets = site(4)
    obs = [QrObservation(t.window_id, np.add(t.planned_position, (0, 2 * tol, 0))) for t in targets]
    r = match_observations(targets, obs, IDENT, tol)
    assert len(r.position_mismatch) == 4 and not r.confirmed


def test_duplicate_targets_rejected():
    with pytest.raises(DomainError):
        match_observations(site(2) + site(1), [], IDENT)


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 0.5), st.floats(0.01, 0.5))
def test_tolerance_monotone(seed, t1, t2):
    lo, hi = sorted((t1, t2))
    rng = np.random.default_rng(seed)
    targets = site(10)
    obs = [QrObservation(t.window_id, np.add(t.planned_position, rng.normal(scale=0.2, size=3)))
           for t in targets if rng.random() < 0.8]
    a = {w for w, _ in match_observations(targets, obs, IDENT, lo).confirmed}
    b = {w for w, _ in match_observations(targets, obs, IDENT, hi).confirmed}
    assert a <= b


# -- quality and full report -------------------------------------------------

def noisy(seed=0, lo=40, hi=215):
    rng = np.random.default_rng(seed)
    return LuminanceGrid(rng.integers(lo, hi, (32, 32), dtype=np.uint8))


def test_quality_examples():
    th = QualityThresholds()
    good = assess_quality(noisy(), th, "g")
    assert good.passed
    flat = assess_quality(LuminanceGrid.filled(32, 32, 128), th)
    assert not flat.sharpness_ok and not flat.contrast_ok and flat.exposure_ok
    white = assess_quality(LuminanceGrid.filled(32, 32, 255), th)
    assert not white.exposure_ok and white.clip_fraction == 1.0
    assert good.to_json()["passed"] is True


def test_config_requires_fields():
    with pytest.raises(ConfigError):
        ReconcileConfig.from_json({"pos_tol": 0.1})
    with pytest.raises(ConfigError):
        ReconcileConfig.from_json({"quality": {"min_sharpness": 1, "min_contrast": 0, "max_clip_fraction": 1}, "pos_tol": 0})
    with pytest.raises(ConfigError):
        build_report([], {}, [], [], None)


MARKER_PTS = [(0, 0, 0), (10, 0, 0), (0, 8, 0), (0, 0, 6), (10, 8, 6)]


def make_site(transform, n=5):
    targets = site(n)
    inv = transform.inverse()
    markers = [MarkerObservation(f"M{i}", apply_transform(inv, p), p) for i, p in enumerate(MARKER_PTS)]
    obs = [QrObservation(t.window_id, apply_transform(inv, t.planned_position), "img") for t in targets]
    return targets, markers, obs


def test_five_window_site():
    rng = np.random.default_rng(6)
    t = random_similarity(rng)
    targets, markers, obs = make_site(t)
    r = build_report(targets, {"img": noisy()}, markers, obs, ReconcileConfig())
    assert len(r.confirmed) == 5 and not r.pending and not r.position_mismatch
    assert r.registration.rms_residual < 1e-9


def test_collinear_markers_make_everything_pending():
    targets, _, obs = make_site(IDENT)
    markers = [MarkerObservation(f"M{i}", (i, i, i), (i, i, i)) for i in range(4)]
    r = build_report(targets, {}, markers, obs, ReconcileConfig())
    assert {p.reason for p in r.pending} == {Reason.INSUFFICIENT_MARKERS}
    assert len(r.pending) == 5 and not r.confirmed


def test_no_observation_site():
    targets, markers, _ = make_site(IDENT)
    r = build_report(targets, {}, markers, [], ReconcileConfig())
    assert [p.reason for p in r.pending] == [Reason.NO_OBSERVATION] * 5


def test_rejected_images_drop_observations_and_coverage_hint():
    targets, markers, obs = make_site(IDENT, 3)
    obs = [QrObservation(o.window_id, o.observed_position, "dark" if o.window_id == "W01" else "img") for o in obs]
    cfg = ReconcileConfig(coverage={"dark": ["W01"]})
    images = {"img": noisy(), "dark": LuminanceGrid.filled(32, 32, 0)}
    r = build_report(targets, images, markers, obs, cfg)
    assert [q.image for q in r.quality_rejections] == ["dark"]
    assert [(p.window_id, p.reason) for p in r.pending] == [("W01", Reason.LOW_QUALITY_IMAGES)]
    r = build_report(targets, images, markers, obs, ReconcileConfig())
    assert [(p.window_id, p.reason) for p in r.pending] == [("W01", Reason.NO_OBSERVATION)]


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_partition_on_random_sites(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 21))
    t = random_similarity(rng)
    targets, markers, obs = make_site(t, n)
    obs = [QrObservation(o.window_id, np.add(o.observed_position, rng.normal(scale=0.08, size=3)), "img")
           for o in obs if rng.random() < 0.7]
    r = build_report(targets, {"img": noisy()}, markers, obs, ReconcileConfig())
    ids = [w for w, _ in r.confirmed] + [w for w, _ in r.position_mismatch] + [p.window_id for p in r.pending]
    assert sorted(ids) == sorted(tt.window_id for tt in targets)
    assert math.isfinite(r.registration.rms_residual)
