from __future__ import annotations

import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torsopose.geometry import project_point
from torsopose.simulator import (NOISE_PROFILES, AvatarTemplate, GenerationConfig, NoiseModel,
                                 generate_dataset, generate_path, pose_skeleton,
                                 signature_histogram, simulate, synthesize_frame)
from torsopose.matcher import bhattacharyya_distance
from torsopose.skeleton import GroundTruthPose, JointId, load_dataset

J = JointId


def test_template_is_mirror_symmetric():
    body = AvatarTemplate().array()
    for j in JointId:
        if j.name.startswith("LEFT_"):
            r = J[j.name.replace("LEFT_", "RIGHT_")]
            assert np.array_equal(body[j] * [1, -1, 1], body[r])
    shoulder_breadth = body[J.LEFT_SHOULDER, 1] - body[J.RIGHT_SHOULDER, 1]
    assert 0.3 < shoulder_breadth < 0.6


def test_path_short_duration_and_determinism(rig):
    p = generate_path(rig.room, 0.1, seed=1)
    assert len(p) >= 1
    a, b = generate_path(rig.room, 5.0, seed=3), generate_path(rig.room, 5.0, seed=3)
    for f in ("t", "x", "y", "alpha"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    with pytest.raises(ValueError):
        generate_path(rig.room, 0.0, seed=1)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_path_stays_in_room(seed):
    from torsopose.geometry import RoomBounds
    room = RoomBounds(2.5, 3.5, 2.0)
    p = generate_path(room, 30.0, seed=seed)
    assert np.all(np.abs(p.x) <= room.hx) and np.all(np.abs(p.y) <= room.hy)
    assert np.all(p.alpha > -np.pi) and np.all(p.alpha <= np.pi)


@given(st.floats(-np.pi, np.pi), st.floats(-2, 2), st.floats(-2, 2))
def test_shoulder_line_normal_is_facing_direction(alpha, x, y):
    w = pose_skeleton(AvatarTemplate(), GroundTruthPose(0, x, y, alpha))
    v = w[J.RIGHT_SHOULDER, :2] - w[J.LEFT_SHOULDER, :2]
    facing = np.array([-v[1], v[0]]) / np.hypot(*v)  # +90 degrees
    assert np.allclose(facing, [np.cos(alpha), np.sin(alpha)], atol=1e-12)
    mid = (w[J.RIGHT_SHOULDER, :2] + w[J.LEFT_SHOULDER, :2]) / 2
    assert np.allclose(mid, [x, y], atol=1e-12)


def test_alpha_zero_symmetric_shoulders():
    w = pose_skeleton(AvatarTemplate(), GroundTruthPose(0, 0.5, 0.3, 0.0))
    assert w[J.LEFT_SHOULDER, 1] - 0.3 == pytest.approx(0.3 - w[J.RIGHT_SHOULDER, 1])


def test_centered_person_seen_fully_by_all_cameras(rig):
    w = pose_skeleton(AvatarTemplate(), GroundTruthPose(0, 0.0, 0.0, 0.3))
    obs = synthesize_frame(w, rig, NOISE_PROFILES["none"], 0.0, np.random.default_rng(0))
    assert len(obs) == 3 and all(len(o.joints) == 17 for o in obs)


def test_full_dropout_gives_no_observations(rig):
    w = pose_skeleton(AvatarTemplate(), GroundTruthPose(0, 0.0, 0.0, 0.3))
    obs = synthesize_frame(w, rig, NoiseModel(dropout=1.0), 0.0, np.random.default_rng(0))
    assert obs == []


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(dropout=1.5)
    with pytest.raises(ValueError):
        NoiseModel(pixel_sigma=-1)


def test_zero_noise_reprojection_is_exact(rig):
    ds = simulate(GenerationConfig(30, seed=2, noise=NOISE_PROFILES["none"]), rig)
    for f in ds.frames:
        for o in f.observations:
            cam = rig.camera(o.camera)
            for jd in o.joints:
                pix, _, vis = project_point(jd.xyz, cam)
                assert vis and tuple(pix) == jd.pixel


def test_simulate_counts_and_invariants(rig):
    ds = simulate(GenerationConfig(100, seed=4, noise=NOISE_PROFILES["moderate"], people=2),
                  rig)
    assert len(ds.frames) == 100
    assert len(ds.ground_truth) == 200
    assert all(-np.pi < g.alpha <= np.pi for g in ds.ground_truth)
    for f in ds.frames:
        for o in f.observations:
            assert o.timestamp == f.timestamp and o.person in (0, 1)
            assert abs(o.histogram.sum() - 1) < 1e-9


def test_jitter_free_determinism(rig):
    cfg = GenerationConfig(20, seed=9, noise=replace(NOISE_PROFILES["moderate"], pixel_sigma=0))
    a, b = simulate(cfg, rig), simulate(cfg, rig)
    pa = [jd.pixel for f in a.frames for o in f.observations for jd in o.joints]
    pb = [jd.pixel for f in b.frames for o in f.observations for jd in o.joints]
    assert pa == pb


def test_signatures_disjoint_and_noise_small():
    a, b = signature_histogram(0, 3), signature_histogram(1, 3)
    assert bhattacharyya_distance(a, b) == 1.0
    rng = np.random.default_rng(0)
    from torsopose.simulator import perturb_histogram
    d = [bhattacharyya_distance(a, perturb_histogram(a, 0.05, rng)) for _ in range(50)]
    assert max(d) < 0.3


def test_generate_dataset_byte_identical_with_manifest(tmp_path, rig):
    cfgs = [GenerationConfig(40, seed=1, noise=NOISE_PROFILES["moderate"]),
            GenerationConfig(20, seed=2, noise=NOISE_PROFILES["occluded"], source="occ")]
    m1 = generate_dataset(cfgs, tmp_path / "a.json", rig)
    m2 = generate_dataset(cfgs, tmp_path / "b.json", rig)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert m1["sha256"] == m2["sha256"] and m1["config_hash"] == m2["config_hash"]
    assert m1["frames"] == 60 and m1["sources"] == {"sim": 40, "occ": 20}
    manifest = json.loads((tmp_path / "a.json.manifest.json").read_text())
    assert manifest["seeds"] == [1, 2]
    ds = load_dataset(tmp_path / "a.json")
    times = [f.timestamp for f in ds.frames]
    assert times == sorted(times) and len(set(times)) == 60


def test_hidden_joints_reported_with_occluder_depth(rig):
    w = pose_skeleton(AvatarTemplate(), GroundTruthPose(0, 0.0, 0.0, 0.3))
    noise = NoiseModel(region_occlusion=1.0, hidden_reported=1.0, hidden_score_mean=0.3)
    obs = synthesize_frame(w, rig, noise, 0.0, np.random.default_rng(1))
    assert len(obs) == 3 and all(len(o.joints) == 17 for o in obs)
    moved = 0
    for o in obs:
        cam = rig.camera(o.camera)
        for jd in o.joints:
            true = w[jd.joint]
            pix, _, _ = project_point(true, cam)
            assert np.allclose(jd.pixel, pix, atol=1e-6)  # same viewing ray
            if not np.allclose(jd.xyz, true):
                moved += 1
                assert jd.score < 0.6
                assert (np.linalg.norm(np.subtract(jd.xyz, cam.center))
                        < np.linalg.norm(true - cam.center))
    assert moved > 0
    with pytest.raises(ValueError):
        NoiseModel(hidden_reported=2.0)
