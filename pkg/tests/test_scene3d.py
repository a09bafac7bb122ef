import numpy as np
import pytest

from visloop.base import SegmentationFailed
from visloop.scene3d import (Camera, DegenerateCamera, GaussianScene, SegConfig, TopDownView, render_splats,
                             render_topdown, segment_conditional)
from visloop.scene3d.gaussians import load_scene, load_trajectory, read_ply, save_scene, save_trajectory, write_ply
from visloop.scene3d.segment import (MaskShapeMismatch, NoVotes, PlanarRegion, fill_interior, make_orbit,
                                     ray_vote, select_shell, transform_3d)
from visloop.segmenter import InstanceMapOracle


def center_cam(size=65):
    return Camera((0.0, -10.0, 0.0), (0.0, 0.0, 0.0), width=size, height=size)


def test_camera_validation():
    with pytest.raises(DegenerateCamera):
        Camera((0, 0, 0), (0, 0, 0))
    with pytest.raises(DegenerateCamera):
        Camera((0, -1, 0), (0, 0, 0), fov_y=np.pi)


def test_zero_opacity_renders_background():
    scene = GaussianScene.build(np.zeros((3, 3)), 0.5, opacities=0.0)
    img = render_splats(scene, center_cam(), background=(0.2, 0.4, 0.6))
    assert (img[..., :3] == np.round(np.array([0.2, 0.4, 0.6]) * 255)).all()


def test_single_gaussian_brightest_at_center():
    scene = GaussianScene.build([[0.0, 0.0, 0.0]], 0.4, opacities=1.0, colors=1.0)
    img = render_splats(scene, center_cam(64)).astype(int)
    y, x = np.unravel_index(np.argmax(img[..., 0]), img.shape[:2])
    assert abs(x - 31.5) <= 1 and abs(y - 31.5) <= 1


def test_two_term_compositing():
    scene = GaussianScene.build([[0, 0, 0], [0, 2, 0]], 0.3, opacities=[0.6, 0.5],
                                colors=[[1, 0, 0], [0, 0, 1]])
    img = render_splats(scene, center_cam()).astype(float) / 255
    expect = 0.6 * np.array([1, 0, 0]) + 0.5 * 0.4 * np.array([0, 0, 1])
    np.testing.assert_allclose(img[32, 32, :3], expect, atol=2 / 255)


def test_colocated_closed_form():
    rng = np.random.default_rng(1)
    k = 5
    ops = rng.uniform(0.1, 0.7, k)
    cols = rng.uniform(0, 1, (k, 3))
    depths = np.arange(k) * 0.01
    scene = GaussianScene.build(np.stack([np.zeros(k), depths, np.zeros(k)], 1), 0.3, opacities=ops, colors=cols)
    img = render_splats(scene, center_cam()).astype(float) / 255
    expect = sum(cols[i] * ops[i] * np.prod(1 - ops[:i]) for i in range(k))
    np.testing.assert_allclose(img[32, 32, :3], expect, atol=2 / 255)


def test_topdown_blob_position_and_shift():
    view = TopDownView((-4, 4, -4, 4), 64)
    scene = GaussianScene.build([[0.0, 0.0, 0.0]], 0.3, colors=1.0)
    img = render_topdown(scene, view).astype(int)
    y, x = np.unravel_index(np.argmax(img[..., 0]), img.shape[:2])
    assert abs(x - 31.5) <= 1 and abs(y - 31.5) <= 1
    assert render_topdown(scene, view).tobytes() == img.astype(np.uint8).tobytes()
    moved = render_topdown(scene.translated([1.0, 0, 0]), view)
    assert np.array_equal(moved[:, 8:], img[:, :-8].astype(np.uint8))
    with pytest.raises(ValueError):
        render_topdown(scene.translated([10.0, 0, 0]), view)


def test_orbit_geometry():
    cfg = SegConfig(n_frames=4)
    c = np.array([1.0, 2.0, 0.5])
    cams = make_orbit(c, 2.0, cfg)
    offs = [np.asarray(cam.position) - c for cam in cams]
    az = [np.degrees(np.arctan2(o[1], o[0])) % 360 for o in offs]
    np.testing.assert_allclose(az, [0, 90, 180, 270], atol=1e-9)
    np.testing.assert_allclose([np.linalg.norm(o) for o in offs], 6.0)
    cams = make_orbit(c, 1.5, SegConfig(n_frames=24))
    for i in range(12):
        a, b = np.asarray(cams[i].position) - c, np.asarray(cams[i + 12].position) - c
        np.testing.assert_allclose(a[:2], -b[:2], atol=1e-12)
        assert a[2] == pytest.approx(b[2])
    assert all(cam.look_at == tuple(c) for cam in cams)


def test_ray_vote_basics():
    cam = center_cam(33)
    scene = GaussianScene.build([[0.0, 0.0, 0.0]], 0.05, opacities=0.9)
    mask = np.zeros((33, 33), bool)
    assert ray_vote(scene, cam, mask, SegConfig()).tolist() == [0]
    mask[16, 16] = True
    assert ray_vote(scene, cam, mask, SegConfig(eps1=0.05)).tolist() == [1]
    with pytest.raises(MaskShapeMismatch):
        ray_vote(scene, cam, np.zeros((10, 10), bool), SegConfig())


def test_votes_monotone_in_mask():
    rng = np.random.default_rng(2)
    scene = GaussianScene.build(rng.normal(0, 0.8, (60, 3)), rng.uniform(0.1, 0.3, (60, 3)),
                                opacities=rng.uniform(0.2, 0.9, 60))
    cam = center_cam(48)
    small = rng.random((48, 48)) < 0.2
    big = small | (rng.random((48, 48)) < 0.3)
    assert (ray_vote(scene, cam, big, SegConfig()) >= ray_vote(scene, cam, small, SegConfig())).all()


def test_select_shell_rules():
    assert select_shell(np.array([10, 1, 0]), 0.1).tolist() == [0, 1]
    assert select_shell(np.array([0, 4, 0]), 0.1).tolist() == [1]
    assert select_shell(np.array([100, 9]), 0.1).tolist() == [0]
    votes = np.random.default_rng(3).integers(0, 50, 100)
    shell = select_shell(votes)
    inside = np.zeros(100, bool)
    inside[shell] = True
    assert (votes[inside] >= 0.1 * votes.max()).all() and (votes[~inside] < 0.1 * votes.max()).all()
    with pytest.raises(NoVotes):
        select_shell(np.zeros(4, int))


def hollow_sphere(n=1500, radius=2.0, extra=()):
    # Fibonacci lattice: even spacing, so the wall has no gaps wider than a footprint
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = np.pi * (1 + 5 ** 0.5) * i
    rho = np.sqrt(1 - z * z)
    pts = radius * np.stack([rho * np.cos(phi), rho * np.sin(phi), z], 1)
    pts = np.concatenate([pts, np.asarray(extra, float).reshape(-1, 3)])
    return GaussianScene.build(pts, 0.2)


def test_fill_interior_cases():
    scene = hollow_sphere(extra=[[0, 0, 0], [20, 0, 0]])
    shell = np.arange(1500)
    out = fill_interior(scene, shell)
    assert 1500 in out and 1501 not in out
    plain = hollow_sphere()
    assert np.array_equal(fill_interior(plain, np.arange(1500)), np.arange(1500))


def test_segment_empty_space_fails():
    scene = GaussianScene.build([[0, 0, 0]], 0.2, labels=1)
    with pytest.raises(SegmentationFailed):
        segment_conditional(scene, (0, 0), center_cam(64), InstanceMapOracle())


def test_transform_round_trip_and_refusal():
    view = TopDownView((-4, 4, -4, 4), 64)
    scene = GaussianScene.build(np.random.default_rng(5).normal(0, 0.2, (10, 3)), 0.1)
    there, refused = transform_3d(scene, "d", 0.75, view)
    back, _ = transform_3d(there, "c", 0.75, view)
    assert not refused
    np.testing.assert_allclose(back.centers, scene.centers, atol=1e-9)
    up, _ = transform_3d(scene, "a", 1.0, view)
    assert up.centers[:, 1].mean() > scene.centers[:, 1].mean()
    mask = np.zeros((64, 64), bool)
    mask[:, :36] = True
    region = PlanarRegion(mask, view)
    out, refused = transform_3d(scene, "d", 1.0, view, region)
    assert refused and out is scene


def test_transform_shows_in_topdown():
    view = TopDownView((-4, 4, -4, 4), 64)
    scene = GaussianScene.build([[0, 0, 0]], 0.3, colors=1.0)
    moved, _ = transform_3d(scene, "d", 0.5, view)
    a, b = render_topdown(scene, view), render_topdown(moved, view)
    assert np.array_equal(b[:, 4:], a[:, :-4])


def test_scene_file_round_trips(tmp_path):
    rng = np.random.default_rng(6)
    scene = GaussianScene.build(rng.normal(size=(20, 3)), rng.uniform(0.1, 0.5, (20, 3)), rng.normal(size=(20, 4)),
                                rng.uniform(0.1, 0.9, 20), rng.uniform(0, 1, (20, 3)), labels=rng.integers(0, 3, 20))
    save_scene(tmp_path / "s.gspl", scene, {"note": "x"})
    back, extra = load_scene(tmp_path / "s.gspl")
    assert extra == {"note": "x"}
    np.testing.assert_allclose(back.centers, scene.centers, atol=1e-6)
    np.testing.assert_allclose(back.opacities, scene.opacities, atol=1e-6)
    assert np.array_equal(back.labels, scene.labels)
    write_ply(tmp_path / "s.ply", scene)
    ply = read_ply(tmp_path / "s.ply")
    np.testing.assert_allclose(ply.scales, scene.scales, rtol=1e-5)
    np.testing.assert_allclose(ply.colors, scene.colors, atol=1e-5)
    np.testing.assert_allclose(ply.opacities, scene.opacities, atol=1e-5)
    cams = make_orbit([0, 0, 0], 1.0, SegConfig(n_frames=3))
    save_trajectory(tmp_path / "t.json", cams)
    assert load_trajectory(tmp_path / "t.json") == cams
