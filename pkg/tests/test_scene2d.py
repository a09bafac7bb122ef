from dataclasses import replace

import numpy as np
import pytest

from visloop import imgcore, scene2d
from visloop.base import CURSOR, DegenerateRect, Direction, SegmentationFailed, StepSchedule, WrongFocus
from visloop.policy.oracle import interior_point
from visloop.segmenter import InstanceMapOracle
from visloop.tasks import CountingTask, gen_counting


def disk_scene(size=128, disks=((40, 40, 12), (90, 80, 15)), region=None, step=None):
    rng = np.random.default_rng(0)
    img = imgcore.new_image(size, size, (90, 100, 110, 255))
    img[..., :3] = np.clip(img[..., :3].astype(int) + rng.integers(-5, 6, (size, size, 3)), 0, 255)
    labels = np.zeros((size, size), np.int32)
    yy, xx = np.mgrid[:size, :size]
    for k, (cx, cy, r) in enumerate(disks, 1):
        m = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
        labels[m] = k
        img[m] = (200, 40 * k, 30, 255)
    return scene2d.new_scene(img, labels=labels, region_mask=region, step=step), labels


def focus_at(scene, point):
    scene = replace(scene, cursor=point)
    scene, preview = scene2d.request_focus(scene, InstanceMapOracle())
    return scene, preview


def test_render_deterministic_and_hidden_layer_equivalence():
    scene, _ = disk_scene()
    assert scene2d.render(scene).tobytes() == scene2d.render(scene).tobytes()
    s, _ = focus_at(scene, (40, 40))
    s = scene2d.ignore(scene2d.accept_focus(s))
    assert np.array_equal(scene2d.render(s), scene2d.render(replace(s, layers=())))


def test_render_without_cursor_under_object_focus():
    scene, _ = disk_scene()
    s = scene2d.focus_rect(scene, (0, 0), (128, 128))
    assert np.array_equal(scene2d.render(s), scene.base)


def test_move_cursor_step_and_clamp():
    img = imgcore.new_image(512, 512)
    s = scene2d.new_scene(img)
    assert s.cursor == (256, 256) and s.step.pixels == 64
    assert scene2d.move_cursor(s, "d").cursor == (320, 256)
    left = replace(s, cursor=(0, 100))
    assert scene2d.move_cursor(left, Direction.LEFT).cursor == (0, 100)


def test_move_cursor_scripted_trajectory():
    s = scene2d.new_scene(imgcore.new_image(512, 512), step=StepSchedule(64, 64, floor=2, decay=0.8))
    for d in "ddcdccdd":
        s = scene2d.move_cursor(s, d)
    # steps: 64, 64, 51, 41, 33, 33, 26, 26 (each reversal multiplies by 0.8, then rounds)
    assert s.cursor[0] == 256 + 64 + 64 - 51 + 41 - 33 - 33 + 26 + 26
    assert s.step.current == pytest.approx(64 * 0.8 ** 4)


def test_move_cursor_wrong_focus():
    scene, _ = disk_scene()
    s = scene2d.focus_rect(scene, (0, 0), (10, 10))
    with pytest.raises(WrongFocus):
        scene2d.move_cursor(s, "a")


def test_request_focus_matches_instance_mask():
    scene, labels = disk_scene()
    s, preview = focus_at(scene, (90, 80))
    assert s.focus.is_pending
    assert np.array_equal(s.focused.placed_mask(labels.shape), labels == 2)
    assert preview.shape == scene.base.shape


def test_request_focus_background_fails_unchanged():
    scene, _ = disk_scene()
    s = replace(scene, cursor=(5, 120))
    with pytest.raises(SegmentationFailed):
        scene2d.request_focus(s, InstanceMapOracle())
    assert s.focus == CURSOR and s.layers == ()


def test_second_request_without_accept_errors():
    scene, _ = disk_scene()
    s, _ = focus_at(scene, (40, 40))
    with pytest.raises(WrongFocus):
        scene2d.request_focus(s, InstanceMapOracle())


def test_reject_restores_render():
    scene, _ = disk_scene()
    s0 = replace(scene, cursor=(40, 40))
    s, _ = scene2d.request_focus(s0, InstanceMapOracle())
    assert np.array_equal(scene2d.render(scene2d.reject_focus(s)), scene2d.render(s0))


def test_accept_changes_only_cursor_and_fringe():
    scene, labels = disk_scene()
    s0 = replace(scene, cursor=(40, 40))
    s, _ = scene2d.request_focus(s0, InstanceMapOracle())
    s = scene2d.accept_focus(s)
    before, after = scene2d.render_clean(s0), scene2d.render_clean(s)
    obj = labels == 1
    ring = imgcore.mask_dilate(obj, imgcore.HOLE_DILATION) & ~obj
    diff = (before != after).any(-1)
    assert not (diff & ~ring).any()
    assert not np.array_equal(s.base[obj], scene.base[obj])


def test_ignore_removes_and_refocus_finds_fill():
    scene, labels = disk_scene(disks=((60, 60, 14),))
    s, _ = focus_at(scene, (60, 60))
    s = scene2d.ignore(scene2d.accept_focus(s))
    assert s.focus.is_cursor
    assert np.array_equal(scene2d.render_clean(s), s.base)
    assert not (scene2d.render_clean(s)[labels == 1] == (200, 40, 30, 255)).all(-1).any()
    with pytest.raises(SegmentationFailed):
        scene2d.request_focus(replace(s, cursor=(60, 60)), InstanceMapOracle())
    with pytest.raises(WrongFocus):
        scene2d.ignore(s)


def test_counting_ignores_approach_reference():
    inst = gen_counting(3, 5)
    s = CountingTask(inst).initial_space()
    for k in range(1, 6):
        lab = scene2d.render_labels(s)
        s, _ = focus_at(s, interior_point(lab == k))
        s = scene2d.ignore(scene2d.accept_focus(s))
    out = scene2d.render_clean(s).astype(int)
    ref = inst.reference.astype(int)
    assert (out[inst.instance_map == 0] == ref[inst.instance_map == 0]).mean() > 0.9
    # the reference texture is smooth, so the fill stays close to it
    assert np.abs(out - ref).mean() < 4


def test_move_object_step_and_region_refusal():
    region = np.zeros((128, 128), bool)
    region[20:110, 20:110] = True
    scene, _ = disk_scene(region=region, step=StepSchedule(32, 32))
    s, _ = focus_at(scene, (40, 40))
    s = scene2d.accept_focus(s)
    off = s.focused.offset
    moved, refused = scene2d.move_object(s, "b")
    assert not refused and moved.focused.offset == (off[0], off[1] + 32)
    up, refused = scene2d.move_object(s, "a")
    assert refused and up is s


def test_move_right_then_left_restores_render():
    scene, _ = disk_scene(step=StepSchedule(10, 10, decay=1.0))
    s, _ = focus_at(scene, (90, 80))
    s = scene2d.accept_focus(s)
    s1 = scene2d.move_object(scene2d.move_object(s, "d").scene, "c").scene
    assert np.array_equal(scene2d.render(s1), scene2d.render(s))


def test_release_and_reselect_same_layer():
    scene, _ = disk_scene(step=StepSchedule(8, 8))
    s, _ = focus_at(scene, (40, 40))
    s = scene2d.accept_focus(s)
    lid = s.focus.layer_id
    s = scene2d.move_object(s, "d").scene
    before = scene2d.render_clean(s)
    r = scene2d.release_object(s)
    assert np.array_equal(scene2d.render_clean(r), before)
    assert r.focus.is_cursor
    with pytest.raises(WrongFocus):
        scene2d.release_object(r)
    again, _ = focus_at(r, (48, 40))
    assert again.focus.layer_id == lid and again.focus.reselect
    assert len(again.layers) == 1


def test_focus_rect():
    scene, _ = disk_scene()
    full = scene2d.focus_rect(scene, (0, 0), (128, 128))
    assert np.array_equal(full.focused.image, scene2d.render_clean(scene))
    s = scene2d.focus_rect(scene, (10, 10), (20, 20))
    m = s.focused.placed_mask((128, 128))
    assert m.sum() == 100 and m[10:20, 10:20].all()
    assert np.array_equal(scene2d.crop_focus(s), scene2d.render_clean(scene)[10:20, 10:20])
    with pytest.raises(DegenerateRect):
        scene2d.focus_rect(scene, (5, 5), (5, 9))


def test_random_action_sequences_state_machine():
    scene, labels = disk_scene(step=StepSchedule(12, 12))
    orig = scene2d.render_clean(scene)
    rng = np.random.default_rng(9)
    ops = ["move", "focus", "accept", "reject", "ignore", "release", "rect"]
    seg = InstanceMapOracle()
    for trial in range(30):
        s = scene
        touched = np.zeros(labels.shape, bool)
        prev_step = s.step.current
        for _ in range(40):
            op = ops[int(rng.integers(len(ops)))]
            try:
                if op == "move":
                    d = "abcd"[int(rng.integers(4))]
                    s = scene2d.move_cursor(s, d) if s.focus.is_cursor else scene2d.move_object(s, d).scene
                elif op == "focus":
                    s, _ = scene2d.request_focus(s, seg)
                elif op == "accept":
                    s = scene2d.accept_focus(s)
                elif op == "reject":
                    s = scene2d.reject_focus(s)
                elif op == "ignore":
                    s = scene2d.ignore(s)
                elif op == "release":
                    s = scene2d.release_object(s)
                else:
                    s = scene2d.focus_rect(s, (30, 30), (60, 50))
            except (WrongFocus, SegmentationFailed) as exc:
                assert isinstance(exc, (WrongFocus, SegmentationFailed))
            assert s.focus.kind in ("cursor", "pending", "object")
            if s.focus.layer_id is not None:
                assert s.focused is not None
                if s.focus.is_object:
                    assert s.focused.visible
            assert s.step.floor <= s.step.current <= prev_step
            prev_step = s.step.current
            for lay in s.layers:
                if lay.lifted:
                    touched |= imgcore.mask_dilate(lay.placed_mask(labels.shape), 2)
                    touched |= imgcore.mask_dilate(lay.original_mask(labels.shape), 2)
        assert np.array_equal(scene2d.render_clean(s)[~touched], orig[~touched])


def test_illegal_actions_do_not_mutate():
    scene, _ = disk_scene()
    for fn in (scene2d.accept_focus, scene2d.reject_focus, scene2d.ignore, scene2d.release_object):
        with pytest.raises(WrongFocus):
            fn(scene)
    assert scene.focus == CURSOR and scene.layers == ()


def test_descriptor_round_trip(tmp_path):
    scene, labels = disk_scene()
    imgcore.save_png(tmp_path / "base.png", scene.base)
    imgcore.save_labels(tmp_path / "ids.png", labels)
    imgcore.save_mask(tmp_path / "region.png", labels > 0)
    desc = scene2d.SceneDescriptor((128, 128), "base.png", "ids.png", "region.png",
                                   [scene2d.ObjectAnnotation(1, "ids.png", "disk")])
    desc.save(tmp_path / "scene.json")
    back = scene2d.SceneDescriptor.load(tmp_path / "scene.json")
    assert back == desc
    loaded = scene2d.load_scene(back, tmp_path)
    assert np.array_equal(loaded.base, scene.base)
    assert np.array_equal(loaded.labels, labels)
    assert np.array_equal(loaded.region_mask, labels > 0)
