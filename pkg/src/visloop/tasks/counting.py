"""Counting: coloured shapes on a textured background, counted by removal."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import scene2d
from .common import PackingFailed, Task, first_int
from .synth import SHAPES, inradius, is_connected, paint, shape_mask, smooth_texture, vivid_color

logger = logging.getLogger(__name__)

GENERATOR_VERSION = "counting-1"
N_MAX = 30
DIFFICULTY_SWEEP = (2, 5, 10, 15, 20, 30)
MIN_VISIBLE = 0.3
MIN_INRADIUS = 3.0

PLAN = ("Count the objects in the image by removing them one at a time. Move the cursor onto an "
        "object and FOCUS. ACCEPT if the highlight covers exactly one whole visible object, otherwise "
        "REJECT. After accepting, IGNORE the object to remove it. When no objects remain, reply "
        "ANSWER: <number of objects removed>.")


@dataclass
class CountingInstance:
    image: np.ndarray
    instance_map: np.ndarray | None
    true_count: int
    reference: np.ndarray | None
    seed: int | None = None
    params: dict = field(default_factory=dict)
    objects: list = field(default_factory=list)


def _radius_range(n: int, width: int, height: int) -> tuple[float, float]:
    hi = float(np.clip(0.33 * np.sqrt(width * height / max(n, 1)), 10.0, 18.0))
    return 0.7 * hi, hi


def gen_counting(seed: int, n_objects: int, width: int = 256, height: int = 256,
                 allow_occlusion: bool = True, min_visible: float = MIN_VISIBLE,
                 max_tries: int = 400) -> CountingInstance:
    """Deterministic counting scene.

    Later objects may partly cover earlier ones, but every object keeps at
    least ``min_visible`` of its area as one connected visible region.
    """
    if n_objects < 0:
        raise ValueError("n_objects must be >= 0")
    rng = np.random.default_rng(seed)
    reference = smooth_texture(rng, width, height)
    lo, hi = _radius_range(n_objects, width, height)
    full, meta = [], []
    ids = np.zeros((height, width), np.int32)
    for k in range(1, n_objects + 1):
        for _ in range(max_tries):
            r = rng.uniform(lo, hi)
            cx = rng.uniform(r + 2, width - r - 3)
            cy = rng.uniform(r + 2, height - r - 3)
            kind = SHAPES[int(rng.integers(len(SHAPES)))]
            m = shape_mask(kind, cx, cy, r, width, height, angle=rng.uniform(0, 2 * np.pi))
            covered = ids[m]
            if not allow_occlusion and covered.any():
                continue
            trial = ids.copy()
            trial[m] = k
            if not _visible_ok(m, m, 1.0):
                continue
            if all(_visible_ok(trial == j, full[j - 1], min_visible) for j in np.unique(covered) if j > 0):
                ids = trial
                full.append(m)
                meta.append({"id": k, "shape": kind, "center": [float(cx), float(cy)], "radius": float(r),
                             "color": list(vivid_color(rng))})
                break
        else:
            raise PackingFailed(f"could not place object {k} of {n_objects} (seed {seed})")
    image = reference
    for m, o in zip(full, meta):
        image = paint(image, m, o["color"])
    params = {"n_objects": n_objects, "width": width, "height": height, "allow_occlusion": allow_occlusion,
              "min_visible": min_visible, "version": GENERATOR_VERSION}
    return CountingInstance(image, ids, n_objects, reference, seed, params, meta)


def _visible_ok(visible: np.ndarray, full: np.ndarray, min_visible: float) -> bool:
    return (visible.sum() >= min_visible * full.sum() and is_connected(visible)
            and inradius(visible) >= MIN_INRADIUS)


class CountingTask(Task):
    kind = "counting"
    plan = PLAN
    default_budget = 4 * N_MAX + 10

    def initial_space(self):
        inst = self.instance
        return scene2d.new_scene(inst.image, labels=inst.instance_map)

    def parse_answer(self, text: str):
        return first_int(text)

    def evaluate(self, ep) -> dict:
        truth = self.instance.true_count
        ans = ep.outcome.answer
        pred = None if ans is None else ans.parsed_value
        return {"truth": truth, "pred": pred, "correct": pred == truth,
                "error": abs(pred - truth) if pred is not None else truth}


@dataclass
class CountingMetrics:
    success_rate: float
    mean_error: float
    variance: float
    n: int


def score_counting(answers, truths) -> CountingMetrics:
    """Exact-match success and absolute-error statistics (population variance).

    An unparsable answer (``None``) fails and scores error = true count.
    """
    answers, truths = list(answers), list(truths)
    if len(answers) != len(truths):
        raise ValueError("answers and truths differ in length")
    if not truths:
        return CountingMetrics(0.0, 0.0, 0.0, 0)
    errors = np.array([t if a is None else abs(a - t) for a, t in zip(answers, truths)], float)
    success = float(np.mean([a is not None and a == t for a, t in zip(answers, truths)]))
    return CountingMetrics(success, float(errors.mean()), float(errors.var()), len(truths))
