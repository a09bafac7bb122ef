"""Multi-object question answering with rectangle focus."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import imgcore, scene2d
from .common import PackingFailed, Task, normalise
from .synth import NAMED_COLORS, SHAPES, paint, shape_mask, smooth_texture

GENERATOR_VERSION = "qa-1"
ABSENT = "absent"
BOX_PAD = 4

PLAN = ("Answer a question about one object in a cluttered image. First draw a rectangle around the "
        "object the question is about with RECT x1,y1,x2,y2 (top-left corner, then the corner just "
        "past the bottom-right), look at the focused region, then reply ANSWER: <answer>. Name shapes "
        "as circle, square or star. If the object is not in the image, reply ANSWER: absent.\n"
        "Question: ")


@dataclass
class QAInstance:
    image: np.ndarray
    labels: np.ndarray
    question: str
    answer: str
    target_id: int | None
    bbox: tuple | None  # x0, y0, x1, y1 with x1, y1 exclusive
    objects: list = field(default_factory=list)
    seed: int | None = None
    params: dict = field(default_factory=dict)


def gen_multiobject_qa(seed: int, n_objects: int = 6, width: int = 256, height: int = 256,
                       absent_prob: float = 0.2, max_tries: int = 400) -> QAInstance:
    """Cluttered scene plus a shape question about the object of one colour.

    Colours are unique per scene so the question is unambiguous. With
    probability ``absent_prob`` the asked colour is not in the scene.
    """
    if n_objects < 2:
        raise ValueError("n_objects must be >= 2")
    names = list(NAMED_COLORS)
    if n_objects >= len(names):
        raise ValueError(f"at most {len(names) - 1} objects (one colour per object)")
    rng = np.random.default_rng(seed)
    image = smooth_texture(rng, width, height)
    labels = np.zeros((height, width), np.int32)
    colors = [names[i] for i in rng.permutation(len(names))]
    objects = []
    for k in range(1, n_objects + 1):
        for _ in range(max_tries):
            r = rng.uniform(12, 20)
            cx, cy = rng.uniform(r + 2, width - r - 3), rng.uniform(r + 2, height - r - 3)
            if all(np.hypot(cx - o["center"][0], cy - o["center"][1]) > r + o["radius"] + 6 for o in objects):
                break
        else:
            raise PackingFailed(f"could not place object {k} of {n_objects} (seed {seed})")
        kind = SHAPES[int(rng.integers(len(SHAPES)))]
        m = shape_mask(kind, cx, cy, r, width, height, angle=rng.uniform(0, 2 * np.pi))
        labels[m] = k
        image = paint(image, m, NAMED_COLORS[colors[k - 1]])
        objects.append({"id": k, "shape": kind, "color": colors[k - 1], "center": [float(cx), float(cy)],
                        "radius": float(r)})
    params = {"n_objects": n_objects, "width": width, "height": height, "absent_prob": absent_prob,
              "version": GENERATOR_VERSION}
    if rng.random() < absent_prob:
        color = colors[n_objects]
        return QAInstance(image, labels, f"What shape is the {color} object?", ABSENT, None, None,
                          objects, seed, params)
    target = objects[int(rng.integers(n_objects))]
    box = imgcore.mask_bbox(labels == target["id"])
    bbox = (max(box.x0 - BOX_PAD, 0), max(box.y0 - BOX_PAD, 0),
            min(box.x1 + 1 + BOX_PAD, width), min(box.y1 + 1 + BOX_PAD, height))
    return QAInstance(image, labels, f"What shape is the {target['color']} object?", target["shape"],
                      target["id"], bbox, objects, seed, params)


class QATask(Task):
    kind = "qa"
    allow_rect = True
    default_budget = 10

    @property
    def plan(self) -> str:
        return PLAN + self.instance.question

    def initial_space(self):
        return scene2d.new_scene(self.instance.image, labels=self.instance.labels)

    def parse_answer(self, text: str):
        return normalise(text)

    def evaluate(self, ep) -> dict:
        ans = ep.outcome.answer
        pred = None if ans is None else ans.parsed_value
        truth = self.instance.answer
        correct = pred is not None and truth in pred.split()
        return {"truth": truth, "pred": pred, "correct": correct}


@dataclass
class QAMetrics:
    accuracy: float
    n: int


def score_qa(results) -> QAMetrics:
    results = list(results)
    if not results:
        return QAMetrics(0.0, 0)
    return QAMetrics(float(np.mean([bool(r["correct"]) for r in results])), len(results))
