"""Task interface used by the runtime, plus shared errors."""

from __future__ import annotations

import re


class PackingFailed(RuntimeError):
    """The generator could not place the requested objects."""


class MalformedDataset(ValueError):
    pass


class Task:
    """Binds one instance to the runtime.

    Subclasses set ``kind``, ``plan`` and ``default_budget`` and implement
    ``initial_space``, ``parse_answer`` and ``evaluate``. ``after_action`` is
    the hook for task mechanics such as jigsaw snapping; it returns the
    (possibly updated) space and an optional terminal failure reason.
    """

    kind = "task"
    plan = ""
    allow_rect = False
    default_budget = 60

    def __init__(self, instance, instance_id: str = ""):
        self.instance = instance
        self.instance_id = instance_id

    def initial_space(self):
        raise NotImplementedError

    def init_state(self) -> dict:
        return {}

    def after_action(self, space, action, event: dict, state: dict):
        return space, None

    def parse_answer(self, text: str):
        return text.strip()

    def evaluate(self, ep) -> dict:
        raise NotImplementedError


def first_int(text: str) -> int | None:
    m = re.search(r"-?\d+", text or "")
    return int(m.group()) if m else None


def normalise(text: str) -> str:
    return re.sub(r"[^a-z0-9 ]", "", (text or "").lower()).strip()
