"""Dispatch parsed actions to the scene operators of either space."""

from __future__ import annotations

import numpy as np

from .. import imgcore, scene2d
from ..base import DegenerateRect, SegmentationFailed, WrongFocus
from ..policy.actions import ACCEPT, BOX, FOCUS, IGNORE, MOVE, RECT, REJECT, RELEASE, Action
from ..policy.prompts import CURSOR_MODE, OBJECT_MODE, VERIFY_MODE
from ..scene2d import Scene2D
from ..scene3d import space as space3d
from ..segmenter import ProviderError


class ProviderFailure(RuntimeError):
    """A provider failed after its retry policy; ends the episode."""


def module_for(space):
    return scene2d if isinstance(space, Scene2D) else space3d


def mode_of(space) -> str:
    f = space.focus
    if f.is_cursor:
        return CURSOR_MODE
    return VERIFY_MODE if f.is_pending else OBJECT_MODE


def render(space) -> np.ndarray:
    return module_for(space).render(space)


def observe(space) -> np.ndarray:
    """Image shown to the policy: the render, with a contour on a pending candidate."""
    mod = module_for(space)
    if not space.focus.is_pending:
        return mod.render(space)
    frame = mod.render_clean(space)
    return imgcore.draw_contour(frame, focus_mask(space))


def focus_mask(space) -> np.ndarray:
    if isinstance(space, Scene2D):
        return space.focused.placed_mask(space.base.shape)
    return space3d.group_mask(space, space.focused)


def focused_label(space) -> int:
    f = space.focused
    return 0 if f is None else int(f.label)


def object_point(space, object_id: int) -> tuple[float, float]:
    if isinstance(space, Scene2D):
        return scene2d.layer_point(space, object_id)
    return space3d.group_point(space, object_id)


def apply_action(space, action: Action, seg) -> tuple[object, dict]:
    """Apply one non-answer action. Returns the new space and an event record.

    Operator errors (wrong focus, failed segmentation, degenerate rectangles)
    leave the space unchanged and are reported in the event. Provider errors
    raise ``ProviderFailure``.
    """
    mod = module_for(space)
    kind = action.kind
    event: dict = {"op": kind.lower()}
    new = space
    try:
        if kind == MOVE:
            if space.focus.is_object:
                new, refused = mod.move_object(space, action.direction)
                event["op"] = "move_object"
                event["refused"] = bool(refused)
            else:
                new = mod.move_cursor(space, action.direction)
                event["op"] = "move_cursor"
        elif kind == FOCUS:
            new, _ = mod.request_focus(space, seg)
            event["reselect"] = new.focus.reselect
        elif kind == ACCEPT:
            new = mod.accept_focus(space)
            event["label"] = focused_label(new)
        elif kind == REJECT:
            new = mod.reject_focus(space)
        elif kind == IGNORE:
            event["label"] = focused_label(space)
            new = mod.ignore(space)
        elif kind == RELEASE:
            event["object"] = space.focus.layer_id
            event["label"] = focused_label(space)
            new = mod.release_object(space)
        elif kind == RECT:
            if mod is not scene2d:
                raise WrongFocus("rectangle focus is not available in 3D")
            x0, y0, x1, y1 = action.rect
            new = mod.focus_rect(space, (x0, y0), (x1, y1))
        elif kind == BOX:
            new = mod.draw_box_at_cursor(space)
        else:
            raise ValueError(f"{kind} is not a scene operation")
    except SegmentationFailed as exc:
        if isinstance(exc.__cause__, ProviderError):
            raise ProviderFailure(str(exc)) from exc
        event["error"] = f"segmentation failed: {exc}"
    except (WrongFocus, DegenerateRect) as exc:
        event["error"] = f"{type(exc).__name__}: {exc}"
    event["mutated"] = new is not space
    event["cursor"] = [int(v) for v in new.cursor]
    event["focus"] = [new.focus.kind, new.focus.layer_id]
    return new, event


def describe(event: dict) -> str:
    """Short feedback text appended to the transcript after an operation."""
    if "error" in event:
        return f"Operation {event['op']} had no effect: {event['error']}."
    op = event["op"]
    if op == "move_cursor":
        return f"Cursor moved to {tuple(event['cursor'])}."
    if op == "move_object":
        return "Move refused: the object would leave the allowed region." if event.get("refused") else "Object moved."
    if op == "focus":
        return "A candidate region is highlighted. ACCEPT or REJECT it."
    if op == "accept":
        return "Object in focus."
    if op == "reject":
        return "Candidate discarded; back to the cursor."
    if op == "ignore":
        return "Object removed; back to the cursor."
    if op == "release":
        note = event.get("snap")
        return "Object released" + (f" ({note})." if note else ".")
    if op == "rect":
        return "Rectangle in focus."
    if op == "box":
        return "Box marker drawn."
    return f"{op} done."
