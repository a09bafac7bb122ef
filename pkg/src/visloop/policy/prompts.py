"""Modes, legal action sets and the prompt texts sent with every step."""

from __future__ import annotations

import string
from dataclasses import dataclass

from .actions import ACCEPT, ALL_KINDS, ANSWER, BOX, FOCUS, IGNORE, MOVE, RECT, REJECT, RELEASE

CURSOR_MODE = "cursor"
VERIFY_MODE = "verify"
OBJECT_MODE = "object"
MODES = (CURSOR_MODE, VERIFY_MODE, OBJECT_MODE)

# run modes
FULL = "full"
CURSOR_ONLY = "cursor-only"
CURSOR_ONLY_WITH_BOXES = "cursor-only-with-boxes"
SAMPLING_TOURNAMENT = "sampling-tournament"
RUN_MODES = (FULL, CURSOR_ONLY, CURSOR_ONLY_WITH_BOXES, SAMPLING_TOURNAMENT)

_BASE_LEGAL = {
    CURSOR_MODE: frozenset({MOVE, FOCUS, ANSWER}),
    VERIFY_MODE: frozenset({ACCEPT, REJECT}),
    OBJECT_MODE: frozenset({MOVE, IGNORE, RELEASE, ANSWER}),
}


def legal_actions(mode: str, run_mode: str = FULL, allow_rect: bool = False) -> frozenset:
    """Action kinds the policy may use in ``mode`` under ``run_mode``."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if run_mode in (CURSOR_ONLY, CURSOR_ONLY_WITH_BOXES):
        if mode != CURSOR_MODE:
            return frozenset({ANSWER})
        extra = {BOX} if run_mode == CURSOR_ONLY_WITH_BOXES else set()
        return frozenset({MOVE, ANSWER} | extra)
    if run_mode == SAMPLING_TOURNAMENT:
        return frozenset({ANSWER})
    legal = _BASE_LEGAL[mode]
    if allow_rect and mode == CURSOR_MODE:
        legal = legal | {RECT}
    return legal


_DESCRIPTIONS = {
    CURSOR_MODE: {
        MOVE: "MOVE <a|b|c|d>: move the cursor up (a), down (b), left (c) or right (d)",
        FOCUS: "FOCUS: segment the element under the cursor",
        RECT: "RECT x1,y1,x2,y2: focus the rectangle with these pixel corners",
        BOX: "BOX: draw a box marker around the cursor",
        ANSWER: "ANSWER: <text>: give the final answer and stop",
    },
    VERIFY_MODE: {
        ACCEPT: "ACCEPT: the highlighted region is the intended element",
        REJECT: "REJECT: the highlighted region is wrong; return to the cursor",
    },
    OBJECT_MODE: {
        MOVE: "MOVE <a|b|c|d>: move the focused object up (a), down (b), left (c) or right (d)",
        IGNORE: "IGNORE: remove the focused object from the scene",
        RELEASE: "RELEASE: leave the object where it is and return to the cursor",
        ANSWER: "ANSWER: <text>: give the final answer and stop",
    },
}

SYSTEM_TEMPLATE = string.Template(
    "You solve a visual task by editing the scene you are shown, one operation per reply.\n"
    "The magenta crosshair is a cursor. Segmented objects can be verified, moved or removed.\n"
    "Each reply: reason briefly, then end with one command.\n\n"
    "Task plan:\n$plan\n")

REMINDER_TEMPLATE = string.Template(
    "Current mode: $mode. The first image is the previous state, the second the current one.\n"
    "Legal commands:\n$actions\n"
    "End your reply with exactly one legal command.")


@dataclass(frozen=True)
class PromptBundle:
    system_prompt: str
    step_reminder: str


def build_prompts(task_plan: str, mode: str, legal=None) -> PromptBundle:
    """Prompt texts for one step; the reminder lists exactly ``legal`` (default: the mode's set)."""
    if not task_plan or not task_plan.strip():
        raise ValueError("task plan must be non-empty")
    legal = legal_actions(mode) if legal is None else frozenset(legal)
    generic = {k: v for d in _DESCRIPTIONS.values() for k, v in d.items()}
    lines = [(_DESCRIPTIONS[mode].get(k) or generic[k]) for k in ALL_KINDS if k in legal]
    system = SYSTEM_TEMPLATE.substitute(plan=task_plan.strip())
    reminder = REMINDER_TEMPLATE.substitute(mode=mode, actions="\n".join("- " + ln for ln in lines))
    return PromptBundle(system, reminder)
