"""Actions and the text grammar used to extract them from model output.

Keywords are ALL-CAPS: ``MOVE <a|b|c|d>``, ``FOCUS``, ``ACCEPT``, ``REJECT``,
``IGNORE``, ``RELEASE``, ``RECT x1,y1,x2,y2``, ``BOX`` and ``ANSWER: <text>``.
A bare direction letter counts as a move when it closes a line after a colon
(``"move the cursor: c"``) or stands alone on the last non-empty line. The last
legal occurrence wins; keywords inside an answer's text are not commands.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..base import Direction

MOVE = "MOVE"
FOCUS = "FOCUS"
ACCEPT = "ACCEPT"
REJECT = "REJECT"
IGNORE = "IGNORE"
RELEASE = "RELEASE"
RECT = "RECT"
BOX = "BOX"
ANSWER = "ANSWER"

ALL_KINDS = (MOVE, FOCUS, ACCEPT, REJECT, IGNORE, RELEASE, RECT, BOX, ANSWER)

TOKEN_HELP = {
    MOVE: "MOVE <a|b|c|d>",
    FOCUS: "FOCUS",
    ACCEPT: "ACCEPT",
    REJECT: "REJECT",
    IGNORE: "IGNORE",
    RELEASE: "RELEASE",
    RECT: "RECT x1,y1,x2,y2",
    BOX: "BOX",
    ANSWER: "ANSWER: <text>",
}


@dataclass(frozen=True)
class Action:
    kind: str
    direction: Direction | None = None
    rect: tuple[int, int, int, int] | None = None
    text: str | None = None

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.kind == MOVE and self.direction is None:
            raise ValueError("MOVE needs a direction")
        if self.kind == RECT and self.rect is None:
            raise ValueError("RECT needs coordinates")
        if self.kind == ANSWER and not (self.text or "").strip():
            raise ValueError("answer text must be non-empty")

    def token(self) -> str:
        """Canonical text form; ``parse_action(a.token(), ...)`` returns ``a``."""
        if self.kind == MOVE:
            return f"MOVE {self.direction.value}"
        if self.kind == RECT:
            return "RECT {},{},{},{}".format(*self.rect)
        if self.kind == ANSWER:
            return f"ANSWER: {self.text}"
        return self.kind

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.direction is not None:
            d["direction"] = self.direction.value
        if self.rect is not None:
            d["rect"] = list(self.rect)
        if self.text is not None:
            d["text"] = self.text
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Action":
        return cls(d["kind"], Direction.parse(d["direction"]) if "direction" in d else None,
                   tuple(d["rect"]) if "rect" in d else None, d.get("text"))


def move(direction) -> Action:
    return Action(MOVE, Direction.parse(direction))


def answer(text) -> Action:
    return Action(ANSWER, text=str(text))


@dataclass(frozen=True)
class ParseFailure:
    """Returned instead of an action; ``message`` is sent back to the model."""

    raw: str
    legal: frozenset
    message: str


_SEP = r"[\s,;()\[\]\-]+"
_ANSWER_RE = re.compile(r"\bANSWER\s*:[ \t]*([^\n]*)")
_MOVE_RE = re.compile(r"\bMOVE\b[\s:(\[\"']*([abcdABCD])\b")
_RECT_RE = re.compile(r"\bRECT\b[\s:(\[]*(\d+)" + _SEP + r"(\d+)" + _SEP + r"(\d+)" + _SEP + r"(\d+)")
_WORD_RE = re.compile(r"\b(FOCUS|ACCEPT|REJECT|IGNORE|RELEASE|BOX)\b")
_COLON_DIR_RE = re.compile(r":[ \t]*([abcd])[ \t]*[.!]?[ \t]*$", re.MULTILINE)
_LONE_DIR_RE = re.compile(r"^[ \t]*([abcd])[ \t]*[.!]?[ \t]*$", re.MULTILINE)


def _candidates(raw: str) -> list[tuple[int, Action]]:
    found: list[tuple[int, Action]] = []
    answer_spans = []
    for m in _ANSWER_RE.finditer(raw):
        text = m.group(1).strip()
        answer_spans.append((m.start(), m.end()))
        if text:
            found.append((m.start(), Action(ANSWER, text=text)))

    def in_answer(pos: int) -> bool:
        return any(a < pos < b for a, b in answer_spans)

    for m in _MOVE_RE.finditer(raw):
        found.append((m.start(), Action(MOVE, Direction.parse(m.group(1).lower()))))
    for m in _RECT_RE.finditer(raw):
        found.append((m.start(), Action(RECT, rect=tuple(int(g) for g in m.groups()))))
    for m in _WORD_RE.finditer(raw):
        found.append((m.start(), Action(m.group(1))))
    for m in _COLON_DIR_RE.finditer(raw):
        found.append((m.start(1), Action(MOVE, Direction.parse(m.group(1)))))
    lines = [ln for ln in raw.splitlines() if ln.strip()]
    if lines:
        last = _LONE_DIR_RE.fullmatch(lines[-1])
        if last:
            found.append((raw.rfind(lines[-1]) + last.start(1), Action(MOVE, Direction.parse(last.group(1)))))
    return sorted(((p, a) for p, a in found if a.kind == ANSWER or not in_answer(p)), key=lambda t: t[0])


def legal_tokens(legal) -> str:
    return ", ".join(TOKEN_HELP[k] for k in ALL_KINDS if k in legal)


def parse_action(raw: str, legal) -> Action | ParseFailure:
    """Extract the last legal action in ``raw``; never returns an illegal kind."""
    legal = frozenset(legal)
    picked = None
    for _, act in _candidates(raw or ""):
        if act.kind in legal:
            picked = act
    if picked is not None:
        return picked
    msg = ("No valid action found. Reply with exactly one of: " + legal_tokens(legal) +
           ". Put the command at the end of your reply.")
    return ParseFailure(raw, legal, msg)
