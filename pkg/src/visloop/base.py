"""Pieces shared by the 2D and 3D imagination spaces."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace


class SceneError(Exception):
    pass


class WrongFocus(SceneError):
    """The operator is not legal for the current focus state."""


class SegmentationFailed(SceneError):
    pass


class DegenerateRect(SceneError):
    pass


class Direction(str, enum.Enum):
    """Screen-space move directions, named by their single-letter tokens."""

    UP = "a"
    DOWN = "b"
    LEFT = "c"
    RIGHT = "d"

    @property
    def delta(self) -> tuple[int, int]:
        return _DELTAS[self]

    @property
    def opposite(self) -> "Direction":
        return _OPPOSITE[self]

    @classmethod
    def parse(cls, token) -> "Direction":
        if isinstance(token, Direction):
            return token
        token = str(token).strip().lower()
        for d in cls:
            if token in (d.value, d.name.lower()):
                return d
        raise ValueError(f"unknown direction {token!r}")


_DELTAS = {Direction.UP: (0, -1), Direction.DOWN: (0, 1), Direction.LEFT: (-1, 0), Direction.RIGHT: (1, 0)}
_OPPOSITE = {Direction.UP: Direction.DOWN, Direction.DOWN: Direction.UP,
             Direction.LEFT: Direction.RIGHT, Direction.RIGHT: Direction.LEFT}


@dataclass(frozen=True)
class StepSchedule:
    """Coarse-to-fine move length in screen pixels.

    The step shrinks by ``decay`` whenever the same focus target reverses
    direction and never drops below ``floor``.
    """

    initial: float
    current: float
    floor: float = 2.0
    decay: float = 0.5
    moves_taken: int = 0

    def __post_init__(self):
        if not 0 < self.decay <= 1:
            raise ValueError("decay must be in (0, 1]")
        if not self.floor <= self.current <= self.initial:
            raise ValueError(f"need floor <= current <= initial, got {self}")

    @classmethod
    def for_canvas(cls, width: int, height: int, floor: float = 2.0, decay: float = 0.5) -> "StepSchedule":
        initial = max(float(min(width, height) // 8), floor)
        return cls(initial=initial, current=initial, floor=floor, decay=decay)

    @property
    def pixels(self) -> int:
        return max(int(round(self.current)), 1)

    def advance(self, direction: Direction, last: Direction | None) -> "StepSchedule":
        """Schedule to use for a move in ``direction`` after a move in ``last``."""
        current = self.current
        if last is not None and direction is last.opposite:
            current = max(self.floor, current * self.decay)
        return replace(self, current=current, moves_taken=self.moves_taken + 1)


@dataclass(frozen=True)
class Focus:
    kind: str = "cursor"  # cursor | pending | object
    layer_id: int | None = None
    # pending focus on an already lifted layer (no new layer was created)
    reselect: bool = False

    @property
    def is_cursor(self) -> bool:
        return self.kind == "cursor"

    @property
    def is_pending(self) -> bool:
        return self.kind == "pending"

    @property
    def is_object(self) -> bool:
        return self.kind == "object"


CURSOR = Focus()
