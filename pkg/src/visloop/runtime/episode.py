"""The closed decide, modify, reason loop for one task instance."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

from ..imgcore import image_digest
from ..policy.actions import ANSWER, FOCUS, MOVE, RECT, Action, ParseFailure, parse_action
from ..policy.base import AUDIT, Observation, PayloadAudit, TranscriptEntry, build_request
from ..policy.prompts import CURSOR_MODE, FULL, RUN_MODES, build_prompts, legal_actions
from ..scene2d import Scene2D
from ..segmenter import ProviderError, RecordingProvider, ReplayProvider, SegmentResponse
from . import ops
from .trace import ImageStore, TraceWriter

logger = logging.getLogger(__name__)

PARSE_BUDGET_EXCEEDED = "ParseBudgetExceeded"
BUDGET_EXHAUSTED = "BudgetExhausted"
PROVIDER_FAILURE = "ProviderFailure"
WRONG_ANSWER = "WrongAnswer"

MAX_PARSE_FAILURES = 3
DEFAULT_MAX_MOVES = 400


class EpisodeOver(RuntimeError):
    pass


@dataclass(frozen=True)
class AnswerRecord:
    text: str
    parsed_value: object = None


@dataclass
class Outcome:
    status: str = "running"  # running | answered | failed
    reason: str | None = None
    answer: AnswerRecord | None = None

    @property
    def terminal(self) -> bool:
        return self.status != "running"


def base_digest(space) -> str:
    """Digest of the scene content without cursor, focus or markers."""
    if isinstance(space, Scene2D):
        return image_digest(space.base)
    h = hashlib.sha256()
    h.update(space.visible.tobytes())
    h.update(space.scene.centers.tobytes())
    return h.hexdigest()


@dataclass
class Episode:
    """One task instance driven by one policy.

    ``budget`` caps operator actions (everything except cursor moves and
    parse failures). Cursor moves are capped separately by ``max_moves``
    consecutive moves. ``focus_budget``, when set, caps focus operations and
    is what step-budget sweeps vary.
    """

    space: object
    policy: object
    seg: object
    task: object
    mode: str = FULL
    budget: int | None = None
    focus_budget: int | None = None
    max_moves: int = DEFAULT_MAX_MOVES
    token_budget: int | None = None
    trace: TraceWriter = field(default_factory=TraceWriter)
    audit: PayloadAudit | None = AUDIT

    t: int = 0
    calls: int = 0
    focus_used: int = 0
    outcome: Outcome = field(default_factory=Outcome)
    result: dict = field(default_factory=dict)
    state: dict = field(default_factory=dict)
    transcript: list = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in RUN_MODES:
            raise ValueError(f"unknown run mode {self.mode!r}")
        if self.budget is None:
            self.budget = self.task.default_budget
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if not isinstance(self.seg, RecordingProvider):
            self.seg = RecordingProvider(self.seg)
        self.state = self.task.init_state()
        self._index = 0
        self._moves_in_row = 0
        self._parse_failures = 0
        self._prev = None
        self._base = None
        self._last_event = None
        self._obs_cache = None
        self.trace.write({
            "kind": "header", "task": self.task.kind, "instance": self.task.instance_id,
            "mode": self.mode, "budget": self.budget, "focus_budget": self.focus_budget,
            "max_moves": self.max_moves, "initial_digest": image_digest(ops.render(self.space)),
        })

    # ------------------------------------------------------------------

    @property
    def failure(self) -> str | None:
        """Failure class of a finished episode, ``None`` on success."""
        if self.outcome.status == "failed":
            return self.outcome.reason
        if self.outcome.status == "answered" and not self.result.get("correct", True):
            return WRONG_ANSWER
        return None

    def _base_digest(self) -> str:
        key = self.space.base if isinstance(self.space, Scene2D) else None
        if key is not None and self._base is not None and self._base[0] is key:
            return self._base[1]
        d = base_digest(self.space)
        self._base = (key, d)
        return d

    def _finish(self, status: str, reason: str | None = None, answer: AnswerRecord | None = None) -> None:
        self.outcome = Outcome(status, reason, answer)
        self.result = self.task.evaluate(self)
        self.trace.write({
            "kind": "outcome", "status": status, "reason": reason, "failure": self.failure,
            "answer": None if answer is None else answer.text, "result": self.result,
            "calls": self.calls, "actions": self.t, "focus_used": self.focus_used,
        })

    def _drain_seg(self) -> list:
        out = []
        for resp in self.seg.drain():
            out.append({"confidence": resp.confidence,
                        "masks": [self.trace.store.put_mask(m) for m in resp.masks]})
        return out


def step(ep: Episode) -> Episode:
    """One decision: observe, ask the policy, parse, apply, record."""
    if ep.outcome.terminal:
        raise EpisodeOver(f"episode already {ep.outcome.status}")
    if ep.t >= ep.budget:
        ep._finish("failed", BUDGET_EXHAUSTED)
        return ep

    space = ep.space
    mode = ops.mode_of(space)
    legal = legal_actions(mode, ep.mode, ep.task.allow_rect)
    bundle = build_prompts(ep.task.plan, mode, legal)
    obs_img, obs_digest = _observe(ep)
    obs = Observation(obs_img, ep._prev, tuple(ep.transcript), mode, legal, ep._index,
                      privileged={"space": space, "task": ep.task, "state": ep.state})
    req = build_request(obs, bundle, ep.token_budget, ep.audit)
    record = {"kind": "step", "t": ep._index, "mode": mode, "obs_digest": obs_digest,
              "obs_ref": f"{obs_digest}.png", "reminder": bundle.step_reminder,
              "base_digest": ep._base_digest()}

    try:
        raw = ep.policy.decide(req)
    except ProviderError as exc:
        ep.calls += 1
        record.update(raw=None, action=None, error=f"policy: {exc}", post_digest=obs_digest)
        ep.trace.write(record)
        ep._finish("failed", PROVIDER_FAILURE)
        return ep
    ep.calls += 1
    if hasattr(ep.policy, "drain"):
        record["policy_log"] = ep.policy.drain()
    record["raw"] = raw
    ep.transcript.append(TranscriptEntry(ep._index, "assistant", raw))
    parsed = parse_action(raw, legal)

    event = None
    terminal = None
    if isinstance(parsed, ParseFailure):
        ep._parse_failures += 1
        record.update(action=None, parse_error=parsed.message)
        ep.transcript.append(TranscriptEntry(ep._index, "user", parsed.message))
        if ep._parse_failures >= MAX_PARSE_FAILURES:
            terminal = ("failed", PARSE_BUDGET_EXCEEDED, None)
    else:
        ep._parse_failures = 0
        record["action"] = parsed.to_dict()
        if parsed.kind == ANSWER:
            ep.t += 1
            terminal = ("answered", None, AnswerRecord(parsed.text, ep.task.parse_answer(parsed.text)))
        else:
            terminal = _operate(ep, parsed, mode)
            event = record["event"] = ep._last_event

    record["post_digest"] = _observe(ep)[1] if event and event.get("mutated") else obs_digest
    record["actions_used"] = ep.t
    record["seg"] = ep._drain_seg()
    ep.trace.write(record)
    ep._prev = obs_img
    ep._index += 1
    if terminal is not None:
        ep._finish(*terminal)
    return ep


def _observe(ep: Episode):
    """Observation image and stored digest, cached per scene value."""
    cached = ep._obs_cache
    if cached is not None and cached[0] is ep.space:
        return cached[1], cached[2]
    img = ops.observe(ep.space)
    digest = ep.trace.store.put_image(img)
    ep._obs_cache = (ep.space, img, digest)
    return img, digest


def _operate(ep: Episode, action: Action, mode: str):
    ep._last_event = None
    cursor_move = action.kind == MOVE and mode == CURSOR_MODE
    if cursor_move:
        ep._moves_in_row += 1
        if ep._moves_in_row > ep.max_moves:
            ep._last_event = {"op": "move_cursor", "error": "consecutive move limit reached",
                              "mutated": False, "applied": False}
            return ("failed", BUDGET_EXHAUSTED, None)
    else:
        ep._moves_in_row = 0
        ep.t += 1
        if action.kind in (FOCUS, RECT) and ep.focus_budget is not None:
            if ep.focus_used >= ep.focus_budget:
                ep._last_event = {"op": action.kind.lower(), "error": "focus budget used up",
                                  "mutated": False, "applied": False}
                return ("failed", BUDGET_EXHAUSTED, None)
            ep.focus_used += 1
    try:
        space, event = ops.apply_action(ep.space, action, ep.seg)
    except ops.ProviderFailure as exc:
        ep._last_event = {"op": action.kind.lower(), "error": str(exc), "mutated": False, "applied": False}
        return ("failed", PROVIDER_FAILURE, None)
    event["applied"] = True
    space, terminal = ep.task.after_action(space, action, event, ep.state)
    ep.space = space
    ep._last_event = event
    ep.transcript.append(TranscriptEntry(ep._index, "user", ops.describe(event)))
    if terminal is not None:
        return ("failed", terminal, None)
    return None


def run(ep: Episode) -> Episode:
    """Step until the episode answers or fails."""
    if ep.outcome.terminal:
        raise EpisodeOver(f"episode already {ep.outcome.status}")
    while not ep.outcome.terminal:
        step(ep)
    return ep


# --------------------------------------------------------------------------
# Replay


def replay(records, task, store: ImageStore, space=None, frames: list | None = None) -> list:
    """Re-apply recorded actions to a fresh initial scene.

    Segmentation answers come from the masks stored with each record, so
    the live provider is not needed. Returns ``(obs_digest, post_digest)``
    per step, to compare with ``trace.trace_digests(records)``. Observation
    images are appended to ``frames`` when it is given.
    """
    space = task.initial_space() if space is None else space
    state = task.init_state()
    out = []
    for rec in records:
        if rec.get("kind") != "step":
            continue
        obs = ops.observe(space)
        if frames is not None:
            frames.append(obs)
        obs_digest = image_digest(obs)
        post = obs_digest
        act = rec.get("action")
        if act is not None and act["kind"] != ANSWER and "event" in rec:
            action = Action.from_dict(act)
            responses = [SegmentResponse([store.get_mask(d) for d in s["masks"]], s["confidence"])
                         for s in rec.get("seg", [])]
            if rec["event"].get("applied"):
                space, event = ops.apply_action(space, action, ReplayProvider(responses))
                space, _ = task.after_action(space, action, event, state)
                if event.get("mutated"):
                    post = image_digest(ops.observe(space))
        out.append((obs_digest, post))
    return out
