"""Observations, policy requests and the simple policies.

A ``PolicyRequest`` is the chat-style message list built for one decision. It
is built for every policy, scripted or remote, so that the image-window rule
is checked on every request the runtime makes.
"""

from __future__ import annotations

import base64
import logging
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from ..imgcore import encode_png, image_digest
from ..segmenter import ProviderError
from .actions import ALL_KINDS, ANSWER, MOVE, RECT, Action
from .prompts import MODES, PromptBundle

logger = logging.getLogger(__name__)

MAX_IMAGES = 2


class ImageWindowExceeded(AssertionError):
    pass


class PolicyExhausted(ProviderError):
    """A scripted policy ran out of lines."""


class QuotaExceeded(ProviderError):
    """Request or token quota of a remote policy is used up."""


@dataclass(frozen=True)
class TranscriptEntry:
    t: int
    role: str  # assistant | user
    text: str


@dataclass(frozen=True, eq=False)
class Observation:
    current_render: np.ndarray
    previous_render: np.ndarray | None
    text_context: tuple
    mode: str
    legal_actions: frozenset
    t: int = 0
    # ground-truth handles for oracle policies; never serialised
    privileged: dict | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.legal_actions or not set(self.legal_actions) <= set(ALL_KINDS):
            raise ValueError(f"bad legal action set {self.legal_actions}")


@dataclass(frozen=True)
class ImagePart:
    image: np.ndarray
    label: str


@dataclass
class PolicyRequest:
    """System prompt, transcript, at most two images and the step reminder."""

    messages: list
    observation: Observation
    bundle: PromptBundle

    def images(self) -> list:
        out = []
        for msg in self.messages:
            if isinstance(msg["content"], list):
                out += [p for p in msg["content"] if isinstance(p, ImagePart)]
        return out

    def to_wire(self, model: str, temperature: float = 0.0, images_as: str = "data") -> dict:
        """Chat-completions JSON body. ``images_as='digest'`` stores references instead of pixels."""
        msgs = []
        for msg in self.messages:
            content = msg["content"]
            if isinstance(content, list):
                parts = []
                for p in content:
                    if isinstance(p, ImagePart):
                        if images_as == "digest":
                            url = "sha256:" + image_digest(p.image)
                        else:
                            url = "data:image/png;base64," + base64.b64encode(encode_png(p.image)).decode("ascii")
                        parts.append({"type": "image_url", "image_url": {"url": url}})
                    else:
                        parts.append({"type": "text", "text": p})
                content = parts
            msgs.append({"role": msg["role"], "content": content})
        return {"model": model, "temperature": temperature, "messages": msgs}


@dataclass
class PayloadAudit:
    """Counts images in every request; used to check the two-image window."""

    requests: int = 0
    max_images: int = 0
    violations: int = 0

    def observe(self, req: PolicyRequest) -> None:
        n = len(req.images())
        self.requests += 1
        self.max_images = max(self.max_images, n)
        if n > MAX_IMAGES:
            self.violations += 1
            raise ImageWindowExceeded(f"request carries {n} images")

    def reset(self) -> None:
        self.requests = self.max_images = self.violations = 0


AUDIT = PayloadAudit()


def _tokens(text: str) -> int:
    # rough size estimate, four characters per token
    return len(text) // 4 + 1


def truncate_transcript(entries, budget: int | None, keep_steps: int = 2) -> list:
    """Drop the oldest whole steps until the text fits ``budget`` tokens.

    The most recent ``keep_steps`` steps are always kept.
    """
    entries = list(entries)
    if budget is None:
        return entries
    steps = sorted({e.t for e in entries})
    droppable = steps[:-keep_steps] if keep_steps else steps
    total = sum(_tokens(e.text) for e in entries)
    drop = set()
    for t in droppable:
        if total <= budget:
            break
        drop.add(t)
        total -= sum(_tokens(e.text) for e in entries if e.t == t)
    return [e for e in entries if e.t not in drop]


def build_request(obs: Observation, bundle: PromptBundle, token_budget: int | None = None,
                  audit: PayloadAudit | None = AUDIT) -> PolicyRequest:
    messages = [{"role": "system", "content": bundle.system_prompt}]
    for e in truncate_transcript(obs.text_context, token_budget):
        messages.append({"role": e.role, "content": e.text})
    parts = []
    if obs.previous_render is not None:
        parts.append(ImagePart(obs.previous_render, "previous"))
    parts.append(ImagePart(obs.current_render, "current"))
    parts.append(bundle.step_reminder)
    messages.append({"role": "user", "content": parts})
    req = PolicyRequest(messages, obs, bundle)
    if audit is not None:
        audit.observe(req)
    return req


class Policy(Protocol):
    def decide(self, req: PolicyRequest) -> str: ...


@dataclass
class ScriptedPolicy:
    """Returns the lines of ``script`` in order."""

    script: list
    position: int = 0

    def decide(self, req: PolicyRequest) -> str:
        if self.position >= len(self.script):
            raise PolicyExhausted("script exhausted")
        line = self.script[self.position]
        self.position += 1
        return line


@dataclass
class RandomPolicy:
    """Uniformly random legal commands; useful for property tests and replay checks."""

    seed: int = 0
    answer_prob: float = 0.02
    rng: np.random.Generator = field(init=False)

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)

    def decide(self, req: PolicyRequest) -> str:
        obs = req.observation
        kinds = sorted(obs.legal_actions)
        if ANSWER in kinds and len(kinds) > 1 and self.rng.random() >= self.answer_prob:
            kinds.remove(ANSWER)
        kind = kinds[int(self.rng.integers(len(kinds)))]
        if kind == MOVE:
            return f"MOVE {'abcd'[int(self.rng.integers(4))]}"
        if kind == RECT:
            h, w = obs.current_render.shape[:2]
            x0, y0 = int(self.rng.integers(0, w - 1)), int(self.rng.integers(0, h - 1))
            x1, y1 = int(self.rng.integers(x0 + 1, w + 1)), int(self.rng.integers(y0 + 1, h + 1))
            return f"RECT {x0},{y0},{x1},{y1}"
        if kind == ANSWER:
            return f"ANSWER: {int(self.rng.integers(0, 10))}"
        return Action(kind).token()
