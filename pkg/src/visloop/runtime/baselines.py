"""Baseline procedures: the pairwise sampling tournament and step-budget sweeps."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from ..imgcore import side_by_side
from ..policy.actions import ANSWER, ParseFailure, parse_action
from ..policy.base import AUDIT, Observation, PayloadAudit, TranscriptEntry, build_request
from ..policy.prompts import CURSOR_MODE, build_prompts
from ..segmenter import ProviderError
from .episode import MAX_PARSE_FAILURES, Episode, run
from .trace import TraceWriter

logger = logging.getLogger(__name__)

COMPARE_PLAN = ("Two candidate results are shown side by side, candidate 1 on the left and candidate 2 "
                "on the right. Decide which one better satisfies the task: {task}\n"
                "Reply with ANSWER: 1 or ANSWER: 2.")


class TournamentFailed(RuntimeError):
    pass


@dataclass
class TournamentResult:
    winner: int
    comparisons: int
    bracket: list = field(default_factory=list)  # (round, left, right, winner)


def _choice(text: str) -> int | None:
    m = re.search(r"\b([12])\b", text)
    return int(m.group(1)) if m else None


def _compare(comparator, left, right, pair, plan: str, trace: TraceWriter, audit) -> int:
    legal = frozenset({ANSWER})
    bundle = build_prompts(plan, CURSOR_MODE, legal)
    transcript = []
    image = side_by_side(left, right)
    for _ in range(MAX_PARSE_FAILURES):
        obs = Observation(image, None, tuple(transcript), CURSOR_MODE, legal, 0, privileged={"pair": pair})
        raw = comparator.decide(build_request(obs, bundle, audit=audit))
        transcript.append(TranscriptEntry(0, "assistant", raw))
        parsed = parse_action(raw, legal)
        choice = None if isinstance(parsed, ParseFailure) else _choice(parsed.text)
        trace.write({"kind": "compare", "pair": list(pair), "raw": raw, "choice": choice,
                     "digest": trace.store.put_image(image)})
        if choice is not None:
            return choice
        transcript.append(TranscriptEntry(0, "user", "Reply with ANSWER: 1 or ANSWER: 2."))
    raise TournamentFailed(f"comparator gave no usable choice for pair {pair}")


def run_sampling_tournament(candidates: list, comparator, task_text: str = "the task",
                            trace: TraceWriter | None = None,
                            audit: PayloadAudit | None = AUDIT) -> TournamentResult:
    """Single-elimination bracket over ``candidates`` (renders), in the given order.

    Pairs are formed left to right each round; an odd one out gets a bye.
    ``n`` candidates always take ``n - 1`` comparisons.
    """
    if not candidates:
        raise ValueError("need at least one candidate")
    trace = trace or TraceWriter()
    plan = COMPARE_PLAN.format(task=task_text)
    alive = list(range(len(candidates)))
    result = TournamentResult(alive[0], 0)
    rnd = 0
    while len(alive) > 1:
        nxt = []
        for k in range(0, len(alive) - 1, 2):
            i, j = alive[k], alive[k + 1]
            try:
                choice = _compare(comparator, candidates[i], candidates[j], (i, j), plan, trace, audit)
            except ProviderError as exc:
                raise TournamentFailed(f"comparator failed: {exc}") from exc
            w = i if choice == 1 else j
            result.comparisons += 1
            result.bracket.append((rnd, i, j, w))
            nxt.append(w)
        if len(alive) % 2:
            nxt.append(alive[-1])
        alive = nxt
        rnd += 1
    result.winner = alive[0]
    trace.write({"kind": "tournament", "winner": result.winner, "comparisons": result.comparisons,
                 "bracket": [list(b) for b in result.bracket]})
    return result


def step_budget_sweep(tasks, budgets, make_policy, make_seg, max_actions: int | None = None,
                      make_space=None) -> list[dict]:
    """Solvable rate per focus budget.

    A step is a focus operation together with whatever follows it until the
    next focus, so the budget caps focus operations. ``make_policy(task)``
    and ``make_seg(task)`` build fresh providers per episode; ``make_space``
    overrides ``task.initial_space``.
    """
    budgets = list(budgets)
    if budgets != sorted(budgets):
        raise ValueError("budgets must be sorted ascending")
    rows = []
    for b in budgets:
        solved = 0
        for task in tasks:
            space = make_space(task) if make_space else task.initial_space()
            ep = Episode(space, make_policy(task), make_seg(task), task,
                         budget=max_actions, focus_budget=b)
            run(ep)
            if ep.outcome.status == "answered" and ep.result.get("correct"):
                solved += 1
            if ep.focus_used > b:
                raise AssertionError("focus budget overrun")
        rows.append({"budget": b, "solvable_rate": solved / len(tasks) if tasks else 0.0, "n": len(tasks)})
    return rows
