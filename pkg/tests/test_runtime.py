import numpy as np
import pytest

from visloop import imgcore
from visloop.imgcore import image_digest
from visloop.policy import ScriptedPolicy, oracle_policy
from visloop.runtime import (BUDGET_EXHAUSTED, PARSE_BUDGET_EXCEEDED, PROVIDER_FAILURE, WRONG_ANSWER, Episode,
                             EpisodeOver, ImageStore, TournamentFailed, TraceWriter, load_trace, replay, run,
                             run_sampling_tournament, step, step_budget_sweep, trace_digests)
from visloop.runtime import ops
from visloop.segmenter import InstanceMapOracle
from visloop.tasks import CountingTask, gen_counting


def counting(seed=0, n=5):
    return CountingTask(gen_counting(seed, n))


def episode(task, policy, **kw):
    return Episode(task.initial_space(), policy, InstanceMapOracle(), task, **kw)


def test_answer_at_first_step():
    task = counting()
    ep = step(episode(task, ScriptedPolicy(["ANSWER: 0"])))
    assert ep.outcome.status == "answered" and ep.outcome.answer.parsed_value == 0
    assert len(ep.trace.steps) == 1 and ep.t == 1
    assert ep.failure == WRONG_ANSWER
    with pytest.raises(EpisodeOver):
        step(ep)


def test_three_parse_failures_end_episode():
    task = counting()
    ep = run(episode(task, ScriptedPolicy(["ACCEPT", "no idea", "IGNORE", "MOVE a"])))
    assert ep.outcome.reason == PARSE_BUDGET_EXCEEDED
    assert len(ep.trace.steps) == 3
    assert all(r["post_digest"] == r["obs_digest"] for r in ep.trace.steps)
    assert ep.transcript[1].role == "user" and "No valid action" in ep.transcript[1].text


def test_parse_failure_counter_resets_on_success():
    task = counting()
    script = ["??", "??", "MOVE a", "??", "??", "ANSWER: 5"]
    ep = run(episode(task, ScriptedPolicy(script)))
    assert ep.outcome.status == "answered"


def test_zero_budget_fails_immediately():
    ep = run(episode(counting(), ScriptedPolicy(["ANSWER: 5"]), budget=0))
    assert ep.outcome.reason == BUDGET_EXHAUSTED
    assert ep.trace.steps == [] and ep.calls == 0


def test_consecutive_move_limit():
    ep = run(episode(counting(), ScriptedPolicy(["MOVE a"] * 10), max_moves=3))
    assert ep.outcome.reason == BUDGET_EXHAUSTED
    assert len(ep.trace.steps) == 4 and ep.t == 0


def test_policy_error_becomes_provider_failure():
    ep = run(episode(counting(), ScriptedPolicy(["MOVE b"])))
    assert ep.outcome.reason == PROVIDER_FAILURE


@pytest.mark.parametrize("n", [1, 3, 6])
def test_oracle_fits_three_actions_per_object(n):
    task = counting(seed=n, n=n)
    ep = run(episode(task, oracle_policy(task), budget=3 * n + 1))
    assert ep.outcome.status == "answered" and ep.result["correct"]
    assert ep.t <= 3 * n + 1


def test_oracle_trace_replays_to_final_render(tmp_path):
    task = counting(seed=7, n=5)
    store = ImageStore(tmp_path / "img")
    ep = run(episode(task, oracle_policy(task), trace=TraceWriter(tmp_path / "trace.jsonl", store)))
    records = load_trace(tmp_path / "trace.jsonl")
    assert records == ep.trace.records
    frames = []
    got = replay(records, task, store, frames=frames)
    assert got == trace_digests(records)
    assert got[-1][1] == image_digest(ops.observe(ep.space))
    for (obs, _), frame in zip(got, frames):
        assert (tmp_path / "img" / f"{obs}.png").exists()
        assert np.array_equal(imgcore.decode_png((tmp_path / "img" / f"{obs}.png").read_bytes()), frame)


def test_records_chain_and_mutations():
    task = counting(seed=3, n=4)
    ep = run(episode(task, oracle_policy(task)))
    steps = ep.trace.steps
    assert [r["t"] for r in steps] == list(range(len(steps)))
    for a, b in zip(steps, steps[1:]):
        assert b["obs_digest"] == a["post_digest"]
    for r in steps:
        if r["action"] is None or r["action"]["kind"] == "ANSWER":
            assert r["post_digest"] == r["obs_digest"]
        elif r["event"]["mutated"]:
            assert r["post_digest"] != r["obs_digest"]
    kinds = [r["kind"] for r in ep.trace.records]
    assert kinds[0] == "header" and kinds[-1] == "outcome"


def test_rerun_is_byte_identical():
    script = ["MOVE a", "MOVE d", "FOCUS", "REJECT", "MOVE b", "ANSWER: 2"]
    digests = []
    for _ in range(2):
        task = counting(seed=2, n=3)
        ep = run(episode(task, ScriptedPolicy(list(script))))
        digests.append(trace_digests(ep.trace.records))
    assert digests[0] == digests[1]


class Recorder:
    def __init__(self, inner):
        self.inner = inner
        self.requests = []

    def decide(self, req):
        self.requests.append(req)
        return self.inner.decide(req)


def test_transcript_is_append_only():
    task = counting(seed=4, n=3)
    pol = Recorder(oracle_policy(task))
    run(episode(task, pol))
    sent = [[m["content"] for m in r.messages[1:-1]] for r in pol.requests]
    for a, b in zip(sent, sent[1:]):
        assert b[:len(a)] == a and len(b) > len(a)
    assert all(len(r.images()) <= 2 for r in pol.requests)


class Prefers:
    """Comparator that always answers the same side."""

    def __init__(self, side):
        self.side = side
        self.calls = 0

    def decide(self, req):
        self.calls += 1
        return f"ANSWER: {self.side}"


def candidates(k):
    return [imgcore.new_image(8, 8, (i * 20, 0, 0, 255)) for i in range(k)]


def test_tournament_counts_and_bracket():
    one = run_sampling_tournament(candidates(1), Prefers(1))
    assert one.winner == 0 and one.comparisons == 0
    res = run_sampling_tournament(candidates(8), Prefers(2))
    assert res.comparisons == 7 and res.winner == 7
    assert [b[3] for b in res.bracket] == [1, 3, 5, 7, 3, 7, 7]
    odd = run_sampling_tournament(candidates(5), Prefers(1))
    assert odd.comparisons == 4 and odd.winner == 0
    with pytest.raises(ValueError):
        run_sampling_tournament([], Prefers(1))


def test_tournament_unusable_comparator_fails():
    with pytest.raises(TournamentFailed):
        run_sampling_tournament(candidates(2), ScriptedPolicy(["hmm", "not sure", "either"]))


def test_sweep_edges():
    tasks = [counting(seed=s, n=2) for s in range(2)]
    rows = step_budget_sweep(tasks, [0, 2], oracle_policy, lambda t: InstanceMapOracle())
    assert [r["solvable_rate"] for r in rows] == [0.0, 1.0]
    with pytest.raises(ValueError):
        step_budget_sweep(tasks, [3, 1], oracle_policy, lambda t: InstanceMapOracle())
