import base64
import json
from pathlib import Path

import httpx
import numpy as np
import pytest

from visloop import imgcore
from visloop.base import Direction
from visloop.policy import (AUDIT, Action, ChatPolicy, Observation, ParseFailure, PayloadAudit, ScriptedPolicy,
                            build_prompts, build_request, legal_actions, oracle_policy, parse_action)
from visloop.policy.actions import ACCEPT, ANSWER, FOCUS, IGNORE, MOVE, RECT, REJECT, RELEASE
from visloop.policy.base import ImageWindowExceeded, PolicyExhausted, QuotaExceeded, TranscriptEntry, \
    truncate_transcript
from visloop.runtime import Episode, run
from visloop.segmenter import InstanceMapOracle, ProviderUnavailable
from visloop.tasks import (CountingTask, JigsawTask, PlacementTask, QATask, gen_counting, gen_jigsaw,
                           gen_multiobject_qa, gen_placement)

FIXTURES = Path(__file__).parent / "fixtures"


def obs_for(mode="cursor", prev=True, ctx=()):
    cur = imgcore.new_image(4, 3, (0, 0, 255, 255))
    before = imgcore.new_image(4, 3, (255, 0, 0, 255)) if prev else None
    return Observation(cur, before, tuple(ctx), mode, legal_actions(mode), 1)


def test_prompts_mask_by_mode():
    cur = build_prompts("count by ignoring balls", "cursor").step_reminder
    assert "MOVE <a|b|c|d>" in cur and "FOCUS" in cur and "ANSWER" in cur
    assert "IGNORE" not in cur and "ACCEPT" not in cur
    ver = build_prompts("count by ignoring balls", "verify").step_reminder
    assert "ACCEPT" in ver and "REJECT" in ver
    for word in ("MOVE", "FOCUS", "IGNORE", "ANSWER", "RELEASE"):
        assert word not in ver
    obj = build_prompts("count by ignoring balls", "object").step_reminder
    assert "IGNORE" in obj and "RELEASE" in obj and "FOCUS" not in obj


def test_prompts_embed_plan_and_are_deterministic():
    a = build_prompts("  count by ignoring balls\n", "cursor")
    b = build_prompts("  count by ignoring balls\n", "cursor")
    assert a == b
    assert "count by ignoring balls" in a.system_prompt
    assert "$" not in a.system_prompt + a.step_reminder
    with pytest.raises(ValueError):
        build_prompts("   ", "cursor")


def test_legal_sets_by_run_mode():
    assert legal_actions("cursor") == {MOVE, FOCUS, ANSWER}
    assert legal_actions("cursor", allow_rect=True) == {MOVE, FOCUS, ANSWER, RECT}
    assert legal_actions("verify") == {ACCEPT, REJECT}
    assert legal_actions("object") == {MOVE, IGNORE, RELEASE, ANSWER}
    assert legal_actions("cursor", "cursor-only") == {MOVE, ANSWER}
    assert "BOX" in legal_actions("cursor", "cursor-only-with-boxes")


def test_parse_examples():
    cursor = legal_actions("cursor")
    assert parse_action("I will move the cursor: c", cursor) == Action(MOVE, Direction.LEFT)
    fail = parse_action("FOCUS", legal_actions("verify"))
    assert isinstance(fail, ParseFailure)
    assert "ACCEPT" in fail.message and "REJECT" in fail.message
    assert parse_action("FOCUS first? No. MOVE b", cursor) == Action(MOVE, Direction.DOWN)
    assert parse_action("ANSWER: I would FOCUS but the count is 7", cursor) == \
        Action(ANSWER, text="I would FOCUS but the count is 7")
    assert isinstance(parse_action("", cursor), ParseFailure)


def test_parse_corpus():
    rows = [json.loads(line) for line in (FIXTURES / "parse_corpus.jsonl").read_text().splitlines() if line]
    assert len(rows) == 200
    for row in rows:
        got = parse_action(row["raw"], row["legal"])
        got = None if isinstance(got, ParseFailure) else got.token()
        assert got == row["expect"], row["raw"]


def test_parse_never_returns_illegal_kind():
    rng = np.random.default_rng(0)
    words = ["MOVE a", "FOCUS", "ACCEPT", "REJECT", "IGNORE", "RELEASE", "RECT 1,2,3,4", "ANSWER: 3", "b", "hmm"]
    kinds = [MOVE, FOCUS, ACCEPT, REJECT, IGNORE, RELEASE, RECT, ANSWER]
    for _ in range(300):
        raw = " ".join(words[i] for i in rng.integers(0, len(words), 4))
        legal = frozenset(k for k in kinds if rng.random() < 0.4) or frozenset({MOVE})
        got = parse_action(raw, legal)
        assert isinstance(got, ParseFailure) or got.kind in legal


def test_token_round_trip():
    for act in [Action(MOVE, Direction.UP), Action(FOCUS), Action(RECT, rect=(1, 2, 30, 40)),
                Action(ANSWER, text="left of the mug"), Action(RELEASE)]:
        assert parse_action(act.token(), {act.kind}) == act
        assert Action.from_dict(act.to_dict()) == act


def test_scripted_policy_in_order():
    req = build_request(obs_for(), build_prompts("plan", "cursor"), audit=None)
    pol = ScriptedPolicy(["b", "FOCUS"])
    assert [pol.decide(req), pol.decide(req)] == ["b", "FOCUS"]
    with pytest.raises(PolicyExhausted):
        pol.decide(req)


def test_two_image_payload_matches_golden():
    ctx = (TranscriptEntry(0, "assistant", "MOVE d"), TranscriptEntry(0, "user", "cursor moved right by 64 px"))
    req = build_request(obs_for(ctx=ctx), build_prompts("Count the balls.", "cursor"), audit=None)
    wire = req.to_wire("test-model", images_as="digest")
    assert wire == json.loads((FIXTURES / "two_image_request.json").read_text())
    parts = wire["messages"][-1]["content"]
    urls = [p["image_url"]["url"] for p in parts if p["type"] == "image_url"]
    assert urls == ["sha256:" + imgcore.image_digest(req.observation.previous_render),
                    "sha256:" + imgcore.image_digest(req.observation.current_render)]
    assert parts[-1]["type"] == "text"


def test_image_window_audit():
    audit = PayloadAudit()
    req = build_request(obs_for(prev=False), build_prompts("plan", "cursor"), audit=audit)
    assert len(req.images()) == 1
    build_request(obs_for(), build_prompts("plan", "cursor"), audit=audit)
    assert audit.requests == 2 and audit.max_images == 2
    req.messages[-1]["content"].insert(0, req.images()[0])
    req.messages[-1]["content"].insert(0, req.images()[0])
    with pytest.raises(ImageWindowExceeded):
        audit.observe(req)


def completion(text):
    return {"choices": [{"message": {"role": "assistant", "content": text}}]}


def test_chat_policy_echo_and_redaction():
    bodies = []

    def handler(request):
        bodies.append((json.loads(request.content), request.headers.get("authorization")))
        return httpx.Response(200, json=completion("Looks right.\nACCEPT"))

    pol = ChatPolicy("http://llm.test/v1/chat", "m", token="tok-123",
                     client=httpx.Client(transport=httpx.MockTransport(handler)))
    req = build_request(obs_for(), build_prompts("plan", "cursor"), audit=None)
    assert pol.decide(req) == "Looks right.\nACCEPT"
    body, auth = bodies[0]
    assert auth == "Bearer tok-123" and body["model"] == "m" and body["temperature"] == 0.0
    imgs = [p["image_url"]["url"] for p in body["messages"][-1]["content"] if p["type"] == "image_url"]
    assert len(imgs) == 2
    decoded = imgcore.decode_png(base64.b64decode(imgs[0].split(",", 1)[1]))
    assert np.array_equal(decoded, req.observation.previous_render)
    log = pol.drain()
    assert log[0]["headers"]["Authorization"] == "***"
    assert "tok-123" not in json.dumps(log)
    assert all(u.startswith("sha256:") for m in log[0]["request"]["messages"] if isinstance(m["content"], list)
               for u in [p["image_url"]["url"] for p in m["content"] if p["type"] == "image_url"])


def test_chat_policy_retries_and_quota():
    def down(request):
        return httpx.Response(502)

    pol = ChatPolicy("http://llm.test/", "m", backoff=0.0, client=httpx.Client(transport=httpx.MockTransport(down)))
    req = build_request(obs_for(), build_prompts("plan", "cursor"), audit=None)
    with pytest.raises(ProviderUnavailable):
        pol.decide(req)
    assert pol.requests == 4

    def ok(request):
        return httpx.Response(200, json=completion("MOVE a"))

    pol = ChatPolicy("http://llm.test/", "m", max_requests=1, client=httpx.Client(transport=httpx.MockTransport(ok)))
    pol.decide(req)
    with pytest.raises(QuotaExceeded):
        pol.decide(req)


def test_transcript_truncation_keeps_recent_steps():
    entries = [TranscriptEntry(t, role, "x" * 400) for t in range(6) for role in ("assistant", "user")]
    out = truncate_transcript(entries, budget=450)
    assert [e.t for e in out] == [4, 4, 5, 5]
    assert truncate_transcript(entries, None) == entries
    mid = truncate_transcript(entries, budget=700)
    assert mid == entries[-len(mid):]
    req = build_request(obs_for(ctx=entries), build_prompts("plan", "cursor"), token_budget=450, audit=None)
    assert req.messages[0]["role"] == "system"
    assert len(req.messages) == 1 + 4 + 1


class LegalityCheck:
    """Wraps a policy and checks each reply against the observation's legal set."""

    def __init__(self, inner):
        self.inner = inner
        self.seen = 0

    def decide(self, req):
        raw = self.inner.decide(req)
        act = parse_action(raw, req.observation.legal_actions)
        assert not isinstance(act, ParseFailure), raw
        self.seen += 1
        return raw


@pytest.mark.parametrize("task", [
    CountingTask(gen_counting(0, 7)),
    JigsawTask(gen_jigsaw(1, rows=3, cols=5, n_missing=4)),
    PlacementTask(gen_placement(2)),
    QATask(gen_multiobject_qa(3)),
], ids=["counting", "jigsaw", "placement", "qa"])
def test_oracle_actions_parse_and_are_legal(task):
    pol = LegalityCheck(oracle_policy(task))
    ep = run(Episode(task.initial_space(), pol, InstanceMapOracle(), task))
    assert ep.outcome.status == "answered" and ep.failure is None
    assert pol.seen > 0 and AUDIT.violations == 0


def test_counting_oracle_answers_seven():
    task = CountingTask(gen_counting(4, 7))
    ep = run(Episode(task.initial_space(), oracle_policy(task), InstanceMapOracle(), task))
    assert ep.outcome.answer.text == "7"
