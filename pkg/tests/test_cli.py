import json
from pathlib import Path

import httpx
import pytest

from visloop import cli
from visloop.policy import ChatPolicy
from visloop.runtime import load_trace


def files_of(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def generate(tmp_path, name, *extra):
    out = tmp_path / name
    code = cli.main(["generate", "--task", "counting", "--seed", "1", "--count", "3", "--out", str(out),
                     "--set", "generator.params.n_objects=5", *extra])
    return code, out


def test_generate_is_reproducible(tmp_path):
    code_a, a = generate(tmp_path, "a")
    code_b, b = generate(tmp_path, "b")
    assert code_a == code_b == 0
    assert files_of(a) == files_of(b)
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["count"] == 3
    assert len([p for p in a.iterdir() if p.is_dir()]) == 3
    assert [e["seed"] for e in manifest["instances"]] == [1, 2, 3]


def test_generate_rejects_bad_jigsaw_grid(tmp_path, capsys):
    code = cli.main(["generate", "--task", "jigsaw", "--out", str(tmp_path / "j"),
                     "--set", "generator.params.rows=2", "--set", "generator.params.cols=2"])
    assert code == 2
    err = capsys.readouterr().err
    assert "rows" in err and "generator.params" in err


def test_config_file_flags_and_interpolation(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("task: qa\nseed: 4\npolicy:\n  kind: chat\n  endpoint: http://x\n  model: m\n"
                    "  token: ${MY_TOKEN}\n")
    cfg = cli.load_config(path, {"seed": 9}, ["policy.temperature=0.5"], env={"MY_TOKEN": "abc"})
    assert cfg.task == "qa" and cfg.seed == 9
    assert cfg.policy["token"] == "abc" and cfg.policy["temperature"] == 0.5
    assert cfg.to_dict()["policy"]["token"] == "***"
    assert cli.interpolate("${UNSET_THING}x", env={}) == "x"
    with pytest.raises(cli.ConfigError):
        cli.load_config(None, {"bogus": 1})
    with pytest.raises(cli.ConfigError):
        cli.load_config(None, {"policy.kind": "chat"})
    with pytest.raises(cli.ConfigError):
        cli.load_config(None, {"sweep": [3, 1]})


def run_oracle(tmp_path, name, *extra):
    out = tmp_path / name
    code = cli.main(["run", "--task", "counting", "--seed", "0", "--out", str(out),
                     "--set", "generator.count=2", "--set", "generator.vary.n_objects=[2,5]", *extra])
    return code, out


def test_oracle_run_and_rerun(tmp_path):
    code, out = run_oracle(tmp_path, "r1")
    assert code == 0
    res = json.loads((out / "results.json").read_text())
    assert res["schema"] == cli.RESULTS_SCHEMA
    assert res["metrics"]["success_rate"] == 1.0 and res["metrics"]["n"] == 4
    assert res["metrics"]["success_by_group"] == {"2": 1.0, "5": 1.0}
    assert (out / "results.csv").read_text().startswith("task,mode,policy,metric,value")
    assert len(list((out / "traces").glob("*.jsonl"))) == 4
    assert json.loads((out / "config.json").read_text())["task"] == "counting"

    code, again = run_oracle(tmp_path, "r2")
    res2 = json.loads((again / "results.json").read_text())
    res.pop("dataset"), res2.pop("dataset")
    assert res == res2
    for trace in (out / "traces").iterdir():
        assert trace.read_bytes() == (again / "traces" / trace.name).read_bytes()


def test_parallel_run_matches_serial(tmp_path):
    _, serial = run_oracle(tmp_path, "s")
    _, par = run_oracle(tmp_path, "p", "--parallel", "3")
    a = json.loads((serial / "results.json").read_text())
    b = json.loads((par / "results.json").read_text())
    assert a["metrics"] == b["metrics"] and a["instances"] == b["instances"]


def test_cursor_only_keeps_base_digest(tmp_path):
    code, out = run_oracle(tmp_path, "co", "--mode", "cursor-only", "--policy", "random", "--budget", "30")
    assert code == 0
    for trace in (out / "traces").glob("*.jsonl"):
        digests = {r["base_digest"] for r in load_trace(trace) if r.get("kind") == "step"}
        assert len(digests) == 1


def test_sweep_and_report(tmp_path):
    code, swept = run_oracle(tmp_path, "sw", "--sweep", "0,1,2,5")
    assert code == 0
    rates = [s["solvable_rate"] for s in json.loads((swept / "results.json").read_text())["sweep"]]
    assert rates == sorted(rates) and rates[0] == 0.0 and rates[-1] == 1.0
    _, other = run_oracle(tmp_path, "co", "--mode", "cursor-only", "--policy", "random", "--budget", "10")
    rep = cli.cmd_report([swept, other], tmp_path / "rep")
    assert len(rep["table"]) == 2 and {r["mode"] for r in rep["table"]} == {"full", "cursor-only"}
    assert set(rep["plots"]) == {"success_vs_n.png", "solvable_vs_budget.png", "modes.png"}
    for p in rep["plots"]:
        assert (tmp_path / "rep" / p).stat().st_size > 0
    assert (tmp_path / "rep" / "report.csv").is_file()


def test_report_rejects_mixed_kinds(tmp_path, capsys):
    _, counting = run_oracle(tmp_path, "c")
    qa = tmp_path / "q"
    assert cli.main(["run", "--task", "qa", "--out", str(qa), "--set", "generator.count=1"]) == 0
    with pytest.raises(cli.SchemaMismatch):
        cli.cmd_report([counting, qa], tmp_path / "rep")
    assert cli.main(["report", str(counting), str(qa), "--out", str(tmp_path / "rep")]) == 3
    bad = json.loads((qa / "results.json").read_text())
    bad["schema"] = "other/9"
    (qa / "results.json").write_text(json.dumps(bad))
    with pytest.raises(cli.SchemaMismatch):
        cli.load_results(qa)


def test_replay_command(tmp_path):
    _, out = run_oracle(tmp_path, "r")
    iid = sorted(p.stem for p in (out / "traces").glob("*.jsonl"))[0]
    frames = tmp_path / "frames"
    assert cli.main(["replay", str(out), iid, "--out", str(frames)]) == 0
    records = [r for r in load_trace(out / "traces" / f"{iid}.jsonl") if r.get("kind") == "step"]
    written = sorted(frames.glob("frame_*.png"))
    assert len(written) == len(records)
    assert (out / "images" / f"{records[0]['obs_digest']}.png").read_bytes() == written[0].read_bytes()


def test_tournament_mode(tmp_path):
    out = tmp_path / "t"
    assert cli.main(["run", "--task", "placement", "--mode", "sampling-tournament", "--out", str(out),
                     "--set", "generator.count=2"]) == 0
    res = json.loads((out / "results.json").read_text())
    assert all(r["calls"] == 7 for r in res["instances"])
    assert cli.main(["run", "--task", "counting", "--mode", "sampling-tournament", "--out", str(out)]) == 2


SECRET = "sk-very-secret-value"


def test_secrets_never_persisted(tmp_path, monkeypatch):
    replies = iter(["MOVE a", "FOCUS", "ANSWER: 3"] * 10)

    def handler(request):
        assert request.headers["authorization"] == f"Bearer {SECRET}"
        return httpx.Response(200, json={"choices": [{"message": {"content": next(replies)}}]})

    def patched(*args, **kwargs):
        return ChatPolicy(*args, client=httpx.Client(transport=httpx.MockTransport(handler)), **kwargs)

    monkeypatch.setattr(cli, "ChatPolicy", patched)
    monkeypatch.setenv("VISLOOP_TEST_TOKEN", SECRET)
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("task: counting\ngenerator:\n  count: 1\n  params: {n_objects: 3}\n"
                   "policy:\n  kind: chat\n  endpoint: http://llm.test/v1\n  model: m\n"
                   "  token: ${VISLOOP_TEST_TOKEN}\n")
    out = tmp_path / "run"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    blobs = files_of(out)
    assert any(name.startswith("traces/") for name in blobs)
    assert not [name for name, data in blobs.items() if SECRET.encode() in data]
    trace = next((out / "traces").glob("*.jsonl"))
    logs = [r["policy_log"] for r in load_trace(trace) if r.get("policy_log")]
    assert logs and logs[0][0]["headers"]["Authorization"] == "***"
