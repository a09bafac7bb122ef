"""Command line entry point: generate datasets, run episodes, report, replay traces.

Configuration is one YAML document. ``${NAME}`` in string values is
replaced from the environment, which is how tokens get in without being
written down. Command line flags override file values.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import re
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import imgcore
from .base import StepSchedule
from .policy import ChatPolicy, OracleComparator, RandomPolicy, oracle_policy
from .policy.prompts import RUN_MODES, SAMPLING_TOURNAMENT
from .runtime import (PROVIDER_FAILURE, Episode, ImageStore, TournamentFailed, TraceWriter, load_trace, replay,
                      run, run_sampling_tournament, step_budget_sweep, trace_digests)
from .scene2d import Scene2D
from .scene3d import SegConfig
from .segmenter import InstanceMapOracle, ProviderError, RemoteSegmenter
from .tasks import (MalformedDataset, PackingFailed, import_clevr, import_where2place, load_dataset, make_task,
                    reference_row, score_counting, score_jigsaw, score_placement, score_qa, write_dataset)
from .tasks import bundles, jigsaw
from .tasks.counting import N_MAX
from .tasks.placement import candidate_points, in_regions, lift_target, render_candidate

logger = logging.getLogger("visloop")

RESULTS_SCHEMA = "visloop.results/1"
TASK_KINDS = ("counting", "jigsaw", "placement", "qa")
POLICY_KINDS = ("oracle", "random", "chat")
SEGMENTER_KINDS = ("oracle", "remote")
SECRET_KEYS = ("token",)
REDACTED = "***"


class ConfigError(ValueError):
    pass


class SchemaMismatch(ValueError):
    pass


# --------------------------------------------------------------------------
# Configuration


@dataclass
class RunConfig:
    task: str = "counting"
    mode: str = "full"
    seed: int = 0
    out: str | None = None
    dataset: str | None = None
    source: dict = field(default_factory=dict)  # {"format": clevr|where2place, "dir": ...}
    generator: dict = field(default_factory=dict)  # {"count", "params", "vary"}
    policy: dict = field(default_factory=lambda: {"kind": "oracle"})
    segmenter: dict = field(default_factory=lambda: {"kind": "oracle"})
    seg: dict = field(default_factory=dict)
    step: dict = field(default_factory=dict)  # {"floor", "decay"}
    budgets: dict = field(default_factory=dict)  # {"actions", "focus", "max_moves", "tokens"}
    sweep: list = field(default_factory=list)
    candidates: int = 8
    parallel: int = 1
    keep_frames: bool = True

    def validate(self) -> "RunConfig":
        if self.task not in TASK_KINDS:
            raise ConfigError(f"task: expected one of {TASK_KINDS}, got {self.task!r}")
        if self.mode not in RUN_MODES:
            raise ConfigError(f"mode: expected one of {RUN_MODES}, got {self.mode!r}")
        if self.policy.get("kind") not in POLICY_KINDS:
            raise ConfigError(f"policy.kind: expected one of {POLICY_KINDS}")
        if self.segmenter.get("kind") not in SEGMENTER_KINDS:
            raise ConfigError(f"segmenter.kind: expected one of {SEGMENTER_KINDS}")
        for who in ("policy", "segmenter"):
            d = getattr(self, who)
            if d["kind"] in ("chat", "remote") and not d.get("endpoint"):
                raise ConfigError(f"{who}.endpoint is required for kind {d['kind']!r}")
        if self.policy["kind"] == "chat" and not self.policy.get("model"):
            raise ConfigError("policy.model is required for the chat policy")
        if self.parallel < 1:
            raise ConfigError("parallel must be >= 1")
        if self.candidates < 2:
            raise ConfigError("candidates must be >= 2")
        if self.sweep and (list(self.sweep) != sorted(self.sweep) or min(self.sweep) < 0):
            raise ConfigError("sweep: budgets must be non-negative and ascending")
        if self.mode == SAMPLING_TOURNAMENT and self.task != "placement":
            raise ConfigError("mode: sampling-tournament is implemented for placement only")
        if self.source and self.source.get("format") not in ("clevr", "where2place"):
            raise ConfigError("source.format: expected clevr or where2place")
        try:
            SegConfig(**self.seg)
        except TypeError as exc:
            raise ConfigError(f"seg: {exc}") from exc
        unknown = set(self.step) - {"floor", "decay"}
        if unknown:
            raise ConfigError(f"step: unknown keys {sorted(unknown)}")
        unknown = set(self.budgets) - {"actions", "focus", "max_moves", "tokens"}
        if unknown:
            raise ConfigError(f"budgets: unknown keys {sorted(unknown)}")
        return self

    def to_dict(self) -> dict:
        """Serialisable form with secrets redacted."""
        return _redact(asdict(self))


def _redact(obj):
    if isinstance(obj, dict):
        return {k: (REDACTED if k in SECRET_KEYS and v else _redact(v)) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_redact(v) for v in obj]
    return obj


_ENV_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def interpolate(obj, env=None):
    """Replace ``${NAME}`` in strings from ``env``; unset names become empty."""
    env = os.environ if env is None else env
    if isinstance(obj, str):
        def sub(m):
            if m.group(1) not in env:
                logger.warning("environment variable %s is not set", m.group(1))
            return env.get(m.group(1), "")
        return _ENV_RE.sub(sub, obj)
    if isinstance(obj, dict):
        return {k: interpolate(v, env) for k, v in obj.items()}
    if isinstance(obj, list):
        return [interpolate(v, env) for v in obj]
    return obj


def _set_path(doc: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    cur = doc
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
        if not isinstance(cur, dict):
            raise ConfigError(f"--set {dotted}: {k} is not a mapping")
    cur[keys[-1]] = value


def load_config(path=None, overrides: dict | None = None, sets=(), env=None) -> RunConfig:
    """File values, then ``--set key=value`` pairs, then explicit flag overrides."""
    doc = {}
    if path:
        try:
            doc = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a mapping")
    doc = interpolate(doc, env)
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        _set_path(doc, k, yaml.safe_load(v))
    for k, v in (overrides or {}).items():
        if v is not None:
            _set_path(doc, k, v)
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        cfg = RunConfig(**doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


# --------------------------------------------------------------------------
# generate


def generator_specs(cfg: RunConfig) -> list[dict]:
    """Cartesian product of ``vary`` values, ``count`` seeds per combination."""
    gen = cfg.generator or {}
    count = int(gen.get("count", 1))
    if count < 0:
        raise ConfigError("generator.count must be >= 0")
    params = dict(gen.get("params") or {})
    vary = gen.get("vary") or {}
    keys = sorted(vary)
    specs = []
    for combo in itertools.product(*(vary[k] for k in keys)):
        p = {**params, **dict(zip(keys, combo))}
        for j in range(count):
            specs.append({"seed": cfg.seed + j, "params": p})
    for s in specs:
        _check_params(cfg.task, s["params"])
    return specs


def _check_params(kind: str, p: dict) -> None:
    try:
        if kind == "jigsaw":
            jigsaw.validate_grid(p.get("rows", 3), p.get("cols", 5), p.get("n_missing", 4))
        elif kind == "counting":
            n = p.get("n_objects", 5)
            if not 0 <= n <= N_MAX:
                raise ValueError(f"n_objects must lie in [0, {N_MAX}], got {n}")
        elif kind == "qa" and p.get("n_objects", 6) < 2:
            raise ValueError("n_objects must be >= 2")
        elif kind == "placement" and p.get("dim", 2) not in (2, 3):
            raise ValueError("dim must be 2 or 3")
    except ValueError as exc:
        raise ConfigError(f"generator.params: {exc}") from exc


def cmd_generate(cfg: RunConfig) -> Path:
    if not cfg.out:
        raise ConfigError("out: an output directory is required")
    specs = generator_specs(cfg)
    try:
        write_dataset(cfg.task, specs, cfg.out)
    except (PackingFailed, TypeError, ValueError) as exc:
        raise ConfigError(f"generator.params: {exc}") from exc
    return Path(cfg.out)


# --------------------------------------------------------------------------
# run


def instances_for(cfg: RunConfig, out: Path) -> tuple[list, str]:
    """``([(id, instance), ...], dataset_dir)`` from an import, a dataset or the generator."""
    if cfg.source:
        fmt, d = cfg.source["format"], cfg.source.get("dir")
        try:
            items = import_clevr(d) if fmt == "clevr" else import_where2place(d)
        except MalformedDataset as exc:
            raise ConfigError(f"source: {exc}") from exc
        return [(f"{fmt}-{i:04d}", inst) for i, inst in enumerate(items)], str(d)
    dataset = Path(cfg.dataset) if cfg.dataset else out / "dataset"
    if not cfg.dataset:
        write_dataset(cfg.task, generator_specs(cfg), dataset)
    try:
        kind, items = load_dataset(dataset)
    except MalformedDataset as exc:
        raise ConfigError(f"dataset: {exc}") from exc
    if kind != cfg.task:
        raise ConfigError(f"dataset holds {kind} instances but task is {cfg.task}")
    return items, str(dataset)


def initial_space(cfg: RunConfig, task):
    """Task's initial scene with the configured step schedule and segmentation settings."""
    space = task.initial_space()
    w, h = space.size
    space = replace(space, step=StepSchedule.for_canvas(w, h, **cfg.step))
    if not isinstance(space, Scene2D) and cfg.seg:
        space = replace(space, cfg=SegConfig(**cfg.seg))
    return space


def make_policy(cfg: RunConfig, task, index: int = 0):
    p = cfg.policy
    if p["kind"] == "oracle":
        return oracle_policy(task)
    if p["kind"] == "random":
        return RandomPolicy(seed=cfg.seed + index)
    return ChatPolicy(p["endpoint"], p["model"], token=p.get("token") or None,
                      temperature=float(p.get("temperature", 0.0)), timeout=float(p.get("timeout", 120.0)),
                      retries=int(p.get("retries", 3)), max_requests=p.get("max_requests"))


def make_segmenter(cfg: RunConfig):
    s = cfg.segmenter
    if s["kind"] == "oracle":
        return InstanceMapOracle()
    return RemoteSegmenter(s["endpoint"], token=s.get("token") or None, timeout=float(s.get("timeout", 60.0)),
                           retries=int(s.get("retries", 3)))


def _group_key(kind: str, inst):
    if kind == "counting":
        return inst.true_count
    if kind == "jigsaw":
        return len(inst.missing)
    return None


def run_instance(cfg: RunConfig, index: int, iid: str, inst, out: Path) -> dict:
    task = make_task(cfg.task, inst, iid)
    store = ImageStore(out / "images" if cfg.keep_frames else None)
    trace = TraceWriter(out / "traces" / f"{iid}.jsonl", store)
    row = {"id": iid, "group": _group_key(cfg.task, inst)}
    if cfg.mode == SAMPLING_TOURNAMENT:
        return {**row, **_run_tournament(cfg, index, task, trace)}
    b = cfg.budgets
    ep = Episode(initial_space(cfg, task), make_policy(cfg, task, index), make_segmenter(cfg), task,
                 mode=cfg.mode, budget=b.get("actions"), focus_budget=b.get("focus"),
                 max_moves=b.get("max_moves", 400), token_budget=b.get("tokens"), trace=trace)
    run(ep)
    return {**row, "status": ep.outcome.status, "reason": ep.outcome.reason, "failure": ep.failure,
            "calls": ep.calls, "actions": ep.t, "focus_used": ep.focus_used, "result": ep.result}


def _run_tournament(cfg: RunConfig, index: int, task, trace: TraceWriter) -> dict:
    inst = task.instance
    rng = np.random.default_rng(cfg.seed + index)
    space, layer = lift_target(task)
    shots = [render_candidate(space, layer, p) for p in candidate_points(inst, cfg.candidates, rng)]
    renders, points = [s[0] for s in shots], [s[1] for s in shots]
    hits = [in_regions(p, inst.regions) for p in points]
    comparator = OracleComparator(hits) if cfg.policy["kind"] == "oracle" else make_policy(cfg, task, index)
    try:
        res = run_sampling_tournament(renders, comparator, inst.prompt, trace)
    except TournamentFailed as exc:
        return {"status": "failed", "reason": PROVIDER_FAILURE, "failure": PROVIDER_FAILURE, "calls": 0,
                "actions": 0, "focus_used": 0, "error": str(exc),
                "result": {"locating": True, "placement": False, "correct": False}}
    placed = hits[res.winner]
    return {"status": "answered", "reason": None, "failure": None if placed else "WrongAnswer",
            "calls": res.comparisons, "actions": res.comparisons, "focus_used": 0,
            "result": {"locating": True, "placement": placed, "correct": placed, "winner": res.winner,
                       "point": list(points[res.winner]), "candidates_in_region": int(sum(hits))}}


def compute_metrics(kind: str, rows: list) -> dict:
    results = [r["result"] for r in rows]
    m: dict = {"n": len(rows)}
    if kind == "counting":
        preds = [r.get("pred") for r in results]
        truths = [r["truth"] for r in results]
        c = score_counting(preds, truths)
        m.update(success_rate=c.success_rate, mean_error=c.mean_error, variance=c.variance)
    elif kind == "jigsaw":
        m["completion_rate"] = score_jigsaw(results).completion_rate
    elif kind == "placement":
        p = score_placement(results)
        m.update(locating_rate=p.locating_rate, placement_rate=p.placement_rate)
    else:
        m["accuracy"] = score_qa(results).accuracy
    groups: dict = {}
    for r in rows:
        if r.get("group") is not None:
            groups.setdefault(str(r["group"]), []).append(bool(r["result"].get("correct")))
    if groups:
        m["success_by_group"] = {k: float(np.mean(v)) for k, v in sorted(groups.items(), key=lambda kv: int(kv[0]))}
    failures: dict = {}
    for r in rows:
        if r.get("failure"):
            failures[r["failure"]] = failures.get(r["failure"], 0) + 1
    m["failures"] = dict(sorted(failures.items()))
    m["mean_calls"] = float(np.mean([r["calls"] for r in rows])) if rows else 0.0
    return m


PRIMARY_METRIC = {"counting": "success_rate", "jigsaw": "completion_rate", "placement": "placement_rate",
                  "qa": "accuracy"}


def cmd_run(cfg: RunConfig) -> Path:
    if not cfg.out:
        raise ConfigError("out: an output directory is required")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    items, dataset = instances_for(cfg, out)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    manifest = Path(dataset) / "manifest.json"
    if manifest.is_file() and manifest.resolve() != (out / "manifest.json").resolve():
        shutil.copyfile(manifest, out / "manifest.json")

    def job(k):
        iid, inst = items[k]
        try:
            return run_instance(cfg, k, iid, inst, out)
        except ProviderError as exc:
            logger.error("instance %s: %s", iid, exc)
            return {"id": iid, "group": _group_key(cfg.task, inst), "status": "failed",
                    "reason": PROVIDER_FAILURE, "failure": PROVIDER_FAILURE, "calls": 0, "actions": 0,
                    "focus_used": 0, "result": {"correct": False}, "error": str(exc)}

    with ThreadPoolExecutor(max_workers=cfg.parallel) as pool:
        rows = list(pool.map(job, range(len(items))))
    rows.sort(key=lambda r: r["id"])
    results = {"schema": RESULTS_SCHEMA, "task": cfg.task, "mode": cfg.mode, "policy": cfg.policy["kind"],
               "dataset": dataset, "metrics": compute_metrics(cfg.task, rows), "instances": rows,
               "reference": reference_row(cfg.task)}
    if cfg.sweep:
        tasks = [make_task(cfg.task, inst, iid) for iid, inst in items]
        results["sweep"] = step_budget_sweep(tasks, cfg.sweep, lambda t: make_policy(cfg, t),
                                             lambda t: make_segmenter(cfg), cfg.budgets.get("actions"),
                                             make_space=lambda t: initial_space(cfg, t))
    (out / "results.json").write_text(json.dumps(results, indent=2, sort_keys=True))
    with (out / "results.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["task", "mode", "policy", "metric", "value"])
        for k, v in results["metrics"].items():
            if isinstance(v, (int, float)):
                w.writerow([cfg.task, cfg.mode, cfg.policy["kind"], k, v])
    logger.info("%s/%s: %s", cfg.task, cfg.mode, {k: v for k, v in results["metrics"].items()
                                                  if isinstance(v, (int, float))})
    return out


# --------------------------------------------------------------------------
# report


def load_results(run_dir) -> dict:
    path = Path(run_dir) / "results.json"
    try:
        res = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if res.get("schema") != RESULTS_SCHEMA:
        raise SchemaMismatch(f"{path} has schema {res.get('schema')!r}, expected {RESULTS_SCHEMA}")
    return res


def cmd_report(run_dirs, out_dir) -> dict:
    """Comparison table plus plots across runs of one task kind."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not run_dirs:
        raise ConfigError("report needs at least one run directory")
    runs = [(str(d), load_results(d)) for d in run_dirs]
    kinds = {r["task"] for _, r in runs}
    if len(kinds) > 1:
        raise SchemaMismatch(f"runs mix task kinds {sorted(kinds)}")
    kind = kinds.pop()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scalar = sorted({k for _, r in runs for k, v in r["metrics"].items() if isinstance(v, (int, float))})
    table = []
    for d, r in runs:
        table.append({"run": d, "task": kind, "mode": r["mode"], "policy": r["policy"],
                      **{k: r["metrics"].get(k) for k in scalar}})
    with (out / "report.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["run", "task", "mode", "policy"] + scalar)
        w.writeheader()
        w.writerows(table)
    plots = []

    unique = len(runs) == len({(r["mode"], r["policy"]) for _, r in runs})

    def label(d, r):
        return f"{r['mode']} ({r['policy']})" if unique else Path(d).name

    grouped = [(d, r) for d, r in runs if r["metrics"].get("success_by_group")]
    if grouped:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for d, r in grouped:
            g = r["metrics"]["success_by_group"]
            ax.plot([int(k) for k in g], list(g.values()), marker="o", label=label(d, r))
        ax.set_xlabel("number of objects" if kind == "counting" else "missing pieces")
        ax.set_ylabel("success rate")
        ax.set_ylim(-0.02, 1.02)
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / "success_vs_n.png", dpi=100)
        plt.close(fig)
        plots.append("success_vs_n.png")
    swept = [(d, r) for d, r in runs if r.get("sweep")]
    if swept:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for d, r in swept:
            ax.plot([s["budget"] for s in r["sweep"]], [s["solvable_rate"] for s in r["sweep"]], marker="o",
                    label=label(d, r))
        ax.set_xlabel("reasoning steps (focus budget)")
        ax.set_ylabel("solvable rate")
        ax.set_ylim(-0.02, 1.02)
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / "solvable_vs_budget.png", dpi=100)
        plt.close(fig)
        plots.append("solvable_vs_budget.png")
    metric = PRIMARY_METRIC[kind]
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(runs)), 3.5))
    ax.bar(range(len(runs)), [r["metrics"].get(metric, 0.0) for _, r in runs])
    ax.set_xticks(range(len(runs)), [label(d, r) for d, r in runs], rotation=20, ha="right")
    ax.set_ylabel(metric.replace("_", " "))
    ax.set_ylim(0, 1.02)
    fig.tight_layout()
    fig.savefig(out / "modes.png", dpi=100)
    plt.close(fig)
    plots.append("modes.png")
    return {"table": table, "plots": plots}


# --------------------------------------------------------------------------
# replay


def cmd_replay(run_dir, instance_id: str, out_dir) -> dict:
    """Re-execute a recorded episode and write its observation frames as PNGs."""
    run_dir = Path(run_dir)
    cfg_doc = json.loads((run_dir / "config.json").read_text())
    cfg = RunConfig(**cfg_doc)
    res = load_results(run_dir)
    dataset = Path(res["dataset"])
    if cfg.source:
        items, _ = instances_for(cfg, run_dir)
        lookup = dict(items)
    else:
        lookup = {instance_id: bundles.load_instance(dataset / instance_id)[1]}
    if instance_id not in lookup:
        raise ConfigError(f"instance {instance_id} not in the run's dataset")
    task = make_task(cfg.task, lookup[instance_id], instance_id)
    records = load_trace(run_dir / "traces" / f"{instance_id}.jsonl")
    store = ImageStore(run_dir / "images")
    frames: list = []
    got = replay(records, task, store, space=initial_space(cfg, task), frames=frames)
    want = trace_digests(records)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k, img in enumerate(frames):
        imgcore.save_png(out / f"frame_{k:04d}.png", img)
    mismatches = sum(a != b for a, b in zip(got, want)) + abs(len(got) - len(want))
    return {"frames": len(frames), "mismatches": mismatches}


# --------------------------------------------------------------------------
# argument parsing


def _add_config_args(p):
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value by dotted key, e.g. generator.count=5")
    p.add_argument("--task", choices=TASK_KINDS)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="visloop", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write instance bundles and a manifest")
    _add_config_args(g)
    g.add_argument("--count", type=int, help="instances per parameter combination")

    r = sub.add_parser("run", help="run episodes and write traces and results")
    _add_config_args(r)
    r.add_argument("--dataset", help="dataset directory written by generate")
    r.add_argument("--mode", choices=RUN_MODES)
    r.add_argument("--policy", choices=POLICY_KINDS)
    r.add_argument("--segmenter", choices=SEGMENTER_KINDS)
    r.add_argument("--parallel", type=int, help="episodes run concurrently")
    r.add_argument("--budget", type=int, help="operator action budget per episode")
    r.add_argument("--sweep", help="comma separated focus budgets for a solvable-rate sweep")

    rep = sub.add_parser("report", help="compare runs: CSV table and plots")
    rep.add_argument("runs", nargs="+", help="run directories")
    rep.add_argument("--out", required=True)

    rp = sub.add_parser("replay", help="re-render a trace to a directory of frames")
    rp.add_argument("run", help="run directory")
    rp.add_argument("instance", help="instance id")
    rp.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("generate", "run"):
            overrides = {"task": args.task, "seed": args.seed, "out": args.out}
            if args.command == "generate":
                overrides["generator.count"] = args.count
                cfg = load_config(args.config, overrides, args.set)
                print(cmd_generate(cfg))
            else:
                overrides.update({"dataset": args.dataset, "mode": args.mode, "policy.kind": args.policy,
                                  "segmenter.kind": args.segmenter, "parallel": args.parallel,
                                  "budgets.actions": args.budget})
                if args.sweep:
                    try:
                        overrides["sweep"] = [int(v) for v in args.sweep.split(",")]
                    except ValueError as exc:
                        raise ConfigError(f"--sweep: {exc}") from exc
                cfg = load_config(args.config, overrides, args.set)
                out = cmd_run(cfg)
                metrics = json.loads((out / "results.json").read_text())["metrics"]
                print(json.dumps({k: v for k, v in metrics.items() if isinstance(v, (int, float))}))
        elif args.command == "report":
            rep = cmd_report(args.runs, args.out)
            print(json.dumps(rep["table"], indent=2))
        else:
            res = cmd_replay(args.run, args.instance, args.out)
            print(json.dumps(res))
            return 0 if res["mismatches"] == 0 else 1
    except SchemaMismatch as exc:
        print(f"error: schema mismatch: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, MalformedDataset, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
