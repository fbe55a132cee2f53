"""Command-line entry point: ``patternnav {gen-env,predict-exp,nav-exp,plan}``.

Every command takes an optional JSON ``--config`` file; flags override its
values, and the fully resolved settings are written next to the outputs as
``resolved-config.json``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .env import (
    PRESETS,
    EnvError,
    TemplateSet,
    correlation_profile,
    gen_tasks,
    gen_templates,
    independent_edges,
    read_tasks,
    read_templates,
    sample_configuration,
    write_configurations,
    write_tasks,
    write_templates,
)
from .inference import BpSettings, InferenceError
from .model import FactorGraphModel, ModelError, ObservationSet
from .planner import PlannerParams, plan_ours, plan_spd, plan_spo
from .sim import (
    MODEL_KINDS,
    PLANNERS,
    NavSettings,
    SimError,
    rms_csv,
    run_navigation_experiment,
    run_prediction_experiment,
)
from .topology import MapError, TopologicalMap, builtin_map, load_map

ENV_DEFAULTS = {
    "map": "grid9",
    "preset": "high-corr",
    "n_templates": None,
    "noise": None,
    "free_prob": 0.5,
    "env_seed": 1,
    "templates_file": None,
}

DEFAULTS = {
    "gen-env": {
        **ENV_DEFAULTS,
        "runs": 500,
        "cycle": 25,
        "min_separation": 0.0,
        "task_seed": 1,
        "out": "env-out",
    },
    "predict-exp": {
        **ENV_DEFAULTS,
        "models": list(MODEL_KINDS),
        "train_sizes": [10, 100, 1000, 10000],
        "test_count": 10000,
        "observed_fraction": 0.5,
        "cell_prior": None,
        "seed": 0,
        "out": "predict-out",
    },
    "nav-exp": {
        **ENV_DEFAULTS,
        "map": "small_office",
        "free_prob": 0.7,
        "env_seed": 2,
        "planners": ["ours", "ctp-uct", "spd", "spo"],
        "runs": 500,
        "cycle": 25,
        "min_separation": 15.0,
        "task_seed": 2,
        "tasks_file": None,
        "rollouts": 50,
        "gamma": 0.95,
        "exploration": None,
        "zeta": None,
        "window": 50,
        "repeat_configs": False,
        "checkpoint_every": None,
        "seed": 0,
        "out": "nav-out",
    },
    "plan": {
        "map": "small_office",
        "model_file": None,
        "observations": "",
        "start": 0,
        "goal": 1,
        "planner": "ours",
        "runs_so_far": 0,
        "rollouts": 50,
        "gamma": 0.95,
        "exploration": None,
        "zeta": None,
        "seed": 0,
    },
}


class ConfigError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _names(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_env_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--map", help="map JSON file or bundled map name")
    p.add_argument("--preset", choices=sorted(PRESETS), help="environment preset")
    p.add_argument("--n-templates", type=int, help="template count M (overrides preset)")
    p.add_argument("--noise", type=float, help="flip noise (overrides preset)")
    p.add_argument("--free-prob", type=float, help="template edge free probability")
    p.add_argument("--env-seed", type=int, help="seed for templates and configurations")
    p.add_argument("--templates-file", help="use a saved template set instead of generating")


def _add_planner_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rollouts", type=int, help="rollouts per decision K")
    p.add_argument("--gamma", type=float, help="information gain decay per run")
    p.add_argument("--exploration", type=float, help="UCB constant B in meters")
    p.add_argument("--zeta", type=float, help="meters per bit of information gain")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patternnav", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-env", help="write templates, configurations and tasks")
    g.add_argument("--config", help="JSON config file")
    _add_env_flags(g)
    g.add_argument("--runs", type=int, help="number of configurations to write")
    g.add_argument("--cycle", type=int, help="task cycle length")
    g.add_argument("--min-separation", type=float, help="minimum start/goal distance")
    g.add_argument("--task-seed", type=int, help="seed for the task sequence")
    g.add_argument("--out", help="output directory")

    pr = sub.add_parser("predict-exp", help="prediction RMS experiment, writes rms.csv")
    pr.add_argument("--config", help="JSON config file")
    _add_env_flags(pr)
    pr.add_argument("--models", type=_names, help=f"comma list from {','.join(MODEL_KINDS)}")
    pr.add_argument("--train-sizes", type=_ints, help="comma list of training sizes")
    pr.add_argument("--test-count", type=int, help="number of test configurations")
    pr.add_argument("--observed-fraction", type=float, help="fraction of edges revealed")
    pr.add_argument("--cell-prior", type=float, help="full-joint pseudocount per cell")
    pr.add_argument("--seed", type=int, help="seed for the test masks")
    pr.add_argument("--out", help="output directory")

    n = sub.add_parser("nav-exp", help="navigation experiment, writes runs.csv and summary.csv")
    n.add_argument("--config", help="JSON config file")
    _add_env_flags(n)
    n.add_argument("--planners", type=_names, help=f"comma list from {','.join(PLANNERS)}")
    n.add_argument("--runs", type=int, help="number of runs N")
    n.add_argument("--cycle", type=int, help="task cycle length")
    n.add_argument("--min-separation", type=float, help="minimum start/goal distance")
    n.add_argument("--task-seed", type=int, help="seed for the task sequence")
    n.add_argument("--tasks-file", help="read tasks instead of generating them")
    _add_planner_flags(n)
    n.add_argument("--window", type=int, help="runs per summary window")
    n.add_argument("--repeat-configs", type=_bool, help="reuse one configuration per task slot")
    n.add_argument("--checkpoint-every", type=int, help="save model counts every k runs")
    n.add_argument("--seed", type=int, help="planner seed")
    n.add_argument("--out", help="output directory")

    pl = sub.add_parser("plan", help="plan one path and print the decision")
    pl.add_argument("--config", help="JSON config file")
    pl.add_argument("--map", help="map JSON file or bundled map name")
    pl.add_argument("--model-file", help="saved model counts (fresh model if omitted)")
    pl.add_argument("--observations", help="observed edges as 'edge:state,...'")
    pl.add_argument("--start", type=int, help="robot node")
    pl.add_argument("--goal", type=int, help="goal node")
    pl.add_argument("--planner", choices=["ours", "ctp-uct", "spd", "spo"], help="planner")
    pl.add_argument("--runs-so-far", type=int, help="completed runs (information gain decay)")
    _add_planner_flags(pl)
    pl.add_argument("--seed", type=int, help="planner seed")
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(DEFAULTS[command])
    if getattr(args, "config", None):
        with open(args.config) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.config}: malformed JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{args.config}: top level must be an object")
        unknown = sorted(set(doc) - set(cfg))
        if unknown:
            raise ConfigError(f"{args.config}: unknown keys {unknown}")
        cfg.update(doc)
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    def check(key, ok, what):
        if key in cfg and cfg[key] is not None and not ok(cfg[key]):
            raise ConfigError(f"{key} must be {what}, got {cfg[key]!r}")

    check("free_prob", lambda v: 0 < v <= 1, "in (0, 1]")
    check("noise", lambda v: 0 <= v < 0.5, "in [0, 0.5)")
    check("n_templates", lambda v: v >= 1, ">= 1")
    check("runs", lambda v: v >= 0, ">= 0")
    check("cycle", lambda v: v >= 1, ">= 1")
    check("rollouts", lambda v: v >= 1, ">= 1")
    check("gamma", lambda v: 0 <= v <= 1, "in [0, 1]")
    check("observed_fraction", lambda v: 0 <= v <= 1, "in [0, 1]")
    check("test_count", lambda v: v >= 1, ">= 1")
    check("window", lambda v: v >= 1, ">= 1")
    check("train_sizes", lambda v: all(s >= 0 for s in v), "non-negative")
    check("models", lambda v: all(x in MODEL_KINDS for x in v), f"drawn from {MODEL_KINDS}")
    check("planners", lambda v: all(x in PLANNERS for x in v), f"drawn from {PLANNERS}")
    check("preset", lambda v: v in PRESETS, f"one of {sorted(PRESETS)}")
    for key in ("templates_file", "tasks_file", "model_file"):
        if cfg.get(key) and not os.path.isfile(cfg[key]):
            raise ConfigError(f"{key}: no such file {cfg[key]!r}")


def open_map(ref: str) -> TopologicalMap:
    if os.path.isfile(ref):
        return load_map(ref)
    if ref.endswith(".json") or os.sep in ref:
        raise ConfigError(f"map file not found: {ref}")
    return builtin_map(ref)


def make_templates(m: TopologicalMap, cfg: dict, tasks=None) -> TemplateSet:
    if cfg.get("templates_file"):
        ts = read_templates(cfg["templates_file"])
        if ts.n_edges != m.n_edges:
            raise ConfigError(f"template set has {ts.n_edges} edges, map has {m.n_edges}")
        return ts
    preset = PRESETS[cfg["preset"]]
    n_templates = cfg["n_templates"] if cfg["n_templates"] is not None else preset["n_templates"]
    noise = cfg["noise"] if cfg["noise"] is not None else preset["noise"]
    if n_templates is None:
        return independent_edges(m.n_edges, cfg["free_prob"], cfg["env_seed"])
    return gen_templates(m, n_templates, cfg["free_prob"], noise, cfg["env_seed"], tasks)


def _write_resolved(out: str, cfg: dict) -> None:
    with open(os.path.join(out, "resolved-config.json"), "w") as fh:
        json.dump(cfg, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write(out: str, name: str, text: str) -> None:
    with open(os.path.join(out, name), "w", newline="") as fh:
        fh.write(text)


def cmd_gen_env(cfg: dict) -> int:
    m = open_map(cfg["map"])
    ts = make_templates(m, cfg)
    tasks = gen_tasks(m, cfg["cycle"], cfg["task_seed"], cfg["min_separation"], ts)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    write_templates(os.path.join(out, "templates.json"), ts)
    write_configurations(os.path.join(out, "configurations.txt"),
                         [sample_configuration(ts, t) for t in range(cfg["runs"])])
    write_tasks(os.path.join(out, "tasks.txt"), tasks)
    _write_resolved(out, cfg)

    marg = ts.edge_marginals()
    mi = correlation_profile(ts, max(2000, cfg["runs"]))
    iu = np.triu_indices(m.n_edges, 1)
    print(f"map {m.name or cfg['map']}: {m.n_nodes} nodes, {m.n_edges} edges")
    print("edge free marginals: " + " ".join(f"{p:.2f}" for p in marg))
    print(f"mean pairwise MI: {mi[iu].mean():.4f} bits (max {mi[iu].max():.4f})")
    print(f"wrote {cfg['runs']} configurations and {tasks.cycle} tasks to {out}")
    return 0


def cmd_predict_exp(cfg: dict) -> int:
    m = open_map(cfg["map"])
    ts = make_templates(m, cfg)
    rows = run_prediction_experiment(
        m, ts, cfg["models"], cfg["train_sizes"], cfg["test_count"],
        cfg["observed_fraction"], cfg["seed"], cell_prior=cfg["cell_prior"],
    )
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    text = rms_csv(rows)
    _write(out, "rms.csv", text)
    _write_resolved(out, cfg)
    sys.stdout.write(text)
    return 0


def cmd_nav_exp(cfg: dict) -> int:
    m = open_map(cfg["map"])
    ts = make_templates(m, cfg)
    if cfg["tasks_file"]:
        tasks = read_tasks(cfg["tasks_file"])
    else:
        tasks = gen_tasks(m, cfg["cycle"], cfg["task_seed"], cfg["min_separation"], ts)
    settings = NavSettings(
        planner=PlannerParams(rollouts=cfg["rollouts"], gamma=cfg["gamma"],
                              exploration=cfg["exploration"], zeta=cfg["zeta"]),
        window=cfg["window"],
        repeat_configs=bool(cfg["repeat_configs"]),
    )
    log = run_navigation_experiment(m, ts, tasks, cfg["planners"], cfg["runs"], settings,
                                    cfg["seed"], cfg["checkpoint_every"])
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    _write(out, "runs.csv", log.runs_csv())
    summary = log.summary_csv()
    _write(out, "summary.csv", summary)
    for run, docs in sorted(log.checkpoints.items()):
        for planner, doc in docs.items():
            with open(os.path.join(out, f"model-{planner}-{run}.json"), "w") as fh:
                json.dump(doc, fh)
    _write_resolved(out, cfg)
    sys.stdout.write(summary)
    return 0


def parse_observations(text: str) -> ObservationSet:
    obs = ObservationSet()
    for item in _names(text or ""):
        try:
            e, s = item.split(":")
            obs.observe(int(e), int(s))
        except ValueError as exc:
            raise ConfigError(f"bad observation {item!r}: {exc}") from None
    return obs


def cmd_plan(cfg: dict) -> int:
    m = open_map(cfg["map"])
    model = (FactorGraphModel.load(cfg["model_file"]) if cfg["model_file"]
             else FactorGraphModel(m.n_edges))
    if model.n_edges != m.n_edges:
        raise ConfigError(f"model has {model.n_edges} edges, map has {m.n_edges}")
    obs = parse_observations(cfg["observations"])
    obs.clamp_vector(m.n_edges)
    start, goal = cfg["start"], cfg["goal"]
    for v in (start, goal):
        if not 0 <= v < m.n_nodes:
            raise ConfigError(f"node {v} not in map")
    params = PlannerParams(rollouts=cfg["rollouts"], gamma=cfg["gamma"],
                           exploration=cfg["exploration"], zeta=cfg["zeta"])
    planner = cfg["planner"]
    record: dict = {"planner": planner}
    if planner == "spo":
        path = plan_spo(m, obs, start, goal)
        record.update(path=None if path is None else list(path.nodes),
                      expected_length=None if path is None else path.length)
    elif planner == "spd":
        path, _, fallback = plan_spd(m, model, obs, start, goal)
        record.update(path=None if path is None else list(path.nodes),
                      expected_length=None if path is None else path.length,
                      fallback=fallback)
    else:
        belief = model.predict(obs)
        decision = plan_ours(m, model, belief, obs, start, goal, cfg["runs_so_far"], params,
                             seed=cfg["seed"], info_gain=planner == "ours")
        record.update(decision.to_record())
    for key, val in record.items():
        if isinstance(val, float):
            val = f"{val:.6f}"
        elif isinstance(val, list):
            val = " ".join(map(str, val))
        print(f"{key}: {val}")
    return 0


COMMANDS = {
    "gen-env": cmd_gen_env,
    "predict-exp": cmd_predict_exp,
    "nav-exp": cmd_nav_exp,
    "plan": cmd_plan,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, MapError, EnvError, ModelError, SimError, InferenceError, OSError) as exc:
        print(f"patternnav {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
