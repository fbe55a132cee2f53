"""Navigation and prediction experiments.

A navigation run places the robot at the task's start in a fixed (hidden)
configuration. On arrival at a node it observes every incident edge, then
consults its planner and moves one edge. After the run the robot's own
model (if it has one) is updated once with everything it saw.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .env import EnvConfiguration, TaskSequence, TemplateSet, sample_configuration, sample_matrix
from .inference import BpSettings
from .model import FactorGraphModel, FullJointModel, IndependentModel, ObservationSet
from .planner import PlannerParams, plan_ours, plan_optimal, plan_spd, plan_spo
from .topology import TopologicalMap

PLANNERS = ("ours", "ctp-uct", "spd", "spo", "optimal")
MODEL_KINDS = ("factor-graph", "independent", "full-joint")
LEARNING = {"ours", "ctp-uct", "spd"}

RUNS_COLUMNS = ("run", "planner", "task_start", "task_goal", "traveled", "optimal", "spo",
                "normalized", "reached", "replans")
SUMMARY_COLUMNS = ("planner", "window_end", "mean_normalized")
RMS_COLUMNS = ("model", "train_size", "rms")

# seed stream tags
_DECISION_STREAM = 3
_TEST_MASK_STREAM = 4
TEST_RUN_OFFSET = 1_000_000


class SimError(RuntimeError):
    pass


@dataclass(frozen=True)
class NavSettings:
    planner: PlannerParams = PlannerParams()
    bp: BpSettings = BpSettings()
    mi_threshold: float = 0.0
    max_steps: int | None = None
    # reuse the configurations of the first task cycle for every cycle
    repeat_configs: bool = False
    window: int = 50


@dataclass
class RunResult:
    run: int
    planner: str
    task_start: int
    task_goal: int
    traveled: float
    reached: bool
    replans: int
    nodes: tuple[int, ...] = ()
    optimal: float | None = None
    spo: float | None = None
    observed: ObservationSet | None = field(default=None, repr=False, compare=False)

    @property
    def normalized(self) -> float | None:
        """(traveled - optimal) / (spo - optimal); None when undefined."""
        if not self.reached or self.optimal is None or self.spo is None:
            return None
        span = self.spo - self.optimal
        if span <= 1e-9:
            return None
        return (self.traveled - self.optimal) / span

    def row(self) -> dict:
        return {
            "run": self.run,
            "planner": self.planner,
            "task_start": self.task_start,
            "task_goal": self.task_goal,
            "traveled": _fmt(self.traveled),
            "optimal": _fmt(self.optimal),
            "spo": _fmt(self.spo),
            "normalized": _fmt(self.normalized),
            "reached": int(self.reached),
            "replans": self.replans,
        }


def _fmt(x: float | None) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.6f}"


def _observe(m: TopologicalMap, truth: np.ndarray, node: int, obs: ObservationSet) -> list[int]:
    return [e for e in m.incident(node) if obs.observe(e, int(truth[e]))]


def execute_run(
    m: TopologicalMap,
    truth: EnvConfiguration | np.ndarray,
    task: tuple[int, int],
    planner: str,
    model: FactorGraphModel | None = None,
    settings: NavSettings = NavSettings(),
    run: int = 0,
    runs_so_far: int = 0,
    seed: int = 0,
) -> RunResult:
    """Drive one run; the model is read but not updated here."""
    if planner not in PLANNERS:
        raise SimError(f"unknown planner {planner!r}; choose from {PLANNERS}")
    if planner in LEARNING and model is None:
        raise SimError(f"planner {planner!r} needs a model")
    bits = truth.array if isinstance(truth, EnvConfiguration) else np.asarray(truth, dtype=np.int8)
    start, goal = task
    params = settings.planner.resolve(m)
    max_steps = settings.max_steps or 4 * (m.n_nodes + m.n_edges)

    obs = ObservationSet(run=run)
    u = start
    nodes = [u]
    traveled = 0.0
    plans = 0
    plan: list[int] | None = None
    spd_world: np.ndarray | None = None
    new = _observe(m, bits, u, obs)

    def make_plan() -> list[int] | None:
        nonlocal spd_world
        if planner == "optimal":
            path = plan_optimal(m, bits, u, goal)
        elif planner == "spo":
            path = plan_spo(m, obs, u, goal)
        elif planner == "spd":
            path, spd_world, _ = plan_spd(m, model, obs, u, goal)
        else:
            belief = model.predict(obs)
            decision = plan_ours(
                m, model, belief, obs, u, goal, runs_so_far, params,
                seed=(seed, _DECISION_STREAM, run, plans),
                info_gain=planner == "ours",
            )
            path = decision.path
        return None if path is None else list(path.nodes)

    steps = changes = 0
    while u != goal and steps < max_steps:
        nxt_edge = None if plan is None or len(plan) < 2 else m.edge_between(plan[0], plan[1])
        blocked_ahead = nxt_edge is not None and obs.get(nxt_edge) == 0
        if plan is None or len(plan) < 2 or blocked_ahead:
            need = True
        elif planner in ("ours", "ctp-uct"):
            need = bool(new)
        elif planner == "spd":
            need = spd_world is not None and any(spd_world[e] != bits[e] for e in new)
        else:
            need = False
        if need:
            old = plan
            plan = make_plan()
            plans += 1
            if plan is None:
                break
            # only a changed route counts as a replan
            if old is not None and plan != old:
                changes += 1
        e = m.edge_between(plan[0], plan[1])
        if bits[e] != 1:
            raise SimError(f"run {run}: planner {planner} tried to cross blocked edge {e}")
        traveled += float(m.lengths[e])
        u = plan[1]
        plan = plan[1:]
        nodes.append(u)
        new = _observe(m, bits, u, obs)
        steps += 1

    return RunResult(run, planner, start, goal, traveled, u == goal, changes,
                     tuple(nodes), observed=obs)


@dataclass
class ExperimentLog:
    results: list[RunResult] = field(default_factory=list)
    checkpoints: dict[int, dict[str, dict]] = field(default_factory=dict)
    window: int = 50

    def for_planner(self, planner: str) -> list[RunResult]:
        return [r for r in self.results if r.planner == planner]

    @property
    def planners(self) -> list[str]:
        seen: dict[str, None] = {}
        for r in self.results:
            seen.setdefault(r.planner)
        return list(seen)

    def window_score(self, planner: str, lo: int, hi: int) -> float | None:
        """Sum of (traveled - optimal) over sum of (spo - optimal), runs lo <= t < hi.

        Every run whose goal is reachable counts, including those where SPO
        already travels optimally. None when the SPO excess sums to zero.
        """
        num = den = 0.0
        for r in self.for_planner(planner):
            if lo <= r.run < hi and r.reached and r.optimal is not None and r.spo is not None:
                num += r.traveled - r.optimal
                den += r.spo - r.optimal
        return num / den if den > 0 else None

    def summary(self, window: int | None = None) -> list[dict]:
        window = window or self.window
        n_runs = max((r.run for r in self.results), default=-1) + 1
        rows = []
        for planner in self.planners:
            for end in range(window, n_runs + window, window):
                end = min(end, n_runs)
                score = self.window_score(planner, end - window, end)
                rows.append({"planner": planner, "window_end": end,
                             "mean_normalized": _fmt(score)})
                if end == n_runs:
                    break
        return rows

    def runs_csv(self) -> str:
        return _csv(RUNS_COLUMNS, (r.row() for r in self.results))

    def summary_csv(self, window: int | None = None) -> str:
        return _csv(SUMMARY_COLUMNS, self.summary(window))


def _csv(columns: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def run_navigation_experiment(
    m: TopologicalMap,
    templates: TemplateSet,
    tasks: TaskSequence,
    planners: Sequence[str],
    n_runs: int,
    settings: NavSettings = NavSettings(),
    seed: int = 0,
    checkpoint_every: int | None = None,
    progress: Callable[[int], None] | None = None,
) -> ExperimentLog:
    """Run ``n_runs`` tasks with every planner arm learning on its own model copy."""
    for p in planners:
        if p not in PLANNERS:
            raise SimError(f"unknown planner {p!r}; choose from {PLANNERS}")
    tasks.validate(m)
    models = {
        p: FactorGraphModel(m.n_edges, bp_settings=settings.bp, mi_threshold=settings.mi_threshold)
        for p in planners if p in LEARNING
    }
    log = ExperimentLog(window=settings.window)
    for t in range(n_runs):
        truth = sample_configuration(templates, t % tasks.cycle if settings.repeat_configs else t)
        task = tasks.task(t)
        best = plan_optimal(m, truth, *task)
        spo_res = execute_run(m, truth, task, "spo", None, settings, t, t, seed)
        optimal = best.length if best is not None else None
        spo = spo_res.traveled if spo_res.reached else None
        for p in planners:
            if p == "spo":
                res = spo_res
            else:
                res = execute_run(m, truth, task, p, models.get(p), settings, t, t, seed)
            res.optimal, res.spo = optimal, spo
            if p in models:
                models[p].update(res.observed)
            log.results.append(res)
        if checkpoint_every and (t + 1) % checkpoint_every == 0:
            log.checkpoints[t + 1] = {p: mdl.to_document() for p, mdl in models.items()}
        if progress is not None:
            progress(t)
    return log


def _make_model(kind: str, n_edges: int, bp: BpSettings, cell_prior: float | None):
    if kind == "factor-graph":
        return FactorGraphModel(n_edges, bp_settings=bp)
    if kind == "independent":
        return IndependentModel(n_edges)
    if kind == "full-joint":
        return FullJointModel(n_edges, cell_prior)
    raise SimError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")


def mask_test_rows(truth: np.ndarray, observed_fraction: float, seed: int) -> np.ndarray:
    """Reveal exactly round(fraction * n) uniformly chosen edges per test row."""
    if not 0 <= observed_fraction <= 1:
        raise SimError("observed fraction must lie in [0, 1]")
    n_tests, n = truth.shape
    k = int(round(observed_fraction * n))
    rng = np.random.default_rng([seed, _TEST_MASK_STREAM])
    clamps = np.full(truth.shape, -1, dtype=np.int8)
    for r in range(n_tests):
        idx = rng.choice(n, k, replace=False)
        clamps[r, idx] = truth[r, idx]
    return clamps


def run_prediction_experiment(
    m: TopologicalMap,
    templates: TemplateSet,
    model_kinds: Sequence[str] = MODEL_KINDS,
    train_sizes: Sequence[int] = (10, 100, 1000, 10000),
    test_count: int = 10000,
    observed_fraction: float = 0.5,
    seed: int = 0,
    bp: BpSettings = BpSettings(),
    cell_prior: float | None = None,
) -> list[dict]:
    """RMS of predicted marginals against truth bits on the unobserved edges.

    Training rows are the configurations of runs 0..n-1; test rows come
    from a disjoint run range. Returns rows ``{model, train_size, rms}``.
    """
    sizes = sorted(set(int(s) for s in train_sizes))
    if sizes and sizes[0] < 0:
        raise SimError("train sizes must be non-negative")
    train = sample_matrix(templates, range(sizes[-1] if sizes else 0))
    test = sample_matrix(templates, range(TEST_RUN_OFFSET, TEST_RUN_OFFSET + test_count))
    clamps = mask_test_rows(test, observed_fraction, seed)
    hidden = clamps < 0

    rows = []
    for kind in model_kinds:
        model = _make_model(kind, m.n_edges, bp, cell_prior)
        done = 0
        for n in sizes:
            batch = train[done:n]
            if isinstance(model, FullJointModel):
                model.update_bits(batch)
            else:
                for row in batch:
                    model.update(ObservationSet.from_bits(row))
            done = n
            if hidden.any():
                p, _, _, _ = model.predict_batch(clamps)
                rms = float(np.sqrt(np.mean((p[hidden] - test[hidden]) ** 2)))
            else:
                rms = float("nan")
            rows.append({"model": kind, "train_size": n, "rms": rms})
    order = {s: i for i, s in enumerate(train_sizes)}
    rows.sort(key=lambda r: (list(model_kinds).index(r["model"]), order.get(r["train_size"], 0)))
    return rows


def rms_csv(rows: Sequence[dict]) -> str:
    return _csv(RMS_COLUMNS, ({**r, "rms": _fmt(r["rms"])} for r in rows))
