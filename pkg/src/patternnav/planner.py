"""Planning in the belief space of edge traversabilities.

Monte-Carlo planner (CTP-UCT style): each rollout samples a configuration
from the current per-edge beliefs and walks the simulated robot to the goal,
choosing moves with a UCB rule over a tree of knowledge states. Each first
move yields one candidate: its expected distance, backed up through the
sampled tree, and the walk that follows the best moves and the likeliest
outcomes. The score is that distance, optionally reduced by a decaying
information-gain bonus.

Deterministic baselines: optimistic shortest path (SPO), shortest path on
the most likely configuration (SPD) and the omniscient optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .env import EnvConfiguration
from .model import BeliefState, FactorGraphModel, ObservationSet
from .topology import Path, TopologicalMap, distances_to, reachable, shortest_path

UNKNOWN = -1


@dataclass(frozen=True)
class PlannerParams:
    """Monte-Carlo planner settings.

    ``exploration`` (UCB constant) and ``zeta`` (meters per bit of
    information gain) default to the map's mean edge length; ``penalty``
    defaults to four times the total edge length.
    """

    rollouts: int = 50
    exploration: float | None = None
    gamma: float = 0.95
    zeta: float | None = None
    penalty: float | None = None
    max_steps: int | None = None
    # exploration weights gamma**runs below this count as zero
    min_exploration_weight: float = 1e-6

    def __post_init__(self):
        if self.rollouts < 1:
            raise ValueError("rollouts must be >= 1")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")

    def resolve(self, m: TopologicalMap) -> "PlannerParams":
        mean = m.mean_edge_length
        return PlannerParams(
            rollouts=self.rollouts,
            exploration=mean if self.exploration is None else self.exploration,
            gamma=self.gamma,
            zeta=mean if self.zeta is None else self.zeta,
            penalty=4.0 * m.total_length if self.penalty is None else self.penalty,
            max_steps=4 * (m.n_nodes + m.n_edges) if self.max_steps is None else self.max_steps,
            min_exploration_weight=self.min_exploration_weight,
        )


@dataclass(frozen=True)
class RolloutState:
    node: int
    known_free: frozenset
    known_blocked: frozenset
    unknown: frozenset
    distance: float = 0.0

    @classmethod
    def from_observations(cls, m: TopologicalMap, node: int, known: ObservationSet,
                          distance: float = 0.0) -> "RolloutState":
        free = frozenset(e for e, s in known.items() if s == 1)
        blocked = frozenset(e for e, s in known.items() if s == 0)
        unknown = frozenset(range(m.n_edges)) - free - blocked
        return cls(node, free, blocked, unknown, distance)

    def knowledge(self, n_edges: int) -> np.ndarray:
        out = np.full(n_edges, UNKNOWN, dtype=np.int8)
        out[list(self.known_free)] = 1
        out[list(self.known_blocked)] = 0
        return out


class _Action:
    __slots__ = ("visits", "mean", "outcomes")

    def __init__(self):
        self.visits = 0
        self.mean = 0.0
        self.outcomes: dict[tuple, _Node] = {}


class _Node:
    __slots__ = ("vertex", "visits", "arrivals", "mean", "actions")

    def __init__(self, vertex: int):
        self.vertex = vertex
        self.visits = 0
        self.arrivals = 0
        self.mean = 0.0
        self.actions: dict[int, _Action] = {}


def _record(stat, value: float) -> None:
    stat.visits += 1
    stat.mean += (value - stat.mean) / stat.visits


@dataclass
class Candidate:
    """One move considered by ``uct_select``.

    ``visits``/``mean_cost`` are the statistics of the move from the current
    knowledge state; ``hint`` is an optimistic remaining distance used only
    to order moves that were never tried.
    """

    node: int
    dist: float
    visits: int = 0
    mean_cost: float = 0.0
    hint: float = 0.0


def uct_select(parent_visits: int, candidates: Sequence[Candidate], exploration: float) -> int:
    """Pick the move maximizing ``B*sqrt(ln R / R') - dist - C'``.

    Untried moves win outright; among them the smallest ``dist + hint``
    goes first, then the smallest node id. Exact score ties also go to the
    smallest node id.
    """
    if not candidates:
        raise ValueError("uct_select needs at least one candidate")
    fresh = [c for c in candidates if c.visits == 0]
    if fresh:
        return min(fresh, key=lambda c: (c.dist + c.hint, c.node)).node
    log_r = math.log(parent_visits) if parent_visits > 0 else 0.0
    best, best_score = None, -math.inf
    for c in sorted(candidates, key=lambda c: c.node):
        score = exploration * math.sqrt(log_r / c.visits) - c.dist - c.mean_cost
        if score > best_score:
            best, best_score = c, score
    return best.node


class RolloutTree:
    """UCT statistics over knowledge states reached from one root state.

    Decision nodes hold the robot's situation; each move out of a node keeps
    its own visit count and mean cost-to-go, and branches on what is revealed
    at the arrival node.
    """

    def __init__(self, m: TopologicalMap, root: RolloutState, goal: int, params: PlannerParams):
        self.map = m
        self.params = params.resolve(m)
        self.root_state = root
        self.goal = goal
        self.root = _Node(root.node)
        self._root_known = root.knowledge(m.n_edges)
        self._lengths = m.lengths.tolist()
        self._incident = [m.incident(v) for v in range(m.n_nodes)]
        self._other = [
            {e: m.other_end(e, v) for e in m.incident(v)} for v in range(m.n_nodes)
        ]
        self._h_cache: dict[bytes, list[float]] = {}
        self.walks: list[tuple[tuple[int, ...], float, bool]] = []

    def optimistic_distances(self, known: np.ndarray) -> list[float]:
        """Distance to goal treating unknown edges as free (cached per blocked set)."""
        key = (known == 0).tobytes()
        h = self._h_cache.get(key)
        if h is None:
            h = distances_to(self.map, self.goal, known != 0).tolist()
            self._h_cache[key] = h
        return h

    def rollout(self, config) -> float:
        """Simulate one walk on ``config``; returns its cost (or the penalty)."""
        bits = config.bits if isinstance(config, EnvConfiguration) else config
        bits = [int(b) for b in bits]
        p = self.params
        known = self._root_known.copy()
        u = self.root_state.node
        for e in self._incident[u]:
            if known[e] == UNKNOWN:
                known[e] = bits[e]
        node = self.root
        trail: list[tuple[_Node, _Action | None, float, float]] = []
        walked = [u]
        cost = 0.0
        ok = True
        steps = 0
        # (node, knowledge revision) pairs already visited on this walk
        revision = 0
        seen = {(u, revision)}
        while u != self.goal:
            h = self.optimistic_distances(known)
            moves = [(e, self._other[u][e]) for e in self._incident[u] if known[e] == 1]
            if not moves or math.isinf(h[u]) or steps >= p.max_steps or cost > p.penalty:
                ok = False
                break
            # returning to a visited state without learning anything is wasted travel
            useful = [(e, v) for e, v in moves
                      if v == self.goal or (v, revision) not in seen
                      or any(known[x] == UNKNOWN for x in self._incident[v])]
            moves = useful or moves
            cands = []
            for e, v in moves:
                act = node.actions.get(v)
                d = self._lengths[e]
                if act is None:
                    cands.append(Candidate(v, d, 0, 0.0, h[v]))
                else:
                    cands.append(Candidate(v, d, act.visits, act.mean, h[v]))
            v = uct_select(node.visits, cands, p.exploration)
            e = next(e for e, w in moves if w == v)
            act = node.actions.get(v)
            if act is None:
                act = node.actions[v] = _Action()
            d = self._lengths[e]
            trail.append((node, act, cost, d))
            cost += d
            u = v
            walked.append(u)
            sig = []
            for e2 in self._incident[u]:
                if known[e2] == UNKNOWN:
                    known[e2] = bits[e2]
                    sig.append((e2, bits[e2]))
            sig = tuple(sig)
            if sig:
                revision += 1
            seen.add((u, revision))
            nxt = act.outcomes.get(sig)
            if nxt is None:
                nxt = act.outcomes[sig] = _Node(u)
            nxt.arrivals += 1
            node = nxt
            steps += 1
        total = cost if ok else p.penalty
        for parent, act, before, d in trail:
            _record(parent, total - before if ok else p.penalty)
            _record(act, total - before - d if ok else p.penalty)
        if not trail:
            _record(self.root, total)
        self.walks.append((tuple(walked), total, ok))
        return total

    @property
    def root_action_visits(self) -> dict[int, int]:
        return {v: a.visits for v, a in self.root.actions.items()}


def rollout(tree: RolloutTree, config) -> float:
    return tree.rollout(config)


def _sample_bits(belief: BeliefState, known: ObservationSet, rng: np.random.Generator) -> np.ndarray:
    bits = (rng.random(belief.n_edges) < belief.p_free).astype(np.int8)
    for e, s in known.items():
        bits[e] = s
    return bits


def _sample_solvable(m: TopologicalMap, belief: BeliefState, known: ObservationSet,
                     node: int, goal: int, seed: list[int], tries: int = 20) -> np.ndarray:
    """Sample a configuration, redrawing ones where the goal is cut off.

    Such worlds punish every move alike and only add noise; after ``tries``
    draws the last one is kept.
    """
    rng = np.random.default_rng(seed)
    for _ in range(tries):
        bits = _sample_bits(belief, known, rng)
        if reachable(m, node, goal, bits.astype(bool)):
            break
    return bits


def sample_rollout_config(belief: BeliefState, known: ObservationSet, seed, index: int = 0
                          ) -> EnvConfiguration:
    """Draw unobserved edges independently from their marginals; observed ones fixed."""
    rng = np.random.default_rng(_seed_list(seed) + [index])
    return EnvConfiguration(index, tuple(int(b) for b in _sample_bits(belief, known, rng)))


def _seed_list(seed) -> list[int]:
    if isinstance(seed, (int, np.integer)):
        return [int(seed)]
    return [int(s) for s in seed]


def path_info_gain(model: FactorGraphModel, path_edges: Sequence[int], unobserved) -> float:
    """Sum over unobserved edges of the largest pairwise MI with any path edge.

    The MI of an edge with itself is not counted.
    """
    path_edges = list(path_edges)
    if not path_edges:
        raise ValueError("path_info_gain needs a non-empty edge set")
    unobserved = sorted(unobserved)
    if not unobserved:
        return 0.0
    mi = model.mi_matrix()[np.ix_(path_edges, unobserved)]  # diagonal of mi is zero
    return float(mi.max(axis=0).sum())


@dataclass
class PlanDecision:
    path: Path | None
    expected_length: float
    info_gain: float
    cost: float
    failed: bool = False
    n_candidates: int = 0
    root_visits: dict[int, int] = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "path": list(self.path.nodes) if self.path is not None else None,
            "expected_length": self.expected_length,
            "info_gain": self.info_gain,
            "cost": self.cost,
            "failed": self.failed,
        }


def backed_up_values(tree: RolloutTree) -> tuple[dict[int, float], dict[int, tuple[int, ...]]]:
    """Bellman backup over the sampled tree, per root move.

    Outcomes of a move are averaged by how often rollouts reached them;
    each decision node takes its best tried move. Returns the value
    (``dist`` plus expected cost-to-go) of every root move and its principal
    walk: best moves, following the most frequent outcome each time.
    """
    m, goal, penalty = tree.map, tree.goal, tree.params.penalty

    def q(node: _Node, v: int, act: _Action) -> float:
        d = float(m.lengths[m.edge_between(node.vertex, v)])
        total = sum(o.arrivals for o in act.outcomes.values())
        return d + sum(o.arrivals * value[id(o)] for o in act.outcomes.values()) / total

    # children always follow their parent in this order, so reverse it
    order, stack = [], [tree.root]
    while stack:
        node = stack.pop()
        order.append(node)
        for act in node.actions.values():
            stack.extend(act.outcomes.values())
    value: dict[int, float] = {}
    for node in reversed(order):
        if node.vertex == goal:
            value[id(node)] = 0.0
        elif not node.actions:
            value[id(node)] = penalty
        else:
            value[id(node)] = min(q(node, v, a) for v, a in node.actions.items())

    def likeliest(act: _Action) -> _Node:
        return max(act.outcomes.values(), key=lambda o: o.arrivals)

    values, walks = {}, {}
    for v, act in sorted(tree.root.actions.items()):
        values[v] = q(tree.root, v, act)
        walk = [tree.root.vertex, v]
        node = likeliest(act)
        while node.vertex != goal and node.actions and len(walk) <= tree.params.max_steps:
            w = min(node.actions, key=lambda w: (q(node, w, node.actions[w]), w))
            walk.append(w)
            node = likeliest(node.actions[w])
        walks[v] = tuple(walk)
    return values, walks


def root_candidates(tree: RolloutTree) -> list[tuple[tuple[int, ...], float]]:
    """One candidate per first move that some rollout completed: (walk, value)."""
    done = {walk[1] for walk, _, ok in tree.walks if ok and len(walk) > 1}
    values, walks = backed_up_values(tree)
    return [(walks[v], values[v]) for v in sorted(values) if v in done]


def score_candidates(lengths, gains, weight: float, zeta: float) -> np.ndarray:
    """Exploration-adjusted cost ``length - weight * zeta * gain``."""
    return np.asarray(lengths, dtype=float) - weight * zeta * np.asarray(gains, dtype=float)


def exploration_weight(params: PlannerParams, runs_so_far: int) -> float:
    w = params.gamma ** runs_so_far
    return 0.0 if w < params.min_exploration_weight else w


def plan_ours(
    m: TopologicalMap,
    model: FactorGraphModel | None,
    belief: BeliefState,
    known: ObservationSet,
    node: int,
    goal: int,
    runs_so_far: int,
    params: PlannerParams = PlannerParams(),
    seed=0,
    info_gain: bool = True,
) -> PlanDecision:
    """Rollout planner with the decaying information-gain bonus.

    With ``info_gain=False`` (or a zero exploration weight) this is plain
    CTP-UCT: the candidate with the lowest backed-up distance.

    Only the first move is meant to be executed. Past it the returned path
    is a sampled walk; thinly sampled branches can make it wander.
    """
    p = params.resolve(m)
    state = RolloutState.from_observations(m, node, known)
    if node == goal:
        return PlanDecision(m.path_from_nodes([node]), 0.0, 0.0, 0.0)
    tree = RolloutTree(m, state, goal, p)
    base = _seed_list(seed)
    for k in range(p.rollouts):
        tree.rollout(_sample_solvable(m, belief, known, node, goal, base + [k]))

    reps = root_candidates(tree)
    if not reps:
        fallback = plan_spo(m, known, node, goal)
        length = fallback.length if fallback is not None else math.inf
        return PlanDecision(fallback, length, 0.0, length, failed=True,
                            root_visits=tree.root_action_visits)
    paths = [m.path_from_nodes(w) for w, _ in reps]
    lengths = [mean for _, mean in reps]

    weight = exploration_weight(p, runs_so_far) if info_gain else 0.0
    unobserved = [e for e in range(m.n_edges) if e not in known]
    if weight > 0 and model is not None and unobserved:
        # only edges the robot has yet to see can tell it anything new
        fresh = [[e for e in path.edges if e not in known] for path in paths]
        gains = [path_info_gain(model, f, unobserved) if f else 0.0 for f in fresh]
    else:
        gains = [0.0] * len(paths)
    costs = score_candidates(lengths, gains, weight, p.zeta)
    best = min(range(len(paths)), key=lambda k: (costs[k], lengths[k], paths[k].nodes))
    return PlanDecision(paths[best], lengths[best], float(gains[best]), float(costs[best]),
                        n_candidates=len(paths), root_visits=tree.root_action_visits)


def plan_ctp_uct(m, belief, known, node, goal, params=PlannerParams(), seed=0) -> PlanDecision:
    return plan_ours(m, None, belief, known, node, goal, 0, params, seed, info_gain=False)


def _optimistic_mask(m: TopologicalMap, known: ObservationSet) -> np.ndarray:
    mask = np.ones(m.n_edges, dtype=bool)
    for e, s in known.items():
        if s == 0:
            mask[e] = False
    return mask


def plan_spo(m: TopologicalMap, known: ObservationSet, node: int, goal: int) -> Path | None:
    """Shortest path assuming every edge not seen blocked is free."""
    return shortest_path(m, node, goal, _optimistic_mask(m, known))


def plan_spd(
    m: TopologicalMap, model: FactorGraphModel, known: ObservationSet, node: int, goal: int
) -> tuple[Path | None, np.ndarray, bool]:
    """Shortest path on the most likely configuration.

    Returns ``(path, determinized_bits, fell_back)``; when the goal is cut
    off in the determinized world the SPO path is returned instead.
    """
    bits = model.map_configuration(known)
    path = shortest_path(m, node, goal, bits.astype(bool))
    if path is None:
        return plan_spo(m, known, node, goal), bits, True
    return path, bits, False


def plan_optimal(m: TopologicalMap, truth, node: int, goal: int) -> Path | None:
    bits = truth.array if isinstance(truth, EnvConfiguration) else np.asarray(truth)
    return shortest_path(m, node, goal, bits.astype(bool))
