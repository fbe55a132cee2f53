"""Loopy belief propagation on binary pairwise factor graphs.

Variables take values 0 (blocked) and 1 (free). Factors are a positive
2-vector per variable and positive 2x2 tables between variable pairs.
Observed variables are clamped: their outgoing messages are the indicator
of the observed value and their own unary factor is ignored.

The engine runs on a batch of clamp patterns at once (same factors,
different evidence); the single-graph API is the batch-of-one case.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MSG_FLOOR = 1e-12
SCHEDULES = ("flooding", "sequential")


class InferenceError(ValueError):
    pass


@dataclass(frozen=True)
class BpSettings:
    max_iter: int = 200
    tol: float = 1e-6
    damping: float = 0.5
    schedule: str = "flooding"
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1:
            raise InferenceError("max_iter must be >= 1")
        if not self.tol > 0:
            raise InferenceError("tol must be positive")
        if not 0 <= self.damping < 1:
            raise InferenceError("damping must lie in [0, 1)")
        if self.schedule not in SCHEDULES:
            raise InferenceError(f"unknown schedule {self.schedule!r}")


@dataclass
class BpResult:
    marginals: np.ndarray  # (n, 2), rows sum to one
    converged: bool
    iterations: int
    max_delta: float

    @property
    def p_free(self) -> np.ndarray:
        return self.marginals[:, 1]


@dataclass
class FactorGraph:
    """Binary pairwise factor graph with optional clamped variables."""

    n_vars: int
    unary: np.ndarray = None
    pairs: list[tuple[int, int]] = field(default_factory=list)
    tables: list[np.ndarray] = field(default_factory=list)
    clamps: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.unary is None:
            self.unary = np.ones((self.n_vars, 2))
        self.unary = np.array(self.unary, dtype=float)
        if self.unary.shape != (self.n_vars, 2) or np.any(self.unary <= 0):
            raise InferenceError("unary factors must be a positive (n, 2) array")
        self._pair_ids = {}
        pairs, tables = self.pairs, self.tables
        self.pairs, self.tables = [], []
        for (i, j), t in zip(pairs, tables):
            self.add_pair(i, j, t)

    def set_unary(self, i: int, table) -> None:
        table = np.asarray(table, dtype=float)
        if table.shape != (2,) or np.any(table <= 0):
            raise InferenceError(f"unary factor for {i} must be a positive 2-vector")
        self.unary[i] = table

    def add_pair(self, i: int, j: int, table) -> None:
        table = np.asarray(table, dtype=float)
        if i == j:
            raise InferenceError(f"pairwise factor must join two distinct variables, got {i}")
        if not (0 <= i < self.n_vars and 0 <= j < self.n_vars):
            raise InferenceError(f"pairwise factor ({i}, {j}) out of range")
        if table.shape != (2, 2) or np.any(table <= 0):
            raise InferenceError(f"pairwise factor ({i}, {j}) must be a positive 2x2 table")
        key = (min(i, j), max(i, j))
        if key in self._pair_ids:
            raise InferenceError(f"duplicate pairwise factor between {i} and {j}")
        if i > j:
            i, j, table = j, i, table.T
        self._pair_ids[key] = len(self.pairs)
        self.pairs.append((i, j))
        self.tables.append(table)

    def clamp(self, var: int, value: int) -> "FactorGraph":
        if not 0 <= var < self.n_vars:
            raise InferenceError(f"cannot clamp unknown variable {var}")
        if value not in (0, 1):
            raise InferenceError(f"clamp value must be 0 or 1, got {value}")
        old = self.clamps.get(var)
        if old is not None and old != value:
            raise InferenceError(f"variable {var} already clamped to {old}, cannot clamp to {value}")
        self.clamps[var] = int(value)
        return self

    def clamp_vector(self) -> np.ndarray:
        out = np.full(self.n_vars, -1, dtype=np.int8)
        for v, s in self.clamps.items():
            out[v] = s
        return out

    def pair_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.pairs:
            return np.zeros((0, 2), dtype=np.int64), np.zeros((0, 2, 2))
        return np.array(self.pairs, dtype=np.int64), np.stack(self.tables)

    def to_document(self) -> dict:
        """Plain-data dump for troubleshooting."""
        return {
            "variables": self.n_vars,
            "unary": self.unary.tolist(),
            "pairs": [
                {"i": i, "j": j, "table": t.tolist()} for (i, j), t in zip(self.pairs, self.tables)
            ],
            "clamps": {str(k): v for k, v in sorted(self.clamps.items())},
        }


def clamp(graph: FactorGraph, var: int, value: int) -> FactorGraph:
    return graph.clamp(var, value)


def _normalize(x: np.ndarray) -> np.ndarray:
    return x / x.sum(axis=-1, keepdims=True)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -700.0, 700.0)))


class _Engine:
    """Shared state for sum-product and max-product message passing.

    A binary message is normalized, so only its value at state 1 is stored.
    Messages are kept pair-major, shape (n_pairs, batch); variable-side
    products become sums of log-odds, one matrix product per direction.
    """

    def __init__(self, unary, pair_idx, tables, clamps, settings: BpSettings, mode: str):
        self.n = unary.shape[0]
        self.settings = settings
        self.mode = mode
        clamps = np.atleast_2d(np.asarray(clamps, dtype=np.int8))
        self.clamps = clamps.T  # (n, batch)
        self.batch = clamps.shape[0]
        phi = _normalize(np.asarray(unary, dtype=float))
        self.phi_odds = np.log(phi[:, 1] / phi[:, 0])[:, None]
        self.pi = pair_idx[:, 0]
        self.pj = pair_idx[:, 1]
        t = np.asarray(tables, dtype=float).reshape(-1, 2, 2)
        self.t = {k: t[:, k[0], k[1], None] for k in ((0, 0), (0, 1), (1, 0), (1, 1))}
        self.n_pairs = len(self.pi)
        self.inc_i = np.zeros((self.n, self.n_pairs))
        self.inc_j = np.zeros((self.n, self.n_pairs))
        self.inc_i[self.pi, np.arange(self.n_pairs)] = 1.0
        self.inc_j[self.pj, np.arange(self.n_pairs)] = 1.0
        shape = (self.n_pairs, self.batch)
        self.to_i = np.full(shape, 0.5)  # factor -> first variable
        self.to_j = np.full(shape, 0.5)  # factor -> second variable
        self.odds_i = np.zeros(shape)
        self.odds_j = np.zeros(shape)
        clamped = self.clamps >= 0
        self.clamped_i = clamped[self.pi]
        self.clamped_j = clamped[self.pj]
        value = self.clamps.astype(float)
        self.value_i = value[self.pi]
        self.value_j = value[self.pj]

    def belief_odds(self) -> np.ndarray:
        return self.phi_odds + self.inc_i @ self.odds_i + self.inc_j @ self.odds_j

    def _var_to_factor(self, belief_side, odds_in, value, clamped):
        return np.where(clamped, value, _sigmoid(belief_side - odds_in))

    def _factor_to_var(self, sl, q, towards_i: bool):
        t = self.t
        if towards_i:
            a0, a1, b0, b1 = t[0, 0][sl], t[0, 1][sl], t[1, 0][sl], t[1, 1][sl]
        else:
            a0, a1, b0, b1 = t[0, 0][sl], t[1, 0][sl], t[0, 1][sl], t[1, 1][sl]
        r = 1.0 - q
        # out(x) combines table[x, y] * incoming(y) over y
        if self.mode == "sum":
            out0 = a0 * r + a1 * q
            out1 = b0 * r + b1 * q
        else:
            out0 = np.maximum(a0 * r, a1 * q)
            out1 = np.maximum(b0 * r, b1 * q)
        return np.clip(out1 / (out0 + out1), MSG_FLOOR, 1.0 - MSG_FLOOR)

    def _commit(self, sl, new_i, new_j):
        # convergence is judged on the undamped residual
        delta = np.maximum(
            np.abs(new_i - self.to_i[sl]).max(axis=0, initial=0.0),
            np.abs(new_j - self.to_j[sl]).max(axis=0, initial=0.0),
        )
        lam = self.settings.damping
        if lam > 0:
            new_i = (1 - lam) * new_i + lam * self.to_i[sl]
            new_j = (1 - lam) * new_j + lam * self.to_j[sl]
        self.to_i[sl] = new_i
        self.to_j[sl] = new_j
        self.odds_i[sl] = np.log(new_i / (1.0 - new_i))
        self.odds_j[sl] = np.log(new_j / (1.0 - new_j))
        return delta

    def sweep_flooding(self) -> np.ndarray:
        b = self.belief_odds()
        q_i = self._var_to_factor(b[self.pi], self.odds_i, self.value_i, self.clamped_i)
        q_j = self._var_to_factor(b[self.pj], self.odds_j, self.value_j, self.clamped_j)
        sl = slice(None)
        new_i = self._factor_to_var(sl, q_j, True)
        new_j = self._factor_to_var(sl, q_i, False)
        return self._commit(sl, new_i, new_j)

    def sweep_sequential(self, rng: np.random.Generator) -> np.ndarray:
        delta = np.zeros(self.batch)
        b = self.belief_odds()
        for p in rng.permutation(self.n_pairs):
            sl = slice(p, p + 1)
            i, j = self.pi[p], self.pj[p]
            q_i = self._var_to_factor(b[i], self.odds_i[sl], self.value_i[sl], self.clamped_i[sl])
            q_j = self._var_to_factor(b[j], self.odds_j[sl], self.value_j[sl], self.clamped_j[sl])
            new_i = self._factor_to_var(sl, q_j, True)
            new_j = self._factor_to_var(sl, q_i, False)
            old_i, old_j = self.odds_i[p].copy(), self.odds_j[p].copy()
            delta = np.maximum(delta, self._commit(sl, new_i, new_j))
            b[i] += self.odds_i[p] - old_i
            b[j] += self.odds_j[p] - old_j
        return delta

    def run(self):
        s = self.settings
        rng = np.random.default_rng(s.seed)
        delta = np.zeros(self.batch)
        iters = 0
        if self.n_pairs == 0:
            return self.beliefs(), np.ones(self.batch, dtype=bool), 0, delta
        for iters in range(1, s.max_iter + 1):
            if s.schedule == "flooding":
                delta = self.sweep_flooding()
            else:
                delta = self.sweep_sequential(rng)
            if np.all(delta < s.tol):
                break
        return self.beliefs(), delta < s.tol, iters, delta

    def beliefs(self) -> np.ndarray:
        """Normalized beliefs, shape (batch, n, 2)."""
        p1 = _sigmoid(self.belief_odds())
        p1 = np.where(self.clamps >= 0, self.clamps, p1)
        return np.stack([1.0 - p1, p1], axis=-1).transpose(1, 0, 2)


def run_bp_batch(
    unary: np.ndarray,
    pair_idx: np.ndarray,
    tables: np.ndarray,
    clamps: np.ndarray,
    settings: BpSettings = BpSettings(),
    mode: str = "sum",
):
    """Batched message passing.

    ``clamps`` is an int array (batch, n) holding -1 for free variables and
    0/1 for clamped ones. Returns ``(beliefs, converged, iterations, delta)``
    with beliefs of shape (batch, n, 2).
    """
    engine = _Engine(unary, np.asarray(pair_idx, dtype=np.int64).reshape(-1, 2), tables,
                     clamps, settings, mode)
    return engine.run()


def run_bp(graph: FactorGraph, settings: BpSettings = BpSettings()) -> BpResult:
    """Sum-product loopy BP; non-convergence is flagged, never raised."""
    idx, tabs = graph.pair_arrays()
    beliefs, conv, iters, delta = run_bp_batch(
        graph.unary, idx, tabs, graph.clamp_vector()[None], settings, "sum"
    )
    return BpResult(beliefs[0], bool(conv[0]), iters, float(delta[0]))


def argmax_free_ties(beliefs: np.ndarray) -> np.ndarray:
    """Per-variable argmax of (..., 2) beliefs with ties resolved to 1 (free)."""
    return (beliefs[..., 1] >= beliefs[..., 0] * (1 - 1e-12)).astype(np.int8)


def map_configuration(graph: FactorGraph, settings: BpSettings = BpSettings()) -> np.ndarray:
    """Max-product decoding; clamped variables keep their values."""
    idx, tabs = graph.pair_arrays()
    beliefs, _, _, _ = run_bp_batch(
        graph.unary, idx, tabs, graph.clamp_vector()[None], settings, "max"
    )
    return argmax_free_ties(beliefs[0])
