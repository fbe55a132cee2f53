"""Traversability models learned from (partial) edge observations.

Three models share the ``update`` / ``predict`` surface:

* ``FactorGraphModel``: unary and pairwise pseudocount tables turned into
  factors ``phi_i = p(e_i)`` and ``psi_ij = p(e_i, e_j) / (p(e_i) p(e_j))``;
  prediction clamps the observed edges and runs loopy BP.
* ``IndependentModel``: per-edge Beta-Bernoulli counts only.
* ``FullJointModel``: one count per full configuration; exact conditioning.
  Only feasible for small maps and used as an oracle.

State 1 means free/traversable, 0 means blocked.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

from .inference import BpSettings, FactorGraph, argmax_free_ties, run_bp_batch

COUNTS_FORMAT = "patternnav-counts"
COUNTS_VERSION = 1
MAX_JOINT_EDGES = 20


class ModelError(ValueError):
    pass


class ObservationSet:
    """Partial assignment edge id -> state accumulated during one run."""

    def __init__(self, states: Mapping[int, int] | None = None, run: int = 0):
        self.run = run
        self._states: dict[int, int] = {}
        for e, s in (states or {}).items():
            self.observe(e, s)

    @classmethod
    def from_bits(cls, bits, edges: Iterable[int] | None = None, run: int = 0) -> "ObservationSet":
        bits = np.asarray(bits)
        ids = range(len(bits)) if edges is None else edges
        return cls({int(e): int(bits[e]) for e in ids}, run=run)

    def observe(self, e: int, state: int) -> bool:
        """Record an observation; returns True when the edge was new."""
        e, state = int(e), int(state)
        if state not in (0, 1):
            raise ModelError(f"edge {e}: state must be 0 or 1, got {state}")
        old = self._states.get(e)
        if old is None:
            self._states[e] = state
            return True
        if old != state:
            raise ModelError(f"edge {e} observed as {old} and {state} in the same run")
        return False

    def __contains__(self, e) -> bool:
        return e in self._states

    def __len__(self) -> int:
        return len(self._states)

    def __iter__(self) -> Iterator[int]:
        return iter(self._states)

    def __getitem__(self, e: int) -> int:
        return self._states[e]

    def __eq__(self, other) -> bool:
        return isinstance(other, ObservationSet) and self._states == other._states

    def get(self, e: int, default=None):
        return self._states.get(e, default)

    def items(self):
        return self._states.items()

    def copy(self) -> "ObservationSet":
        return ObservationSet(dict(self._states), run=self.run)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        ids = np.array(sorted(self._states), dtype=np.int64)
        vals = np.array([self._states[e] for e in ids.tolist()], dtype=np.int64)
        return ids, vals

    def clamp_vector(self, n_edges: int) -> np.ndarray:
        out = np.full(n_edges, -1, dtype=np.int8)
        for e, s in self._states.items():
            if not 0 <= e < n_edges:
                raise ModelError(f"observation of unknown edge {e}")
            out[e] = s
        return out

    def __repr__(self) -> str:
        return f"ObservationSet({dict(sorted(self._states.items()))}, run={self.run})"


@dataclass
class BeliefState:
    """Per-edge probability of being free given an observation set."""

    p_free: np.ndarray
    observed: np.ndarray
    converged: bool = True
    iterations: int = 0
    max_delta: float = 0.0

    def marginal(self, e: int) -> float:
        return float(self.p_free[e])

    @property
    def n_edges(self) -> int:
        return len(self.p_free)


def _check_obs(obs: ObservationSet, n: int) -> tuple[np.ndarray, np.ndarray]:
    ids, vals = obs.arrays()
    if len(ids) and (ids[0] < 0 or ids[-1] >= n):
        raise ModelError(f"observation references edges outside 0..{n - 1}")
    return ids, vals


def _exact_belief(p_free: np.ndarray, clamps: np.ndarray, **diag) -> BeliefState:
    observed = clamps >= 0
    p = np.where(observed, clamps.astype(float), p_free)
    return BeliefState(p, observed, **diag)


class CountStore:
    """Observation counters for unary and pairwise edge outcomes.

    Raw integer counts are stored; the uniform prior pseudocounts are added
    on read so that checkpoints round-trip exactly.
    """

    def __init__(self, n_edges: int, unary_prior: float = 1.0, pair_prior: float = 0.25):
        if n_edges < 1:
            raise ModelError("need at least one edge")
        if not (unary_prior > 0 and pair_prior > 0):
            raise ModelError("prior pseudocounts must be positive")
        self.n_edges = n_edges
        self.unary_prior = float(unary_prior)
        self.pair_prior = float(pair_prior)
        self.unary = np.zeros((n_edges, 2), dtype=np.int64)
        self.pair = np.zeros((n_edges, n_edges, 2, 2), dtype=np.int64)

    def add(self, ids: np.ndarray, vals: np.ndarray) -> None:
        if len(ids) == 0:
            return
        self.unary[ids, vals] += 1
        ii, jj = np.meshgrid(np.arange(len(ids)), np.arange(len(ids)), indexing="ij")
        off = ii != jj
        a, b = ii[off], jj[off]
        # index pairs are distinct, so fancy-index += is safe
        self.pair[ids[a], ids[b], vals[a], vals[b]] += 1

    def smoothed_unary(self) -> np.ndarray:
        return self.unary + self.unary_prior

    def smoothed_pair(self) -> np.ndarray:
        return self.pair + self.pair_prior

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, CountStore)
            and self.n_edges == other.n_edges
            and self.unary_prior == other.unary_prior
            and self.pair_prior == other.pair_prior
            and np.array_equal(self.unary, other.unary)
            and np.array_equal(self.pair, other.pair)
        )

    def to_document(self) -> dict:
        iu, ju = np.triu_indices(self.n_edges, k=1)
        return {
            "format": COUNTS_FORMAT,
            "version": COUNTS_VERSION,
            "n_edges": self.n_edges,
            "unary_prior": self.unary_prior,
            "pair_prior": self.pair_prior,
            "unary": self.unary.tolist(),
            # pairs (i < j) in row-major order, cells (0,0) (0,1) (1,0) (1,1)
            "pair": self.pair[iu, ju].reshape(-1, 4).tolist(),
        }

    @classmethod
    def from_document(cls, doc: dict) -> "CountStore":
        if doc.get("format") != COUNTS_FORMAT:
            raise ModelError("not a count-store document")
        if doc.get("version") != COUNTS_VERSION:
            raise ModelError(f"unsupported count-store version {doc.get('version')}")
        n = int(doc["n_edges"])
        store = cls(n, doc["unary_prior"], doc["pair_prior"])
        store.unary[:] = np.asarray(doc["unary"], dtype=np.int64).reshape(n, 2)
        iu, ju = np.triu_indices(n, k=1)
        cells = np.asarray(doc["pair"], dtype=np.int64).reshape(-1, 2, 2)
        if len(cells) != len(iu):
            raise ModelError("pair table has the wrong number of entries")
        store.pair[iu, ju] = cells
        store.pair[ju, iu] = cells.transpose(0, 2, 1)
        return store


class FactorGraphModel:
    """Pairwise factor-graph traversability model with loopy BP prediction.

    ``structure`` restricts the pairwise factors to the given edge pairs
    (all others behave as psi = 1). ``mi_threshold`` drops pairwise factors
    whose mutual information falls below it; 0 keeps the dense graph.
    """

    kind = "factor-graph"

    def __init__(
        self,
        n_edges: int,
        unary_prior: float = 1.0,
        pair_prior: float = 0.25,
        bp_settings: BpSettings = BpSettings(),
        mi_threshold: float = 0.0,
        structure: Iterable[tuple[int, int]] | None = None,
    ):
        self.counts = CountStore(n_edges, unary_prior, pair_prior)
        self.bp_settings = bp_settings
        self.mi_threshold = float(mi_threshold)
        self.structure = None if structure is None else sorted(
            {(min(i, j), max(i, j)) for i, j in structure}
        )
        self.revision = 0
        self._cache: dict = {}

    @property
    def n_edges(self) -> int:
        return self.counts.n_edges

    def copy(self) -> "FactorGraphModel":
        return copy.deepcopy(self)

    def update(self, obs: ObservationSet) -> None:
        ids, vals = _check_obs(obs, self.n_edges)
        if len(ids) == 0:
            return
        self.counts.add(ids, vals)
        self.revision += 1

    def _cached(self, key, fn):
        hit = self._cache.get(key)
        if hit is None or hit[0] != self.revision:
            hit = (self.revision, fn())
            self._cache[key] = hit
        return hit[1]

    def unary_probs(self) -> np.ndarray:
        def compute():
            c = self.counts.smoothed_unary()
            return c / c.sum(axis=1, keepdims=True)

        return self._cached("unary", compute)

    def pair_joints(self) -> np.ndarray:
        def compute():
            c = self.counts.smoothed_pair()
            return c / c.sum(axis=(2, 3), keepdims=True)

        return self._cached("pair", compute)

    def factors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(phi, pairs, psi)``.

        ``phi`` is (n, 2), ``pairs`` lists every unordered edge pair (i < j)
        and ``psi`` holds the matching (len(pairs), 2, 2) ratio tables: each
        smoothed pair joint over the product of its own marginals.
        """

        def compute():
            p = self.unary_probs()
            iu, ju = np.triu_indices(self.n_edges, k=1)
            pairs = np.stack([iu, ju], axis=1)
            joint = self.pair_joints()[iu, ju]
            # divide by the table's own marginals: a pair seen together only
            # rarely stays near independence instead of fighting phi
            psi = joint / (joint.sum(axis=2)[:, :, None] * joint.sum(axis=1)[:, None, :])
            return p, pairs, psi

        return self._cached("factors", compute)

    def mi_matrix(self) -> np.ndarray:
        """Pairwise mutual information in bits; zero diagonal.

        Uses each smoothed pair table with its own marginals, so the value is
        a proper mutual information bounded by either edge's entropy.
        """

        def compute():
            joint = self.pair_joints()
            prod = joint.sum(axis=3)[..., :, None] * joint.sum(axis=2)[..., None, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                terms = np.where(joint > 0, joint * np.log2(joint / prod), 0.0)
            mi = np.maximum(terms.sum(axis=(2, 3)), 0.0)
            np.fill_diagonal(mi, 0.0)
            return mi

        return self._cached("mi", compute)

    def pairwise_mi(self, i: int, j: int) -> float:
        if i == j:
            raise ModelError("pairwise_mi needs two distinct edges")
        return float(self.mi_matrix()[i, j])

    def _active_factors(self):
        def compute():
            phi, pairs, psi = self.factors()
            keep = np.ones(len(pairs), dtype=bool)
            if self.structure is not None:
                allowed = set(self.structure)
                keep &= np.array([tuple(p) in allowed for p in pairs.tolist()], dtype=bool)
            if self.mi_threshold > 0:
                mi = self.mi_matrix()
                keep &= mi[pairs[:, 0], pairs[:, 1]] >= self.mi_threshold
            return phi, pairs[keep], psi[keep]

        return self._cached(("active", self.mi_threshold), compute)

    def factor_graph(self, obs: ObservationSet | None = None) -> FactorGraph:
        phi, pairs, psi = self._active_factors()
        g = FactorGraph(self.n_edges, phi.copy(), [tuple(p) for p in pairs.tolist()], list(psi))
        for e, s in (obs.items() if obs is not None else ()):
            g.clamp(e, s)
        return g

    def predict_batch(self, clamps: np.ndarray):
        """Marginals for a (batch, n) clamp array; returns (p_free, converged, iters, delta)."""
        phi, pairs, psi = self._active_factors()
        beliefs, conv, iters, delta = run_bp_batch(phi, pairs, psi, clamps, self.bp_settings)
        return beliefs[..., 1], conv, iters, delta

    def predict(self, obs: ObservationSet) -> BeliefState:
        _check_obs(obs, self.n_edges)
        clamps = obs.clamp_vector(self.n_edges)
        if np.all(clamps >= 0):
            return _exact_belief(clamps.astype(float), clamps)
        p, conv, iters, delta = self.predict_batch(clamps[None])
        return _exact_belief(
            p[0], clamps, converged=bool(conv[0]), iterations=iters, max_delta=float(delta[0])
        )

    def map_configuration(self, obs: ObservationSet) -> np.ndarray:
        """Most likely full configuration by max-product, observed edges kept."""
        clamps = obs.clamp_vector(self.n_edges)
        phi, pairs, psi = self._active_factors()
        beliefs, _, _, _ = run_bp_batch(phi, pairs, psi, clamps[None], self.bp_settings, "max")
        return argmax_free_ties(beliefs[0])

    def to_document(self) -> dict:
        return self.counts.to_document()

    @classmethod
    def from_document(cls, doc: dict, **kwargs) -> "FactorGraphModel":
        counts = CountStore.from_document(doc)
        m = cls(counts.n_edges, counts.unary_prior, counts.pair_prior, **kwargs)
        m.counts = counts
        m.revision = int(counts.unary.sum())
        return m

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_document(), fh)

    @classmethod
    def load(cls, path: str | os.PathLike, **kwargs) -> "FactorGraphModel":
        with open(path) as fh:
            return cls.from_document(json.load(fh), **kwargs)


class IndependentModel:
    """Each edge free with its own smoothed frequency; other observations ignored."""

    kind = "independent"

    def __init__(self, n_edges: int, prior: float = 1.0):
        if not prior > 0:
            raise ModelError("prior must be positive")
        self.n_edges = n_edges
        self.prior = float(prior)
        self.counts = np.zeros((n_edges, 2), dtype=np.int64)

    def update(self, obs: ObservationSet) -> None:
        ids, vals = _check_obs(obs, self.n_edges)
        self.counts[ids, vals] += 1

    def p_free(self) -> np.ndarray:
        c = self.counts + self.prior
        return c[:, 1] / c.sum(axis=1)

    def predict_batch(self, clamps: np.ndarray):
        clamps = np.atleast_2d(clamps)
        p = np.broadcast_to(self.p_free(), clamps.shape).copy()
        return p, np.ones(len(clamps), dtype=bool), 0, np.zeros(len(clamps))

    def predict(self, obs: ObservationSet) -> BeliefState:
        _check_obs(obs, self.n_edges)
        return _exact_belief(self.p_free(), obs.clamp_vector(self.n_edges))


def configuration_table(n: int) -> np.ndarray:
    """All 2**n binary configurations; row k has bit e equal to (k >> e) & 1."""
    k = np.arange(2**n, dtype=np.int64)
    return ((k[:, None] >> np.arange(n)) & 1).astype(np.int8)


class FullJointModel:
    """Counts over complete configurations with exact conditioning.

    ``cell_prior`` is the pseudocount per configuration. The default equals
    the pairwise cell prior of the factor graph; much smaller values let a
    handful of samples dominate the 2**n table and hurt small-sample RMS.
    """

    kind = "full-joint"

    def __init__(self, n_edges: int, cell_prior: float | None = None):
        if n_edges > MAX_JOINT_EDGES:
            raise ModelError(
                f"full joint table over {n_edges} edges is too large (limit {MAX_JOINT_EDGES})"
            )
        self.n_edges = n_edges
        self.cell_prior = DEFAULT_CELL_PRIOR if cell_prior is None else float(cell_prior)
        if not self.cell_prior > 0:
            raise ModelError("cell prior must be positive")
        self.counts = np.zeros(2**n_edges, dtype=np.int64)
        self._weights = 1 << np.arange(n_edges, dtype=np.int64)
        self._table: np.ndarray | None = None
        self._fixed: np.ndarray | None = None

    @property
    def n_cells(self) -> int:
        return len(self.counts)

    @classmethod
    def from_distribution(cls, probs: np.ndarray) -> "FullJointModel":
        """Oracle model whose conditioning uses the given normalized table."""
        probs = np.asarray(probs, dtype=float)
        n = int(np.log2(len(probs)))
        m = cls(n)
        m._fixed = probs / probs.sum()
        return m

    def index_of(self, bits) -> int:
        return int(np.dot(np.asarray(bits, dtype=np.int64), self._weights))

    def update(self, obs: ObservationSet) -> None:
        if len(obs) != self.n_edges:
            raise ModelError("full joint model needs fully observed configurations")
        ids, vals = obs.arrays()
        self.counts[int(np.dot(vals, self._weights[ids]))] += 1

    def update_bits(self, bits: np.ndarray) -> None:
        """Add many complete configurations given as a (k, n) bit array."""
        idx = np.asarray(bits, dtype=np.int64) @ self._weights
        np.add.at(self.counts, idx, 1)

    def probabilities(self) -> np.ndarray:
        if self._fixed is not None:
            return self._fixed
        c = self.counts + self.cell_prior
        return c / c.sum()

    def _table_bits(self) -> np.ndarray:
        if self._table is None:
            self._table = configuration_table(self.n_edges)
        return self._table

    def predict_batch(self, clamps: np.ndarray, chunk: int = 512):
        clamps = np.atleast_2d(np.asarray(clamps, dtype=np.int64))
        probs = self.probabilities()
        bits = self._table_bits().astype(float)
        cells = np.arange(self.n_cells, dtype=np.int64)
        observed = clamps >= 0
        mask = (observed * self._weights).sum(axis=1)
        value = (np.where(observed, clamps, 0) * self._weights).sum(axis=1)
        out = np.empty(clamps.shape)
        for lo in range(0, len(clamps), chunk):
            hi = lo + chunk
            consistent = (cells[None, :] & mask[lo:hi, None]) == value[lo:hi, None]
            w = consistent * probs[None, :]
            out[lo:hi] = (w @ bits) / w.sum(axis=1, keepdims=True)
        out = np.where(observed, clamps, out)
        return out, np.ones(len(clamps), dtype=bool), 0, np.zeros(len(clamps))

    def predict(self, obs: ObservationSet) -> BeliefState:
        _check_obs(obs, self.n_edges)
        clamps = obs.clamp_vector(self.n_edges)
        p, _, _, _ = self.predict_batch(clamps[None])
        return _exact_belief(p[0], clamps)


DEFAULT_CELL_PRIOR = 0.25
