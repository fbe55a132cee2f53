"""Ground-truth environment generation: template mixtures plus bit-flip noise.

Every run draws its configuration from an RNG stream derived from
``(seed, run)`` alone, so runs can be generated in any order and replayed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .topology import TopologicalMap, distances_to, reachable

PRESETS = {
    # M templates, flip noise; None = every edge independent per run
    "high-corr": {"n_templates": 3, "noise": 0.05},
    "low-corr": {"n_templates": None, "noise": 0.0},
}

_TEMPLATE_STREAM = 0
_RUN_STREAM = 1
_TASK_STREAM = 2


class EnvError(ValueError):
    pass


@dataclass(frozen=True)
class EnvConfiguration:
    run: int
    bits: tuple[int, ...]

    @property
    def array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.int8)

    @property
    def bitstring(self) -> str:
        return "".join(str(b) for b in self.bits)

    def is_free(self, e: int) -> bool:
        return self.bits[e] == 1

    def __len__(self) -> int:
        return len(self.bits)


@dataclass(frozen=True, eq=False)
class TemplateSet:
    """Mixture of M template configurations with independent flip noise.

    ``templates is None`` encodes the uncorrelated limit: each run draws every
    edge independently with probability ``free_prob``.
    """

    n_edges: int
    templates: np.ndarray | None
    noise: float
    free_prob: float
    seed: int

    def __post_init__(self):
        if not 0 <= self.noise < 0.5:
            raise EnvError(f"noise must lie in [0, 0.5), got {self.noise}")
        if self.templates is not None:
            t = np.asarray(self.templates, dtype=np.int8)
            if t.ndim != 2 or t.shape[0] < 1 or t.shape[1] != self.n_edges:
                raise EnvError("templates must be a non-empty (M, n_edges) bit array")
            t.setflags(write=False)
            object.__setattr__(self, "templates", t)

    @property
    def independent(self) -> bool:
        return self.templates is None

    @property
    def n_templates(self) -> int | None:
        return None if self.templates is None else len(self.templates)

    def edge_marginals(self) -> np.ndarray:
        """Closed-form probability of each edge being free."""
        if self.independent:
            return np.full(self.n_edges, self.free_prob)
        t = self.templates.astype(float)
        return (t * (1 - self.noise) + (1 - t) * self.noise).mean(axis=0)

    def to_document(self) -> dict:
        return {
            "n_edges": self.n_edges,
            "noise": self.noise,
            "free_prob": self.free_prob,
            "seed": self.seed,
            "templates": None
            if self.independent
            else ["".join(map(str, row)) for row in self.templates.tolist()],
        }

    @classmethod
    def from_document(cls, doc: dict) -> "TemplateSet":
        rows = doc.get("templates")
        templates = None if rows is None else np.array([[int(c) for c in r] for r in rows])
        return cls(int(doc["n_edges"]), templates, float(doc["noise"]),
                   float(doc["free_prob"]), int(doc["seed"]))


@dataclass(frozen=True)
class TaskSequence:
    tasks: tuple[tuple[int, int], ...]
    n_runs: int = 0

    def __post_init__(self):
        if not self.tasks:
            raise EnvError("task sequence is empty")
        for s, g in self.tasks:
            if s == g:
                raise EnvError(f"task ({s}, {g}) has identical start and goal")

    @property
    def cycle(self) -> int:
        return len(self.tasks)

    def task(self, run: int) -> tuple[int, int]:
        return self.tasks[run % len(self.tasks)]

    def validate(self, m: TopologicalMap) -> None:
        for s, g in self.tasks:
            for v in (s, g):
                if not 0 <= v < m.n_nodes:
                    raise EnvError(f"task ({s}, {g}) references unknown node {v}")


def _connects_something(m: TopologicalMap, bits: np.ndarray, tasks) -> bool:
    if tasks:
        return any(reachable(m, s, g, bits.astype(bool)) for s, g in tasks)
    return bool(bits.any())


def gen_templates(
    m: TopologicalMap,
    n_templates: int,
    free_prob: float = 0.5,
    noise: float = 0.05,
    seed: int = 0,
    tasks: Sequence[tuple[int, int]] | None = None,
    max_retries: int = 1000,
) -> TemplateSet:
    """Sample ``n_templates`` independent templates, edges free w.p. ``free_prob``.

    A template is resampled when it connects none of ``tasks`` (or, without
    tasks, has no free edge at all).
    """
    if n_templates < 1:
        raise EnvError("need at least one template")
    if not 0 < free_prob <= 1:
        raise EnvError(f"free_prob must lie in (0, 1], got {free_prob}")
    rng = np.random.default_rng([seed, _TEMPLATE_STREAM])
    out = []
    for k in range(n_templates):
        for _ in range(max_retries):
            bits = (rng.random(m.n_edges) < free_prob).astype(np.int8)
            if _connects_something(m, bits, tasks):
                out.append(bits)
                break
        else:
            raise EnvError(
                f"template {k}: no acceptable sample in {max_retries} tries; free_prob too low"
            )
    return TemplateSet(m.n_edges, np.stack(out), noise, free_prob, seed)


def independent_edges(n_edges: int, free_prob: float = 0.5, seed: int = 0) -> TemplateSet:
    """The uncorrelated limit of the template mixture."""
    return TemplateSet(n_edges, None, 0.0, free_prob, seed)


def from_preset(m: TopologicalMap, preset: str, free_prob: float = 0.5, seed: int = 0,
                tasks=None) -> TemplateSet:
    try:
        spec = PRESETS[preset]
    except KeyError:
        raise EnvError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}") from None
    if spec["n_templates"] is None:
        return independent_edges(m.n_edges, free_prob, seed)
    return gen_templates(m, spec["n_templates"], free_prob, spec["noise"], seed, tasks)


def _sample_bits(ts: TemplateSet, run: int) -> np.ndarray:
    rng = np.random.default_rng([ts.seed, _RUN_STREAM, run])
    if ts.independent:
        return (rng.random(ts.n_edges) < ts.free_prob).astype(np.int8)
    k = int(rng.integers(len(ts.templates)))
    flips = rng.random(ts.n_edges) < ts.noise
    return (ts.templates[k] ^ flips).astype(np.int8)


def sample_configuration(ts: TemplateSet, run: int) -> EnvConfiguration:
    if run < 0:
        raise EnvError(f"run index must be non-negative, got {run}")
    return EnvConfiguration(run, tuple(int(b) for b in _sample_bits(ts, run)))


def sample_matrix(ts: TemplateSet, runs: Sequence[int] | range) -> np.ndarray:
    """Configurations for many runs stacked as an int8 (len(runs), n_edges) array."""
    runs = list(runs)
    if not runs:
        return np.zeros((0, ts.n_edges), dtype=np.int8)
    return np.stack([_sample_bits(ts, r) for r in runs])


def empirical_mi(bits: np.ndarray) -> np.ndarray:
    """Plug-in pairwise mutual information (bits) of the columns of a 0/1 matrix."""
    x = np.asarray(bits, dtype=float)
    n = len(x)
    p1 = x.mean(axis=0)
    p = np.stack([1 - p1, p1], axis=1)
    n11 = x.T @ x
    n10 = x.T @ (1 - x)
    n01 = (1 - x).T @ x
    n00 = n - n11 - n10 - n01
    joint = np.stack([np.stack([n00, n01], -1), np.stack([n10, n11], -1)], -2) / n
    prod = p[:, None, :, None] * p[None, :, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(joint > 0, joint * np.log2(joint / prod), 0.0)
    mi = np.maximum(terms.sum(axis=(2, 3)), 0.0)
    np.fill_diagonal(mi, 0.0)
    return mi


def correlation_profile(ts: TemplateSet, samples: int = 2000) -> np.ndarray:
    if samples < 1000:
        raise EnvError("correlation_profile needs at least 1000 samples")
    return empirical_mi(sample_matrix(ts, range(samples)))


def gen_tasks(
    m: TopologicalMap,
    cycle: int = 25,
    seed: int = 0,
    min_separation: float = 0.0,
    templates: TemplateSet | None = None,
) -> TaskSequence:
    """Random start/goal pairs at least ``min_separation`` apart (graph distance).

    With ``templates`` (not the independent kind), only pairs connected in
    every template are eligible, so that most runs have a reachable goal.
    """
    rng = np.random.default_rng([seed, _TASK_STREAM])
    dist = np.stack([distances_to(m, g) for g in range(m.n_nodes)])
    pairs = [(s, g) for s in range(m.n_nodes) for g in range(m.n_nodes)
             if s != g and dist[s, g] >= min_separation]
    if templates is not None and not templates.independent:
        masks = [t.astype(bool) for t in templates.templates]
        pairs = [(s, g) for s, g in pairs if all(reachable(m, s, g, mk) for mk in masks)]
    if not pairs:
        raise EnvError(f"no eligible node pair at least {min_separation} m apart")
    picks = rng.integers(len(pairs), size=cycle)
    return TaskSequence(tuple(pairs[int(k)] for k in picks))


def write_configurations(path: str | os.PathLike, configs: Sequence[EnvConfiguration]) -> None:
    with open(path, "w") as fh:
        for c in configs:
            fh.write(f"{c.run} {c.bitstring}\n")


def read_configurations(path: str | os.PathLike) -> list[EnvConfiguration]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                run, bits = line.split()
                out.append(EnvConfiguration(int(run), tuple(int(c) for c in bits)))
            except ValueError:
                raise EnvError(f"{path}:{lineno}: expected '<run> <bitstring>'") from None
    return out


def write_tasks(path: str | os.PathLike, tasks: TaskSequence) -> None:
    with open(path, "w") as fh:
        for s, g in tasks.tasks:
            fh.write(f"{s} {g}\n")


def read_tasks(path: str | os.PathLike) -> TaskSequence:
    tasks = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                s, g = line.split()
                tasks.append((int(s), int(g)))
            except ValueError:
                raise EnvError(f"{path}:{lineno}: expected '<start> <goal>'") from None
    return TaskSequence(tuple(tasks))


def write_templates(path: str | os.PathLike, ts: TemplateSet) -> None:
    with open(path, "w") as fh:
        json.dump(ts.to_document(), fh, indent=1)


def read_templates(path: str | os.PathLike) -> TemplateSet:
    with open(path) as fh:
        return TemplateSet.from_document(json.load(fh))
