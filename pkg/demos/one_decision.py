"""A single planning decision on the 3x3 grid.

The robot stands in corner 0 and wants the opposite corner 8. It has seen
the edges at its own node. A model trained on earlier configurations
predicts the rest; the rollout planner turns that into a first move and an
expected distance, next to the optimistic plan and the hindsight optimum.
"""

import numpy as np

from patternnav import (
    FactorGraphModel,
    ObservationSet,
    PlannerParams,
    builtin_map,
    from_preset,
    plan_optimal,
    plan_ours,
    plan_spo,
)
from patternnav.env import sample_matrix

m = builtin_map("grid9")
templates = from_preset(m, "high-corr", seed=1)
model = FactorGraphModel(m.n_edges)
for row in sample_matrix(templates, range(300)):
    model.update(ObservationSet.from_bits(row))

truth = sample_matrix(templates, [20_000])[0]
known = ObservationSet({e: int(truth[e]) for e in m.incident(0)})
belief = model.predict(known)
print("seen at node 0:", dict(known.items()))
print("predicted free:", np.round(belief.p_free, 2))

spo = plan_spo(m, known, 0, 8)
print(f"\nSPO plan   {spo.nodes}, {spo.length:.1f} m if every unknown edge is free")
for runs_so_far in (0, 100):
    d = plan_ours(m, model, belief, known, 0, 8, runs_so_far, PlannerParams(rollouts=200), seed=3)
    print(f"ours ({runs_so_far:3d} runs)  next node {d.path.nodes[1]}, expected {d.expected_length:.1f} m, "
          f"info gain {d.info_gain:.2f} bits, cost {d.cost:.1f}")
best = plan_optimal(m, truth, 0, 8)
print(f"hindsight  {best.nodes}, {best.length:.1f} m")
