"""Learn edge patterns on the 3x3 grid and predict hidden edges.

Trains the factor-graph model on full configurations drawn from the
high-correlation preset, reveals a few edges of a fresh configuration and
compares the predicted free probabilities with the truth.
"""

import numpy as np

from patternnav import FactorGraphModel, IndependentModel, ObservationSet, builtin_map, from_preset
from patternnav.env import sample_matrix

m = builtin_map("grid9")
templates = from_preset(m, "high-corr", seed=1)
print("templates:")
for t in templates.templates:
    print("  " + "".join(map(str, t)))

fg, ind = FactorGraphModel(m.n_edges), IndependentModel(m.n_edges)
for row in sample_matrix(templates, range(500)):
    fg.update(ObservationSet.from_bits(row))
    ind.update(ObservationSet.from_bits(row))

truth = sample_matrix(templates, [10_000])[0]
shown = [0, 4, 9]
obs = ObservationSet({e: int(truth[e]) for e in shown})
p_fg = fg.predict(obs).p_free
p_ind = ind.predict(obs).p_free

print(f"\nrevealed edges {shown}")
print("edge  truth  factor-graph  independent")
for e in range(m.n_edges):
    mark = "*" if e in shown else " "
    print(f"{e:3d}{mark}  {truth[e]:5d}  {p_fg[e]:12.2f}  {p_ind[e]:11.2f}")

hidden = [e for e in range(m.n_edges) if e not in shown]
for name, p in (("factor-graph", p_fg), ("independent", p_ind)):
    rms = np.sqrt(np.mean((p[hidden] - truth[hidden]) ** 2))
    print(f"{name} RMS on hidden edges: {rms:.3f}")
