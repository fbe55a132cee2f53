"""A short navigation experiment, printed as windowed scores.

Same setup as the nav-exp defaults but only 100 runs, so it finishes in
well under a minute. Scores are 0 for the omniscient optimum and 1 for
the optimistic shortest-path strategy.
"""

from patternnav import NavSettings, builtin_map, from_preset, gen_tasks, run_navigation_experiment

m = builtin_map("small_office")
templates = from_preset(m, "high-corr", free_prob=0.7, seed=2)
tasks = gen_tasks(m, 25, seed=2, min_separation=15.0, templates=templates)

log = run_navigation_experiment(m, templates, tasks, ["ours", "ctp-uct", "spd", "spo"], 100,
                                NavSettings(window=25))
print(log.summary_csv(), end="")

reached = sum(r.reached for r in log.for_planner("spo"))
print(f"\ngoal reachable in {reached} of 100 runs")
