"""Radially perturbed circles under the rescaled flow: outcome, distance below lambda_1, and the drift trend."""

from concurrent.futures import ThreadPoolExecutor

from shrinkers.flow import compactness_trend, gap_experiment

amps = (1e-3, -1e-3, 1e-2, -1e-2, 5e-2, -5e-2)
with ThreadPoolExecutor(4) as pool:
    reports = list(pool.map(lambda a: gap_experiment(1, 1, a, budget=6, radial=True), amps))
for a, r in zip(amps, reports):
    print(f"a = {a:+.0e}  {r.outcome:<26} below lambda_1 by {r.below_lambda:.4f}")
for delta, drift, count in compactness_trend(reports):
    print(f"F drop <= {delta:.0e}: max d_V drift {drift:.4g} over {count} unit intervals")
