"""Entropy of the generalized cylinders in R^4 next to the closed form (k / 2 pi e)^{k/2} |S^k|."""

import time

from shrinkers import GeneralizedCylinderSpec, analytic_shrinker, entropy

n = 3
print(f"{'k':>2} {'lambda':>12} {'closed form':>12} {'t0':>8} {'seconds':>8}")
for k in range(n + 1):
    spec = GeneralizedCylinderSpec(k, n)
    t = time.perf_counter()
    r = entropy(analytic_shrinker(spec, 512))
    print(f"{k:>2} {r.value:12.8f} {spec.gaussian_area:12.8f} {r.argmax.t0:8.4f} {time.perf_counter() - t:8.2f}")
