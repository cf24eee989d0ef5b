"""Run the cylinder classifier over perturbed cylinders and spheres and print each certificate line."""

import time

from shrinkers.flow import perturbed_cylinder
from shrinkers.rigidity import classify_cylinder

cases = [(k, n, a, w, False) for k, n in ((1, 2), (2, 3)) for a in (0.0025, 0.005, 0.01) for w in (1, 2, 3)]
cases += [(2, 2, 0.01, 1, True), (3, 3, 0.01, 1, True)]
t = time.perf_counter()
for k, n, a, w, radial in cases:
    c = classify_cylinder(perturbed_cylinder(k, n, a, w, 256, radial), 12)
    print(f"({k},{n}) a={a:<6} w={w}  {c.verdict:<13} eps_tau={c.eps_tau:.3g} residual={c.residual:.4f} dV={c.dV:.3g}")
print(f"{len(cases)} cases in {time.perf_counter() - t:.1f}s")
