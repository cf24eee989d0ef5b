"""Rescaled flow of circles: radii against r^2 = 2 + (r0^2 - 2) e^s, and F along the way."""

import math

from shrinkers.flow import circle_radius_ode, circle_surface, mean_radius, run_rescaled_flow

for r0 in (1.2, math.sqrt(2), 1.6):
    traj = run_rescaled_flow(circle_surface(r0, 64), 2.0, cadence=0.5)
    print(f"r0 = {r0:.4f}" + ("  (singular: " + traj.reason + ")" if traj.singular else ""))
    for sn in traj.snapshots:
        r = mean_radius(sn.surface)
        print(f"  s = {sn.s:4.2f}  r = {r:.6f}  ode = {float(circle_radius_ode(r0, sn.s)):.6f}  F = {sn.F_value:.6f}")
