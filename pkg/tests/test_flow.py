import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shrinkers.functionals import F, measure_distance
from shrinkers.flow import (
    FlowTrajectory,
    circle_F,
    circle_radius_ode,
    circle_surface,
    compactness_trend,
    gap_experiment,
    mean_radius,
    monotonicity_audit,
    perturbed_cylinder,
    rescale_about,
    rescaled_flow_step,
    reversed_trajectory,
    run_rescaled_flow,
)
from shrinkers.surface import GeneralizedCylinderSpec, analytic_shrinker

from conftest import SQRT2

LAM1 = math.sqrt(2 * math.pi / math.e)


def ode_radius(r0, s):
    """r' = -1/r + r/2 integrated numerically, independent of the closed form in the package."""
    from scipy.integrate import solve_ivp

    sol = solve_ivp(lambda _, r: -1 / r + r / 2, (0, s), [r0], rtol=1e-12, atol=1e-14)
    return float(sol.y[0, -1])


# -- rescaled_flow_step ------------------------------------------------------------


def test_shrinking_circle_is_fixed():
    c = circle_surface(SQRT2, 64)
    out = rescaled_flow_step(c, 1e-4)
    assert np.max(np.abs(out.profile - c.profile)) <= 1e-12


def test_unit_circle_shrinks():
    traj = run_rescaled_flow(circle_surface(1.0, 64), 1e-3, cadence=1e-3)
    r = mean_radius(traj.snapshots[-1].surface)
    assert abs(r - ode_radius(1.0, 1e-3)) < 1e-8
    assert abs(r - 0.9995) < 1e-6


def test_radius_two_circle_grows():
    c = circle_surface(2.0, 64)
    out = rescaled_flow_step(c, 1e-4)
    assert mean_radius(out) > 2
    assert abs(mean_radius(out) - ode_radius(2.0, 1e-4)) < 1e-9


def test_step_above_stability_bound_rejected():
    with pytest.raises(ValueError, match="stability"):
        rescaled_flow_step(circle_surface(1.0, 64), 1e-2)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_analytic_shrinkers_are_fixed_points(n):
    for k in range(n + 1):
        s = analytic_shrinker(GeneralizedCylinderSpec(k, n), 128)
        out = rescaled_flow_step(s, 1e-5)
        assert np.max(np.abs(out.profile - s.profile)) <= 1e-10


# -- run_rescaled_flow -------------------------------------------------------------


def test_shrinking_circle_stays_put():
    traj = run_rescaled_flow(circle_surface(SQRT2, 64), 5, cadence=0.5)
    assert traj.s[-1] == pytest.approx(5)
    assert all(abs(mean_radius(sn.surface) - SQRT2) <= 1e-6 for sn in traj.snapshots)


def test_circle_inside_fixed_point_shrinks():
    traj = run_rescaled_flow(circle_surface(1.3, 64), 3, cadence=0.25)
    r = [mean_radius(sn.surface) for sn in traj.snapshots]
    assert np.all(np.diff(r) < 0)
    assert np.all(np.diff(traj.s) > 0)


def test_perturbed_cylinder_flow_monotone():
    traj = run_rescaled_flow(perturbed_cylinder(1, 2, 0.05, 1, 256), 1, cadence=0.1)
    assert len(traj) > 1 and not traj.singular
    assert monotonicity_audit(traj)["pass"]


def test_snapshot_F_is_cached_F():
    traj = run_rescaled_flow(circle_surface(1.2, 64), 0.5, cadence=0.1)
    for sn in traj.snapshots:
        assert abs(sn.F_value - F(sn.surface)) <= 1e-12


def test_singularity_is_flagged_not_raised():
    traj = run_rescaled_flow(circle_surface(0.8, 64), 5, cadence=0.1)
    assert traj.singular and traj.reason
    assert traj.s[-1] < 5


def test_nonpositive_s_max():
    with pytest.raises(ValueError):
        run_rescaled_flow(circle_surface(1.0, 64), 0)


@pytest.mark.parametrize("r0", [1.3, 1.5, SQRT2 * 1.01, SQRT2 * 0.99])
def test_circles_follow_radial_ode(r0):
    traj = run_rescaled_flow(circle_surface(r0, 64), 2, cadence=0.25)
    for sn in traj.snapshots[1:]:
        assert abs(mean_radius(sn.surface) - ode_radius(r0, sn.s)) <= 1e-4
        assert abs(circle_radius_ode(r0, sn.s) - ode_radius(r0, sn.s)) <= 1e-9


# -- monotonicity audit ------------------------------------------------------------


def test_constant_trajectory_audit(cylinder12):
    traj = run_rescaled_flow(cylinder12, 1, cadence=0.2)
    assert monotonicity_audit(traj)["max_increase"] <= 1e-10


def test_unit_circle_F_decreasing():
    traj = run_rescaled_flow(circle_surface(1.0, 64), 0.5, cadence=0.05)
    assert np.all(np.diff(traj.F_values) < 0)
    # a 64-gon carries F to within 1e-6 of the smooth circle
    assert abs(traj.F_values[0] - math.sqrt(math.pi) * math.exp(-0.25)) < 1e-6
    assert abs(traj.F_values[0] - 1.3803) < 1e-4


def test_reversed_trajectory_fails_audit():
    traj = run_rescaled_flow(circle_surface(1.0, 64), 0.5, cadence=0.05)
    assert monotonicity_audit(traj)["pass"]
    assert not monotonicity_audit(reversed_trajectory(traj))["pass"]


def test_empty_audit():
    with pytest.raises(ValueError):
        monotonicity_audit(FlowTrajectory())


@settings(max_examples=10)
@given(st.floats(0.5, 3.0))
def test_circle_F_peaks_at_fixed_point(r):
    assert circle_F(r) <= circle_F(SQRT2) + 1e-15
    assert abs(F(circle_surface(r, 64)) - circle_F(r)) < 1e-5


# -- rescale_about -----------------------------------------------------------------


def test_self_similar_sphere():
    base = analytic_shrinker(GeneralizedCylinderSpec(2, 2), 128)
    flow = [(t, base.scaled(math.sqrt(-t))) for t in (-2.0, -1.0, -0.5, -0.1)]
    traj = rescale_about(flow, (0, 0, 0), 0.0)
    for sn in traj.snapshots:
        assert np.allclose(sn.surface.radii, 2, atol=1e-12)
    first = traj.snapshots[0].surface
    assert max(measure_distance(first, sn.surface) for sn in traj.snapshots) <= 1e-8


def test_translated_sphere_recentred():
    base = analytic_shrinker(GeneralizedCylinderSpec(2, 2), 128)
    traj = rescale_about([(-4.0, base.scaled(2).translated((5, 0, 0)))], (5, 0, 0), 0.0)
    out = traj.snapshots[0].surface
    assert np.allclose(out.radii, 2, atol=1e-12)
    assert traj.s[0] == pytest.approx(-math.log(4))


def test_shrinking_circle_slices():
    flow = [(t, circle_surface(math.sqrt(-2 * t), 64)) for t in (-1.0, -0.5, -0.25)]
    traj = rescale_about(flow, (0, 0), 0.0)
    assert np.allclose(traj.s, [0, math.log(2), math.log(4)], atol=1e-15)
    assert np.allclose([mean_radius(sn.surface) for sn in traj.snapshots], SQRT2, atol=1e-12)


def test_slice_after_t0_rejected():
    with pytest.raises(ValueError):
        rescale_about([(0.5, circle_surface(1.0))], (0, 0), 0.0)


# -- gap experiment ----------------------------------------------------------------


def test_zero_perturbation():
    r = gap_experiment(1, 2, 0.0, budget=1)
    assert r.outcome == "returned-to-cylinder"
    assert r.entropy_drop == 0 and r.final_dV == 0


def test_circle_drifts_off():
    r = gap_experiment(1, 1, 0.05, budget=2, radial=True)
    Fs = r.trajectory.F_values
    assert np.all(np.diff(Fs) < 0)
    assert r.below_lambda > 0 and Fs[-1] < LAM1
    # the closed form along the ODE radius
    r_end = circle_radius_ode(SQRT2 * 1.05, r.trajectory.s[-1])
    assert abs(Fs[-1] - circle_F(float(r_end))) < 1e-4


def test_cylinder_axis_perturbation_report():
    r = gap_experiment(1, 2, 0.02, wavenumber=1, budget=2)
    assert r.outcome in ("returned-to-cylinder", "escaped", "escaped-with-singularity")
    assert math.isfinite(r.final_dV) and math.isfinite(r.entropy_drop)
    assert len(r.intervals) == 2


def test_compactness_trend_is_monotone():
    reports = [gap_experiment(1, 1, a, budget=3, radial=True) for a in (1e-3, -1e-3, 1e-2)]
    trend = compactness_trend(reports)
    drifts = [d for _, d, _ in trend]
    assert drifts[0] >= drifts[1] >= drifts[2]


def test_trend_counts_intervals():
    class R:
        intervals = [(0.0, 5e-3, 0.1), (1.0, 5e-4, 0.01), (2.0, 5e-5, 0.001)]

    trend = compactness_trend([R()])
    assert trend == [(1e-2, 0.1, 3), (1e-3, 0.01, 2), (1e-4, 0.001, 1)]
