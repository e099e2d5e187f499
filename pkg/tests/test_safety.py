"""CBF evaluation, range-rate kinematics, QP filter, and pass-through policy."""

import math

import numpy as np
import pytest

from helpers_qp import grid_search, refined_search

from daasim.dynamics import (ControlBounds, ControlInput, DEFAULT_BOUNDS,
                             IntruderState, OwnshipState, intruder_step,
                             ownship_step)
from daasim.frames import NedVector, los_angle_alpha
from daasim.fusion import INVALID_GEOMETRY, RelativeGeometry
from daasim.safety import (CbfParameters, GoalSpec, PdGains, QpProblem,
                           SafetyController, cbf_constraint, cbf_value,
                           kkt_residual, nominal_control, range_accel_affine,
                           range_rate, safe_control, solve_qp)

P = CbfParameters()


def _geometry(own: OwnshipState, intr: IntruderState) -> RelativeGeometry:
    """Exact horizontal-plane geometry from truth states (test oracle feed)."""
    dn = intr.position.north - own.position.north
    de = intr.position.east - own.position.east
    d = math.hypot(dn, de)
    ovn, ove = own.velocity_ne()
    ivn, ive = intr.velocity_ne()
    theta = math.atan2(de, dn)
    return RelativeGeometry(
        d=d, ddot=(dn * (ivn - ovn) + de * (ive - ove)) / d,
        theta=theta, alpha=los_angle_alpha(theta),
        v_int_north=ivn, v_int_east=ive, chi_int=intr.heading, valid=True)


class TestCbfValue:
    def test_boundary_is_margin(self):
        # at d = d_thresh with zero range rate the terms cancel to c
        assert cbf_value(50.0, 0.0, P) == pytest.approx(P.c)

    def test_closing_fast_unsafe(self):
        assert cbf_value(100.0, -20.0, P) == pytest.approx(3.2625633273518146)

    def test_opening_safe(self):
        assert cbf_value(100.0, 5.0, P) == pytest.approx(-1.7374366726481854)

    def test_defaults_match_tuned_values(self):
        assert (P.k, P.c, P.n, P.lam) == (0.2, 0.01, 0.3, 0.2)

    def test_monotone_decreasing_in_d_and_ddot(self):
        rng = np.random.default_rng(12)
        for _ in range(500):
            d = float(rng.uniform(1.0, 500.0))
            ddot = float(rng.uniform(-40.0, 40.0))
            assert cbf_value(d + 1.0, ddot, P) < cbf_value(d, ddot, P)
            assert cbf_value(d, ddot + 1.0, P) < cbf_value(d, ddot, P)

    def test_nonpositive_range(self):
        with pytest.raises(ValueError):
            cbf_value(0.0, 0.0, P)


class TestRangeRate:
    def test_head_on_closure(self):
        own = OwnshipState(NedVector(0, 0, -50), 10.0, 0.0)
        intr = IntruderState(NedVector(200, 0, -50), 10.0, math.pi)
        assert range_rate(own, _geometry(own, intr)) == pytest.approx(-20.0)

    def test_e1_closure_magnitude(self):
        # head-on at 10 + 10 m/s: 20 m/s (72 km/h) closure
        own = OwnshipState(NedVector(0, 0, -50), 10.0, 0.0)
        intr = IntruderState(NedVector(430, 0, -50), 10.0, math.pi)
        assert abs(range_rate(own, _geometry(own, intr))) == pytest.approx(20.0)

    def test_pure_orbit_zero(self):
        own = OwnshipState(NedVector(0, 0, -50), 10.0, 0.0)
        intr = IntruderState(NedVector(0, 100, -50), 10.0, 0.0)  # parallel motion
        assert range_rate(own, _geometry(own, intr)) == pytest.approx(0.0, abs=1e-12)

    def test_trig_form_cross_check(self):
        # audited LOS projection: v_own cos(a-chi_own) - v_int cos(a-chi_int)
        rng = np.random.default_rng(13)
        for _ in range(300):
            own = OwnshipState(NedVector(0, 0, -50), float(rng.uniform(0, 15)),
                               float(rng.uniform(-math.pi, math.pi)))
            intr = IntruderState(
                NedVector(float(rng.uniform(-400, 400)),
                          float(rng.uniform(-400, 400)), -50.0),
                float(rng.uniform(0, 20)), float(rng.uniform(-math.pi, math.pi)))
            if intr.position.horizontal_norm() < 10:
                continue
            geo = _geometry(own, intr)
            trig = (own.speed * math.cos(geo.alpha - own.heading)
                    - intr.speed * math.cos(geo.alpha - intr.heading))
            assert range_rate(own, geo) == pytest.approx(trig, abs=1e-9)

    def test_invalid_geometry_rejected(self):
        own = OwnshipState(NedVector(0, 0, 0), 1.0, 0.0)
        with pytest.raises(ValueError):
            range_rate(own, INVALID_GEOMETRY)


def _finite_difference_dddot(own, intr, u, eps=1e-4):
    """(ddot(t+eps) - ddot(t)) / eps under held control."""
    g0 = _geometry(own, intr)
    own2 = ownship_step(own, u, eps)
    intr2 = intruder_step(intr, eps)
    g1 = _geometry(own2, intr2)
    return (range_rate(own2, g1) - range_rate(own, g0)) / eps


class TestRangeAccelAffine:
    def test_static_radial_zero_drift(self):
        own = OwnshipState(NedVector(0, 0, -50), 10.0, 0.0)
        intr = IntruderState(NedVector(300, 0, -50), 0.0, 0.0)
        a, drift = range_accel_affine(own, _geometry(own, intr), P)
        assert drift == pytest.approx(0.0, abs=1e-12)
        assert a[0] == pytest.approx(-1.0)   # alpha - chi_own = pi
        assert a[1] == pytest.approx(0.0, abs=1e-12)

    def test_pure_tangential_centripetal(self):
        # relative velocity perpendicular to LOS at speed s: dddot = s^2/d
        own = OwnshipState(NedVector(0, 0, -50), 0.0, 0.0)
        intr = IntruderState(NedVector(100, 0, -50), 8.0, math.pi / 2)
        _, drift = range_accel_affine(own, _geometry(own, intr), P)
        assert drift == pytest.approx(8.0**2 / 100.0)

    def test_finite_difference_oracle(self):
        rng = np.random.default_rng(14)
        checked = 0
        while checked < 120:
            own = OwnshipState(NedVector(0, 0, -50), float(rng.uniform(0.5, 15)),
                               float(rng.uniform(-math.pi, math.pi)))
            intr = IntruderState(
                NedVector(float(rng.uniform(-400, 400)),
                          float(rng.uniform(-400, 400)), -50.0),
                float(rng.uniform(0, 20)), float(rng.uniform(-math.pi, math.pi)))
            if intr.position.horizontal_norm() < 30:
                continue
            u = ControlInput(float(rng.uniform(-2, 2)), float(rng.uniform(-0.5, 0.5)))
            geo = _geometry(own, intr)
            a, drift = range_accel_affine(own, geo, P)
            affine = a[0] * u.accel + a[1] * u.turn_rate + drift
            fd = _finite_difference_dddot(own, intr, u)
            assert affine == pytest.approx(fd, abs=1e-3)
            checked += 1

    def test_singularity_guard(self):
        own = OwnshipState(NedVector(0, 0, -50), 10.0, 0.0)
        intr = IntruderState(NedVector(0.5, 0, -50), 0.0, 0.0)
        with pytest.raises(ValueError):
            range_accel_affine(own, _geometry(own, intr), P)


class TestCbfConstraint:
    def test_interior_point_inactive(self):
        # far and opening: nominal control satisfies the halfspace
        own = OwnshipState(NedVector(0, 0, -50), 10.0, math.pi)  # flying away
        intr = IntruderState(NedVector(400, 0, -50), 5.0, 0.0)
        geo = _geometry(own, intr)
        a_qp, b_qp = cbf_constraint(own, geo, P)
        u = ControlInput(0.0, 0.0)
        assert a_qp[0] * u.accel + a_qp[1] * u.turn_rate <= b_qp

    def test_boundary_requires_nonpositive_hdot(self):
        # at h = 0 with zero range rate the constraint reduces to hdot <= 0
        own = OwnshipState(NedVector(0, 0, -50), 5.0, 0.0)
        intr = IntruderState(NedVector(50.167, 0, -50), 5.0 - 1e-9, 0.0)
        geo = _geometry(own, intr)
        h = cbf_value(geo.d, geo.ddot, P)
        a_qp, b_qp = cbf_constraint(own, geo, P)
        a, drift = range_accel_affine(own, geo, P)
        for u1, u2 in ((-2, 0.5), (0, 0), (1, -0.3)):
            lhs = a_qp[0] * u1 + a_qp[1] * u2 - b_qp
            hdot = (-P.n * geo.d ** (P.n - 1) * geo.ddot
                    - P.k * (a[0] * u1 + a[1] * u2 + drift))
            assert lhs == pytest.approx(hdot + P.lam * h, abs=1e-9)

    def test_halfspace_equals_enforcement_condition(self):
        # a_qp.u - b_qp == hdot(u) + lam*h identically, on random states
        rng = np.random.default_rng(15)
        for _ in range(200):
            own = OwnshipState(NedVector(0, 0, -50), float(rng.uniform(0, 15)),
                               float(rng.uniform(-math.pi, math.pi)))
            intr = IntruderState(
                NedVector(float(rng.uniform(-400, 400)),
                          float(rng.uniform(-400, 400)), -50.0),
                float(rng.uniform(0, 20)), float(rng.uniform(-math.pi, math.pi)))
            if intr.position.horizontal_norm() < 30:
                continue
            geo = _geometry(own, intr)
            h = cbf_value(geo.d, geo.ddot, P)
            a, drift = range_accel_affine(own, geo, P)
            a_qp, b_qp = cbf_constraint(own, geo, P)
            u1 = float(rng.uniform(-2, 2))
            u2 = float(rng.uniform(-0.5, 0.5))
            hdot = (-P.n * geo.d ** (P.n - 1) * geo.ddot
                    - P.k * (a[0] * u1 + a[1] * u2 + drift))
            assert a_qp[0] * u1 + a_qp[1] * u2 - b_qp == \
                pytest.approx(hdot + P.lam * h, abs=1e-9)


GOAL = GoalSpec(NedVector(1000.0, 0.0, -50.0), 10.0)


class TestNominalControl:
    def test_on_course_zero(self):
        own = OwnshipState(NedVector(0, 0, -50), 10.0, 0.0)
        u = nominal_control(own, GOAL)
        assert (u.accel, u.turn_rate) == (0.0, 0.0)

    def test_goal_east_turns_positive(self):
        own = OwnshipState(NedVector(0, 0, -50), 10.0, 0.0)
        goal = GoalSpec(NedVector(0.0, 500.0, -50.0), 10.0)
        u = nominal_control(own, goal)
        assert u.turn_rate == 0.5  # k_chi * pi/2 saturates at the bound

    def test_small_heading_error_linear(self):
        own = OwnshipState(NedVector(0, 0, -50), 10.0, -0.3)
        u = nominal_control(own, GOAL, PdGains(), DEFAULT_BOUNDS, turn_rate_prev=0.1)
        assert u.turn_rate == pytest.approx(1.0 * 0.3 - 0.1 * 0.1)

    def test_speed_error(self):
        own = OwnshipState(NedVector(0, 0, -50), 6.0, 0.0)
        u = nominal_control(own, GOAL)
        assert u.accel == pytest.approx(0.5 * 4.0)


def _random_problem(rng) -> QpProblem:
    lo1 = float(rng.uniform(-3.0, -0.1))
    hi1 = float(rng.uniform(0.1, 3.0))
    lo2 = float(rng.uniform(-1.0, -0.05))
    hi2 = float(rng.uniform(0.05, 1.0))
    bounds = ControlBounds(ControlInput(lo1, lo2), ControlInput(hi1, hi2))
    u_nom = ControlInput(float(rng.uniform(2 * lo1, 2 * hi1)),
                         float(rng.uniform(2 * lo2, 2 * hi2)))
    a = (float(rng.normal(0, 1)), float(rng.normal(0, 1)))
    anchor = (float(rng.uniform(2.5 * lo1, 2.5 * hi1)),
              float(rng.uniform(2.5 * lo2, 2.5 * hi2)))
    b = a[0] * anchor[0] + a[1] * anchor[1]
    return QpProblem(u_nom=u_nom, a=a, b=b, bounds=bounds)


class TestSolveQp:
    def test_feasible_nominal_passthrough(self):
        q = QpProblem(ControlInput(0.5, 0.1), a=(1.0, 1.0), b=10.0,
                      bounds=DEFAULT_BOUNDS)
        sol = solve_qp(q)
        assert sol.u == q.u_nom
        assert not sol.constraint_active
        assert not sol.infeasible_relaxed

    def test_halfspace_projection(self):
        big = ControlBounds(ControlInput(-100.0, -100.0), ControlInput(100.0, 100.0))
        q = QpProblem(ControlInput(0.0, 0.0), a=(1.0, 1.0), b=-1.0, bounds=big)
        sol = solve_qp(q)
        assert sol.u.accel == pytest.approx(-0.5)
        assert sol.u.turn_rate == pytest.approx(-0.5)
        assert sol.constraint_active

    def test_infeasible_least_violation(self):
        q = QpProblem(ControlInput(0.0, 0.0), a=(1.0, 0.0), b=-10.0,
                      bounds=DEFAULT_BOUNDS)
        sol = solve_qp(q)
        assert sol.infeasible_relaxed
        assert sol.u.accel == -2.0     # minimizes a.u - b
        assert sol.u.turn_rate == 0.0  # free coordinate stays at the nominal

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(16)
        n_checked = 0
        for _ in range(250):
            q = _random_problem(rng)
            sol = solve_qp(q)
            grid = grid_search(q, n=201)
            refined = refined_search(q, n=20_001)
            if sol.infeasible_relaxed:
                assert grid is None and refined is None
                continue
            obj = ((sol.u.accel - q.u_nom.accel) ** 2
                   + (sol.u.turn_rate - q.u_nom.turn_rate) ** 2)
            if grid is not None:
                # solver never loses to any feasible grid point
                assert obj <= grid[2] + 1e-12
            cell1 = (q.bounds.u_max.accel - q.bounds.u_min.accel) / 200
            cell2 = (q.bounds.u_max.turn_rate - q.bounds.u_min.turn_rate) / 200
            assert abs(sol.u.accel - refined[0]) <= cell1 + 1e-12
            assert abs(sol.u.turn_rate - refined[1]) <= cell2 + 1e-12
            assert abs(obj - refined[2]) <= 1e-6
            n_checked += 1
        assert n_checked > 150

    def test_kkt_residuals(self):
        rng = np.random.default_rng(17)
        for _ in range(400):
            q = _random_problem(rng)
            sol = solve_qp(q)
            if not sol.infeasible_relaxed:
                assert kkt_residual(q, sol.u) <= 1e-9

    def test_minimal_intervention(self):
        rng = np.random.default_rng(18)
        for _ in range(200):
            q = _random_problem(rng)
            sol = solve_qp(q)
            if not sol.constraint_active:
                c1 = min(max(q.u_nom.accel, q.bounds.u_min.accel),
                         q.bounds.u_max.accel)
                c2 = min(max(q.u_nom.turn_rate, q.bounds.u_min.turn_rate),
                         q.bounds.u_max.turn_rate)
                assert sol.u == ControlInput(c1, c2)


class TestSafeControl:
    def test_no_geometry_passthrough(self):
        own = OwnshipState(NedVector(0, 0, -50), 8.0, 0.2)
        u, diag = safe_control(own, INVALID_GEOMETRY, GOAL)
        assert u == nominal_control(own, GOAL)
        assert not diag.constraint_active
        assert math.isnan(diag.h)

    def test_far_opening_inactive(self):
        own = OwnshipState(NedVector(0, 0, -50), 10.0, math.pi)
        intr = IntruderState(NedVector(400, 0, -50), 5.0, 0.0)
        geo = _geometry(own, intr)
        u, diag = safe_control(own, geo, GoalSpec(NedVector(-1000, 0, -50), 10.0))
        assert diag.h < 0
        assert not diag.constraint_active
        assert u == diag.u_nom

    def test_head_on_intervenes_and_improves_separation(self):
        # closed-loop comparison on an offset head-on encounter
        def rollout(use_filter: bool) -> float:
            own = OwnshipState(NedVector(0, 0, -50), 10.0, 0.0)
            intr = IntruderState(NedVector(430, 20, -50), 10.0, math.pi)
            goal = GoalSpec(NedVector(600, 0, -50), 10.0)
            ctrl = SafetyController(goal)
            dt = 1 / 50
            min_d = math.inf
            intervened = False
            for _ in range(round(45 / dt)):
                geo = _geometry(own, intr)
                if use_filter:
                    u, diag = ctrl.step_safe(own, geo)
                    if diag.constraint_active and u != diag.u_nom:
                        intervened = True
                else:
                    u, _ = ctrl.step_nominal(own)
                own = ownship_step(own, u, dt)
                intr = intruder_step(intr, dt)
                min_d = min(min_d, (intr.position - own.position).horizontal_norm())
            assert not use_filter or intervened
            return min_d

        assert rollout(False) < 21.0
        assert rollout(True) >= 49.5

    def test_singularity_guard_clamps(self):
        own = OwnshipState(NedVector(0, 0, -50), 10.0, 0.0)
        intr = IntruderState(NedVector(0.6, 0, -50), 10.0, math.pi)
        geo = _geometry(own, intr)
        u, diag = safe_control(own, geo, GOAL)  # must not raise
        assert math.isfinite(u.accel) and math.isfinite(u.turn_rate)
