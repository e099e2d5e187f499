"""Supervisory safety controller: CBF evaluation, QP safety filter, PD guidance.

Barrier over the relative range d and range rate ddot:

    h = c + d_thresh^n - d^n - k*ddot

with h <= 0 on the safe side. Enforcement condition: hdot <= -lam*h, where
hdot = -n*d^(n-1)*ddot - k*dddot (symbolic derivative of h). The range
acceleration is affine in the control u = (accel, turn_rate):

    dddot = a.u + drift,   a = [cos(alpha-chi_own), v_own*sin(alpha-chi_own)],
    drift = (tangential relative speed)^2 / d

so the condition becomes one halfspace (-k*a).u <= -lam*h + n*d^(n-1)*ddot
+ k*drift, and the safety filter is the exact minimizer of ||u - u_nom||^2
over that halfspace intersected with the control box. With no valid intruder
geometry the nominal control passes through unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

from .dynamics import ControlBounds, ControlInput, DEFAULT_BOUNDS, OwnshipState, clamp_control
from .frames import NedVector, wrap_angle

if TYPE_CHECKING:
    from .fusion import RelativeGeometry


@dataclass(frozen=True, slots=True)
class CbfParameters:
    """Barrier hyperparameters; defaults are the tuned values."""

    c: float = 0.01         # safety margin, unitless, > 0
    n: float = 0.3          # range exponent, > 0
    k: float = 0.2          # range-rate weight [s], > 0
    lam: float = 0.2        # enforcement rate [1/s], > 0
    d_thresh: float = 50.0  # separation threshold [m], > 0

    def __post_init__(self):
        if min(self.c, self.n, self.k, self.lam, self.d_thresh) <= 0.0:
            raise ValueError("all CBF parameters must be strictly positive")


@dataclass(frozen=True, slots=True)
class GoalSpec:
    """Nominal mission: fly to a goal point at a desired speed."""

    position: NedVector
    desired_speed: float    # m/s, >= 0

    def __post_init__(self):
        if self.desired_speed < 0.0:
            raise ValueError("desired speed must be nonnegative")


@dataclass(frozen=True, slots=True)
class PdGains:
    """Nominal PD controller gains."""

    k_v: float = 0.5        # speed gain [1/s]
    k_chi: float = 1.0      # heading gain [1/s]
    k_d: float = 0.1        # turn-rate damping, unitless


@dataclass(frozen=True, slots=True)
class QpProblem:
    """One safety-filter instance: min ||u - u_nom||^2 s.t. a.u <= b, u in box."""

    u_nom: ControlInput
    a: tuple[float, float]
    b: float
    bounds: ControlBounds
    constraint_active: bool = True  # False: solve the box-only problem


@dataclass(frozen=True, slots=True)
class QpSolution:
    u: ControlInput
    constraint_active: bool     # halfspace binds at the solution
    infeasible_relaxed: bool    # halfspace ∩ box empty; least-violation point returned


@dataclass(frozen=True, slots=True)
class SafetyDiagnostics:
    """Per-tick controller telemetry appended to episode logs."""

    h: float
    b_qp: float
    constraint_active: bool
    infeasible_relaxed: bool
    u_nom: ControlInput


def cbf_value(d: float, ddot: float, p: CbfParameters) -> float:
    """Barrier value h(d, ddot); h <= 0 is the nominally safe side."""
    if d <= 0.0:
        raise ValueError(f"range must be positive, got {d}")
    return p.c + p.d_thresh**p.n - d**p.n - p.k * ddot


def _relative_motion(own: OwnshipState, geo: "RelativeGeometry") -> tuple[float, float, float, float]:
    """(radial unit n/e, relative velocity n/e) of the intruder w.r.t. ownship."""
    ct, st = math.cos(geo.theta), math.sin(geo.theta)
    vn, ve = own.velocity_ne()
    return ct, st, geo.v_int_north - vn, geo.v_int_east - ve


def range_rate(own: OwnshipState, geo: "RelativeGeometry") -> float:
    """Range rate from relative position and velocity: (p_rel . v_rel)/d.

    Negative while closing. Equals the line-of-sight projection
    v_own*cos(alpha-chi_own) - v_int*cos(alpha-chi_int) (sign-audited form).
    """
    if not geo.valid or geo.d <= 0.0:
        raise ValueError("range_rate requires valid geometry with d > 0")
    ct, st, rvn, rve = _relative_motion(own, geo)
    return ct * rvn + st * rve


def range_accel_affine(own: OwnshipState, geo: "RelativeGeometry",
                       p: CbfParameters) -> tuple[tuple[float, float], float]:
    """Affine decomposition of the range acceleration: dddot = a.u + drift.

    a = [cos(alpha-chi_own), v_own*sin(alpha-chi_own)]; drift is the
    centripetal opening term (tangential relative speed)^2 / d, valid under
    the constant-intruder-velocity assumption.
    """
    if not geo.valid or geo.d <= 0.0:
        raise ValueError("range_accel_affine requires valid geometry with d > 0")
    if geo.d < 1.0:
        raise ValueError(f"range {geo.d:.3f} m below the 1 m singularity guard")
    delta = geo.alpha - own.heading
    a = (math.cos(delta), own.speed * math.sin(delta))
    ct, st, rvn, rve = _relative_motion(own, geo)
    tangential = -st * rvn + ct * rve
    return a, tangential * tangential / geo.d


def cbf_constraint(own: OwnshipState, geo: "RelativeGeometry",
                   p: CbfParameters) -> tuple[tuple[float, float], float]:
    """Halfspace (a_qp, b_qp) with a_qp.u <= b_qp enforcing hdot <= -lam*h.

    Expands hdot = -n*d^(n-1)*ddot - k*(a.u + drift) and isolates u.
    """
    a, drift = range_accel_affine(own, geo, p)
    h = cbf_value(geo.d, geo.ddot, p)
    radial = p.n * geo.d ** (p.n - 1.0) * geo.ddot
    a_qp = (-p.k * a[0], -p.k * a[1])
    b_qp = -p.lam * h + radial + p.k * drift
    return a_qp, b_qp


def nominal_control(own: OwnshipState, goal: GoalSpec, gains: PdGains = PdGains(),
                    bounds: ControlBounds = DEFAULT_BOUNDS,
                    turn_rate_prev: float = 0.0) -> ControlInput:
    """PD guidance toward the goal point at the desired speed, clamped to bounds."""
    chi_to_goal = math.atan2(goal.position.east - own.position.east,
                             goal.position.north - own.position.north)
    err = wrap_angle(chi_to_goal - own.heading)
    u = ControlInput(
        accel=gains.k_v * (goal.desired_speed - own.speed),
        turn_rate=gains.k_chi * err - gains.k_d * turn_rate_prev,
    )
    return clamp_control(u, bounds)


_TOL = 1e-12


def solve_qp(q: QpProblem) -> QpSolution:
    """Exact minimizer of ||u - u_nom||^2 over {a.u <= b} ∩ box.

    Enumerates the candidate active sets of the 2-D box plus one halfspace
    (box projection; halfspace projection; halfspace ∩ each box face; box
    corners) and returns the feasible candidate with least objective. If the
    halfspace excludes the whole box, actuation limits stay hard: the box
    point minimizing the violation a.u - b is returned and flagged.
    """
    lo1, lo2 = q.bounds.u_min.accel, q.bounds.u_min.turn_rate
    hi1, hi2 = q.bounds.u_max.accel, q.bounds.u_max.turn_rate
    un1, un2 = q.u_nom.accel, q.u_nom.turn_rate
    c1 = min(max(un1, lo1), hi1)
    c2 = min(max(un2, lo2), hi2)
    if not q.constraint_active:
        return QpSolution(ControlInput(c1, c2), False, False)

    a1, a2, b = q.a[0], q.a[1], q.b
    if a1 * c1 + a2 * c2 <= b + _TOL:
        return QpSolution(ControlInput(c1, c2), False, False)

    # Least value of a.u over the box decides feasibility.
    f1 = lo1 if a1 > 0.0 else hi1
    f2 = lo2 if a2 > 0.0 else hi2
    if a1 * f1 + a2 * f2 > b + _TOL:
        u1 = f1 if a1 != 0.0 else c1
        u2 = f2 if a2 != 0.0 else c2
        return QpSolution(ControlInput(u1, u2), True, True)

    nrm = a1 * a1 + a2 * a2
    candidates: list[tuple[float, float]] = []
    if nrm > 0.0:
        t = (a1 * un1 + a2 * un2 - b) / nrm
        candidates.append((un1 - t * a1, un2 - t * a2))
        if a2 != 0.0:
            candidates.append((lo1, (b - a1 * lo1) / a2))
            candidates.append((hi1, (b - a1 * hi1) / a2))
        if a1 != 0.0:
            candidates.append(((b - a2 * lo2) / a1, lo2))
            candidates.append(((b - a2 * hi2) / a1, hi2))
    candidates.extend(((lo1, lo2), (lo1, hi2), (hi1, lo2), (hi1, hi2)))

    best = None
    best_obj = math.inf
    tol = 1e-9
    for u1, u2 in candidates:
        if not (lo1 - tol <= u1 <= hi1 + tol and lo2 - tol <= u2 <= hi2 + tol):
            continue
        if a1 * u1 + a2 * u2 > b + tol:
            continue
        obj = (u1 - un1) ** 2 + (u2 - un2) ** 2
        if obj < best_obj:
            best_obj = obj
            best = (min(max(u1, lo1), hi1), min(max(u2, lo2), hi2))
    # Feasibility was established above, so a candidate always survives.
    return QpSolution(ControlInput(best[0], best[1]), True, False)


def kkt_residual(q: QpProblem, u: ControlInput, active_tol: float = 1e-7) -> float:
    """Stationarity residual of u for the QP with nonnegative multipliers.

    Enumerates subsets of the constraints active at u (halfspace and box
    faces), solves for multipliers, and returns the least norm of
    grad + sum(mu_i * g_i) over subsets with mu >= 0. Zero (to tolerance)
    certifies optimality of a feasible point.
    """
    gx = 2.0 * (u.accel - q.u_nom.accel)
    gy = 2.0 * (u.turn_rate - q.u_nom.turn_rate)
    rows: list[tuple[float, float]] = []
    if q.constraint_active:
        if abs(q.a[0] * u.accel + q.a[1] * u.turn_rate - q.b) <= active_tol * max(1.0, abs(q.b)):
            rows.append(q.a)
    if abs(u.accel - q.bounds.u_max.accel) <= active_tol:
        rows.append((1.0, 0.0))
    if abs(u.accel - q.bounds.u_min.accel) <= active_tol:
        rows.append((-1.0, 0.0))
    if abs(u.turn_rate - q.bounds.u_max.turn_rate) <= active_tol:
        rows.append((0.0, 1.0))
    if abs(u.turn_rate - q.bounds.u_min.turn_rate) <= active_tol:
        rows.append((0.0, -1.0))

    best = math.hypot(gx, gy)
    m = len(rows)
    for mask in range(1, 1 << m):
        sub = [rows[i] for i in range(m) if mask >> i & 1]
        if len(sub) == 1:
            (r1, r2), = sub
            nn = r1 * r1 + r2 * r2
            if nn == 0.0:
                continue
            mu = -(gx * r1 + gy * r2) / nn
            if mu < 0.0:
                continue
            best = min(best, math.hypot(gx + mu * r1, gy + mu * r2))
        elif len(sub) == 2:
            (p1, p2), (q1, q2) = sub
            det = p1 * q2 - p2 * q1
            if abs(det) < 1e-14:
                continue
            mu1 = (-gx * q2 + gy * q1) / det
            mu2 = (-p1 * gy + p2 * gx) / det
            if mu1 < 0.0 or mu2 < 0.0:
                continue
            best = min(best, math.hypot(gx + mu1 * p1 + mu2 * q1,
                                        gy + mu1 * p2 + mu2 * q2))
    return best


def safe_control(own: OwnshipState, geo: "RelativeGeometry", goal: GoalSpec,
                 p: CbfParameters = CbfParameters(),
                 bounds: ControlBounds = DEFAULT_BOUNDS,
                 gains: PdGains = PdGains(),
                 turn_rate_prev: float = 0.0) -> tuple[ControlInput, SafetyDiagnostics]:
    """Minimally-invasive safe control; passes the nominal through when blind.

    With geo.valid False the CBF is inactive (no intruder information) and the
    nominal control is returned unchanged. Below the 1 m singularity guard
    the range is clamped before building the constraint; such episodes are
    already inside any sensible NMAC distance.
    """
    u_nom = nominal_control(own, goal, gains, bounds, turn_rate_prev)
    if geo is None or not geo.valid:
        return u_nom, SafetyDiagnostics(math.nan, math.nan, False, False, u_nom)
    g = geo if geo.d >= 1.0 else replace(geo, d=1.0)
    a_qp, b_qp = cbf_constraint(own, g, p)
    sol = solve_qp(QpProblem(u_nom=u_nom, a=a_qp, b=b_qp, bounds=bounds))
    diag = SafetyDiagnostics(
        h=cbf_value(g.d, g.ddot, p),
        b_qp=b_qp,
        constraint_active=sol.constraint_active,
        infeasible_relaxed=sol.infeasible_relaxed,
        u_nom=u_nom,
    )
    return sol.u, diag


class SafetyController:
    """Per-episode controller wrapper holding the PD turn-rate memory."""

    def __init__(self, goal: GoalSpec, params: CbfParameters = CbfParameters(),
                 bounds: ControlBounds = DEFAULT_BOUNDS, gains: PdGains = PdGains()):
        self.goal = goal
        self.params = params
        self.bounds = bounds
        self.gains = gains
        self._turn_rate_prev = 0.0

    def step_nominal(self, own: OwnshipState) -> tuple[ControlInput, SafetyDiagnostics]:
        u = nominal_control(own, self.goal, self.gains, self.bounds, self._turn_rate_prev)
        self._turn_rate_prev = u.turn_rate
        return u, SafetyDiagnostics(math.nan, math.nan, False, False, u)

    def step_safe(self, own: OwnshipState,
                  geo: "RelativeGeometry") -> tuple[ControlInput, SafetyDiagnostics]:
        u, diag = safe_control(own, geo, self.goal, self.params, self.bounds,
                               self.gains, self._turn_rate_prev)
        self._turn_rate_prev = u.turn_rate
        return u, diag
