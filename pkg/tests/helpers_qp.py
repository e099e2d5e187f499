"""Brute-force grid oracles for the 2-D safety-filter QP (test-only)."""

import numpy as np

from daasim.safety import QpProblem


def _objective(q: QpProblem, u1, u2):
    return (u1 - q.u_nom.accel) ** 2 + (u2 - q.u_nom.turn_rate) ** 2


def grid_search(q: QpProblem, n: int = 401):
    """Dense feasible-grid minimizer of ||u - u_nom||^2 over the box ∩ halfspace.

    Returns (u1, u2, objective) of the best grid point, or None when no grid
    point is feasible. Independent of the active-set solver by construction.
    """
    lo1, lo2 = q.bounds.u_min.accel, q.bounds.u_min.turn_rate
    hi1, hi2 = q.bounds.u_max.accel, q.bounds.u_max.turn_rate
    g1, g2 = np.meshgrid(np.linspace(lo1, hi1, n), np.linspace(lo2, hi2, n),
                         indexing="ij")
    feasible = q.a[0] * g1 + q.a[1] * g2 <= q.b + 1e-12
    if not feasible.any():
        return None
    obj = np.where(feasible, _objective(q, g1, g2), np.inf)
    k = int(np.argmin(obj))
    i, j = divmod(k, n)
    return float(g1[i, j]), float(g2[i, j]), float(obj[i, j])


def refined_search(q: QpProblem, n: int = 200_001):
    """Local refinement of the grid oracle: dense 1-D search of the boundary.

    The strictly convex objective attains its constrained minimum either at
    the box-clipped nominal (when feasible) or on the boundary of the feasible
    region, which consists of feasible parts of the four box edges plus the
    in-box chord of the halfspace boundary. Each segment is sampled densely;
    since the objective is quadratic with unit curvature along any line, the
    best sample sits within (step/2)^2 of the true minimum objective.

    Returns (u1, u2, objective) or None when the region is empty.
    """
    a1, a2, b = q.a[0], q.a[1], q.b
    lo1, lo2 = q.bounds.u_min.accel, q.bounds.u_min.turn_rate
    hi1, hi2 = q.bounds.u_max.accel, q.bounds.u_max.turn_rate
    tol = 1e-12

    best = None

    def consider(u1, u2):
        nonlocal best
        if u1.size == 0:
            return
        obj = _objective(q, u1, u2)
        k = int(np.argmin(obj))
        cand = (float(u1[k]), float(u2[k]), float(obj[k]))
        if best is None or cand[2] < best[2]:
            best = cand

    c1 = min(max(q.u_nom.accel, lo1), hi1)
    c2 = min(max(q.u_nom.turn_rate, lo2), hi2)
    if a1 * c1 + a2 * c2 <= b + tol:
        consider(np.array([c1]), np.array([c2]))

    # Halfspace boundary chord, parametrized along the better-conditioned axis.
    if abs(a2) >= abs(a1) and a2 != 0.0:
        u1 = np.linspace(lo1, hi1, n)
        u2 = (b - a1 * u1) / a2
        m = (u2 >= lo2 - tol) & (u2 <= hi2 + tol)
        consider(u1[m], np.clip(u2[m], lo2, hi2))
    elif a1 != 0.0:
        u2 = np.linspace(lo2, hi2, n)
        u1 = (b - a2 * u2) / a1
        m = (u1 >= lo1 - tol) & (u1 <= hi1 + tol)
        consider(np.clip(u1[m], lo1, hi1), u2[m])

    # Chord endpoints (hyperplane ∩ box edge): the sampled meshes straddle
    # them, and a segment-endpoint optimum has nonvanishing gradient there.
    if a2 != 0.0:
        for v1 in (lo1, hi1):
            v2 = (b - a1 * v1) / a2
            if lo2 - tol <= v2 <= hi2 + tol:
                consider(np.array([v1]), np.array([min(max(v2, lo2), hi2)]))
    if a1 != 0.0:
        for v2 in (lo2, hi2):
            v1 = (b - a2 * v2) / a1
            if lo1 - tol <= v1 <= hi1 + tol:
                consider(np.array([min(max(v1, lo1), hi1)]), np.array([v2]))

    # Feasible parts of the four box edges.
    for fixed_axis, fixed_val in ((0, lo1), (0, hi1), (1, lo2), (1, hi2)):
        if fixed_axis == 0:
            u2 = np.linspace(lo2, hi2, n)
            u1 = np.full_like(u2, fixed_val)
        else:
            u1 = np.linspace(lo1, hi1, n)
            u2 = np.full_like(u1, fixed_val)
        m = a1 * u1 + a2 * u2 <= b + tol
        consider(u1[m], u2[m])

    return best
