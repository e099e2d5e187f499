"""Deterministic multi-rate episode engine and Monte-Carlo harness.

Every episode runs a fixed-step loop at the base rate (600 Hz, the least
common multiple of the 8 Hz sensing, 24 Hz fusion, and 50 Hz control loops,
so every loop fires on exact base ticks). Within a coincident tick the order
is physics -> sensing -> fusion -> control -> log, mirroring the causal order
of the real pipeline. Episodes are pure functions of (scenario, mode, seed):
the encounter sample comes from the seed and the sensor noise stream from
(seed, tick), so a Nominal/ViSafe pair with one seed shares the intruder
trajectory and the raw noise draws.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .dynamics import (ControlBounds, ControlInput, DEFAULT_BOUNDS, IntruderState,
                       OwnshipState, clamp_control, ownship_step)
from .frames import CameraModel, NedVector, default_rig, los_angle_alpha
from .fusion import (FusionConfig, INVALID_GEOMETRY, MultiViewFusion,
                     RelativeGeometry)
from .safety import CbfParameters, GoalSpec, PdGains, SafetyController
from .sensorsim import DetectionModel, HEXAROTOR, IntruderProfile, sense


class ConfigurationError(ValueError):
    """Raised for scenarios that cannot produce the requested encounter."""


class Geometry(enum.Enum):
    HEAD_ON = "head_on"
    OVERTAKE = "overtake"
    CROSSING = "crossing"


class HorizonSide(enum.Enum):
    ABOVE = "above"
    BELOW = "below"


class Mode(enum.Enum):
    NOMINAL = "nominal"
    VISAFE = "visafe"


@dataclass(frozen=True, slots=True)
class RateConfig:
    """Loop periods; each must be an integer multiple of the base step."""

    base_step: float = 1.0 / 600.0
    sensor_period: float = 1.0 / 8.0
    fusion_period: float = 1.0 / 24.0
    control_period: float = 1.0 / 50.0

    def ticks(self, period: float) -> int:
        ratio = period / self.base_step
        n = round(ratio)
        if n < 1 or abs(ratio - n) > 1e-9:
            raise ValueError(
                f"period {period} is not an integer multiple of base step {self.base_step}")
        return n


@dataclass(frozen=True, slots=True)
class Scenario:
    """One encounter configuration (a row of the benchmark matrix)."""

    label: str
    geometry: Geometry
    ownship_speed: float            # m/s
    intruder_speed: float           # m/s
    profile: IntruderProfile = HEXAROTOR
    horizon_side: HorizonSide = HorizonSide.ABOVE
    initial_range: float = 430.0    # m, > d_max recommended
    corridor_extent: float = 20.0   # m, uniform jitter along the intruder corridor
    lateral_offset: float = 20.0    # m, head-on/overtake corridor offset
    environment_factor: float = 1.0
    d_thresh: float = 50.0          # m, separation threshold
    bounds: ControlBounds = DEFAULT_BOUNDS
    duration: float = 60.0          # s
    horizon_offset: float = 15.0    # m, altitude split for above/below cases
    ownship_altitude: float = 50.0  # m

    def __post_init__(self):
        if self.ownship_speed < 0.0 or self.intruder_speed < 0.0:
            raise ConfigurationError("speeds must be nonnegative")
        if self.initial_range <= 0.0 or self.duration <= 0.0:
            raise ConfigurationError("initial range and duration must be positive")
        if not 0.0 <= self.environment_factor <= 1.0:
            raise ConfigurationError("environment factor must be in [0, 1]")

    def closure_rate(self) -> float:
        """Horizontal closure rate of the unperturbed encounter [m/s]."""
        if self.geometry is Geometry.HEAD_ON:
            return self.ownship_speed + self.intruder_speed
        if self.geometry is Geometry.OVERTAKE:
            return self.ownship_speed - self.intruder_speed
        return math.hypot(self.ownship_speed, self.intruder_speed)


def build_encounter(s: Scenario, rng: np.random.Generator,
                    ) -> tuple[OwnshipState, IntruderState, GoalSpec]:
    """Sample one encounter: ownship at the origin heading North, goal beyond
    the conflict point, intruder start jittered along its corridor."""
    jitter = float(rng.uniform(-s.corridor_extent, s.corridor_extent))
    down_own = -s.ownship_altitude
    sign = -1.0 if s.horizon_side is HorizonSide.ABOVE else 1.0
    down_int = down_own + sign * s.horizon_offset
    own = OwnshipState(NedVector(0.0, 0.0, down_own), s.ownship_speed, 0.0)

    if (s.geometry is Geometry.OVERTAKE
            and s.ownship_speed <= s.intruder_speed):
        raise ConfigurationError(
            "overtake needs the ownship faster than the intruder "
            f"({s.ownship_speed} vs {s.intruder_speed} m/s)")
    closure = s.closure_rate()
    if closure <= 0.0:
        raise ConfigurationError("scenario has no positive closure rate")
    t_conflict = s.initial_range / closure

    if s.geometry is Geometry.HEAD_ON:
        intr = IntruderState(
            NedVector(s.initial_range + jitter, s.lateral_offset, down_int),
            s.intruder_speed, math.pi)
    elif s.geometry is Geometry.OVERTAKE:
        intr = IntruderState(
            NedVector(s.initial_range + jitter, s.lateral_offset, down_int),
            s.intruder_speed, 0.0)
    else:  # CROSSING: intruder inbound from the east on a perpendicular path
        intr = IntruderState(
            NedVector(s.ownship_speed * t_conflict,
                      s.intruder_speed * t_conflict + jitter,
                      down_int),
            s.intruder_speed, -math.pi / 2.0)

    # Goal past the conflict point so the episode spans the whole encounter.
    goal = GoalSpec(NedVector(s.ownship_speed * t_conflict + 150.0, 0.0, down_own),
                    s.ownship_speed)
    return own, intr, goal


# Fixed column order of the per-tick episode record (and of the CSV export).
LOG_COLUMNS = (
    "t", "own_north", "own_east", "own_down", "own_speed", "own_heading",
    "intr_north", "intr_east", "intr_down", "dist_3d", "dist_h",
    "geo_valid", "geo_d", "geo_ddot", "geo_theta", "h",
    "u_nom_accel", "u_nom_turn", "u_accel", "u_turn",
    "constraint_active", "infeasible_relaxed",
)


@dataclass
class EpisodeLog:
    """Per-tick record of one episode plus its identity and thresholds."""

    scenario_label: str
    mode: Mode
    seed: int
    d_thresh: float
    data: dict[str, np.ndarray]

    @property
    def n_rows(self) -> int:
        return len(self.data["t"])

    def to_csv_bytes(self) -> bytes:
        """Deterministic CSV serialization with the documented fixed header."""
        cols = [self.data[name] for name in LOG_COLUMNS]
        lines = [",".join(LOG_COLUMNS)]
        for i in range(self.n_rows):
            lines.append(",".join("%.9g" % c[i] for c in cols))
        lines.append("")
        return "\n".join(lines).encode()


def _truth_geometry(own: OwnshipState, intr: IntruderState) -> RelativeGeometry:
    """Exact horizontal-plane geometry, the perfect-information feed."""
    dn = intr.position.north - own.position.north
    de = intr.position.east - own.position.east
    d = math.hypot(dn, de)
    if d <= 0.0:
        return INVALID_GEOMETRY
    ovn, ove = own.velocity_ne()
    ivn, ive = intr.velocity_ne()
    theta = math.atan2(de, dn)
    return RelativeGeometry(
        d=d, ddot=(dn * (ivn - ovn) + de * (ive - ove)) / d,
        theta=theta, alpha=los_angle_alpha(theta),
        v_int_north=ivn, v_int_east=ive, chi_int=intr.heading,
        valid=True,
    )


def run_episode(s: Scenario, mode: Mode, seed: int, *,
                rig: Optional[Sequence[CameraModel]] = None,
                detection: Optional[DetectionModel] = None,
                cbf: Optional[CbfParameters] = None,
                rates: Optional[RateConfig] = None,
                gains: PdGains = PdGains(),
                fusion_config: Optional[FusionConfig] = None,
                perfect_geometry: bool = False,
                goal_radius: float = 10.0) -> EpisodeLog:
    """Run one episode; deterministic given (scenario, mode, seed, configs).

    Sensing and fusion run in both modes so the logs stay comparable; only the
    control law differs. With perfect_geometry the synthetic sensor and fusion
    are bypassed and the controller sees exact horizontal-plane geometry
    refreshed at the control rate. The scenario owns the environment factor
    and the separation threshold: they override whatever a caller-supplied
    detection model or CBF parameter set carries. Terminates at the scenario
    duration or once the ownship is within goal_radius of its goal.
    """
    rates = rates or RateConfig()
    rig = list(rig) if rig is not None else default_rig()
    detection = detection or DetectionModel(environment_factor=s.environment_factor)
    if detection.environment_factor != s.environment_factor:
        detection = replace(detection, environment_factor=s.environment_factor)
    cbf = cbf or CbfParameters()
    if cbf.d_thresh != s.d_thresh:
        cbf = replace(cbf, d_thresh=s.d_thresh)
    if fusion_config is None:
        fusion_config = FusionConfig(angle_sigma=max(detection.angle_noise, 1e-4),
                                     range_noise_rel=detection.range_noise_rel)

    base = rates.base_step
    sensor_every = rates.ticks(rates.sensor_period)
    fusion_every = rates.ticks(rates.fusion_period)
    control_every = rates.ticks(rates.control_period)
    n_steps = round(s.duration / base)

    own, intr, goal = build_encounter(s, np.random.default_rng((seed, 0)))
    ivn, ive = intr.velocity_ne()  # constant over the episode
    dthr_n = cbf.d_thresh**cbf.n
    controller = SafetyController(goal, cbf, s.bounds, gains)
    engine = None if perfect_geometry else MultiViewFusion(rig, fusion_config)
    geo = INVALID_GEOMETRY
    pending: list = []
    u = ControlInput(0.0, 0.0)
    u_nom = u
    h_log = math.nan
    c_active = 0.0
    infeasible = 0.0
    visafe = mode is Mode.VISAFE

    # The intruder flies a constant-velocity line; accumulate its position as
    # scalars (bit-identical to repeated intruder_step calls) and materialize
    # an IntruderState only on the ticks that need one.
    in_n, in_e, in_down = (intr.position.north, intr.position.east,
                           intr.position.down)
    step_n = base * intr.speed * math.cos(intr.heading)
    step_e = base * intr.speed * math.sin(intr.heading)
    goal_n, goal_e = goal.position.north, goal.position.east

    n_rows = n_steps + 1
    buf = np.empty((n_rows, len(LOG_COLUMNS)))
    rows = 0
    for i in range(n_rows):
        t = i * base
        if i > 0:
            own = ownship_step(own, u, base)
            in_n += step_n
            in_e += step_e

        if engine is not None:
            if i % sensor_every == 0:
                intr = IntruderState(NedVector(in_n, in_e, in_down),
                                     intr.speed, intr.heading)
                pending = sense(own, intr, s.profile, rig, detection,
                                np.random.default_rng((seed, 1 + i)), t)
            if i % fusion_every == 0:
                engine.step(t, own, pending)
                pending = []
                geo = engine.publish(own, t)

        if i % control_every == 0:
            if perfect_geometry:
                intr = IntruderState(NedVector(in_n, in_e, in_down),
                                     intr.speed, intr.heading)
                geo = _truth_geometry(own, intr)
            if visafe:
                u, diag = controller.step_safe(own, geo)
            else:
                u, diag = controller.step_nominal(own)
            u = clamp_control(u, s.bounds)
            u_nom = diag.u_nom
            c_active = 1.0 if diag.constraint_active else 0.0
            infeasible = 1.0 if diag.infeasible_relaxed else 0.0

        op = own.position
        dn = in_n - op.north
        de = in_e - op.east
        dd = in_down - op.down
        dist_h = math.hypot(dn, de)
        if perfect_geometry:
            # True barrier value along the trajectory (horizontal plane).
            if dist_h > 0.0:
                ovn, ove = own.velocity_ne()
                ddot_h = (dn * (ivn - ovn) + de * (ive - ove)) / dist_h
                h_log = cbf.c + dthr_n - dist_h**cbf.n - cbf.k * ddot_h
            else:
                h_log = math.nan
        else:
            h_log = (cbf.c + dthr_n - geo.d**cbf.n - cbf.k * geo.ddot
                     if geo.valid and geo.d > 0.0 else math.nan)

        buf[i] = (t, op.north, op.east, op.down, own.speed, own.heading,
                  in_n, in_e, in_down, math.sqrt(dn * dn + de * de + dd * dd),
                  dist_h, 1.0 if geo.valid else 0.0, geo.d, geo.ddot, geo.theta,
                  h_log, u_nom.accel, u_nom.turn_rate, u.accel, u.turn_rate,
                  c_active, infeasible)
        rows = i + 1

        if math.hypot(goal_n - op.north, goal_e - op.east) <= goal_radius:
            break

    cols = {name: buf[:rows, j].copy() for j, name in enumerate(LOG_COLUMNS)}
    return EpisodeLog(s.label, mode, seed, s.d_thresh, cols)


def run_monte_carlo(s: Scenario, modes: Sequence[Mode], n: int, base_seed: int,
                    **episode_kwargs) -> list[EpisodeLog]:
    """Paired batch: seeds base_seed..base_seed+n-1, each run in every mode.

    Logs are ordered by seed then by mode order. Same-seed episodes share the
    encounter sample and the raw sensor noise stream across modes.
    """
    if n < 1:
        raise ValueError("need at least one episode")
    return [run_episode(s, mode, seed, **episode_kwargs)
            for seed in range(base_seed, base_seed + n)
            for mode in modes]


def _episode_task(args) -> tuple:
    """Worker: run one episode, optionally write its CSV, return a summary."""
    from .metrics import summarize
    (scenario, mode, seed, kwargs, csv_path, nmac_threshold) = args
    log = run_episode(scenario, mode, seed, **kwargs)
    if csv_path is not None:
        with open(csv_path, "wb") as fh:
            fh.write(log.to_csv_bytes())
    return summarize(log, nmac_threshold)


def run_monte_carlo_summaries(s: Scenario, modes: Sequence[Mode], n: int,
                              base_seed: int, *, jobs: int = 1,
                              nmac_threshold: float = 30.0,
                              csv_dir=None, **episode_kwargs) -> list:
    """Memory-bounded batch runner: episodes are reduced to summaries.

    With jobs > 1 episodes run in worker processes; outputs are reordered by
    (seed, mode) before returning, so results are independent of scheduling.
    """
    tasks = []
    for seed in range(base_seed, base_seed + n):
        for mode in modes:
            csv_path = None
            if csv_dir is not None:
                sub = csv_dir / s.label / mode.value
                sub.mkdir(parents=True, exist_ok=True)
                csv_path = sub / f"episode_{seed}.csv"
            tasks.append((s, mode, seed, episode_kwargs, csv_path, nmac_threshold))
    if jobs <= 1:
        return [_episode_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_episode_task, tasks, chunksize=1))
