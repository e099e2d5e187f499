"""Multi-view fusion: image tracks -> 3D intruder tracks -> controller geometry.

Each intruder track carries two decoupled constant-velocity Kalman filters:
an angle filter over (azimuth, elevation, and their rates) and a range filter
over (range, range rate). Decoupling keeps the noisy monocular range from
degrading the smooth angular estimates; by construction neither filter sees
the other's measurements. New image-level detections associate to existing
tracks by great-circle angular distance; unmatched detections start new
tracks. Confirmed, fresh tracks are published as the relative geometry the
safety controller consumes, nearest threat first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .dynamics import OwnshipState
from .frames import (CameraModel, SphericalTrack, camera_to_ned,
                     camera_unproject, los_angle_alpha, ned_to_spherical, wrap_angle)

if TYPE_CHECKING:
    from .sensorsim import ImageTrack


@dataclass(frozen=True, slots=True)
class FusionConfig:
    """Filter tuning and track lifecycle thresholds."""

    gate: float = math.radians(5.0)         # association gate [rad]
    confirm_hits: int = 3                    # hits before a track is published
    stale_timeout: float = 1.0               # s without association before drop
    angle_sigma: float = math.radians(0.3)   # bearing measurement sigma [rad]
    range_noise_rel: float = 0.10            # range sigma as fraction of range
    angle_q: tuple = (1e-6, 1e-6, 1e-4, 1e-4)  # process noise rates, per second
    range_q: tuple = (0.5, 2.0)              # process noise rates, per second
    angle_sigma_floor: float = 1e-4          # rad, keeps R SPD in noiseless runs
    range_sigma_floor: float = 0.1           # m
    d_floor: float = 0.1                     # m, post-update range floor
    min_heading_speed: float = 0.1           # m/s below which heading is undefined


@dataclass
class AngleFilterState:
    """CV filter state over (theta, phi, theta_dot, phi_dot)."""

    mean: np.ndarray        # shape (4,)
    cov: np.ndarray         # shape (4, 4), SPD


@dataclass
class RangeFilterState:
    """CV filter state over (d, d_dot)."""

    mean: np.ndarray        # shape (2,)
    cov: np.ndarray         # shape (2, 2), SPD


@dataclass
class FusedIntruderTrack:
    """One 3D intruder hypothesis: paired angle and range filters."""

    track_id: int
    angles: AngleFilterState
    range_: RangeFilterState
    last_update: float      # s, time of the last associated measurement
    hits: int = 1
    chi_int_held: float = 0.0   # last well-defined heading estimate [rad]

    @property
    def theta(self) -> float:
        return float(self.angles.mean[0])

    @property
    def phi(self) -> float:
        return float(self.angles.mean[1])

    @property
    def d(self) -> float:
        return float(self.range_.mean[0])

    @property
    def d_dot(self) -> float:
        return float(self.range_.mean[1])


@dataclass(frozen=True, slots=True)
class RelativeGeometry:
    """Snapshot the safety controller consumes; ignore contents when not valid."""

    d: float                # m
    ddot: float             # m/s
    theta: float            # rad, ownship-frame azimuth of the intruder
    alpha: float            # rad, wrap(pi + theta)
    v_int_north: float      # m/s
    v_int_east: float       # m/s
    chi_int: float          # rad
    valid: bool
    heading_valid: bool = True


INVALID_GEOMETRY = RelativeGeometry(0.0, 0.0, 0.0, math.pi, 0.0, 0.0, 0.0,
                                    valid=False, heading_valid=False)


def measurement_from_image_track(tk: "ImageTrack", rig: Sequence[CameraModel],
                                 chi_own: float) -> SphericalTrack:
    """Unproject a per-camera detection and express it as NED sphericals."""
    cam = next((c for c in rig if c.cam_id == tk.camera_id), None)
    if cam is None:
        raise KeyError(f"no camera with id {tk.camera_id} in the rig")
    pt = camera_unproject(tk.pixel, tk.range_pred, cam)
    return ned_to_spherical(camera_to_ned(pt, cam, chi_own))


def _los_unit(theta: float, phi: float) -> tuple[float, float, float]:
    ce = math.cos(phi)
    return (ce * math.cos(theta), ce * math.sin(theta), -math.sin(phi))


def angular_distance(m: SphericalTrack, track: FusedIntruderTrack) -> float:
    """Great-circle angle between the measurement LOS and the track's LOS."""
    u = _los_unit(m.azimuth, m.elevation)
    v = _los_unit(track.theta, track.phi)
    cx = u[1] * v[2] - u[2] * v[1]
    cy = u[2] * v[0] - u[0] * v[2]
    cz = u[0] * v[1] - u[1] * v[0]
    dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
    return math.atan2(math.sqrt(cx * cx + cy * cy + cz * cz), dot)


def associate(m: SphericalTrack, tracks: Sequence[FusedIntruderTrack],
              gate: float) -> Optional[int]:
    """Id of the nearest track within the angular gate, or None."""
    if gate <= 0.0:
        raise ValueError("gate must be positive")
    best_id = None
    best = gate
    for tr in tracks:
        dist = angular_distance(m, tr)
        if dist <= best:
            best = dist
            best_id = tr.track_id
    return best_id


def _check_spd(mat: np.ndarray, name: str) -> None:
    if not np.allclose(mat, mat.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    if np.any(np.linalg.eigvalsh(mat) <= 0.0):
        raise ValueError(f"{name} must be positive definite")


def kf_predict(track: FusedIntruderTrack, dt: float,
               config: FusionConfig = FusionConfig()) -> FusedIntruderTrack:
    """Propagate both filters by dt with the CV model; adds Q*dt process noise.

    The predicted range is floored like the updated one: the state must stay
    physically meaningful even while coasting through a close pass.
    """
    if dt < 0.0:
        raise ValueError(f"dt must be nonnegative, got {dt}")
    if dt == 0.0:
        return track
    fa = np.eye(4)
    fa[0, 2] = dt
    fa[1, 3] = dt
    am = fa @ track.angles.mean
    am[0] = wrap_angle(float(am[0]))
    ac = fa @ track.angles.cov @ fa.T + np.diag(config.angle_q) * dt

    fr = np.array([[1.0, dt], [0.0, 1.0]])
    rm = fr @ track.range_.mean
    rm[0] = max(config.d_floor, float(rm[0]))
    rc = fr @ track.range_.cov @ fr.T + np.diag(config.range_q) * dt
    return replace(track, angles=AngleFilterState(am, ac),
                   range_=RangeFilterState(rm, rc))


def kf_update(track: FusedIntruderTrack, m: SphericalTrack,
              R_angles: np.ndarray, R_range: np.ndarray,
              d_floor: float = 0.1) -> FusedIntruderTrack:
    """Fuse one spherical measurement into both filters (Joseph-form update).

    The angle filter observes (theta, phi) with the azimuth innovation wrapped
    to (-pi, pi]; the range filter observes d, floored after the update.
    """
    R_angles = np.asarray(R_angles, dtype=float)
    R_range = np.asarray(R_range, dtype=float).reshape(1, 1)
    _check_spd(R_angles, "R_angles")
    _check_spd(R_range, "R_range")

    # Angle filter: H selects (theta, phi).
    am, ac = track.angles.mean, track.angles.cov
    h = np.zeros((2, 4))
    h[0, 0] = 1.0
    h[1, 1] = 1.0
    innov = np.array([wrap_angle(m.azimuth - am[0]),
                      wrap_angle(m.elevation - am[1])])
    s = h @ ac @ h.T + R_angles
    k = ac @ h.T @ np.linalg.inv(s)
    new_am = am + k @ innov
    new_am[0] = wrap_angle(float(new_am[0]))
    ikh = np.eye(4) - k @ h
    new_ac = ikh @ ac @ ikh.T + k @ R_angles @ k.T

    # Range filter: H selects d.
    rm, rc = track.range_.mean, track.range_.cov
    hr = np.array([[1.0, 0.0]])
    innov_r = np.array([m.range_m - rm[0]])
    sr = hr @ rc @ hr.T + R_range
    kr = rc @ hr.T @ np.linalg.inv(sr)
    new_rm = rm + kr @ innov_r
    new_rm[0] = max(d_floor, float(new_rm[0]))
    ikh_r = np.eye(2) - kr @ hr
    new_rc = ikh_r @ rc @ ikh_r.T + kr @ R_range @ kr.T

    return replace(track, angles=AngleFilterState(new_am, new_ac),
                   range_=RangeFilterState(new_rm, new_rc),
                   hits=track.hits + 1)


def estimate_intruder_velocity(own: OwnshipState,
                               track: FusedIntruderTrack) -> tuple[float, float]:
    """Recover (v_int_north, v_int_east) from the fused polar track.

    Differentiating p_int = p_own + d*(cos theta, sin theta) gives
    v_int = v_own + ddot*(cos, sin) + d*theta_dot*(-sin, cos). The azimuth
    rate enters the north component with -sin(theta).
    """
    d = track.d
    if d <= 0.0:
        raise ValueError("track range must be positive")
    theta = track.theta
    theta_dot = float(track.angles.mean[2])
    ddot = track.d_dot
    vn, ve = own.velocity_ne()
    ct, st = math.cos(theta), math.sin(theta)
    return (vn + ddot * ct - d * theta_dot * st,
            ve + ddot * st + d * theta_dot * ct)


def estimate_intruder_heading(v_int_north: float, v_int_east: float,
                              min_speed: float = 0.1) -> float:
    """Heading w.r.t. North; undefined below min_speed (caller holds last value)."""
    if math.hypot(v_int_north, v_int_east) < min_speed:
        raise ValueError("intruder speed below heading-observability floor")
    return math.atan2(v_int_east, v_int_north)


def publish(tracks: Sequence[FusedIntruderTrack], own: OwnshipState, t: float,
            config: FusionConfig = FusionConfig()) -> RelativeGeometry:
    """Geometry of the nearest confirmed, fresh track; invalid when none exists.

    Holds the last well-defined intruder heading while the speed estimate sits
    below the observability floor (heading_valid marks the distinction).
    """
    best = None
    for tr in tracks:
        if tr.hits < config.confirm_hits:
            continue
        if t - tr.last_update > config.stale_timeout:
            continue
        if best is None or tr.d < best.d:
            best = tr
    if best is None:
        return INVALID_GEOMETRY
    theta = best.theta
    v_n, v_e = estimate_intruder_velocity(own, best)
    heading_valid = math.hypot(v_n, v_e) >= config.min_heading_speed
    if heading_valid:
        chi_int = math.atan2(v_e, v_n)
        best.chi_int_held = chi_int
    else:
        chi_int = best.chi_int_held
    return RelativeGeometry(
        d=best.d, ddot=best.d_dot, theta=theta, alpha=los_angle_alpha(theta),
        v_int_north=v_n, v_int_east=v_e, chi_int=chi_int,
        valid=True, heading_valid=heading_valid,
    )


class MultiViewFusion:
    """Per-episode fusion engine: owns the track table and the clock.

    step() is called on every fusion tick with whatever image tracks arrived
    since the previous one; publish() snapshots the controller geometry.
    """

    def __init__(self, rig: Sequence[CameraModel],
                 config: FusionConfig = FusionConfig(), t0: float = 0.0,
                 record: bool = False):
        self.rig = list(rig)
        self.config = config
        self.tracks: list[FusedIntruderTrack] = []
        self._t = t0
        self._next_id = 1
        self.record = record
        self.records: list[tuple] = []

    def step(self, t: float, own: OwnshipState,
             image_tracks: Sequence["ImageTrack"]) -> None:
        """Predict tracks to t, associate/update with measurements, drop stale."""
        cfg = self.config
        dt = t - self._t
        if dt < 0.0:
            raise ValueError("fusion time must be nondecreasing")
        if dt > 0.0:
            self.tracks = [kf_predict(tr, dt, cfg) for tr in self.tracks]
        self._t = t

        for tk in image_tracks:
            m = measurement_from_image_track(tk, self.rig, own.heading)
            r_angles = np.eye(2) * max(cfg.angle_sigma, cfg.angle_sigma_floor) ** 2
            matched = associate(m, self.tracks, cfg.gate)
            if matched is None:
                self.tracks.append(self._new_track(m, t))
                continue
            for i, tr in enumerate(self.tracks):
                if tr.track_id == matched:
                    sigma_d = max(cfg.range_noise_rel * tr.d, cfg.range_sigma_floor)
                    updated = kf_update(tr, m, r_angles, np.array([[sigma_d**2]]),
                                        cfg.d_floor)
                    self.tracks[i] = replace(updated, last_update=t)
                    break

        self.tracks = [tr for tr in self.tracks
                       if t - tr.last_update <= cfg.stale_timeout]
        if self.record:
            for tr in self.tracks:
                v_n, v_e = estimate_intruder_velocity(own, tr)
                fresh = tr.hits >= cfg.confirm_hits
                self.records.append((
                    t, tr.track_id, tr.d, tr.d_dot, tr.theta, tr.phi,
                    float(tr.angles.mean[2]), v_n, v_e, tr.chi_int_held,
                    1 if fresh else 0))

    def records_to_csv(self) -> str:
        """Fused-track log export; columns follow the documented order."""
        lines = ["t,track_id,d,d_dot,theta,phi,theta_dot,v_int_n,v_int_e,chi_int,valid"]
        for row in self.records:
            lines.append(",".join("%.9g" % x if isinstance(x, float) else str(x)
                                  for x in row))
        return "\n".join(lines) + "\n"

    def publish(self, own: OwnshipState, t: float) -> RelativeGeometry:
        return publish(self.tracks, own, t, self.config)

    def _new_track(self, m: SphericalTrack, t: float) -> FusedIntruderTrack:
        cfg = self.config
        sigma_a = max(cfg.angle_sigma, cfg.angle_sigma_floor)
        sigma_d = max(cfg.range_noise_rel * m.range_m, cfg.range_sigma_floor)
        track = FusedIntruderTrack(
            track_id=self._next_id,
            angles=AngleFilterState(
                mean=np.array([m.azimuth, m.elevation, 0.0, 0.0]),
                cov=np.diag([sigma_a**2, sigma_a**2, 0.2**2, 0.1**2]),
            ),
            range_=RangeFilterState(
                mean=np.array([m.range_m, 0.0]),
                cov=np.diag([sigma_d**2, 30.0**2]),
            ),
            last_update=t,
        )
        self._next_id += 1
        return track
