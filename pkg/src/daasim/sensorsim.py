"""Parametric synthetic stand-in for the vision detection stack.

Emits per-camera intruder detections with multiplicative range noise and
additive bearing noise. A detection requires the intruder inside a camera's
FOV, an apparent size of at least ``min_pixels`` (which caps the detection
range at d_max = focal * length / min_pixels), and a per-frame Bernoulli draw
whose probability depends on whether the intruder sits above or below the
horizon, scaled by a weather/lighting factor.

The draw pattern is fixed per call (one uniform + three normals per camera,
consumed whether or not a detection is emitted), so paired episodes that share
a seed see identical raw noise streams regardless of how the ownship moves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import IntruderState, OwnshipState
from .frames import CameraModel, PixelPoint, project_to_camera

# Apparent-size scaling constant implied by the 95%-track threshold of
# 14 px and the 163.2 * length detection-range rule: 14 * 163.2 = 2284.8.
DETECTION_FOCAL_PX = 2284.8


@dataclass(frozen=True, slots=True)
class IntruderProfile:
    """Intruder platform, characterized by its frontal diagonal length."""

    frontal_length: float   # m, > 0
    label: str = "intruder"

    def __post_init__(self):
        if self.frontal_length <= 0.0:
            raise ValueError("frontal length must be positive")


# Frontal lengths back-solved from the published reliable detection ranges
# (287 m and 525 m) at 163.2 m of range per meter of length.
HEXAROTOR = IntruderProfile(287.0 / 163.2, "hexarotor")
VTOL = IntruderProfile(525.0 / 163.2, "vtol")
BELL_407 = IntruderProfile(4.27, "bell407")

PROFILES = {p.label: p for p in (HEXAROTOR, VTOL, BELL_407)}


@dataclass(frozen=True, slots=True)
class DetectionModel:
    """Detection statistics and noise of the synthetic vision stack."""

    min_pixels: float = 14.0                 # apparent-size track threshold
    p_track_at_threshold: float = 0.95       # track probability at min_pixels
    range_noise_rel: float = 0.10            # sigma as a fraction of true range
    angle_noise: float = math.radians(0.3)   # bearing sigma [rad]
    p_detect_above_horizon: float = 0.95     # per-frame detection probability
    p_detect_below_horizon: float = 0.5
    environment_factor: float = 1.0          # 1.0 clear ... 0.4 worst weather
    focal_px: float = DETECTION_FOCAL_PX     # apparent-size scale, independent of the rig
    clutter_rate: float = 0.0                # Poisson false tracks per camera-tick

    def __post_init__(self):
        for name in ("p_track_at_threshold", "p_detect_above_horizon",
                     "p_detect_below_horizon", "environment_factor"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.range_noise_rel < 0.0 or self.angle_noise < 0.0 or self.clutter_rate < 0.0:
            raise ValueError("noise parameters must be nonnegative")
        if self.min_pixels <= 0.0 or self.focal_px <= 0.0:
            raise ValueError("min_pixels and focal_px must be positive")


NOISELESS_MODEL = DetectionModel(range_noise_rel=0.0, angle_noise=0.0,
                                 p_detect_above_horizon=1.0,
                                 p_detect_below_horizon=1.0)


@dataclass(frozen=True, slots=True)
class ImageTrack:
    """One per-camera synthetic detection at one sensor tick."""

    camera_id: int
    pixel: PixelPoint
    range_pred: float       # m, monocular range estimate, > 0
    apparent_px: float      # apparent target size [px]
    t: float                # s, capture time
    track_id: int

    def __post_init__(self):
        if self.range_pred <= 0.0:
            raise ValueError("predicted range must be positive")


def apparent_pixels(length: float, d: float, focal_px: float) -> float:
    """Apparent size [px] of a target of the given length at range d."""
    if d <= 0.0:
        raise ValueError(f"range must be positive, got {d}")
    return focal_px * length / d


def max_detection_range(profile: IntruderProfile, model: DetectionModel,
                        focal_px: float | None = None) -> float:
    """Range at which the apparent size falls to the track threshold."""
    f = model.focal_px if focal_px is None else focal_px
    return f * profile.frontal_length / model.min_pixels


def reaction_time(d_max: float, closure: float) -> float:
    """Time from first reliable detection to conflict at a constant closure."""
    if closure <= 0.0:
        raise ValueError(f"closure must be positive, got {closure}")
    return d_max / closure


def detections_to_csv(tracks: Sequence[ImageTrack]) -> str:
    """Detection log export: one row per emitted image track."""
    lines = ["t,cam_id,u,v,range_pred,track_id"]
    for tk in tracks:
        lines.append("%.9g,%d,%.9g,%.9g,%.9g,%d" % (
            tk.t, tk.camera_id, tk.pixel.u, tk.pixel.v, tk.range_pred, tk.track_id))
    return "\n".join(lines) + "\n"


def sense(own: OwnshipState, intr: IntruderState, profile: IntruderProfile,
          rig: Sequence[CameraModel], model: DetectionModel,
          rng: np.random.Generator, t: float) -> list[ImageTrack]:
    """Synthetic detections of the intruder for one sensor tick.

    At most one track per camera. An empty list is a normal outcome: the
    intruder may be out of every FOV, too small, or simply missed this frame.
    """
    rel = intr.position - own.position
    true_range = rel.norm()
    above = intr.position.down < own.position.down
    p_base = model.p_detect_above_horizon if above else model.p_detect_below_horizon
    p_detect = p_base * model.environment_factor
    detectable = true_range > 0.0 and apparent_pixels(
        profile.frontal_length, true_range, model.focal_px) >= model.min_pixels

    tracks: list[ImageTrack] = []
    for cam in rig:
        # Fixed draw pattern per camera keeps noise streams mode-independent.
        p_draw = rng.random()
        n_u, n_v, n_r = rng.standard_normal(3)
        if detectable and p_draw < p_detect:
            px, visible = project_to_camera(rel, cam, own.heading)
            if visible:
                sigma_px = cam.focal_px * model.angle_noise
                u = min(max(px.u + n_u * sigma_px, 0.0), float(cam.width_px))
                v = min(max(px.v + n_v * sigma_px, 0.0), float(cam.height_px))
                range_pred = max(0.1, true_range * (1.0 + n_r * model.range_noise_rel))
                tracks.append(ImageTrack(
                    camera_id=cam.cam_id,
                    pixel=PixelPoint(u, v),
                    range_pred=range_pred,
                    apparent_px=apparent_pixels(profile.frontal_length, true_range,
                                                model.focal_px),
                    t=t,
                    track_id=cam.cam_id,
                ))
        if model.clutter_rate > 0.0:
            for j in range(int(rng.poisson(model.clutter_rate))):
                tracks.append(ImageTrack(
                    camera_id=cam.cam_id,
                    pixel=PixelPoint(rng.uniform(0.0, cam.width_px),
                                     rng.uniform(0.0, cam.height_px)),
                    range_pred=rng.uniform(10.0, max_detection_range(profile, model)),
                    apparent_px=model.min_pixels,
                    t=t,
                    track_id=1000 + j,
                ))
    return tracks
