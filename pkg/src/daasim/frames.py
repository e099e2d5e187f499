"""Coordinate frames and geometric conversions for the sensing pipeline.

Conventions used throughout the package:

- NED frame: x = North, y = East, z = Down (right-handed). Azimuth is
  measured clockwise-positive from North viewed from above, i.e.
  theta = atan2(east, north). Elevation is positive above the horizon,
  phi = -asin(down / range).
- Body frame: x forward, y right, z down. The vehicle flies with zero
  roll and pitch; only the heading (yaw) rotates body rays into NED.
- Camera frame: x right, y down, z forward (optical axis). A camera with
  zero mount yaw/pitch looks along body x.

All angles are radians, all distances meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

TWO_PI = 2.0 * math.pi


class DegenerateGeometryError(ValueError):
    """Raised when a conversion is undefined (e.g. zero-length line of sight)."""


def wrap_angle(a: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi].

    Idempotent and 2*pi-periodic; the -pi boundary maps to +pi.
    """
    return -((math.pi - a) % TWO_PI - math.pi)


@dataclass(frozen=True, slots=True)
class NedVector:
    """Position or displacement in the local North-East-Down frame [m]."""

    north: float
    east: float
    down: float

    def norm(self) -> float:
        return math.sqrt(self.north**2 + self.east**2 + self.down**2)

    def horizontal_norm(self) -> float:
        return math.hypot(self.north, self.east)

    def __sub__(self, other: "NedVector") -> "NedVector":
        return NedVector(self.north - other.north, self.east - other.east,
                         self.down - other.down)

    def __add__(self, other: "NedVector") -> "NedVector":
        return NedVector(self.north + other.north, self.east + other.east,
                         self.down + other.down)


@dataclass(frozen=True, slots=True)
class SphericalTrack:
    """Range / azimuth / elevation of a line of sight in the ownship NED frame."""

    range_m: float          # > 0
    azimuth: float          # rad, wrapped to (-pi, pi]
    elevation: float        # rad, in [-pi/2, pi/2]

    def __post_init__(self):
        if not (self.range_m > 0.0 and math.isfinite(self.range_m)):
            raise ValueError(f"range must be positive and finite, got {self.range_m}")
        if abs(self.elevation) > math.pi / 2 + 1e-12:
            raise ValueError(f"elevation out of [-pi/2, pi/2]: {self.elevation}")


@dataclass(frozen=True, slots=True)
class PixelPoint:
    """Image-plane point: u = column, v = row, in pixels."""

    u: float
    v: float


# Camera axes (x right, y down, z fwd) expressed in body axes (fwd, right, down):
# cam z -> body x, cam x -> body y, cam y -> body z.
_CAM_TO_BODY_AXES = ((0.0, 0.0, 1.0),
                     (1.0, 0.0, 0.0),
                     (0.0, 1.0, 0.0))


def _mat3_mul(a, b):
    return tuple(
        tuple(sum(a[i][k] * b[k][j] for k in range(3)) for j in range(3))
        for i in range(3)
    )


@dataclass(frozen=True, slots=True)
class CameraModel:
    """Pinhole camera rigidly mounted on the body frame.

    A single focal length serves both axes; the principal point sits at the
    image center and there is no distortion. The focal length must be
    consistent with (width, hfov) to within 1%.
    """

    cam_id: int
    mount_yaw: float        # rad, body frame, positive toward the right wing
    mount_pitch: float      # rad, positive tilts the optical axis up
    hfov: float             # rad, full horizontal field of view
    vfov: float             # rad, full vertical field of view
    width_px: int
    height_px: int
    focal_px: float
    _cam_to_body: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0.0 < self.hfov < math.pi and 0.0 < self.vfov < math.pi):
            raise ValueError("FOVs must lie in (0, pi)")
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("image resolution must be positive")
        nominal = (self.width_px / 2.0) / math.tan(self.hfov / 2.0)
        if not (self.focal_px > 0.0 and abs(self.focal_px - nominal) <= 0.01 * nominal):
            raise ValueError(
                f"focal length {self.focal_px:.1f} px inconsistent with hfov "
                f"(expected ~{nominal:.1f} px)")
        cy, sy = math.cos(self.mount_yaw), math.sin(self.mount_yaw)
        cp, sp = math.cos(self.mount_pitch), math.sin(self.mount_pitch)
        r_yaw = ((cy, -sy, 0.0), (sy, cy, 0.0), (0.0, 0.0, 1.0))
        r_pitch = ((cp, 0.0, sp), (0.0, 1.0, 0.0), (-sp, 0.0, cp))
        object.__setattr__(self, "_cam_to_body",
                           _mat3_mul(_mat3_mul(r_yaw, r_pitch), _CAM_TO_BODY_AXES))

    @property
    def cx(self) -> float:
        return self.width_px / 2.0

    @property
    def cy(self) -> float:
        return self.height_px / 2.0


def focal_from_fov(width_px: int, hfov: float) -> float:
    """Pinhole focal length [px] implied by image width and horizontal FOV."""
    return (width_px / 2.0) / math.tan(hfov / 2.0)


def make_camera(cam_id: int, mount_yaw_deg: float, mount_pitch_deg: float = 0.0,
                hfov_deg: float = 38.0, vfov_deg: float = 48.0,
                width_px: int = 1224, height_px: int = 1024) -> CameraModel:
    """Build a CameraModel from degree-valued mount/FOV configuration."""
    hfov = math.radians(hfov_deg)
    return CameraModel(
        cam_id=cam_id,
        mount_yaw=math.radians(mount_yaw_deg),
        mount_pitch=math.radians(mount_pitch_deg),
        hfov=hfov,
        vfov=math.radians(vfov_deg),
        width_px=width_px,
        height_px=height_px,
        focal_px=focal_from_fov(width_px, hfov),
    )


def default_rig(total_hfov_deg: float = 220.0, vfov_deg: float = 48.0,
                n_cameras: int = 6, overlap_deg: float = 2.0,
                width_px: int = 1224, height_px: int = 1024) -> list[CameraModel]:
    """Evenly-yawed multi-camera rig tiling the given total horizontal FOV.

    Adjacent cameras overlap by ``overlap_deg`` so cross-camera handoff is
    exercised; the per-camera hfov is (total + (n-1)*overlap) / n.
    """
    if n_cameras < 1:
        raise ValueError("need at least one camera")
    hfov_deg = (total_hfov_deg + (n_cameras - 1) * overlap_deg) / n_cameras
    spacing = hfov_deg - overlap_deg
    first = -0.5 * (n_cameras - 1) * spacing
    return [
        make_camera(i, mount_yaw_deg=first + i * spacing, hfov_deg=hfov_deg,
                    vfov_deg=vfov_deg, width_px=width_px, height_px=height_px)
        for i in range(n_cameras)
    ]


def ned_to_spherical(p: NedVector) -> SphericalTrack:
    """Convert a NED displacement to (range, azimuth, elevation).

    range = |p|, azimuth = atan2(east, north), elevation = -asin(down/range).
    """
    d = p.norm()
    if d <= 0.0:
        raise DegenerateGeometryError("zero-length vector has no direction")
    return SphericalTrack(
        range_m=d,
        azimuth=math.atan2(p.east, p.north),
        elevation=-math.asin(max(-1.0, min(1.0, p.down / d))),
    )


def spherical_to_ned(s: SphericalTrack) -> NedVector:
    """Inverse of :func:`ned_to_spherical`."""
    ce = math.cos(s.elevation)
    return NedVector(
        north=s.range_m * ce * math.cos(s.azimuth),
        east=s.range_m * ce * math.sin(s.azimuth),
        down=-s.range_m * math.sin(s.elevation),
    )


def los_angle_alpha(theta: float) -> float:
    """Line-of-sight angle in the intruder-centered NED frame: wrap(pi + theta)."""
    return wrap_angle(math.pi + theta)


def camera_unproject(px: PixelPoint, range_m: float, cam: CameraModel) -> tuple[float, float, float]:
    """Pixel + Euclidean range -> camera-frame 3D point on the pixel's ray.

    The returned point has norm equal to ``range_m`` (range is the slant
    distance along the ray, not the depth).
    """
    if range_m <= 0.0:
        raise ValueError(f"range must be positive, got {range_m}")
    xn = (px.u - cam.cx) / cam.focal_px
    yn = (px.v - cam.cy) / cam.focal_px
    scale = range_m / math.sqrt(xn * xn + yn * yn + 1.0)
    return (xn * scale, yn * scale, scale)


def camera_to_ned(pt: tuple[float, float, float], cam: CameraModel,
                  heading: float) -> NedVector:
    """Camera-frame point -> ownship-centered NED.

    Applies the camera mount rotation (yaw then pitch) and the ownship
    heading; vehicle roll and pitch are zero (planar flight).
    """
    r = cam._cam_to_body
    bx = r[0][0] * pt[0] + r[0][1] * pt[1] + r[0][2] * pt[2]
    by = r[1][0] * pt[0] + r[1][1] * pt[1] + r[1][2] * pt[2]
    bz = r[2][0] * pt[0] + r[2][1] * pt[1] + r[2][2] * pt[2]
    ch, sh = math.cos(heading), math.sin(heading)
    return NedVector(north=ch * bx - sh * by, east=sh * bx + ch * by, down=bz)


def project_to_camera(p: NedVector, cam: CameraModel,
                      heading: float) -> tuple[PixelPoint, bool]:
    """NED point -> (pixel, visible); inverse of unproject + to-NED.

    Visible requires the point in front of the camera, within both FOV
    half-angles (closed set: the exact FOV edge counts as visible), and the
    pixel inside the image bounds.
    """
    if not (p.north or p.east or p.down):
        raise DegenerateGeometryError("zero-length vector cannot be projected")
    ch, sh = math.cos(heading), math.sin(heading)
    bx = ch * p.north + sh * p.east
    by = -sh * p.north + ch * p.east
    bz = p.down
    r = cam._cam_to_body  # orthonormal: inverse is the transpose
    x = r[0][0] * bx + r[1][0] * by + r[2][0] * bz
    y = r[0][1] * bx + r[1][1] * by + r[2][1] * bz
    z = r[0][2] * bx + r[1][2] * by + r[2][2] * bz
    if z <= 0.0:
        return PixelPoint(float("nan"), float("nan")), False
    u = cam.cx + cam.focal_px * x / z
    v = cam.cy + cam.focal_px * y / z
    tol = 1e-9
    visible = (abs(math.atan2(x, z)) <= cam.hfov / 2.0 + tol
               and abs(math.atan2(y, z)) <= cam.vfov / 2.0 + tol
               and -tol <= u <= cam.width_px + tol
               and -tol <= v <= cam.height_px + tol)
    return PixelPoint(u, v), visible
