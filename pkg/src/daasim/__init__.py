"""daasim: desk-scale detect-and-avoid simulation toolkit.

Synthetic multi-camera intruder sensing, dual-Kalman multi-view fusion, a
control-barrier-function QP safety filter, and a deterministic Monte-Carlo
encounter benchmark with RTCA-style safety metrics.
"""

from .dynamics import (ControlBounds, ControlInput, DEFAULT_BOUNDS, IntruderState,
                       OwnshipState, clamp_control, intruder_step, ownship_step)
from .frames import (CameraModel, DegenerateGeometryError, NedVector, PixelPoint,
                     SphericalTrack, camera_to_ned, camera_unproject, default_rig,
                     los_angle_alpha, make_camera, ned_to_spherical,
                     project_to_camera, spherical_to_ned, wrap_angle)
from .fusion import (AngleFilterState, FusedIntruderTrack, FusionConfig,
                     MultiViewFusion, RangeFilterState, RelativeGeometry,
                     angular_distance, associate, estimate_intruder_heading,
                     estimate_intruder_velocity, kf_predict, kf_update,
                     measurement_from_image_track, publish)
from .metrics import (EpisodeSummary, MetricsReport, aggregate, hroc_series,
                      p_nmac, risk_ratio, separation_minima, summarize)
from .safety import (CbfParameters, GoalSpec, PdGains, QpProblem, QpSolution,
                     SafetyController, cbf_constraint, cbf_value, kkt_residual,
                     nominal_control, range_accel_affine, range_rate, safe_control,
                     solve_qp)
from .sensorsim import (BELL_407, DetectionModel, HEXAROTOR, ImageTrack,
                        IntruderProfile, NOISELESS_MODEL, VTOL, apparent_pixels,
                        max_detection_range, reaction_time, sense)
from .simkit import (ConfigurationError, EpisodeLog, Geometry, HorizonSide, Mode,
                     RateConfig, Scenario, build_encounter, run_episode,
                     run_monte_carlo, run_monte_carlo_summaries)

__version__ = "0.1.0"
