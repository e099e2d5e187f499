"""Detection range and reaction-time budget per intruder platform.

The synthetic detector needs 14 pixels of apparent size for a reliable track,
which caps the detection range at 163.2 m per meter of frontal diagonal
length. Dividing by the closure rate gives the time available to react.
"""

from daasim import (BELL_407, DetectionModel, HEXAROTOR, VTOL,
                    max_detection_range, reaction_time)

model = DetectionModel()
cases = [
    (HEXAROTOR, 20.0),   # head-on at 10 + 10 m/s
    (VTOL, 40.0),        # head-on at 10 + 30 m/s
    (BELL_407, 60.0),    # manned helicopter closing fast
]

print(f"{'profile':<10} {'length (m)':>10} {'d_max (m)':>10} "
      f"{'closure':>8} {'reaction (s)':>12}")
for profile, closure in cases:
    d_max = max_detection_range(profile, model)
    print(f"{profile.label:<10} {profile.frontal_length:>10.3f} {d_max:>10.1f} "
          f"{closure:>8.1f} {reaction_time(d_max, closure):>12.2f}")

# Sensitivity: a stricter pixel threshold shrinks the reaction budget fast.
print("\nhexarotor reaction time vs. pixel threshold (closure 20 m/s):")
for px in (10.0, 14.0, 20.0, 28.0):
    d_max = max_detection_range(HEXAROTOR, DetectionModel(min_pixels=px))
    print(f"  {px:4.0f} px -> d_max {d_max:6.1f} m -> "
          f"{reaction_time(d_max, 20.0):6.2f} s")
