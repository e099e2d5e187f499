"""Small Monte-Carlo benchmark: paired batches and the metrics table.

Each seed runs once under the nominal controller and once under the safety
filter, sharing the encounter sample and sensor noise, so the comparison is
paired. Twenty seeds per scenario keep this demo quick; the acceptance suite
runs the full 200-episode batches across the weather sweep.
"""

from daasim import Geometry, HorizonSide, Mode, Scenario, aggregate
from daasim.simkit import run_monte_carlo_summaries

scenarios = [
    Scenario(label="head-on", geometry=Geometry.HEAD_ON, ownship_speed=10.0,
             intruder_speed=10.0, initial_range=430.0, duration=40.0),
    Scenario(label="overtake", geometry=Geometry.OVERTAKE, ownship_speed=10.0,
             intruder_speed=5.0, initial_range=300.0, duration=72.0),
    Scenario(label="crossing", geometry=Geometry.CROSSING, ownship_speed=10.0,
             intruder_speed=5.0, initial_range=430.0, duration=50.0,
             lateral_offset=0.0, horizon_side=HorizonSide.BELOW,
             environment_factor=0.5),
]

summaries = []
for sc in scenarios:
    print(f"running {sc.label} (20 paired episodes)...")
    summaries.extend(run_monte_carlo_summaries(
        sc, [Mode.NOMINAL, Mode.VISAFE], n=20, base_seed=0, jobs=2))

report = aggregate(summaries, nmac_threshold=30.0)
print()
print(report.to_text())
