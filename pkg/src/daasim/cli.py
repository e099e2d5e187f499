"""Command-line entry point: scenario files, batch runs, reports.

Scenario files are JSON documents with top-level keys {scenario, rig,
detection, cbf, rates}; every key except "scenario" is optional and falls
back to package defaults. Presets e1..e5 (the benchmark experiment rows) ship
with the package and can be named directly: ``daasim run --scenario e1``.

Output layout under --out:
    <label>/<mode>/episode_<seed>.csv   per-episode logs
    report.json, report.txt             aggregated metrics
    hroc_vs_scenario.csv                plot-ready mean HROC per scenario/mode
    hroc_vs_environment.csv             plot-ready mean HROC per weather factor
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .dynamics import ControlBounds, ControlInput, DEFAULT_BOUNDS
from .frames import CameraModel, default_rig, make_camera
from .metrics import DEFAULT_NMAC_THRESHOLD, aggregate
from .safety import CbfParameters
from .sensorsim import (DetectionModel, IntruderProfile, PROFILES,
                        max_detection_range, reaction_time)
from .simkit import (Geometry, HorizonSide, Mode, RateConfig, Scenario,
                     run_monte_carlo_summaries)

OUT_DIR_ENV = "DAASIM_OUT"


class ScenarioFormatError(ValueError):
    """Scenario file violates the schema; the message carries the field path."""


@dataclass(frozen=True)
class RunConfig:
    """One batch-run request, as assembled from CLI flags."""

    scenario_path: str
    modes: tuple[Mode, ...] = (Mode.NOMINAL, Mode.VISAFE)
    episodes: int = 10
    base_seed: int = 0
    out_dir: Path = Path("out")
    nmac_threshold: float = DEFAULT_NMAC_THRESHOLD
    jobs: int = 1
    rates: Optional[RateConfig] = None

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episode count must be >= 1")


@dataclass(frozen=True)
class LoadedConfig:
    scenarios: tuple[Scenario, ...]
    rig: tuple[CameraModel, ...]
    detection: DetectionModel
    cbf: CbfParameters
    rates: RateConfig


def _req(obj: dict, key: str, where: str):
    if key not in obj:
        raise ScenarioFormatError(f"{where}: missing required field '{key}'")
    return obj[key]


def _parse_profile(node, where: str) -> IntruderProfile:
    if isinstance(node, str):
        if node not in PROFILES:
            raise ScenarioFormatError(
                f"{where}.profile: unknown profile '{node}' "
                f"(known: {', '.join(sorted(PROFILES))})")
        return PROFILES[node]
    if isinstance(node, dict):
        return IntruderProfile(float(_req(node, "frontal_length", where + ".profile")),
                               str(node.get("label", "custom")))
    raise ScenarioFormatError(f"{where}.profile: expected name or object")


def _parse_bounds(node: dict, where: str) -> ControlBounds:
    try:
        return ControlBounds(
            ControlInput(float(_req(node, "accel_min", where)),
                         float(_req(node, "turn_min", where))),
            ControlInput(float(_req(node, "accel_max", where)),
                         float(_req(node, "turn_max", where))),
        )
    except ValueError as exc:
        raise ScenarioFormatError(f"{where}: {exc}") from exc


def _parse_scenario(node: dict, idx: int) -> Scenario:
    where = f"scenario[{idx}]"
    if not isinstance(node, dict):
        raise ScenarioFormatError(f"{where}: expected an object")
    geom_name = str(_req(node, "geometry", where))
    try:
        geometry = Geometry(geom_name)
    except ValueError:
        raise ScenarioFormatError(
            f"{where}.geometry: unknown geometry '{geom_name}' "
            f"(known: {', '.join(g.value for g in Geometry)})") from None
    side_name = str(node.get("horizon_side", "above"))
    try:
        side = HorizonSide(side_name)
    except ValueError:
        raise ScenarioFormatError(
            f"{where}.horizon_side: unknown side '{side_name}'") from None
    own_speed = float(_req(node, "ownship_speed", where))
    intr_speed = float(_req(node, "intruder_speed", where))
    if own_speed < 0.0 or intr_speed < 0.0:
        raise ScenarioFormatError(f"{where}: speeds must be nonnegative")
    try:
        return Scenario(
            label=str(node.get("label", f"S{idx}")),
            geometry=geometry,
            ownship_speed=own_speed,
            intruder_speed=intr_speed,
            profile=_parse_profile(node.get("profile", "hexarotor"), where),
            horizon_side=side,
            initial_range=float(node.get("initial_range", 430.0)),
            corridor_extent=float(node.get("corridor_extent", 20.0)),
            lateral_offset=float(node.get("lateral_offset", 20.0)),
            environment_factor=float(node.get("environment_factor", 1.0)),
            d_thresh=float(node.get("d_thresh", 50.0)),
            bounds=(_parse_bounds(node["bounds"], where + ".bounds")
                    if "bounds" in node else DEFAULT_BOUNDS),
            duration=float(node.get("duration", 60.0)),
            horizon_offset=float(node.get("horizon_offset", 15.0)),
            ownship_altitude=float(node.get("ownship_altitude", 50.0)),
        )
    except ValueError as exc:
        raise ScenarioFormatError(f"{where}: {exc}") from exc


def _parse_rig(node, where: str = "rig") -> tuple[CameraModel, ...]:
    if isinstance(node, list):
        node = {"cameras": node}
    if "cameras" in node:
        cams = []
        for i, c in enumerate(node["cameras"]):
            cams.append(make_camera(
                i,
                mount_yaw_deg=float(_req(c, "mount_yaw_deg", f"{where}.cameras[{i}]")),
                mount_pitch_deg=float(c.get("mount_pitch_deg", 0.0)),
                hfov_deg=float(_req(c, "hfov_deg", f"{where}.cameras[{i}]")),
                vfov_deg=float(_req(c, "vfov_deg", f"{where}.cameras[{i}]")),
                width_px=int(c.get("width_px", 1224)),
                height_px=int(c.get("height_px", 1024)),
            ))
        return tuple(cams)
    return tuple(default_rig(
        total_hfov_deg=float(node.get("total_hfov_deg", 220.0)),
        vfov_deg=float(node.get("vfov_deg", 48.0)),
        n_cameras=int(node.get("n_cameras", 6)),
        overlap_deg=float(node.get("overlap_deg", 2.0)),
        width_px=int(node.get("width_px", 1224)),
        height_px=int(node.get("height_px", 1024)),
    ))


def _parse_detection(node: dict) -> DetectionModel:
    base = DetectionModel()
    try:
        return DetectionModel(
            min_pixels=float(node.get("min_pixels", base.min_pixels)),
            p_track_at_threshold=float(node.get("p_track_at_threshold",
                                                base.p_track_at_threshold)),
            range_noise_rel=float(node.get("range_noise_rel", base.range_noise_rel)),
            angle_noise=math.radians(float(node["angle_noise_deg"]))
            if "angle_noise_deg" in node else float(node.get("angle_noise",
                                                             base.angle_noise)),
            p_detect_above_horizon=float(node.get("p_detect_above_horizon",
                                                  base.p_detect_above_horizon)),
            p_detect_below_horizon=float(node.get("p_detect_below_horizon",
                                                  base.p_detect_below_horizon)),
            environment_factor=float(node.get("environment_factor",
                                              base.environment_factor)),
            focal_px=float(node.get("focal_px", base.focal_px)),
            clutter_rate=float(node.get("clutter_rate", base.clutter_rate)),
        )
    except ValueError as exc:
        raise ScenarioFormatError(f"detection: {exc}") from exc


def _parse_cbf(node: dict) -> CbfParameters:
    base = CbfParameters()
    try:
        return CbfParameters(
            c=float(node.get("c", base.c)),
            n=float(node.get("n", base.n)),
            k=float(node.get("k", base.k)),
            lam=float(node.get("lambda", node.get("lam", base.lam))),
            d_thresh=float(node.get("d_thresh", base.d_thresh)),
        )
    except ValueError as exc:
        raise ScenarioFormatError(f"cbf: {exc}") from exc


def _parse_rates(node: dict) -> RateConfig:
    try:
        rc = RateConfig(
            base_step=1.0 / float(node.get("base_hz", 600.0)),
            sensor_period=1.0 / float(node.get("sensor_hz", 8.0)),
            fusion_period=1.0 / float(node.get("fusion_hz", 24.0)),
            control_period=1.0 / float(node.get("control_hz", 50.0)),
        )
        for p in (rc.sensor_period, rc.fusion_period, rc.control_period):
            rc.ticks(p)
        return rc
    except ValueError as exc:
        raise ScenarioFormatError(f"rates: {exc}") from exc


def resolve_scenario_path(name_or_path: str) -> Path:
    """Existing file path, or a bundled preset name (e1..e5, table1)."""
    p = Path(name_or_path)
    if p.exists():
        return p
    preset = resources.files("daasim").joinpath("presets", f"{name_or_path}.json")
    if preset.is_file():
        return Path(str(preset))
    raise FileNotFoundError(f"no scenario file or preset named '{name_or_path}'")


def load_config(path) -> LoadedConfig:
    """Parse and validate a full scenario configuration document."""
    path = resolve_scenario_path(str(path))
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ScenarioFormatError(f"{path}: top level must be an object")
    node = _req(doc, "scenario", str(path))
    if isinstance(node, dict):
        node = [node]
    if not isinstance(node, list) or not node:
        raise ScenarioFormatError(f"{path}: 'scenario' must be a nonempty list")
    scenarios = tuple(_parse_scenario(s, i) for i, s in enumerate(node))
    labels = [s.label for s in scenarios]
    if len(set(labels)) != len(labels):
        raise ScenarioFormatError(f"{path}: duplicate scenario labels")
    return LoadedConfig(
        scenarios=scenarios,
        rig=_parse_rig(doc.get("rig", {})),
        detection=_parse_detection(doc.get("detection", {})),
        cbf=_parse_cbf(doc.get("cbf", {})),
        rates=_parse_rates(doc.get("rates", {})),
    )


def parse_scenario_file(path) -> list[Scenario]:
    """Validated scenarios from a configuration file (or bundled preset name)."""
    return list(load_config(path).scenarios)


def scenario_to_dict(s: Scenario) -> dict:
    """Canonical JSON-ready form of a scenario (normalizes defaults)."""
    return {
        "label": s.label,
        "geometry": s.geometry.value,
        "ownship_speed": s.ownship_speed,
        "intruder_speed": s.intruder_speed,
        "profile": {"frontal_length": s.profile.frontal_length,
                    "label": s.profile.label},
        "horizon_side": s.horizon_side.value,
        "initial_range": s.initial_range,
        "corridor_extent": s.corridor_extent,
        "lateral_offset": s.lateral_offset,
        "environment_factor": s.environment_factor,
        "d_thresh": s.d_thresh,
        "bounds": {"accel_min": s.bounds.u_min.accel,
                   "accel_max": s.bounds.u_max.accel,
                   "turn_min": s.bounds.u_min.turn_rate,
                   "turn_max": s.bounds.u_max.turn_rate},
        "duration": s.duration,
        "horizon_offset": s.horizon_offset,
        "ownship_altitude": s.ownship_altitude,
    }


def serialize_scenarios(scenarios: Sequence[Scenario]) -> str:
    """Canonical serialization; parse -> serialize is idempotent."""
    return json.dumps({"scenario": [scenario_to_dict(s) for s in scenarios]},
                      indent=2, sort_keys=True) + "\n"


def cmd_run(config: RunConfig) -> int:
    """Run the Monte-Carlo batches and write logs, report, and plot CSVs."""
    loaded = load_config(config.scenario_path)
    rates = config.rates or loaded.rates
    out = Path(config.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"error: output directory not writable: {exc}", file=sys.stderr)
        return 1

    summaries = []
    for scenario in loaded.scenarios:
        summaries.extend(run_monte_carlo_summaries(
            scenario, list(config.modes), config.episodes, config.base_seed,
            jobs=config.jobs, nmac_threshold=config.nmac_threshold,
            csv_dir=out, rig=loaded.rig, detection=loaded.detection,
            cbf=loaded.cbf, rates=rates,
        ))

    report = aggregate(summaries, config.nmac_threshold)
    (out / "report.json").write_bytes(
        (json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n").encode())
    (out / "report.txt").write_bytes((report.to_text() + "\n").encode())

    env_of = {s.label: s.environment_factor for s in loaded.scenarios}
    lines = ["scenario,mode,hroc_mean"]
    lines += [f"{r.label},{r.mode.value},{r.hroc_mean!r}" for r in report.rows]
    (out / "hroc_vs_scenario.csv").write_bytes(("\n".join(lines) + "\n").encode())

    by_env: dict[tuple[float, Mode], list[float]] = {}
    for r in report.rows:
        by_env.setdefault((env_of[r.label], r.mode), []).append(r.hroc_mean)
    lines = ["environment_factor,mode,hroc_mean"]
    for (env, mode), vals in sorted(by_env.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        lines.append(f"{env!r},{mode.value},{sum(vals) / len(vals)!r}")
    (out / "hroc_vs_environment.csv").write_bytes(("\n".join(lines) + "\n").encode())
    return 0


def cmd_reaction_time(profile: IntruderProfile, min_pixels: float,
                      focal_px: float, closure: float) -> str:
    """Detection range and reaction time table for one intruder profile."""
    if closure <= 0.0:
        raise ValueError("closure must be positive")
    model = DetectionModel(min_pixels=min_pixels, focal_px=focal_px)
    d_max = max_detection_range(profile, model)
    tr = reaction_time(d_max, closure)
    lines = [
        f"{'profile':<12}{'length (m)':>12}{'d_max (m)':>12}{'closure (m/s)':>15}{'reaction (s)':>14}",
        f"{profile.label:<12}{profile.frontal_length:>12.3f}{d_max:>12.1f}"
        f"{closure:>15.2f}{tr:>14.3f}",
    ]
    text = "\n".join(lines)
    print(text)
    return text


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="daasim",
        description="Detect-and-avoid encounter simulation and benchmark runner")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run Monte-Carlo batches and write reports")
    run.add_argument("--scenario", required=True,
                     help="scenario file path or bundled preset name (e1..e5, table1)")
    run.add_argument("--modes", default="nominal,visafe",
                     help="comma-separated controller modes (nominal, visafe)")
    run.add_argument("--episodes", type=int, default=10, metavar="N")
    run.add_argument("--seed", type=int, default=0, metavar="S")
    run.add_argument("--out", default=os.environ.get(OUT_DIR_ENV, "out"),
                     metavar="DIR", help=f"output directory (env {OUT_DIR_ENV})")
    run.add_argument("--nmac-threshold", type=float,
                     default=DEFAULT_NMAC_THRESHOLD, metavar="M")
    run.add_argument("--jobs", type=int, default=1, metavar="K",
                     help="parallel episode workers")

    rt = sub.add_parser("reaction-time",
                        help="detection range / reaction time calculator")
    rt.add_argument("--profile", default="hexarotor",
                    help=f"profile name ({', '.join(sorted(PROFILES))}) ")
    rt.add_argument("--length", type=float, default=None,
                    help="custom frontal diagonal length [m] (overrides --profile)")
    rt.add_argument("--min-pixels", type=float, default=14.0)
    rt.add_argument("--focal", type=float, default=2284.8,
                    help="apparent-size focal scale [px]")
    rt.add_argument("--closure", type=float, required=True,
                    help="closure rate [m/s]")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            modes = []
            for name in args.modes.split(","):
                name = name.strip()
                try:
                    modes.append(Mode(name))
                except ValueError:
                    print(f"error: unknown mode '{name}'", file=sys.stderr)
                    return 2
            return cmd_run(RunConfig(
                scenario_path=args.scenario,
                modes=tuple(modes),
                episodes=args.episodes,
                base_seed=args.seed,
                out_dir=Path(args.out),
                nmac_threshold=args.nmac_threshold,
                jobs=args.jobs,
            ))
        if args.command == "reaction-time":
            if args.length is not None:
                profile = IntruderProfile(args.length, "custom")
            elif args.profile in PROFILES:
                profile = PROFILES[args.profile]
            else:
                print(f"error: unknown profile '{args.profile}'", file=sys.stderr)
                return 2
            cmd_reaction_time(profile, args.min_pixels, args.focal, args.closure)
            return 0
        return 2
    except (ScenarioFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
