"""RTCA-inspired safety metrics over episode logs.

Separation minima are 3D truth distances; loss of separation compares against
the scenario's d_thresh, NMAC against a (smaller) configurable threshold, so
the two violation counts stay distinct events. HROC is the time derivative of
the horizontal truth distance, negative while converging; its encounter mean
is taken from the first valid fused track (t=0 for the nominal mode) to the
closest point of approach.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .simkit import EpisodeLog, Mode

DEFAULT_NMAC_THRESHOLD = 30.0  # m, below the 50 m separation threshold


class UndefinedRatioError(ZeroDivisionError):
    """Risk ratio is undefined when the baseline has no NMACs."""


@dataclass(frozen=True, slots=True)
class EpisodeSummary:
    """Scalar reduction of one episode, sufficient for every batch metric."""

    label: str
    mode: Mode
    seed: int
    sep_min: float          # m, min 3D distance
    sep_min_h: float        # m, min horizontal distance
    nmac: bool              # sep_min < nmac threshold
    violated: bool          # any tick with 3D distance < d_thresh
    hroc_mean: float        # m/s, encounter-window mean closure
    infeasible_any: bool    # any control tick flagged infeasible-relaxed
    duration: float         # s

    def to_json(self) -> str:
        """Structured-text form of the episode summary record."""
        import json
        return json.dumps({
            "scenario": self.label, "mode": self.mode.value, "seed": self.seed,
            "separation_minima": self.sep_min,
            "separation_minima_horizontal": self.sep_min_h,
            "nmac": self.nmac, "violated": self.violated,
            "hroc_mean": self.hroc_mean, "infeasible_any": self.infeasible_any,
            "duration": self.duration,
        }, sort_keys=True)


def separation_minima(log: EpisodeLog) -> float:
    """Minimum 3D distance between the truth positions over the episode."""
    if log.n_rows == 0:
        raise ValueError("empty episode log")
    return float(log.data["dist_3d"].min())


def hroc_series(log: EpisodeLog) -> tuple[np.ndarray, float]:
    """Per-tick horizontal range rate and its encounter-window mean.

    The series covers the whole log (central differences, one-sided at the
    ends); the mean is over [window start, closest point of approach].
    """
    if log.n_rows < 2:
        raise ValueError("need at least two ticks for a rate series")
    t = log.data["t"]
    dh = log.data["dist_h"]
    series = np.gradient(dh, t)
    if log.mode is Mode.NOMINAL:
        start = 0
    else:
        valid = np.nonzero(log.data["geo_valid"] > 0.5)[0]
        start = int(valid[0]) if valid.size else 0
    cpa = int(np.argmin(dh))
    if cpa <= start:
        cpa = min(start + 1, log.n_rows - 1)
    return series, float(series[start:cpa + 1].mean())


def summarize(log: EpisodeLog,
              nmac_threshold: float = DEFAULT_NMAC_THRESHOLD) -> EpisodeSummary:
    """Reduce a log to the scalars the aggregate metrics need."""
    sep = separation_minima(log)
    _, hroc_mean = hroc_series(log)
    return EpisodeSummary(
        label=log.scenario_label,
        mode=log.mode,
        seed=log.seed,
        sep_min=sep,
        sep_min_h=float(log.data["dist_h"].min()),
        nmac=sep < nmac_threshold,
        violated=bool((log.data["dist_3d"] < log.d_thresh).any()),
        hroc_mean=hroc_mean,
        infeasible_any=bool((log.data["infeasible_relaxed"] > 0.5).any()),
        duration=float(log.data["t"][-1]),
    )


Item = Union[EpisodeLog, EpisodeSummary]


def _as_summaries(items: Iterable[Item], nmac_threshold: float) -> list[EpisodeSummary]:
    out = []
    for it in items:
        if isinstance(it, EpisodeSummary):
            out.append(it)
        else:
            out.append(summarize(it, nmac_threshold))
    return out


def p_nmac(items: Sequence[Item],
           nmac_threshold: float = DEFAULT_NMAC_THRESHOLD) -> float:
    """Fraction of episodes whose separation minimum falls below the threshold."""
    summaries = _as_summaries(items, nmac_threshold)
    if not summaries:
        raise ValueError("p_nmac needs at least one episode")
    return sum(s.sep_min < nmac_threshold for s in summaries) / len(summaries)


def risk_ratio(system: Sequence[Item], baseline: Sequence[Item],
               nmac_threshold: float = DEFAULT_NMAC_THRESHOLD) -> float:
    """P(NMAC) of the system divided by P(NMAC) of the baseline."""
    p_base = p_nmac(baseline, nmac_threshold)
    if p_base == 0.0:
        raise UndefinedRatioError("baseline has no NMACs; risk ratio undefined")
    return p_nmac(system, nmac_threshold) / p_base


@dataclass(frozen=True, slots=True)
class MetricsRow:
    label: str
    mode: Mode
    episodes: int
    sep_mean: float
    sep_std: float
    p_nmac: float
    risk_ratio: float | None    # None when no nominal baseline exists
    violations: int
    hroc_mean: float


@dataclass(frozen=True, slots=True)
class MetricsReport:
    nmac_threshold: float
    rows: tuple[MetricsRow, ...]

    def to_dict(self) -> dict:
        return {
            "nmac_threshold": self.nmac_threshold,
            "rows": [
                {
                    "scenario": r.label,
                    "mode": r.mode.value,
                    "episodes": r.episodes,
                    "separation_minima_mean": r.sep_mean,
                    "separation_minima_std": r.sep_std,
                    "p_nmac": r.p_nmac,
                    "risk_ratio": r.risk_ratio,
                    "violations": r.violations,
                    "hroc_mean": r.hroc_mean,
                }
                for r in self.rows
            ],
        }

    def to_text(self) -> str:
        """Aligned table mirroring the benchmark column order."""
        header = (f"{'Scenario':<14}{'Mode':<9}{'N':>5}"
                  f"{'SepMin (m)':>18}{'P(NMAC)':>9}{'Risk':>7}{'Viol':>6}"
                  f"{'HROC (m/s)':>12}")
        lines = [header, "-" * len(header)]
        for r in self.rows:
            risk = f"{r.risk_ratio:.3f}" if r.risk_ratio is not None else "-"
            lines.append(
                f"{r.label:<14}{r.mode.value:<9}{r.episodes:>5}"
                f"{r.sep_mean:>10.2f} ± {r.sep_std:<5.2f}"
                f"{r.p_nmac:>9.3f}{risk:>7}{r.violations:>6}"
                f"{r.hroc_mean:>12.2f}")
        return "\n".join(lines)


def aggregate(items: Sequence[Item],
              nmac_threshold: float = DEFAULT_NMAC_THRESHOLD) -> MetricsReport:
    """Group episodes by scenario and mode and fill the benchmark table.

    The risk ratio of every mode uses that scenario's nominal batch as the
    baseline; it is None when there is no nominal batch or the baseline has
    no NMACs. Episode order does not affect the result.
    """
    summaries = sorted(_as_summaries(items, nmac_threshold),
                       key=lambda s: (s.label, s.mode.value, s.seed))
    groups: dict[tuple[str, Mode], list[EpisodeSummary]] = {}
    for s in summaries:
        groups.setdefault((s.label, s.mode), []).append(s)

    rows = []
    for (label, mode), group in sorted(groups.items(),
                                       key=lambda kv: (kv[0][0], kv[0][1].value)):
        seps = np.array([g.sep_min for g in group])
        p = sum(g.nmac for g in group) / len(group)
        baseline = groups.get((label, Mode.NOMINAL))
        ratio = None
        if baseline:
            p_base = sum(g.nmac for g in baseline) / len(baseline)
            if p_base > 0.0:
                ratio = p / p_base
        rows.append(MetricsRow(
            label=label, mode=mode, episodes=len(group),
            sep_mean=float(seps.mean()), sep_std=float(seps.std()),
            p_nmac=p, risk_ratio=ratio,
            violations=sum(g.violated for g in group),
            hroc_mean=float(np.mean([g.hroc_mean for g in group])),
        ))
    return MetricsReport(nmac_threshold, tuple(rows))
