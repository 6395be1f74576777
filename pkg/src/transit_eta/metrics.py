"""Accuracy and schedule-adherence analytics.

RMSE is the accuracy metric throughout, reported in seconds. Delay is the
signed difference between actual and scheduled arrival (positive = late);
mismatch is its absolute value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .features import Dataset, LineVocabulary
from .ingest import CleanRecord
from .validation import check_not_empty, check_same_length


def rmse(preds, actuals) -> float:
    """Root mean square error between predictions and actual values."""
    preds = np.asarray(preds, dtype=np.float64)
    actuals = np.asarray(actuals, dtype=np.float64)
    check_not_empty(preds, "predictions")
    check_same_length(preds, actuals, ("predictions", "actuals"))
    diff = actuals - preds
    return float(np.sqrt(diff @ diff / len(diff)))


@dataclass
class FiveNumberSummary:
    min: float
    q1: float
    median: float
    q3: float
    max: float

    def to_dict(self) -> dict:
        return {"min": self.min, "q1": self.q1, "median": self.median,
                "q3": self.q3, "max": self.max}


def five_number_summary(values) -> FiveNumberSummary:
    """Min, quartiles (linear interpolation), and max of a non-empty sample."""
    values = np.asarray(values, dtype=np.float64)
    check_not_empty(values, "values")
    lo, q1, med, q3, hi = np.percentile(values, [0, 25, 50, 75, 100])
    return FiveNumberSummary(min=float(lo), q1=float(q1), median=float(med),
                             q3=float(q3), max=float(hi))


def resolve_scheduled(arrival: datetime, scheduled: datetime) -> datetime:
    """Re-anchor a scheduled time to the calendar day closest to the arrival.

    Scheduled times come from a timetable's time of day, so a trip crossing
    midnight can leave the parsed schedule a day off. The candidate among
    {day-1, day, day+1} minimizing |arrival - scheduled| wins.
    """
    best = scheduled
    best_gap = abs((arrival - scheduled).total_seconds())
    for shift in (-1, 1):
        candidate = scheduled + timedelta(days=shift)
        gap = abs((arrival - candidate).total_seconds())
        if gap < best_gap:
            best, best_gap = candidate, gap
    return best


@dataclass
class DelayStats:
    mean_delay_s: float
    mean_mismatch_s: float
    per_line_mean_delay: dict[str, float]
    samples: int
    excluded: int

    def to_dict(self) -> dict:
        return {
            "mean_delay_s": self.mean_delay_s,
            "mean_mismatch_s": self.mean_mismatch_s,
            "per_line_mean_delay": self.per_line_mean_delay,
            "samples": self.samples,
            "excluded": self.excluded,
        }


def delay_stats(records: Iterable[CleanRecord]) -> DelayStats:
    """Schedule-adherence statistics over records that carry a schedule.

    Records without a resolvable scheduled arrival are excluded and counted.
    """
    delays: list[float] = []
    per_line: dict[str, list[float]] = {}
    excluded = 0
    for rec in records:
        if rec.scheduled_arrival is None:
            excluded += 1
            continue
        scheduled = resolve_scheduled(rec.arrival_time, rec.scheduled_arrival)
        delay = (rec.arrival_time - scheduled).total_seconds()
        delays.append(delay)
        per_line.setdefault(rec.published_line_name, []).append(delay)
    if delays:
        arr = np.asarray(delays)
        mean_delay = float(arr.mean())
        mean_mismatch = float(np.abs(arr).mean())
    else:
        mean_delay = 0.0
        mean_mismatch = 0.0
    return DelayStats(
        mean_delay_s=mean_delay,
        mean_mismatch_s=mean_mismatch,
        per_line_mean_delay={line: float(np.mean(vals)) for line, vals in per_line.items()},
        samples=len(delays),
        excluded=excluded,
    )


@dataclass
class LineResult:
    rmse: float
    sample_count: int


@dataclass
class EvalReport:
    """Aggregate and per-line accuracy, with the per-line RMSE distribution."""

    overall_rmse: float
    per_line: dict[str, LineResult]
    rmse_distribution: FiveNumberSummary
    sample_count: int
    omitted_lines: list[str] = field(default_factory=list)
    delay: Optional[DelayStats] = None

    def to_dict(self) -> dict:
        out = {
            "overall_rmse": self.overall_rmse,
            "sample_count": self.sample_count,
            "per_line": {
                name: {"rmse": res.rmse, "sample_count": res.sample_count}
                for name, res in self.per_line.items()
            },
            "rmse_distribution": self.rmse_distribution.to_dict(),
            "omitted_lines": self.omitted_lines,
        }
        if self.delay is not None:
            out["delay"] = self.delay.to_dict()
        return out

    def to_csv_rows(self) -> list[tuple[str, float, int]]:
        return [
            (name, res.rmse, res.sample_count)
            for name, res in sorted(self.per_line.items())
        ]

    def to_plot_data(self) -> str:
        """Whitespace-separated columns (line index, rmse, count) for gnuplot."""
        lines = ["# line rmse_seconds sample_count"]
        for name, res in sorted(self.per_line.items()):
            lines.append(f"{name.replace(' ', '_')} {res.rmse:.6f} {res.sample_count}")
        return "\n".join(lines) + "\n"


EVAL_REPORT_SCHEMA = {
    "type": "object",
    "required": ["overall_rmse", "sample_count", "per_line", "rmse_distribution",
                 "omitted_lines"],
    "properties": {
        "overall_rmse": {"type": "number", "minimum": 0},
        "sample_count": {"type": "integer", "minimum": 0},
        "per_line": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["rmse", "sample_count"],
                "properties": {
                    "rmse": {"type": "number", "minimum": 0},
                    "sample_count": {"type": "integer", "minimum": 1},
                },
            },
        },
        "rmse_distribution": {
            "type": "object",
            "required": ["min", "q1", "median", "q3", "max"],
            "additionalProperties": {"type": "number"},
        },
        "omitted_lines": {"type": "array", "items": {"type": "string"}},
        "delay": {
            "type": "object",
            "required": ["mean_delay_s", "mean_mismatch_s", "per_line_mean_delay",
                         "samples", "excluded"],
        },
    },
}


def per_line_report(
    predict_fn: Callable[[np.ndarray], np.ndarray],
    dataset: Dataset,
    line_vocab: LineVocabulary,
    delay: Optional[DelayStats] = None,
) -> EvalReport:
    """Evaluate a model per line and overall.

    Lines with no validation samples are omitted from ``per_line`` and listed
    in ``omitted_lines``.
    """
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    preds = np.asarray(predict_fn(dataset.X), dtype=np.float64)
    check_same_length(preds, dataset.y, ("predictions", "targets"))
    overall = rmse(preds, dataset.y)
    per_line: dict[str, LineResult] = {}
    present = np.unique(dataset.line_index)
    for li in present:
        mask = dataset.line_index == li
        per_line[line_vocab.names[li]] = LineResult(
            rmse=rmse(preds[mask], dataset.y[mask]),
            sample_count=int(mask.sum()),
        )
    omitted = [name for i, name in enumerate(line_vocab.names) if i not in set(present.tolist())]
    distribution = five_number_summary([res.rmse for res in per_line.values()])
    return EvalReport(
        overall_rmse=overall,
        per_line=per_line,
        rmse_distribution=distribution,
        sample_count=len(dataset),
        omitted_lines=omitted,
        delay=delay,
    )
