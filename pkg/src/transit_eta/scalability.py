"""Head-to-head scaling comparison of the network against the SVR baseline.

For an increasing number of bus lines, both models are trained on the same
feature matrices and scored on the same held-out split. SVR runs carry a
wall-clock budget; a run that exhausts it is reported as a timeout row
rather than hanging the experiment.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from typing import IO, Optional, Sequence

from .features import FeaturePipeline, fit_vocabularies, split
from .ingest import CleanRecord
from .metrics import rmse
from .neuralnet import NeuralNetRegressor
from .svr import SvrConfig, fit_svr, predict_svr_batch

STATUS_OK = "ok"
STATUS_TIMEOUT = "timeout"

DEFAULT_SVR_TIME_BUDGET_S = 1800.0


@dataclass
class ComparisonRow:
    line_count: int
    model: str  # "fcnn" or "svr"
    rmse_seconds: Optional[float]
    wall_seconds: float
    status: str

    def to_dict(self) -> dict:
        return {
            "line_count": self.line_count,
            "model": self.model,
            "rmse_seconds": self.rmse_seconds,
            "wall_seconds": self.wall_seconds,
            "status": self.status,
        }


@dataclass
class ComparisonTable:
    rows: list[ComparisonRow]

    def to_json(self) -> list[dict]:
        return [row.to_dict() for row in self.rows]

    def write_csv(self, stream: IO) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["line_count", "model", "rmse_seconds", "wall_seconds", "status"])
        for row in self.rows:
            rmse_cell = "TIMEOUT" if row.rmse_seconds is None else f"{row.rmse_seconds:.6f}"
            writer.writerow(
                [row.line_count, row.model, rmse_cell, f"{row.wall_seconds:.3f}", row.status]
            )

    def wall_seconds(self, model: str) -> dict[int, float]:
        return {r.line_count: r.wall_seconds for r in self.rows if r.model == model}


def scalability_experiment(
    records: Sequence[CleanRecord],
    line_counts: Sequence[int],
    fcnn_params: Optional[dict] = None,
    svr_cfg: Optional[SvrConfig] = None,
    ratio: float = 0.8,
    seed: int = 0,
    svr_time_budget_s: float = DEFAULT_SVR_TIME_BUDGET_S,
) -> ComparisonTable:
    """Train both models on the records of the first k lines for each k.

    Line order follows the fitted vocabulary over all records. Requires the
    dataset to contain at least max(line_counts) distinct lines.
    """
    line_counts = sorted(set(int(k) for k in line_counts))
    line_vocab, _ = fit_vocabularies(records)
    if line_vocab.size < max(line_counts):
        raise ValueError(
            f"dataset has {line_vocab.size} lines, need {max(line_counts)}"
        )
    fcnn_params = dict(fcnn_params or {})
    fcnn_params.setdefault("seed", seed)
    svr_cfg = svr_cfg or SvrConfig()

    rows: list[ComparisonRow] = []
    for k in line_counts:
        selected_lines = set(line_vocab.names[:k])
        subset = [r for r in records if r.published_line_name in selected_lines]
        train_recs, val_recs = split(subset, ratio, seed)
        pipeline = FeaturePipeline().fit(train_recs)
        train = pipeline.make_dataset(train_recs)
        val = pipeline.make_dataset(val_recs)

        t0 = time.perf_counter()
        fcnn = NeuralNetRegressor(**fcnn_params)
        fcnn.fit(train.X, train.y, validation_data=(val.X, val.y))
        fcnn_wall = time.perf_counter() - t0
        rows.append(
            ComparisonRow(
                line_count=k, model="fcnn",
                rmse_seconds=rmse(fcnn.predict(val.X), val.y),
                wall_seconds=fcnn_wall, status=STATUS_OK,
            )
        )

        t0 = time.perf_counter()
        model = fit_svr(train.X, train.y, svr_cfg, time_budget_s=svr_time_budget_s)
        svr_wall = time.perf_counter() - t0
        if model.timed_out:
            rows.append(
                ComparisonRow(line_count=k, model="svr", rmse_seconds=None,
                              wall_seconds=svr_wall, status=STATUS_TIMEOUT)
            )
        else:
            rows.append(
                ComparisonRow(
                    line_count=k, model="svr",
                    rmse_seconds=rmse(predict_svr_batch(model, val.X), val.y),
                    wall_seconds=svr_wall, status=STATUS_OK,
                )
            )
    return ComparisonTable(rows=rows)
