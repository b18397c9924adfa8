import json
import logging
import uuid
from typing import List, Optional

import pandas as pd

logger = logging.getLogger(__name__)

__all__ = ["CELL_KEYS", "CURVE_COLUMNS", "ExperimentReport", "TABLE_COLUMNS", "emit_table", "emit_timing_curves"]

CELL_KEYS = ["field", "noise_halfwidth", "m_over_n", "q"]
TABLE_COLUMNS = CELL_KEYS + [
    "algorithm",
    "mean_norm_err",
    "mean_se",
    "pr_rank_correct",
    "mean_seconds",
    "fail_count",
]
CURVE_COLUMNS = CELL_KEYS + ["algorithm", "trial", "iteration", "elapsed_seconds", "norm_err"]

# Settings that change how fast a run goes but not what it computes.
_RUNTIME_KEYS = ("threads", "timing_mode", "output_dir")


class ExperimentReport:
    """
    Per-trial records of an experiment and their per-cell aggregates.

    Attributes:
        records (list): One dict per (cell, trial, algorithm) with keys field,
            noise_halfwidth, m_over_n, q, trial, algorithm, norm_err, se, r_hat,
            rank_correct, seconds, degenerate, failed, error and trace.
        config (dict): The experiment configuration.
        run_id (str): Deterministic identifier derived from the configuration.
    """

    def __init__(self, records: List[dict], config: Optional[dict] = None, run_id: Optional[str] = None):
        self.records = list(records)
        self.config = config or {}
        self.run_id = run_id or self.make_run_id(self.config)
        logger.info(f"ExperimentReport {self.run_id} holds {len(self.records)} record(s).")

    @staticmethod
    def make_run_id(config: dict) -> str:
        stable = {key: value for key, value in config.items() if key not in _RUNTIME_KEYS}
        return str(uuid.uuid5(uuid.NAMESPACE_URL, json.dumps(stable, sort_keys=True)))

    def records_frame(self) -> pd.DataFrame:
        """The trial records without traces, with numeric columns coerced."""
        rows = [{key: value for key, value in record.items() if key != "trace"} for record in self.records]
        df = pd.DataFrame(rows)
        if df.empty:
            return df
        for col in ("norm_err", "se", "seconds"):
            df[col] = pd.to_numeric(df[col], errors="coerce")
        df["rank_correct"] = df["rank_correct"].map({True: 1.0, False: 0.0})
        return df

    def cell_summary(self) -> pd.DataFrame:
        """
        Aggregates the trials of every (cell, algorithm) pair.

        Means skip failed trials; ``fail_count`` counts them. Rows keep the
        order in which cells and algorithms first appear.
        """
        df = self.records_frame()
        if df.empty:
            return pd.DataFrame(columns=TABLE_COLUMNS)
        summary = (
            df.groupby(CELL_KEYS + ["algorithm"], sort=False)
            .agg(
                mean_norm_err=("norm_err", "mean"),
                mean_se=("se", "mean"),
                pr_rank_correct=("rank_correct", "mean"),
                mean_seconds=("seconds", "mean"),
                fail_count=("failed", "sum"),
            )
            .reset_index()
        )
        summary["fail_count"] = summary["fail_count"].astype(int)
        return summary[TABLE_COLUMNS]

    def curves_frame(self) -> pd.DataFrame:
        """One row per recorded iteration of every trial."""
        rows = []
        for record in self.records:
            for iteration, err, elapsed in record.get("trace") or []:
                rows.append(
                    {
                        **{key: record[key] for key in CELL_KEYS},
                        "algorithm": record["algorithm"],
                        "trial": record["trial"],
                        "iteration": iteration,
                        "elapsed_seconds": elapsed,
                        "norm_err": err,
                    }
                )
        return pd.DataFrame(rows, columns=CURVE_COLUMNS)

    def to_dict(self) -> dict:
        cells = json.loads(self.cell_summary().to_json(orient="records"))
        return {"run_id": self.run_id, "config": self.config, "cells": cells, "trials": self.records}

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        try:
            return cls(data["trials"], config=data.get("config"), run_id=data.get("run_id"))
        except KeyError as e:
            logger.error(f"Error in from_dict: missing key {e}")
            raise ValueError(f"Report is missing the {e} section.") from e

    @classmethod
    def from_json(cls, path: str) -> "ExperimentReport":
        try:
            with open(path, "r") as f:
                return cls.from_dict(json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Error in from_json reading {path}: {e}")
            raise


def emit_table(report: ExperimentReport, path: str, fmt: str = "csv") -> None:
    """
    Writes the per-cell table.

    Args:
        report (ExperimentReport): The report to write.
        path (str): Destination file.
        fmt (str): "csv" for the aggregate table or "json" for the full report
            (configuration, aggregates and trial records).

    Raises:
        ValueError: On an unknown format.
        OSError: If the file cannot be written; the message names the path.
    """
    if fmt not in ("csv", "json"):
        raise ValueError(f"Unknown table format: {fmt}")
    try:
        if fmt == "csv":
            report.cell_summary().to_csv(path, index=False)
        else:
            with open(path, "w") as f:
                json.dump(report.to_dict(), f, indent=2)
        logger.info(f"Wrote {fmt} table to {path}")
    except OSError as e:
        logger.error(f"Error in emit_table writing {path}: {e}")
        raise OSError(f"Could not write table to {path}: {e}") from e


def emit_timing_curves(report: ExperimentReport, path: str) -> None:
    """
    Writes NormErr versus elapsed time for every iteration of every trial as CSV.

    Raises:
        OSError: If the file cannot be written; the message names the path.
    """
    try:
        report.curves_frame().to_csv(path, index=False)
        logger.info(f"Wrote timing curves to {path}")
    except OSError as e:
        logger.error(f"Error in emit_timing_curves writing {path}: {e}")
        raise OSError(f"Could not write timing curves to {path}: {e}") from e
