"""
Monte-Carlo driver.

For every grid cell the ground truth is drawn once; every trial then draws a
fresh measurement ensemble (and noise) and runs each configured algorithm.
Trial records are appended to ``trials.jsonl`` as soon as a cell finishes, so
partial runs still leave their data behind.
"""
import json
import logging
import os
import time
from contextlib import nullcontext
from dataclasses import dataclass
from itertools import product
from typing import Callable, Dict, Iterator, List, Optional

import numpy as np
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

from ..algorithms import (
    Estimate,
    RankMode,
    lrpr_init,
    run_lrpr1,
    run_lrpr2,
    run_lrpr_twf,
    run_twf,
    run_twfproj,
    twf_init_all,
    twfproj_init,
)
from ..errors import LrprError
from ..measurement import GroundTruth, MeasurementEnsemble, Measurements, gen_ensemble, gen_low_rank, measure
from ..metrics import error_report
from .config import ExperimentConfig
from .report import ExperimentReport

logger = logging.getLogger(__name__)

__all__ = ["ALGORITHMS", "Cell", "TrialContext", "derive_seed", "iter_cells", "run_experiment", "run_trial"]

TRIALS_FILE = "trials.jsonl"


@dataclass(frozen=True)
class Cell:
    index: int
    field: str
    noise_halfwidth: float
    m_over_n: float
    q: int

    def as_dict(self) -> dict:
        return {
            "field": self.field,
            "noise_halfwidth": self.noise_halfwidth,
            "m_over_n": self.m_over_n,
            "q": self.q,
        }


@dataclass(frozen=True, eq=False)
class TrialContext:
    cfg: ExperimentConfig
    gt: GroundTruth
    ens: MeasurementEnsemble
    meas: Measurements
    seed: int

    @property
    def rank_mode(self) -> RankMode:
        return RankMode.known(self.cfg.r) if self.cfg.rank_mode == "known" else RankMode.gap()

    @property
    def solver_kwargs(self) -> dict:
        return {
            "power_iters": self.cfg.power_iters,
            "seed": self.seed,
            "dense_threshold": self.cfg.dense_eig_threshold,
        }

    @property
    def reference(self) -> Optional[np.ndarray]:
        return self.gt.X if self.cfg.record_traces else None


@dataclass(frozen=True)
class AlgorithmSpec:
    """An algorithm the harness can run and the ensemble layout it needs."""
    name: str
    layout: str
    run: Callable[[TrialContext], Estimate]


def _init(ctx: TrialContext, mode: RankMode, partitioned: bool = False) -> Estimate:
    return lrpr_init(ctx.meas, ctx.ens, mode, partitioned=partitioned, **ctx.solver_kwargs)


def _twf_init(ctx: TrialContext) -> Estimate:
    X0, zero = twf_init_all(ctx.meas, ctx.ens, **ctx.solver_kwargs)
    return Estimate(X_hat=X0, degenerate=bool(np.all(zero)))


def _double_rank(ctx: TrialContext) -> RankMode:
    return RankMode.known(min(2 * ctx.cfg.r, ctx.gt.n, ctx.gt.q))


ALGORITHMS: Dict[str, AlgorithmSpec] = {
    spec.name: spec
    for spec in [
        AlgorithmSpec("lrpr-init", "per-column", lambda c: _init(c, RankMode.known(c.cfg.r))),
        AlgorithmSpec("lrpr-init-gap", "per-column", lambda c: _init(c, RankMode.gap())),
        AlgorithmSpec("lrpr-init-threshold", "per-column", lambda c: _init(c, RankMode.threshold(c.gt.lambda_min))),
        AlgorithmSpec("lrpr-init-2r", "per-column", lambda c: _init(c, _double_rank(c))),
        AlgorithmSpec(
            "lrpr-init-partitioned", "partitioned", lambda c: _init(c, RankMode.known(c.cfg.r), partitioned=True)
        ),
        AlgorithmSpec("lrpr-same", "shared", lambda c: _init(c, RankMode.known(c.cfg.r))),
        AlgorithmSpec("twf-init", "per-column", _twf_init),
        AlgorithmSpec("twfproj-init", "per-column", lambda c: twfproj_init(c.meas, c.ens, c.cfg.r, **c.solver_kwargs)),
        AlgorithmSpec(
            "twf", "per-column", lambda c: run_twf(c.meas, c.ens, c.cfg.twf_params, reference=c.reference, **c.solver_kwargs)
        ),
        AlgorithmSpec(
            "lrpr-twf",
            "per-column",
            lambda c: run_lrpr_twf(
                c.meas, c.ens, c.cfg.twf_params, rank_mode=c.rank_mode, reference=c.reference, **c.solver_kwargs
            ),
        ),
        AlgorithmSpec(
            "twfproj",
            "per-column",
            lambda c: run_twfproj(c.meas, c.ens, c.cfg.r, c.cfg.twf_params, reference=c.reference, **c.solver_kwargs),
        ),
        AlgorithmSpec(
            "lrpr1",
            "per-column",
            lambda c: run_lrpr1(c.meas, c.ens, c.cfg.twf_params, rank_mode=c.rank_mode, reference=c.reference, **c.solver_kwargs),
        ),
        AlgorithmSpec(
            "lrpr2",
            "per-column",
            lambda c: run_lrpr2(
                c.meas,
                c.ens,
                iterations=c.cfg.iterations,
                rank_mode=c.rank_mode,
                reference=c.reference,
                cgls_iters=c.cfg.cgls_iters,
                power_iters=c.cfg.power_iters,
                seed=c.seed,
                dense_eig_threshold=c.cfg.dense_eig_threshold,
                dense_ls_threshold=c.cfg.dense_ls_threshold,
            ),
        ),
    ]
}


def derive_seed(seed: int, *key: int) -> int:
    """Deterministic 32-bit seed for a (cell, trial, ...) key."""
    return int(np.random.SeedSequence(seed, spawn_key=tuple(key)).generate_state(1)[0])


def iter_cells(cfg: ExperimentConfig) -> Iterator[Cell]:
    grid = product(cfg.fields, cfg.noise_halfwidths, cfg.m_over_n, cfg.q_list)
    for index, (field, noise, ratio, q) in enumerate(grid):
        yield Cell(index=index, field=field, noise_halfwidth=noise, m_over_n=ratio, q=q)


def _ensemble_kind(cfg: ExperimentConfig, field: str) -> str:
    if cfg.ensemble == "cdp":
        return "cdp"
    return f"gaussian-{field}"


def _make_context(cfg: ExperimentConfig, cell: Cell, gt: GroundTruth, layout: str, seed: int) -> TrialContext:
    m = cfg.m_for(cell.m_over_n)
    cdp_dims = None
    if cfg.ensemble == "cdp":
        cdp_dims = (cfg.cdp_dims[0], cfg.cdp_dims[1], m // cfg.n)
    ens = gen_ensemble(
        _ensemble_kind(cfg, cell.field),
        cfg.n,
        m,
        cell.q,
        sharing="shared" if layout == "shared" else "per-column",
        seed=seed,
        cdp_dims=cdp_dims,
        m_fresh=cfg.m_fresh if layout == "partitioned" else 0,
    )
    meas = measure(ens, gt, noise_halfwidth=cell.noise_halfwidth, seed=seed)
    return TrialContext(cfg=cfg, gt=gt, ens=ens, meas=meas, seed=seed)


def run_trial(cfg: ExperimentConfig, cell: Cell, gt: GroundTruth, trial: int) -> List[dict]:
    """
    Runs every configured algorithm on one trial of one cell.

    Failures raised by an algorithm are caught, logged and recorded with
    ``failed=True``; they never stop the experiment.

    Returns:
        list: One record per algorithm.
    """
    seed = derive_seed(cfg.seed, cell.index, trial)
    contexts: Dict[str, TrialContext] = {}
    records = []
    for name in cfg.algorithms:
        spec = ALGORITHMS[name]
        if spec.layout not in contexts:
            contexts[spec.layout] = _make_context(cfg, cell, gt, spec.layout, seed)
        ctx = contexts[spec.layout]

        record = {**cell.as_dict(), "trial": trial, "algorithm": name}
        start = time.perf_counter()
        try:
            est = spec.run(ctx)
            seconds = time.perf_counter() - start
            report = error_report(gt, est.X_hat, est.U_hat, est.r_hat)
            record.update(
                norm_err=report.norm_err,
                se=report.se,
                r_hat=None if est.r_hat is None else int(est.r_hat),
                rank_correct=report.rank_correct,
                seconds=seconds,
                degenerate=bool(est.degenerate),
                failed=False,
                error=None,
                trace=[[int(p.iteration), float(p.norm_err), float(p.elapsed)] for p in est.trace]
                if cfg.record_traces
                else [],
            )
        except (LrprError, np.linalg.LinAlgError, FloatingPointError) as e:
            logger.warning(f"{name} failed on cell {cell.index} trial {trial}: {e}")
            record.update(
                norm_err=None,
                se=None,
                r_hat=None,
                rank_correct=None,
                seconds=time.perf_counter() - start,
                degenerate=False,
                failed=True,
                error=f"{type(e).__name__}: {e}",
                trace=[],
            )
        records.append(record)
    return records


def _append_records(path: str, records: List[dict]) -> None:
    try:
        with open(path, "a") as f:
            for record in records:
                f.write(json.dumps(record) + "\n")
    except OSError as e:
        logger.error(f"Error in _append_records writing {path}: {e}")
        raise


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> ExperimentReport:
    """
    Runs the whole grid.

    Args:
        cfg (ExperimentConfig): The experiment.
        out_dir (str, optional): Directory for ``trials.jsonl``; defaults to
            ``cfg.output_dir``. Nothing is written when both are None.

    Returns:
        ExperimentReport: All trial records with their aggregates.
    """
    out_dir = out_dir or cfg.output_dir
    trials_path = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        trials_path = os.path.join(out_dir, TRIALS_FILE)
        open(trials_path, "w").close()

    n_jobs = 1 if cfg.timing_mode else cfg.threads
    cells = list(iter_cells(cfg))
    logger.info(
        f"Running {len(cells)} cell(s) x {cfg.trials} trial(s) x {len(cfg.algorithms)} algorithm(s) with n_jobs={n_jobs}."
    )
    records: List[dict] = []
    # timing mode also pins BLAS and FFT pools to one thread
    limits = threadpool_limits(limits=1) if cfg.timing_mode else nullcontext()
    with limits:
        for cell in cells:
            gt = gen_low_rank(cfg.n, cell.q, cfg.r, seed=derive_seed(cfg.seed, cell.index))
            per_trial = Parallel(n_jobs=n_jobs, prefer="threads")(
                delayed(run_trial)(cfg, cell, gt, trial) for trial in range(cfg.trials)
            )
            cell_records = [record for trial_records in per_trial for record in trial_records]
            if trials_path:
                _append_records(trials_path, cell_records)
            failures = sum(record["failed"] for record in cell_records)
            logger.info(f"Cell {cell.index} {cell.as_dict()} done; {failures} failure(s).")
            records.extend(cell_records)

    return ExperimentReport(records, config=cfg.model_dump(mode="json"))
