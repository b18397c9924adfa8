import pytest
import json
import os
from unittest.mock import patch
from lowrank_pr.errors import RankDeficiencyError
from lowrank_pr.harness.config import ExperimentConfig
from lowrank_pr.harness.runner import (
    ALGORITHMS,
    TRIALS_FILE,
    AlgorithmSpec,
    derive_seed,
    iter_cells,
    run_experiment,
    run_trial,
)
from lowrank_pr.measurement import gen_low_rank


@pytest.fixture
def small_config():
    return ExperimentConfig(
        n=8,
        r=1,
        q_list=[6],
        m_over_n=[4.0],
        trials=2,
        iterations=3,
        algorithms=["lrpr-init", "twf-init", "lrpr-twf"],
    )


def test_iter_cells_order():
    cfg = ExperimentConfig(n=10, r=1, q_list=[5, 20], m_over_n=[0.5, 1.0], fields=["real", "complex"])
    cells = list(iter_cells(cfg))
    assert len(cells) == 8
    assert [c.index for c in cells] == list(range(8))
    assert cells[0].as_dict() == {"field": "real", "noise_halfwidth": 0.0, "m_over_n": 0.5, "q": 5}
    assert cells[1].q == 20
    assert cells[-1].field == "complex"


def test_derive_seed_is_deterministic():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)


def test_run_trial_records(small_config):
    cell = next(iter_cells(small_config))
    gt = gen_low_rank(8, 6, 1, seed=0)
    records = run_trial(small_config, cell, gt, trial=0)
    assert [r["algorithm"] for r in records] == ["lrpr-init", "twf-init", "lrpr-twf"]
    for record in records:
        assert not record["failed"]
        assert record["trial"] == 0
        assert record["norm_err"] >= 0.0
        assert record["seconds"] >= 0.0
    assert records[0]["r_hat"] == 1 and records[0]["rank_correct"] is True
    assert records[1]["r_hat"] is None
    assert len(records[2]["trace"]) == 4


def test_run_trial_without_traces(small_config):
    cfg = small_config.with_overrides(record_traces=False)
    cell = next(iter_cells(cfg))
    records = run_trial(cfg, cell, gen_low_rank(8, 6, 1, seed=0), trial=1)
    assert all(record["trace"] == [] for record in records)


def test_failures_are_recorded(small_config):
    def broken(ctx):
        raise RankDeficiencyError("singular system")

    cell = next(iter_cells(small_config))
    with patch.dict(ALGORITHMS, {"twf-init": AlgorithmSpec("twf-init", "per-column", broken)}):
        records = run_trial(small_config, cell, gen_low_rank(8, 6, 1, seed=0), trial=0)
    failed = records[1]
    assert failed["failed"] is True
    assert failed["norm_err"] is None
    assert failed["error"].startswith("RankDeficiencyError")
    assert not records[0]["failed"]


def test_underdetermined_altmin_is_a_failed_trial():
    cfg = ExperimentConfig(n=12, r=2, q_list=[2], m_over_n=[0.5], trials=1, iterations=2, algorithms=["lrpr2"])
    report = run_experiment(cfg)
    assert report.records[0]["failed"]
    assert report.cell_summary().iloc[0]["fail_count"] == 1


def test_run_experiment_writes_trials(tmp_path, small_config):
    report = run_experiment(small_config, out_dir=str(tmp_path))
    with open(os.path.join(tmp_path, TRIALS_FILE)) as f:
        lines = [json.loads(line) for line in f]
    assert len(lines) == 6
    assert len(report.records) == 6
    assert lines[0]["algorithm"] == "lrpr-init"
    assert report.config["n"] == 8


def test_run_experiment_is_deterministic_across_threads(small_config):
    serial = run_experiment(small_config)
    threaded = run_experiment(small_config.with_overrides(threads=2))
    assert [r["norm_err"] for r in serial.records] == [r["norm_err"] for r in threaded.records]
    assert serial.run_id == threaded.run_id


def test_seed_changes_results(small_config):
    first = run_experiment(small_config)
    second = run_experiment(small_config.with_overrides(seed=3))
    assert [r["norm_err"] for r in first.records] != [r["norm_err"] for r in second.records]


def test_partitioned_and_shared_layouts():
    cfg = ExperimentConfig(
        n=10,
        r=1,
        q_list=[40],
        m_over_n=[4.0],
        trials=1,
        algorithms=["lrpr-init-partitioned", "lrpr-same"],
        fresh_over_n=2.0,
    )
    records = run_experiment(cfg).records
    assert [r["failed"] for r in records] == [False, False]
    assert all(r["norm_err"] < 1.0 for r in records)


def test_cdp_experiment():
    cfg = ExperimentConfig(
        n=16,
        r=1,
        q_list=[10],
        m_over_n=[4.0],
        fields=["complex"],
        ensemble="cdp",
        cdp_dims=(4, 4),
        trials=1,
        algorithms=["lrpr-init", "twfproj-init"],
    )
    records = run_experiment(cfg).records
    assert [r["failed"] for r in records] == [False, False]
    assert records[0]["norm_err"] < 1.0


def test_timing_mode_limits_native_thread_pools(small_config):
    with patch("lowrank_pr.harness.runner.threadpool_limits") as limits:
        run_experiment(small_config.with_overrides(trials=1, timing_mode=True))
    limits.assert_called_once_with(limits=1)


def test_thread_pools_untouched_outside_timing_mode(small_config):
    with patch("lowrank_pr.harness.runner.threadpool_limits") as limits:
        run_experiment(small_config.with_overrides(trials=1))
    limits.assert_not_called()
