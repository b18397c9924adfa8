import pytest
import numpy as np
from numpy.testing import assert_allclose
from pydantic import ValidationError
from lowrank_pr.algorithms.estimate import RankMode
from lowrank_pr.algorithms.initializers import lrpr_init
from lowrank_pr.algorithms.twf import (
    TwfParams,
    run_lrpr1,
    run_lrpr_twf,
    run_twf,
    run_twfproj,
    twf_step,
    twf_sweep,
)
from lowrank_pr.errors import NumericalBreakdownError
from lowrank_pr.measurement import GaussianEnsemble, gen_ensemble, gen_low_rank, measure
from lowrank_pr.metrics import norm_err


@pytest.fixture
def complex_problem():
    gt = gen_low_rank(16, 10, 2, seed=8)
    ens = gen_ensemble("gaussian-complex", 16, 128, 10, seed=8)
    return gt, ens, measure(ens, gt)


@pytest.fixture
def real_problem():
    gt = gen_low_rank(10, 40, 2, seed=4)
    ens = gen_ensemble("gaussian-real", 10, 30, 40, seed=4)
    return gt, ens, measure(ens, gt)


def test_twf_params_defaults():
    p = TwfParams()
    assert (p.mu, p.alpha_lb, p.alpha_ub, p.alpha_h, p.iterations) == (0.2, 0.3, 5.0, 5.0, 100)
    assert p.events == "union"


def test_twf_params_validation():
    with pytest.raises(ValidationError):
        TwfParams(alpha_lb=5.0, alpha_ub=1.0)
    with pytest.raises(ValidationError):
        TwfParams(mu=-0.1)
    with pytest.raises(ValidationError):
        TwfParams(step=0.1)


def test_twf_step_keeps_truth_fixed(complex_problem):
    gt, ens, meas = complex_problem
    x = gt.X[:, 3].astype(complex)
    assert_allclose(twf_step(x, meas.y[:, 3], ens, 3, TwfParams()), x, atol=1e-10)


def test_twf_step_with_zero_step_size(complex_problem):
    _, ens, meas = complex_problem
    x = np.ones(ens.n, dtype=complex)
    assert np.array_equal(twf_step(x, meas.y[:, 0], ens, 0, TwfParams(mu=0.0)), x)


def test_twf_step_rejects_non_finite(complex_problem):
    _, ens, meas = complex_problem
    x = np.ones(ens.n, dtype=complex)
    x[2] = np.nan
    with pytest.raises(NumericalBreakdownError):
        twf_step(x, meas.y[:, 0], ens, 0, TwfParams())


@pytest.mark.parametrize("events", ["intersection", "union"])
def test_twf_sweep_matches_column_steps(complex_problem, events):
    gt, ens, meas = complex_problem
    rng = np.random.default_rng(0)
    X = gt.X + 0.1 * (rng.standard_normal(gt.X.shape) + 1j * rng.standard_normal(gt.X.shape))
    p = TwfParams(events=events)
    swept = twf_sweep(X, meas.y, ens, p)
    for k in range(ens.q):
        assert_allclose(swept[:, k], twf_step(X[:, k], meas.y[:, k], ens, k, p), atol=1e-10)


def test_twf_sweep_moves_towards_truth(complex_problem):
    gt, ens, meas = complex_problem
    rng = np.random.default_rng(1)
    X = gt.X + 0.05 * (rng.standard_normal(gt.X.shape) + 1j * rng.standard_normal(gt.X.shape))
    assert norm_err(gt.X, twf_sweep(X, meas.y, ens, TwfParams())) < norm_err(gt.X, X)


def test_run_lrpr_twf_converges(complex_problem):
    gt, ens, meas = complex_problem
    est = run_lrpr_twf(meas, ens, TwfParams(iterations=60), rank_mode=RankMode.known(2), reference=gt.X)
    assert len(est.trace) == 61
    assert [p.iteration for p in est.trace] == list(range(61))
    elapsed = [p.elapsed for p in est.trace]
    assert all(b >= a for a, b in zip(elapsed, elapsed[1:]))
    assert est.trace[-1].norm_err < 1e-3
    assert est.trace[-1].norm_err < est.trace[0].norm_err
    assert est.r_hat == 2


def test_run_twf_without_reference_records_nan(complex_problem):
    _, ens, meas = complex_problem
    est = run_twf(meas, ens, TwfParams(iterations=3))
    assert len(est.trace) == 4
    assert np.isnan(est.trace[0].norm_err)
    assert est.U_hat is None


def test_run_lrpr1_returns_rank_r_factors(real_problem):
    gt, ens, meas = real_problem
    est = run_lrpr1(meas, ens, TwfParams(iterations=5), rank_mode=RankMode.known(2), reference=gt.X)
    assert est.r_hat == 2
    assert_allclose(est.U_hat.T @ est.U_hat, np.eye(2), atol=1e-10)
    assert_allclose(est.X_hat, est.U_hat @ est.B_hat, atol=1e-12)
    assert np.linalg.matrix_rank(est.X_hat) == 2


def test_run_lrpr1_zero_step_keeps_initializer(real_problem):
    gt, ens, meas = real_problem
    est = run_lrpr1(meas, ens, TwfParams(mu=0.0, iterations=1), rank_mode=RankMode.known(2), reference=gt.X)
    assert est.trace[1].norm_err == pytest.approx(est.trace[0].norm_err, rel=1e-8)


def test_run_twfproj_returns_rank_r_factors(real_problem):
    gt, ens, meas = real_problem
    est = run_twfproj(meas, ens, 2, TwfParams(iterations=5), reference=gt.X)
    assert est.U_hat.shape == (10, 2)
    assert np.linalg.matrix_rank(est.X_hat) == 2
    assert len(est.trace) == 6


def _summed_twf_step(x_hat, y, rows, p):
    """Term-by-term truncated gradient step; rows[i] holds a_i^H."""
    m, n = rows.shape
    norm = np.sqrt(sum(abs(v) ** 2 for v in x_hat))
    u = [sum(rows[i, j] * x_hat[j] for j in range(n)) for i in range(m)]
    resid = [y[i] - abs(u[i]) ** 2 for i in range(m)]
    spread = sum(abs(r) for r in resid) / m
    step = np.zeros(n, dtype=complex)
    for i in range(m):
        ratio = abs(u[i]) / norm
        in_band = p.alpha_lb <= ratio <= p.alpha_ub
        small_resid = abs(resid[i]) <= p.alpha_h * spread * ratio
        keep = (in_band or small_resid) if p.events == "union" else (in_band and small_resid)
        if keep:
            step += resid[i] / np.conj(u[i]) * np.conj(rows[i])
    return x_hat + p.mu / m * step


@pytest.mark.parametrize("events", ["union", "intersection"])
@pytest.mark.parametrize("complex_valued", [False, True])
def test_twf_step_matches_direct_summation(events, complex_valued):
    rng = np.random.default_rng(17)
    p = TwfParams(events=events)
    for _ in range(20):
        rows = rng.standard_normal((1, 6, 4))
        x = rng.standard_normal(4)
        x_hat = x + 0.3 * rng.standard_normal(4)
        if complex_valued:
            rows = rows + 1j * rng.standard_normal((1, 6, 4))
            x_hat = x_hat + 0.3j * rng.standard_normal(4)
        y = np.abs(rows[0] @ x) ** 2
        expected = _summed_twf_step(x_hat, y, rows[0], p)
        assert_allclose(twf_step(x_hat, y, GaussianEnsemble(rows), 0, p), expected, rtol=0, atol=1e-12)


def test_run_lrpr_twf_without_iterations_returns_initializer(complex_problem):
    gt, ens, meas = complex_problem
    est = run_lrpr_twf(meas, ens, TwfParams(iterations=0), rank_mode=RankMode.known(2), reference=gt.X)
    start = lrpr_init(meas, ens, RankMode.known(2))
    assert len(est.trace) == 1
    assert_allclose(est.X_hat, start.X_hat, atol=1e-12)
