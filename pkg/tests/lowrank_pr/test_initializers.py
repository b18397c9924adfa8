import pytest
import numpy as np
from numpy.testing import assert_allclose
from lowrank_pr.algorithms.estimate import RankMode
from lowrank_pr.algorithms.initializers import (
    build_YU,
    estimate_rank_gap,
    estimate_rank_threshold,
    lrpr_init,
    truncation_mask,
    twf_init,
    twf_init_all,
    twfproj_init,
)
from lowrank_pr.errors import ConfigurationError, NoSignalError
from lowrank_pr.measurement import GaussianEnsemble, Measurements, gen_ensemble, gen_low_rank, measure
from lowrank_pr.metrics import norm_err, subspace_error


@pytest.fixture
def real_problem():
    gt = gen_low_rank(20, 500, 2, seed=3)
    ens = gen_ensemble("gaussian-real", 20, 40, 500, seed=3)
    return gt, ens, measure(ens, gt)


@pytest.fixture
def tiny_problem():
    gt = gen_low_rank(5, 4, 1, seed=2)
    ens = gen_ensemble("gaussian-real", 5, 7, 4, seed=2)
    return gt, ens, measure(ens, gt)


def test_truncation_mask_drops_outlier():
    y = np.ones((10, 1))
    y[0, 0] = 100.0
    mask = truncation_mask(y)
    assert not mask[0, 0]
    assert mask[1:, 0].all()


def test_build_YU_matches_explicit_sum(tiny_problem):
    _, ens, meas = tiny_problem
    y = meas.y
    m, q = y.shape
    expected = np.zeros((ens.n, ens.n))
    for k in range(q):
        threshold = 9 * y[:, k].mean()
        for i in range(m):
            if y[i, k] <= threshold:
                a = ens.column_rows(k)[i]
                expected += y[i, k] * np.outer(a, a)
    expected /= m * q
    op = build_YU(y, ens)
    assert_allclose(op.dense, expected, atol=1e-12)


def test_build_YU_operator_matches_dense(tiny_problem):
    _, ens, meas = tiny_problem
    dense = build_YU(meas, ens)
    lazy = build_YU(meas, ens, dense_threshold=0)
    assert lazy.dense is None
    V = np.random.default_rng(0).standard_normal((ens.n, 3))
    assert_allclose(lazy(V), dense.dense @ V, atol=1e-12)
    assert_allclose(lazy(V[:, 0]), dense.dense @ V[:, 0], atol=1e-12)


def test_build_YU_rejects_empty_measurements(tiny_problem):
    _, ens, _ = tiny_problem
    with pytest.raises(ConfigurationError):
        build_YU(np.zeros((0, 4)), ens)


@pytest.mark.parametrize(
    "values,expected", [((4.0, 2.0, 0.0), 1), ((10.0, 9.0, 1.0, 0.5), 2), ((3.0, 3.0, 3.0), 1)]
)
def test_estimate_rank_gap(values, expected):
    assert estimate_rank_gap(np.array(values)) == expected


def test_estimate_rank_gap_needs_two_values():
    with pytest.raises(ConfigurationError):
        estimate_rank_gap(np.array([1.0]))


def test_estimate_rank_threshold_counts_signal_eigenvalues():
    assert estimate_rank_threshold(np.array([5.0, 4.0, 1.0, 1.0]), 4.0) == 2
    assert estimate_rank_threshold(np.array([2.0, 2.0, 2.0]), 1.0) == 0


@pytest.mark.parametrize(
    "values, expected",
    [
        ([1.0, 0.9, 0.1, 0.1], 2),
        ([0.6, 0.35, 0.35], 1),
    ],
)
def test_estimate_rank_threshold_quarter_margin(values, expected):
    assert estimate_rank_threshold(np.array(values), 1.0) == expected


def test_build_YU_top_eigenvector_aligns_with_subspace():
    gt = gen_low_rank(20, 1000, 1, seed=5)
    ens = gen_ensemble("gaussian-real", 20, 200, 1000, seed=5)
    op = build_YU(measure(ens, gt), ens)
    _, vecs = np.linalg.eigh(op.dense)
    assert subspace_error(gt.U, vecs[:, -1:]) <= 0.05


def test_estimate_rank_threshold_rejects_nonpositive_bound():
    with pytest.raises(ConfigurationError):
        estimate_rank_threshold(np.array([2.0, 1.0]), 0.0)


def test_lrpr_init_recovers_subspace(real_problem):
    gt, ens, meas = real_problem
    est = lrpr_init(meas, ens, RankMode.known(2))
    assert est.r_hat == 2
    assert est.U_hat.shape == (20, 2)
    assert est.B_hat.shape == (2, 500)
    assert_allclose(est.X_hat, est.U_hat @ est.B_hat)
    assert subspace_error(gt.U, est.U_hat) < 0.35
    assert norm_err(gt.X, est.X_hat) < 0.3


def test_lrpr_init_gap_finds_rank(real_problem):
    _, ens, meas = real_problem
    est = lrpr_init(meas, ens, RankMode.gap())
    assert est.r_hat == 2
    assert est.spectrum.shape == (20,)


def test_lrpr_init_threshold_with_oracle_bound(real_problem):
    gt, ens, meas = real_problem
    est = lrpr_init(meas, ens, RankMode.threshold(gt.lambda_min))
    assert est.r_hat >= 1


def test_lrpr_init_is_scale_equivariant(tiny_problem):
    _, ens, meas = tiny_problem
    base = lrpr_init(meas, ens, RankMode.known(1))
    scaled = lrpr_init(Measurements(y=4.0 * meas.y), ens, RankMode.known(1))
    assert subspace_error(base.U_hat, scaled.U_hat) < 1e-8
    assert norm_err(2.0 * base.X_hat, scaled.X_hat) < 1e-12


def test_lrpr_init_zero_measurements(tiny_problem):
    _, ens, meas = tiny_problem
    est = lrpr_init(np.zeros_like(meas.y), ens, RankMode.known(1))
    assert est.degenerate
    assert not np.any(est.X_hat)


def test_lrpr_init_threshold_without_signal(tiny_problem):
    _, ens, meas = tiny_problem
    with pytest.raises(NoSignalError):
        lrpr_init(np.zeros_like(meas.y), ens, RankMode.threshold(1.0))


def test_lrpr_init_operator_path_matches_dense(real_problem):
    gt, ens, meas = real_problem
    dense = lrpr_init(meas, ens, RankMode.known(2))
    lazy = lrpr_init(meas, ens, RankMode.known(2), power_iters=200, dense_threshold=0)
    assert subspace_error(dense.U_hat, lazy.U_hat) < 1e-4


def test_lrpr_init_partitioned(real_problem):
    gt, _, _ = real_problem
    ens = gen_ensemble("gaussian-real", 20, 40, 500, seed=3, m_fresh=40)
    meas = measure(ens, gt)
    est = lrpr_init(meas, ens, RankMode.known(2), partitioned=True)
    assert subspace_error(gt.U, est.U_hat) < 0.35
    assert norm_err(gt.X, est.X_hat) < 0.35


def test_lrpr_init_plain_ignores_fresh_rows(real_problem):
    gt, _, _ = real_problem
    ens = gen_ensemble("gaussian-real", 20, 40, 500, seed=3, m_fresh=40)
    meas = measure(ens, gt)
    est = lrpr_init(meas, ens, RankMode.known(2))
    init_only = lrpr_init(meas.y_init, ens.take_rows(0, meas.m_init), RankMode.known(2))
    assert_allclose(est.X_hat, init_only.X_hat, atol=1e-10)
    assert_allclose(est.spectrum, init_only.spectrum, atol=1e-12)


def test_lrpr_init_partitioned_needs_fresh_rows(tiny_problem):
    _, ens, meas = tiny_problem
    with pytest.raises(ConfigurationError):
        lrpr_init(meas, ens, RankMode.known(1), partitioned=True)


def test_twf_init_single_measurement_points_along_vector():
    a = np.array([1.0, -2.0, 0.5])
    ens = GaussianEnsemble(a[None, None, :])
    x_hat = twf_init(np.array([3.0]), ens, 0)
    cosine = abs(x_hat @ a) / (np.linalg.norm(x_hat) * np.linalg.norm(a))
    assert cosine == pytest.approx(1.0)
    assert np.linalg.norm(x_hat) == pytest.approx(np.sqrt(3.0))


def test_twf_init_zero_column(tiny_problem):
    _, ens, _ = tiny_problem
    assert not np.any(twf_init(np.zeros(ens.m), ens, 0))


def test_twf_init_all_matches_single_column(tiny_problem):
    _, ens, meas = tiny_problem
    X0, zero = twf_init_all(meas, ens)
    assert not zero.any()
    for k in range(ens.q):
        single = twf_init(meas.y[:, k], ens, k)
        assert norm_err(single[:, None], X0[:, [k]]) < 1e-12


def test_twfproj_init_has_requested_rank(real_problem):
    _, ens, meas = real_problem
    est = twfproj_init(meas, ens, 2)
    assert np.linalg.matrix_rank(est.X_hat) == 2
    assert_allclose(est.U_hat.T @ est.U_hat, np.eye(2), atol=1e-10)
