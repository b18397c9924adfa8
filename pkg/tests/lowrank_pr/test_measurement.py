import pytest
import numpy as np
from numpy.testing import assert_allclose
from scipy.linalg import dft
from lowrank_pr.errors import ConfigurationError, DimensionError, PartitionError
from lowrank_pr.measurement import (
    CdpEnsemble,
    GaussianEnsemble,
    GroundTruth,
    Measurements,
    StackedEnsemble,
    gen_ensemble,
    gen_low_rank,
    measure,
    split_measurements,
)


@pytest.fixture
def small_truth():
    return gen_low_rank(8, 6, 2, seed=11)


@pytest.fixture
def complex_ensemble():
    return gen_ensemble("gaussian-complex", 8, 12, 6, seed=5)


@pytest.fixture
def cdp_ensemble():
    return gen_ensemble("cdp", 6, 12, 4, seed=2, cdp_dims=(2, 3, 2))


def _random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_gen_low_rank_is_orthonormal_and_deterministic():
    gt = gen_low_rank(100, 1000, 2, seed=7)
    again = gen_low_rank(100, 1000, 2, seed=7)
    assert gt.X.shape == (100, 1000)
    assert_allclose(gt.U.T @ gt.U, np.eye(2), atol=1e-12)
    assert_allclose(gt.X, gt.U @ gt.B)
    assert np.all(np.abs(gt.B) <= 1.0)
    assert np.array_equal(gt.X, again.X)


def test_gen_low_rank_smallest_full_rank_case():
    gt = gen_low_rank(3, 3, 3, seed=0)
    assert np.linalg.matrix_rank(gt.X) == 3


@pytest.mark.parametrize("n,q,r", [(5, 5, 0), (4, 10, 5), (10, 3, 4)])
def test_gen_low_rank_rejects_bad_rank(n, q, r):
    with pytest.raises(DimensionError):
        gen_low_rank(n, q, r)


def test_ground_truth_kappa_and_rho(small_truth):
    assert small_truth.kappa >= 1.0
    assert small_truth.rho >= 1.0
    assert small_truth.lambda_min == pytest.approx(small_truth.lambda_bar[-1])


def test_per_column_vectors_are_distinct():
    ens = gen_ensemble("gaussian-real", 100, 100, 100, seed=3)
    flat = ens.rows.reshape(-1, 100)
    assert np.unique(flat, axis=0).shape[0] == 10000


def test_shared_vectors_are_identical_across_columns():
    ens = gen_ensemble("gaussian-real", 5, 7, 4, sharing="shared", seed=3)
    assert ens.column_rows(0) is ens.column_rows(3)


def test_columns_do_not_depend_on_q():
    small = gen_ensemble("gaussian-complex", 5, 7, 3, seed=9)
    large = gen_ensemble("gaussian-complex", 5, 7, 6, seed=9)
    for k in range(3):
        assert np.array_equal(small.column_rows(k), large.column_rows(k))


def test_complex_rows_have_unit_variance():
    ens = gen_ensemble("gaussian-complex", 50, 200, 10, seed=1)
    assert np.mean(np.abs(ens.rows) ** 2) == pytest.approx(1.0, abs=0.02)


@pytest.mark.parametrize("fixture_name", ["complex_ensemble", "cdp_ensemble"])
def test_adjoint_matches_inner_product(fixture_name, request):
    ens = request.getfixturevalue(fixture_name)
    rng = np.random.default_rng(0)
    X = _random_complex(rng, ens.n, ens.q)
    Z = _random_complex(rng, ens.m, ens.q)
    lhs = np.vdot(Z, ens.forward_all(X))
    rhs = np.vdot(ens.adjoint_all(Z), X)
    assert lhs == pytest.approx(rhs, rel=1e-10)


@pytest.mark.parametrize("fixture_name", ["complex_ensemble", "cdp_ensemble"])
def test_batched_maps_agree_with_per_column_maps(fixture_name, request):
    ens = request.getfixturevalue(fixture_name)
    rng = np.random.default_rng(1)
    X = _random_complex(rng, ens.n, ens.q)
    Z = _random_complex(rng, ens.m, ens.q)
    fwd = ens.forward_all(X)
    adj = ens.adjoint_all(Z)
    for k in range(ens.q):
        assert_allclose(fwd[:, k], ens.forward(k, X[:, k]), atol=1e-12)
        assert_allclose(adj[:, k], ens.adjoint(k, Z[:, k]), atol=1e-12)
    V = X[:, :2]
    block = ens.forward_block(V)
    assert_allclose(block[1], ens.forward(1, V), atol=1e-12)


def test_cdp_forward_matches_dense_dft(cdp_ensemble):
    rng = np.random.default_rng(4)
    x = _random_complex(rng, 6)
    F = np.kron(dft(2), dft(3))
    masks = cdp_ensemble.column_masks(1)
    expected = np.concatenate([F @ (masks[l].reshape(-1) * x) for l in range(2)])
    assert_allclose(cdp_ensemble.forward(1, x), expected, atol=1e-12)


def test_cdp_masks_use_quarter_turns(cdp_ensemble):
    values = set(np.round(cdp_ensemble.masks.reshape(-1), 12).tolist())
    assert values <= {1, -1, 1j, -1j}


def test_cdp_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        gen_ensemble("cdp", 6, 12, 4, cdp_dims=(2, 2, 3))
    with pytest.raises(ConfigurationError):
        gen_ensemble("cdp", 6, 12, 4)


def test_cdp_large_operator_is_not_materialized():
    masks = np.ones((1, 80, 80))
    ens = CdpEnsemble(masks, q=1)
    with pytest.raises(ConfigurationError):
        ens.column_matrix(0)


def test_weighted_gram_matches_explicit_sum(complex_ensemble):
    rng = np.random.default_rng(2)
    W = rng.uniform(0, 1, size=(complex_ensemble.m, complex_ensemble.q))
    expected = sum(
        complex_ensemble.column_rows(k).conj().T @ np.diag(W[:, k]) @ complex_ensemble.column_rows(k)
        for k in range(complex_ensemble.q)
    )
    assert_allclose(complex_ensemble.weighted_gram(W), expected, atol=1e-10)


def test_cdp_weighted_gram_matches_materialized(cdp_ensemble):
    W = np.ones((cdp_ensemble.m, cdp_ensemble.q))
    expected = sum(
        cdp_ensemble.column_matrix(k).conj().T @ cdp_ensemble.column_matrix(k) for k in range(cdp_ensemble.q)
    )
    assert_allclose(cdp_ensemble.weighted_gram(W), expected, atol=1e-9)
    assert_allclose(cdp_ensemble.gram_stack.sum(axis=0), expected, atol=1e-9)


def test_shared_gram_stack_is_broadcast():
    ens = gen_ensemble("gaussian-real", 4, 9, 5, sharing="shared", seed=1)
    rows = ens.column_rows(0)
    assert ens.gram_stack.shape == (5, 4, 4)
    assert_allclose(ens.gram_stack[3], rows.T @ rows)


def test_measure_single_unit_vector():
    e1 = np.array([1.0, 0.0, 0.0])
    gt = GroundTruth(U=e1[:, None], B=np.array([[1.0]]), X=e1[:, None])
    ens = GaussianEnsemble(e1[None, None, :])
    meas = measure(ens, gt)
    assert meas.y.shape == (1, 1)
    assert meas.y[0, 0] == pytest.approx(1.0)


def test_weighted_outer_products_average_to_expectation():
    n, N = 3, 100_000
    x = np.array([1.0, -0.5, 2.0])
    energy = x @ x
    gt = GroundTruth(U=(x / np.sqrt(energy))[:, None], B=np.array([[np.sqrt(energy)]]), X=x[:, None])
    ens = gen_ensemble("gaussian-real", n, N, 1, seed=21)
    y = measure(ens, gt).y
    mean = ens.weighted_gram(y) / N
    expected = 2 * np.outer(x, x) + energy * np.eye(n)
    # y a a' has fourth-moment spread: the a'x direction alone has std sqrt(96) ||x||^2
    assert np.linalg.norm(mean - expected, 2) <= 40 * energy / np.sqrt(N)


def test_measure_noise_is_bounded_and_not_clipped():
    gt = gen_low_rank(6, 20, 1, seed=4)
    ens = gen_ensemble("gaussian-real", 6, 30, 20, seed=4)
    clean = measure(ens, gt)
    noisy = measure(ens, gt, noise_halfwidth=1.0, seed=4)
    diff = noisy.y - clean.y
    assert np.all(np.abs(diff) <= 1.0)
    assert np.any(noisy.y < 0)
    assert noisy.noise_halfwidth == 1.0


def test_measure_rejects_mismatched_dimensions(small_truth):
    ens = gen_ensemble("gaussian-real", 8, 10, 7, seed=0)
    with pytest.raises(DimensionError):
        measure(ens, small_truth)


def test_split_measurements_partitioned_rows(small_truth):
    ens = gen_ensemble("gaussian-real", 8, 10, 6, seed=0, m_fresh=4)
    assert isinstance(ens, StackedEnsemble)
    meas = measure(ens, small_truth)
    assert meas.m_fresh == 4
    init, fresh = split_measurements(ens, meas, 10, 4)
    assert init.y.shape == (10, 6)
    assert fresh.y.shape == (4, 6)
    assert fresh.ensemble.sharing == "shared"
    assert_allclose(np.abs(fresh.ensemble.forward_all(small_truth.X)) ** 2, fresh.y)
    assert_allclose(meas.y_new, fresh.y)


def test_split_measurements_sizes_must_add_up(small_truth):
    ens = gen_ensemble("gaussian-real", 8, 10, 6, seed=0)
    meas = measure(ens, small_truth)
    with pytest.raises(PartitionError):
        split_measurements(ens, meas, 6, 3)


def test_split_measurements_without_fresh_rows(small_truth):
    ens = gen_ensemble("gaussian-real", 8, 10, 6, seed=0)
    meas = measure(ens, small_truth)
    init, fresh = split_measurements(ens, meas.y, 10, 0)
    assert init.m == 10
    assert fresh.ensemble is None
    assert fresh.m == 0


def test_measurements_views():
    y = np.arange(12.0).reshape(4, 3)
    meas = Measurements(y=y, m_fresh=1)
    assert meas.m_init == 3
    assert_allclose(meas.y_init, y[:3])
    assert_allclose(meas.y_new, y[3:])
    assert Measurements(y=y).y_new is None
