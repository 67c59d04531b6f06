import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coral.problem import (
    ClassificationProblem,
    finite_difference_grad,
    generate_classification,
    grad_norm_at_mean,
    load_dataset_csv,
    quadratic_problem,
    save_dataset_csv,
)


def test_quadratic_minimizer_mean():
    q = quadratic_problem([(1, 0), (0, 1)])
    assert np.allclose(q.minimizer, [0.5, 0.5])
    assert q.lipschitz == 1.0


def test_quadratic_identical_targets_stationary():
    v = np.array([0.3, -2.0, 1.0])
    q = quadratic_problem([v] * 4)
    assert np.allclose(q.grad(v), 0.0)


def test_quadratic_dimension_mismatch():
    with pytest.raises(ValueError):
        quadratic_problem([(1, 0), (0, 1, 2)])


def test_quadratic_closed_form_vs_descent(rng):
    q = quadratic_problem(rng.standard_normal((6, 4)))
    x = np.zeros(4)
    for _ in range(10_000):
        g = q.grad(x)
        if np.linalg.norm(g) < 1e-12:
            break
        x = x - 0.1 * g
    assert np.allclose(x, q.minimizer, atol=1e-10)


def test_grad_norm_at_mean_examples():
    q = quadratic_problem([(1, 0), (0, 1)])
    assert grad_norm_at_mean(q, np.zeros(4)) == pytest.approx(np.sqrt(2))
    assert grad_norm_at_mean(q, np.tile(q.minimizer, 2)) == pytest.approx(0.0, abs=1e-15)
    xbar = np.array([0.2, -0.7])
    assert grad_norm_at_mean(q, np.tile(xbar, 2)) == pytest.approx(np.linalg.norm(q.grad(xbar)))


def test_benchmark_sized_instance():
    p = generate_classification(25, 50, 250, 0.01, seed=0)
    assert (p.N, p.n) == (25, 50)
    assert p.samples == [250] * 25
    assert all(set(np.unique(b)) <= {-1.0, 1.0} for b in p.labels)


def test_grad_at_origin_is_half_mean_signed_feature():
    p = generate_classification(3, 4, 10, 0.05, seed=1)
    for i in range(3):
        expected = -(p.labels[i][:, None] * p.features[i]).mean(axis=0) / 2
        assert np.allclose(p.local_grad(i, np.zeros(4)), expected, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 1000), scale=st.floats(0.1, 3.0))
def test_finite_difference_gradients(seed, scale):
    p = generate_classification(3, 5, 15, 0.01, seed=seed)
    rng = np.random.default_rng(seed)
    x = scale * rng.standard_normal(5)
    for i in range(p.N):
        assert np.max(np.abs(finite_difference_grad(p, i, x) - p.local_grad(i, x))) < 1e-5


def test_stacked_grad_matches_per_agent_loop(small_classification):
    p = small_classification
    X = np.random.default_rng(0).standard_normal((p.N, p.n))
    rows = np.stack([p.local_grad(i, X[i]) for i in range(p.N)])
    assert np.allclose(p.stacked_grad(X), rows, atol=1e-14)
    x = X[0]
    assert np.allclose(p.grad(x), p.stacked_grad(np.tile(x, (p.N, 1))).sum(axis=0), atol=1e-13)


def test_unequal_sample_sizes_fall_back():
    rng = np.random.default_rng(3)
    feats = (rng.standard_normal((5, 2)), rng.standard_normal((8, 2)))
    labs = (np.ones(5), -np.ones(8))
    p = ClassificationProblem(feats, labs, 0.1)
    x = rng.standard_normal(2)
    for i in range(2):
        assert np.max(np.abs(finite_difference_grad(p, i, x) - p.local_grad(i, x))) < 1e-6


def test_summed_cost_has_one_global_regularizer():
    p = generate_classification(5, 3, 4, 0.2, seed=2)
    x = np.array([0.5, -1.0, 2.0])
    logistic = sum(np.mean(np.log1p(np.exp(-b * (a @ x)))) for a, b in zip(p.features, p.labels))
    reg = 0.2 * np.sum(x**2 / (1 + x**2))
    assert p.cost(x) == pytest.approx(logistic + reg, rel=1e-12)


@given(st.floats(-1e6, 1e6))
def test_regularizer_bounds(x):
    eps = 0.01
    val = eps * x * x / (1 + x * x)
    assert 0.0 <= val < eps
    assert abs(2 * eps * x / (1 + x * x) ** 2) <= 3 * np.sqrt(3) * eps / 8 + 1e-18


def test_lipschitz_bound_dominates_hessian_norm():
    p = generate_classification(3, 4, 12, 0.01, seed=5)
    rng = np.random.default_rng(1)
    for _ in range(20):
        x, d = rng.standard_normal(4), rng.standard_normal(4) * 1e-4
        for i in range(p.N):
            gap = np.linalg.norm(p.local_grad(i, x + d) - p.local_grad(i, x))
            assert gap <= p.lipschitz * np.linalg.norm(d) * (1 + 1e-6)


def test_invalid_inputs():
    a = np.ones((2, 2))
    with pytest.raises(ValueError):
        ClassificationProblem((a,), (np.array([1.0, 0.0]),), 0.1)
    with pytest.raises(ValueError):
        ClassificationProblem((a,), (np.ones(2),), 0.0)
    with pytest.raises(ValueError):
        generate_classification(2, 2, 0, 0.1, seed=0)


def test_deterministic_generation():
    a = generate_classification(3, 4, 6, 0.01, seed=11)
    b = generate_classification(3, 4, 6, 0.01, seed=11)
    assert all(np.array_equal(x, y) for x, y in zip(a.features, b.features))
    assert all(np.array_equal(x, y) for x, y in zip(a.labels, b.labels))
    x = np.linspace(-1, 1, 4)
    assert np.array_equal(a.stacked_grad(np.tile(x, (3, 1))), b.stacked_grad(np.tile(x, (3, 1))))


def test_dataset_csv_round_trip(tmp_path, small_classification):
    path = tmp_path / "data.csv"
    save_dataset_csv(small_classification, path)
    back = load_dataset_csv(path)
    assert back.reg_eps == small_classification.reg_eps
    for a, b in zip(back.features, small_classification.features):
        assert np.array_equal(a, b)
    for a, b in zip(back.labels, small_classification.labels):
        assert np.array_equal(a, b)
