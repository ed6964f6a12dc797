import numpy as np
import pytest

from fairmatch.metrics import subset_dp_bar
from fairmatch.ot import build_cost_matrix, solve_assignment
from fairmatch.synthetic import (
    GaussianPair,
    LinearGaussianSCM,
    uniform_pair_dataset,
    uniform_pair_models,
    gaussian_ot_map,
    make_synthetic_classification,
    scm_counterfactual,
    sqrtm_psd,
)


def random_scm(rng, d=3):
    A = np.tril(rng.normal(0, 0.5, (d, d)), -1)
    return LinearGaussianSCM(A, rng.uniform(0.5, 2.0, d), rng.normal(size=d), rng.normal(size=d),
                             rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0))


def empirical_map_deviation(pair, m, seed):
    """Mean squared gap between assignment partners and the closed-form map image."""
    rng = np.random.default_rng(seed)
    x0, x1 = pair.sample(m, 0, rng), pair.sample(m, 1, rng)
    W, b = gaussian_ot_map(pair)
    perm = solve_assignment(build_cost_matrix(x0, x1)).permutation
    return float(np.mean(np.sum((x1[perm] - (x0 @ W.T + b)) ** 2, axis=1)))


def test_one_dimensional_map():
    W, b = gaussian_ot_map(GaussianPair([0.0], [2.0], [[1.0]], [[4.0]]))
    assert W[0, 0] == pytest.approx(2.0) and b[0] == pytest.approx(2.0)


@pytest.mark.parametrize("seed", range(10))
def test_map_pushes_covariance_forward(seed):
    pair = GaussianPair.random(4, seed=seed)
    W, b = gaussian_ot_map(pair)
    np.testing.assert_allclose(W @ pair.sigma0 @ W, pair.sigma1, atol=1e-9)
    np.testing.assert_allclose(W @ pair.mu0 + b, pair.mu1, atol=1e-12)
    # an OT map is the gradient of a convex function: symmetric PSD
    np.testing.assert_allclose(W, W.T)
    assert np.linalg.eigvalsh(W).min() > 0


def test_map_pushforward_by_sampling():
    pair = GaussianPair.random(3, seed=7)
    W, b = gaussian_ot_map(pair)
    x = pair.sample(200_000, 0, np.random.default_rng(0))
    y = x @ W.T + b
    np.testing.assert_allclose(y.mean(0), pair.mu1, atol=0.03)
    np.testing.assert_allclose(np.cov(y.T), pair.sigma1, atol=0.05)


def test_counterfactual_equals_ot_map_on_random_scms():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        scm = random_scm(rng)
        W, b = gaussian_ot_map(GaussianPair.from_scm(scm))
        x = scm.sample(10, 0, rng)
        worst = max(worst, np.abs(scm_counterfactual(x, 0, scm) - (x @ W.T + b)).max())
    assert worst <= 1e-8


def test_scm_moments_by_sampling():
    scm = random_scm(np.random.default_rng(3))
    x = scm.sample(100_000, 1, np.random.default_rng(1))
    np.testing.assert_allclose(x.mean(0), scm.mean(1), atol=0.05)
    np.testing.assert_allclose(np.cov(x.T), scm.cov(1), rtol=0.05, atol=0.05)


def test_scm_validation():
    with pytest.raises(ValueError):
        LinearGaussianSCM(np.zeros((2, 2)), [1, 1], [0, 0], [0, 0], 0.0, 1.0)
    with pytest.raises(ValueError):
        GaussianPair([0], [0], [[-1.0]], [[1.0]])


def test_sqrtm_psd():
    S = np.array([[2.0, 0.5], [0.5, 1.0]])
    R = sqrtm_psd(S)
    np.testing.assert_allclose(R @ R, S, atol=1e-12)


def test_empirical_maps_converge():
    pair = GaussianPair.random(3, seed=11)
    gaps = [np.median([empirical_map_deviation(pair, m, seed) for seed in range(3)]) for m in (32, 128, 512)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_uniform_pair_closed_forms():
    models = uniform_pair_models()
    x = np.array([0.1, 0.5, 0.9])
    np.testing.assert_array_equal(models["f_hat"](x, 0), [0.0, 1.0, 1.0])
    np.testing.assert_array_equal(models["f_hat"](x, 1), [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(models["f_tilde"](x, 1), [0.0, 1.0, 1.0])
    np.testing.assert_allclose(models["match_hat"](x, 0), [0.6, 0.0, 0.4])
    np.testing.assert_array_equal(models["match_tilde"](x, 0), x)
    assert (models["cost_hat"], models["cost_tilde"]) == (0.25, 0.0)
    data = uniform_pair_dataset(512)
    assert data.n == 1024 and data.y.sum() == 512
    A = data.X[:, 0] >= 0.5
    assert subset_dp_bar(models["f_hat"](data.X, data.s), data.s, A) == 1.0
    assert subset_dp_bar(models["f_tilde"](data.X, data.s), data.s, A) == 0.0


def _label_rate_gap(data):
    return abs(data.y[data.s == 0].mean() - data.y[data.s == 1].mean())


def test_no_shift_means_no_label_gap():
    gaps = [_label_rate_gap(make_synthetic_classification(seed=k, group_shift=0.0)) for k in range(5)]
    assert np.median(gaps) < 0.03


def test_large_shift_means_large_label_gap():
    gaps = [_label_rate_gap(make_synthetic_classification(seed=k, group_shift=3.0)) for k in range(5)]
    assert np.median(gaps) > 0.2


def test_synthetic_noise_structure():
    data = make_synthetic_classification(n=20000, d=5, seed=0, group_shift=1.5, correlation=0.5)
    z = data.X[data.s == 0]
    C = np.corrcoef(z.T)
    np.testing.assert_allclose(C[np.triu_indices(5, 1)], 0.5, atol=0.03)
    shift = data.X[data.s == 1].mean(0) - z.mean(0)
    np.testing.assert_allclose(shift, 1.5 * np.array([1, -1, 0, 0, 0]) / np.sqrt(2), atol=0.06)


def test_synthetic_reproducible_and_validated():
    a = make_synthetic_classification(n=50, seed=4, label_rule="threshold", label_axis="minor")
    b = make_synthetic_classification(n=50, seed=4, label_rule="threshold", label_axis="minor")
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)
    for kw in (dict(label_rule="x"), dict(d=1), dict(correlation=1.0), dict(label_axis="x"),
               dict(d=2, label_axis="minor")):
        with pytest.raises(ValueError):
            make_synthetic_classification(n=10, **kw)
