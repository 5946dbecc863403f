import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mctsneg.gpr import (FAMILIES, GaussianProcess, Kernel, Prediction, fit_hyperparams,
                         kernel_benchmark, kernel_eval, next_bid_distances, predict,
                         sample_prediction, synthetic_concession_traces)

import oracles

# two points (1, 0.9), (2, 0.7), RBF lengthscale 1, noise 1e-6, x* = 3;
# frozen from oracles.gp_posterior at 40 significant digits
TWO_POINT_MEAN = 0.6802462782501246
TWO_POINT_VAR = 0.5465741676302794


def test_kernel_examples():
    rbf = Kernel("rbf", lengthscale=1.0)
    assert kernel_eval(rbf, 0.3, 0.3) == 1.0
    assert kernel_eval(rbf, 0.0, 1.0) == pytest.approx(math.exp(-0.5), abs=1e-15)
    assert kernel_eval(Kernel("rqf", lengthscale=2.0, alpha=0.3), 4.0, 4.0) == 1.0
    with pytest.raises(ValueError):
        kernel_eval(rbf, 0.0, math.nan)
    with pytest.raises(ValueError):
        Kernel("linear")
    with pytest.raises(ValueError):
        Kernel("rbf", lengthscale=0.0)


@pytest.mark.parametrize("family", FAMILIES)
def test_kernels_match_oracle(family):
    k = Kernel(family, lengthscale=1.7, alpha=0.6, period=7.0)
    for r in (0.0, 0.4, 1.0, 3.3, 9.0):
        ref = float(oracles.kernel(family, r, lengthscale=1.7, alpha=0.6, period=7.0))
        assert kernel_eval(k, 2.0, 2.0 + r) == pytest.approx(ref, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("family", FAMILIES)
def test_kernel_matrix_is_psd(family):
    k = Kernel(family, lengthscale=2.0)
    K = k.matrix(np.arange(1, 15))
    assert np.allclose(K, K.T)
    assert np.linalg.eigvalsh(K).min() > -1e-9


def test_prior_prediction():
    p = predict(GaussianProcess(Kernel("rbf", noise=0.01)), 3.0)
    assert p.mean == 0.0 and p.variance == pytest.approx(1.01)


def test_interpolates_single_datum():
    p = GaussianProcess(Kernel("rbf", noise=0.0), [1.0], [0.8]).predict(1.0)
    assert p.mean == pytest.approx(0.8, abs=1e-12)
    assert p.variance == pytest.approx(0.0, abs=1e-12)


def test_two_point_example():
    p = GaussianProcess(Kernel("rbf", lengthscale=1.0, noise=1e-6), [1, 2], [0.9, 0.7]).predict(3)
    assert p.mean == pytest.approx(TWO_POINT_MEAN, abs=1e-12)
    assert p.variance == pytest.approx(TWO_POINT_VAR, abs=1e-12)


def test_lml_matches_oracle():
    xs, ys = [1, 2, 4, 5], [0.3, 0.5, 0.2, 0.9]
    gp = GaussianProcess(Kernel("rqf", lengthscale=1.5, alpha=0.7, noise=0.05), xs, ys)
    ref = oracles.log_marginal_likelihood(xs, ys, "rqf", 0.05, lengthscale=1.5, alpha=0.7)
    assert gp.log_marginal_likelihood() == pytest.approx(ref, abs=1e-10)


def test_jitter_rescues_duplicate_inputs():
    gp = GaussianProcess(Kernel("rbf", noise=0.0), [1, 1, 2], [0.5, 0.5, 0.6])
    assert gp.jitter > 0
    assert np.isfinite(gp.predict(3).mean)


def test_with_data_returns_new_model():
    gp = GaussianProcess(Kernel("rbf"), [1, 2], [0.1, 0.2])
    gp2 = gp.with_data([1, 2, 3], [0.1, 0.2, 0.3])
    assert len(gp) == 2 and len(gp2) == 3


def test_constant_targets_keep_defaults():
    k = fit_hyperparams([1, 2, 3, 4], [5.0] * 4, "rqf")
    assert (k.lengthscale, k.alpha) == (Kernel("rqf").lengthscale, Kernel("rqf").alpha)
    assert GaussianProcess(k, [1, 2, 3, 4], [5.0] * 4).predict(7).mean == pytest.approx(5.0)


def test_noiseless_line_fit_against_grid_oracle():
    xs = np.arange(1, 11, dtype=float)
    ys = 0.3 * xs + 1.0
    k = fit_hyperparams(xs, ys, "rqf")
    gp = GaussianProcess(k, xs, ys)
    fitted = np.array([gp.predict(x).mean for x in xs])
    assert np.sqrt(np.mean((fitted - ys) ** 2)) <= 1e-3
    assert gp.log_marginal_likelihood() >= oracles.grid_best_lml(xs, ys, "rqf") - 1e-6


@pytest.mark.parametrize("family", ["rbf", "matern"])
def test_fit_beats_grid_oracle_on_noisy_data(family):
    rng = np.random.default_rng(3)
    xs = np.arange(1, 13, dtype=float)
    ys = np.sin(xs / 2) + rng.normal(0, 0.2, xs.size)
    k = fit_hyperparams(xs, ys, family)
    lml = GaussianProcess(k, xs, ys).log_marginal_likelihood()
    assert lml >= oracles.grid_best_lml(xs, ys, family) - 1e-3


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=9), st.sampled_from(FAMILIES))
def test_fit_never_worse_than_default(ys, family):
    xs = np.arange(1, len(ys) + 1, dtype=float)
    default = Kernel(family)
    k = fit_hyperparams(xs, ys, family, default=default)
    base = GaussianProcess(default, xs, ys).log_marginal_likelihood()
    assert GaussianProcess(k, xs, ys).log_marginal_likelihood() >= base - 1e-9


def test_fit_needs_two_points():
    with pytest.raises(ValueError):
        fit_hyperparams([1.0], [2.0], "rbf")


def test_sample_prediction():
    assert sample_prediction(Prediction(0.4, 0.0), np.random.default_rng(0)) == 0.4
    rng = np.random.default_rng(1)
    draws = [sample_prediction(Prediction(0.0, 1.0), rng) for _ in range(10_000)]
    assert abs(np.mean(draws)) <= 0.05
    a = [sample_prediction(Prediction(1.0, 2.0), np.random.default_rng(9)) for _ in range(3)]
    b = [sample_prediction(Prediction(1.0, 2.0), np.random.default_rng(9)) for _ in range(3)]
    assert a == b


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8), st.floats(0, 30),
       st.sampled_from(FAMILIES), st.floats(1e-4, 1.0))
def test_predictive_variance_bounds(ys, xstar, family, noise):
    xs = np.arange(1, len(ys) + 1, dtype=float)
    p = GaussianProcess(Kernel(family, lengthscale=2.0, noise=noise), xs, ys).predict(xstar)
    assert 0.0 <= p.variance <= 1.0 + noise + 1e-9


def test_constant_sequence_has_zero_distance():
    seq = np.full((8, 2), 4.0)
    for fam in FAMILIES:
        assert max(next_bid_distances(seq, fam)) == pytest.approx(0.0, abs=1e-9)


def test_benchmark_rejects_short_sequences():
    with pytest.raises(ValueError):
        kernel_benchmark([np.zeros((2, 1))])


def test_synthetic_traces_are_seeded_and_bounded():
    a = synthetic_concession_traces(5, count=3)
    b = synthetic_concession_traces(5, count=3)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert all(x.shape == (20, 2) and x.min() >= 1 and x.max() <= 10 for x in a)
