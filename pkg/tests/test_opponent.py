import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mctsneg.domains import Bid, Categorical, Domain, NumericContinuous, NumericDiscrete
from mctsneg.gpr import GaussianProcess
from mctsneg.opponent import (HypothesisSet, ModelError, OpponentModel, Shape, StrategyModel,
                              TriangularFn, UtilityHypothesis, bayes_update, eval_triangular,
                              estimated_opponent_utility, generate_hypotheses, modeled_accepts,
                              rank_weights)

import oracles

TEN = Domain([NumericDiscrete(f"i{k}", 1, 10) for k in range(3)])
MIXED = Domain([NumericDiscrete("n", 1, 10), Categorical("c", ("A", "B")),
                NumericContinuous("p", 0.0, 1.0)])


def test_triangular_examples():
    up = TriangularFn(1, 10, Shape.UP)
    assert (up(1), up(10), up(5.5)) == (0.0, 1.0, 0.5)
    assert TriangularFn(1, 10, Shape.PEAK, 4)(4) == 1.0
    assert eval_triangular(TriangularFn(1, 10, Shape.DOWN), 7) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        up(11)
    with pytest.raises(ValueError):
        TriangularFn(1, 10, Shape.PEAK, 12)


@given(st.floats(1, 10), st.sampled_from([Shape.UP, Shape.DOWN, Shape.PEAK]))
def test_triangular_range(v, shape):
    t = TriangularFn(1.0, 10.0, shape, 3.25 if shape is Shape.PEAK else None)
    assert 0.0 <= t(v) <= 1.0


def test_rank_weights_sum_to_one():
    w = rank_weights(4, np.random.default_rng(0))
    assert sorted(w * 10) == pytest.approx([1, 2, 3, 4])


def test_prior_is_uniform():
    assert generate_hypotheses(TEN, 1, np.random.default_rng(0)).posterior.tolist() == [1.0]
    hs = generate_hypotheses(TEN, 500, np.random.default_rng(0))
    assert np.allclose(hs.posterior, 0.002)
    with pytest.raises(ModelError):
        generate_hypotheses(TEN, 0, np.random.default_rng(0))


def test_hypothesis_utilities_in_unit_interval():
    rng = np.random.default_rng(4)
    hs = generate_hypotheses(MIXED, 200, rng)
    rows = MIXED.sample_rows(rng, 1000)
    u = hs.hypothesis_utilities(rows)
    assert u.min() >= 0.0 and u.max() <= 1.0 + 1e-12


def test_vectorised_hypotheses_match_scalar():
    rng = np.random.default_rng(8)
    hs = generate_hypotheses(MIXED, 30, rng)
    rows = MIXED.sample_rows(rng, 40)
    u = hs.hypothesis_utilities(rows)
    for i, row in enumerate(rows):
        bid = MIXED.decode(row)
        assert u[i] == pytest.approx([h.utility(MIXED, bid) for h in hs.hypotheses], abs=1e-12)


def _two_hypotheses():
    up = UtilityHypothesis((TriangularFn(1, 10, Shape.UP),), (1.0,))
    down = UtilityHypothesis((TriangularFn(1, 10, Shape.DOWN),), (1.0,))
    return Domain([NumericDiscrete("x", 1, 10)]), [up, down]


def test_bayes_examples():
    d, hyps = _two_hypotheses()
    hs = HypothesisSet(d, hyps)
    hs.update_with_likelihoods(np.array([0.8, 0.2]))
    assert hs.posterior == pytest.approx([0.8, 0.2])
    hs.update_with_likelihoods(np.array([0.3, 0.3]))
    assert hs.posterior == pytest.approx([0.8, 0.2])
    # all-zero evidence leaves the posterior alone rather than dividing by zero
    hs.update_with_likelihoods(np.zeros(2))
    assert hs.posterior == pytest.approx([0.8, 0.2])


def test_update_prefers_consistent_hypothesis():
    d, hyps = _two_hypotheses()
    hs = HypothesisSet(d, hyps)
    for turn, x in enumerate((10, 10, 9, 9)):
        bayes_update(hs, turn, {"x": x})
    assert hs.top(1)[0][0] == 0
    assert hs.posterior.sum() == pytest.approx(1.0)


def test_expected_utility_examples():
    d, hyps = _two_hypotheses()
    one = HypothesisSet(d, hyps[:1])
    assert estimated_opponent_utility(one, {"x": 4}) == pytest.approx(1 / 3)
    mix = HypothesisSet(d, hyps, posterior=np.array([0.25, 0.75]))
    assert estimated_opponent_utility(mix, {"x": 4}) == pytest.approx(0.25 / 3 + 0.75 * 2 / 3)
    same = HypothesisSet(d, [hyps[0], hyps[0]], posterior=np.array([0.5, 0.5]))
    assert estimated_opponent_utility(same, {"x": 7}) == pytest.approx(2 / 3)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_expected_utility_is_convex_combination(seed):
    rng = np.random.default_rng(seed)
    hs = generate_hypotheses(MIXED, 20, rng)
    hs.posterior = rng.dirichlet(np.ones(20))
    rows = MIXED.sample_rows(rng, 10)
    per = hs.hypothesis_utilities(rows)
    eu = hs.expected_utility(rows)
    assert np.all(eu >= per.min(axis=1) - 1e-12) and np.all(eu <= per.max(axis=1) + 1e-12)


def test_dump_top_is_json():
    hs = generate_hypotheses(MIXED, 15, np.random.default_rng(1))
    top = json.loads(hs.dump_top(10))
    assert len(top) == 10 and set(top[0]["issues"]) == {"n", "c", "p"}


def test_modeled_acceptance_ties_accept():
    d, hyps = _two_hypotheses()
    model = OpponentModel(d, np.random.default_rng(0), hypotheses=1)
    model.utility = HypothesisSet(d, hyps[:1])
    assert modeled_accepts(model, {"x": 7}, {"x": 6})  # 2/3 vs 5/9
    assert not modeled_accepts(model, {"x": 5}, {"x": 6})
    assert modeled_accepts(model, {"x": 6}, {"x": 6})


def test_strategy_model_bookkeeping():
    sm = StrategyModel(MIXED)
    sm.observe(1, {"n": 3, "c": "A", "p": 0.5})
    assert all(len(gp) == 1 for gp in sm.models.values())
    sm.observe(2, {"n": 4, "c": "A", "p": 0.4})
    sm.observe(3, {"n": 5, "c": "B", "p": 0.3})
    assert sm.counts[1].tolist() == [2, 1]
    with pytest.raises(ModelError):
        sm.observe(3, {"n": 5, "c": "B", "p": 0.3})


def test_categorical_smoothing():
    sm = StrategyModel(Domain([Categorical("c", ("A", "B"))]), smoothing=0.1)
    for t in range(1, 6):
        sm.observe(t, {"c": "A"})
    probs = sm.categorical_probs(0)
    assert probs[1] == pytest.approx(0.1 / (5 + 0.2)) and probs[1] > 0


def test_constant_opponent_is_predicted():
    sm = StrategyModel(TEN)
    bid = {"i0": 2, "i1": 9, "i2": 5}
    for t in range(1, 11):
        sm.observe(t, bid)
    rows = sm.sample_rows(11, np.random.default_rng(0), 1000)
    for j, key in enumerate(TEN.keys):
        assert np.mean(rows[:, j] == bid[key]) >= 0.99


def test_linear_trend_forecast_matches_gp_oracle():
    sm = StrategyModel(Domain([NumericContinuous("p", 0.0, 20.0)]))
    for t in range(1, 11):
        sm.observe(t, {"p": 2.0 + 0.5 * t})
    gp = sm.gp("p")
    mean, var = oracles.gp_posterior(list(gp.xs), list(gp.ys), 11, gp.kernel.family, gp.kernel.noise,
                                     lengthscale=gp.kernel.lengthscale, alpha=gp.kernel.alpha)
    m, sd = sm.moments(11)
    assert m[0] == pytest.approx(mean, abs=1e-6)
    assert sd[0] ** 2 == pytest.approx(var, abs=1e-6)
    assert abs(m[0] - 7.5) < 0.5


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(1, 10), min_size=1, max_size=8), st.integers(0, 2**31 - 1))
def test_forecast_rows_stay_in_domain(values, seed):
    sm = StrategyModel(MIXED)
    for t, v in enumerate(values, start=1):
        sm.observe(t, {"n": v, "c": "AB"[v % 2], "p": v / 10})
    rows = sm.sample_rows(len(values) + 3, np.random.default_rng(seed), 50)
    for row in rows:
        MIXED.validate(MIXED.decode(row))


def test_opponent_model_before_data_samples_uniformly():
    model = OpponentModel(TEN, np.random.default_rng(0), hypotheses=10)
    rows = model.sample_bids(1, np.random.default_rng(1), 200)
    assert rows.shape == (200, 3)
    model.observe(Bid({"i0": 1, "i1": 1, "i2": 1}))
    assert model.observations == 1
