import numpy as np
import pytest
from hypothesis import given, strategies as st

from autobandit.core import numeric_schema
from autobandit.errors import ActionError, ConfigError
from autobandit.metalearn import CandidateSpec, ModelArtifact, build_qmodel, fit_featurizer
from autobandit.metalearn.models import RidgeModel
from autobandit.policies import (
    EpsilonSchedule,
    OnlineLinearBaseline,
    baseline_update,
    epsilon_at,
    epsilon_greedy,
    random_policy,
    select_action,
)

from conftest import ScriptedRng, make_log


def q_with_values(values):
    """QModel whose prediction for action a is values[a] regardless of context."""
    K = len(values)
    f = fit_featurizer(make_log([(0.0,), (1.0,)], [0, K - 1], [0, 1], K=K))
    m = RidgeModel(0.0)
    m.coef = np.concatenate([[0.0], values])
    m.intercept = 0.0
    return build_qmodel([ModelArtifact(CandidateSpec("ridge", lam=0.0), m, 0.0)], f, 1)


class TestEpsilonAt:
    def test_linear_first_step(self):
        sch = EpsilonSchedule("linear", 0.9, 1000)
        assert epsilon_at(sch, 1) == pytest.approx(0.8991, abs=1e-12)

    @pytest.mark.parametrize("t", [1000, 1001, 50_000])
    def test_linear_endpoint(self, t):
        assert epsilon_at(EpsilonSchedule("linear", 0.9, 1000), t) == 0.0

    def test_inverse_n(self):
        assert epsilon_at(EpsilonSchedule("inverse_n", 1.0), 1, 4) == 0.25
        assert epsilon_at(EpsilonSchedule("inverse_n", 1.0), 999, 1) == 1.0

    def test_fixed(self):
        assert epsilon_at(EpsilonSchedule("fixed", 0.3), 77, 5) == 0.3

    @given(st.integers(1, 10_000), st.integers(1, 100))
    def test_monotone(self, t, n):
        lin = EpsilonSchedule("linear", 0.9, 5000)
        inv = EpsilonSchedule("inverse_n", 0.8)
        assert epsilon_at(lin, t + 1) <= epsilon_at(lin, t)
        assert epsilon_at(inv, 1, n + 1) <= epsilon_at(inv, 1, n)
        assert 0.0 <= epsilon_at(lin, t) <= 1.0 and 0.0 <= epsilon_at(inv, 1, n) <= 1.0

    def test_invalid(self):
        with pytest.raises(ConfigError):
            EpsilonSchedule("cosine")
        with pytest.raises(ConfigError):
            EpsilonSchedule("fixed", 1.5)
        with pytest.raises(ConfigError):
            epsilon_at(EpsilonSchedule("fixed", 0.1), 0)
        with pytest.raises(ConfigError):
            epsilon_at(EpsilonSchedule("linear", 0.9), 1)


class TestSelectAction:
    def test_greedy(self, rng):
        assert select_action(q_with_values([0.1, 0.9]), (0.5,), 0.0, 2, rng) == (1, False)

    def test_greedy_tie(self, rng):
        assert select_action(q_with_values([0.5, 0.5]), (0.5,), 0.0, 2, rng) == (0, False)

    def test_explore_uniform_mapping(self):
        r = ScriptedRng([0.2, 0.6])  # coin < 1, then u = 0.6 -> floor(0.6 * 3) = 1
        assert select_action(q_with_values([0.9, 0.1, 0.1]), (0.5,), 1.0, 3, r) == (1, True)
        assert r.calls == 2

    def test_always_two_draws(self):
        r = ScriptedRng([0.99, 0.0])
        assert select_action(q_with_values([0.2, 0.4]), (0.5,), 0.5, 2, r) == (1, False)
        assert r.calls == 2

    def test_no_model_explores(self, rng):
        assert all(select_action(None, (0.1,), 0.0, 3, rng)[1] for _ in range(20))

    def test_explored_fraction(self):
        rng = np.random.default_rng(8)
        flags = [epsilon_greedy(np.array([0.1, 0.2]), 0.5, rng)[1] for _ in range(10_000)]
        assert abs(np.mean(flags) - 0.5) < 0.02

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=8), st.floats(1e-3, 1e3))
    def test_argmax_scale_invariance(self, values, c):
        q = np.array(values)
        a, _ = epsilon_greedy(q, 0.0, np.random.default_rng(0))
        b, _ = epsilon_greedy(q * c, 0.0, np.random.default_rng(0))
        assert a == b


class TestRandomPolicy:
    def test_singleton(self, rng):
        assert {random_policy(1, rng) for _ in range(50)} == {0}

    def test_frequencies(self):
        rng = np.random.default_rng(2)
        draws = np.array([random_policy(2, rng) for _ in range(100_000)])
        assert abs(np.mean(draws == 0) - 0.5) < 0.005

    def test_reproducible_and_equals_full_exploration(self):
        r1, r2 = np.random.default_rng(3), np.random.default_rng(3)
        a = [random_policy(4, r1) for _ in range(200)]
        b = [select_action(q_with_values([0.9, 0.1, 0.1, 0.1]), (0.5,), 1.0, 4, r2)[0] for _ in range(200)]
        assert a == b
        r3 = np.random.default_rng(3)
        assert a == [random_policy(4, r3) for _ in range(200)]

    def test_invalid_K(self, rng):
        with pytest.raises(ActionError):
            random_policy(0, rng)


def raw_baseline(d=2, K=2, lr=0.1):
    return OnlineLinearBaseline(numeric_schema(d), K, lr, normalize=False)


class TestBaselineUpdate:
    def test_one_step(self):
        b = baseline_update(raw_baseline(), (1.0, 0.0), 0, 1.0)
        assert b.weights[0, 0] == pytest.approx(0.1)
        assert b.weights[0, 1] == 0.0
        assert b.intercepts[0] == pytest.approx(0.1)
        np.testing.assert_array_equal(b.weights[1], 0.0)
        assert b.intercepts[1] == 0.0

    def test_zero_gradient(self):
        b = raw_baseline()
        b.weights[1] = [0.2, 0.3]
        b.intercepts[1] = 0.1
        before = b.weights.copy()
        r = float(b.predict((0.5, 0.5))[1])
        baseline_update(b, (0.5, 0.5), 1, r)
        np.testing.assert_allclose(b.weights, before, atol=1e-15)

    def test_converges_like_recurrence(self):
        x = np.array([0.3, -0.4])
        b = raw_baseline()
        for _ in range(500):
            baseline_update(b, tuple(x), 0, 0.8)
        # scalar recurrence on the prediction: p <- p + lr * (r - p) * (|x|^2 + 1)
        p = 0.0
        for _ in range(500):
            p += 0.1 * (0.8 - p) * (x @ x + 1)
        assert float(b.predict(tuple(x))[0]) == pytest.approx(p, abs=1e-12)
        assert abs(p - 0.8) < 1e-3

    def test_bad_action(self):
        with pytest.raises(ActionError):
            baseline_update(raw_baseline(), (0.0, 0.0), 2, 1.0)

    def test_normalized_stays_finite_on_large_inputs(self):
        rng = np.random.default_rng(0)
        b = OnlineLinearBaseline(numeric_schema(3), 2, 0.1)
        for _ in range(2000):
            s = tuple(rng.normal(1e4, 3e3, size=3))
            baseline_update(b, s, int(rng.integers(2)), float(rng.random() < 0.5))
            assert np.all(np.isfinite(b.weights))

    def test_categorical_hashing(self):
        b = OnlineLinearBaseline((("c", "categorical"),), 2, 0.5, hash_buckets=8)
        x = b.featurize(("red",))
        assert x.sum() == 1.0 and len(x) == 8
        np.testing.assert_array_equal(x, b.featurize(("red",)))
