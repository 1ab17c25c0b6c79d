import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from autobandit.errors import ConfigError, SchemaError
from autobandit.synthetic import (
    GaussianFactor,
    SyntheticEnvSpec,
    constant_spec,
    generate_spec,
    grid_heatmap,
    load_spec,
    optimal_action,
    pull,
    reward_probabilities,
    reward_probability,
    sample_context,
    sample_contexts,
    save_spec,
    write_heatmap_csv,
)


def single_bump(mu, sigma=0.1, weight=1.0, base=0.0):
    return SyntheticEnvSpec(d=len(mu), K=1, factors=((GaussianFactor(mu, sigma, weight),),), base_prob=base)


class TestGenerateSpec:
    def test_two_dim_two_factors(self):
        spec = generate_spec(d=2, K=2, F=2, seed=3)
        assert all(len(fs) == 2 for fs in spec.factors)
        for fs in spec.factors:
            for f in fs:
                assert len(f.mu) == 2
                assert all(0 <= m <= 1 for m in f.mu)
                assert 0.1 <= f.sigma <= 0.3
                assert 0 <= f.weight <= 1

    def test_five_dim(self):
        spec = generate_spec(d=5, K=2, F=5, seed=3)
        assert all(len(f.mu) == 5 for fs in spec.factors for f in fs)
        assert all(len(fs) == 5 for fs in spec.factors)

    def test_deterministic(self):
        assert generate_spec(3, 4, 2, seed=11) == generate_spec(3, 4, 2, seed=11)
        assert generate_spec(3, 4, 2, seed=11) != generate_spec(3, 4, 2, seed=12)

    @pytest.mark.parametrize("args", [
        dict(d=0, K=2, F=1), dict(d=2, K=0, F=1), dict(d=2, K=2, F=0),
        dict(d=2, K=2, F=1, sigma_range=(0.0, 0.1)), dict(d=2, K=2, F=1, sigma_range=(0.3, 0.1)),
    ])
    def test_invalid(self, args):
        with pytest.raises(ConfigError):
            generate_spec(**args)

    def test_json_round_trip(self, tmp_path):
        spec = generate_spec(2, 3, 2, noise_std=0.05, seed=4, base_prob=0.1)
        save_spec(spec, tmp_path / "env.json")
        assert load_spec(tmp_path / "env.json") == spec
        per_action = constant_spec([0.2, 0.9])
        save_spec(per_action, tmp_path / "c.json")
        assert load_spec(tmp_path / "c.json") == per_action


class TestSampleContext:
    def test_single_dim_in_range(self, rng):
        s = sample_context(generate_spec(1, 2, 1), rng)
        assert len(s) == 1 and 0.0 <= s[0] <= 1.0

    def test_five_dims(self, rng):
        assert len(sample_context(generate_spec(5, 2, 5), rng)) == 5

    def test_uniform_mean(self):
        spec = generate_spec(1, 2, 1)
        rng = np.random.default_rng(0)
        xs = [sample_context(spec, rng)[0] for _ in range(10_000)]
        assert abs(np.mean(xs) - 0.5) < 0.02

    def test_block_sampling_matches_sequential(self):
        spec = generate_spec(3, 2, 1)
        r = np.random.default_rng(5)
        seq = [sample_context(spec, r) for _ in range(20)]
        block = sample_contexts(spec, 20, np.random.default_rng(5))
        np.testing.assert_array_equal(np.asarray(seq), block)


class TestRewardProbability:
    def test_kernel_center(self):
        assert reward_probability(single_bump((0.3, 0.6)), (0.3, 0.6), 0) == 1.0

    def test_kernel_at_known_distance(self):
        # |s - mu|^2 = 0.01, sigma = 0.1 -> exp(-0.01 / 0.02)
        p = reward_probability(single_bump((0.2, 0.5)), (0.3, 0.5), 0)
        assert p == pytest.approx(math.exp(-0.5), abs=1e-12)
        assert p == pytest.approx(0.60653, abs=1e-5)

    def test_empty_sum(self):
        spec = SyntheticEnvSpec(d=2, K=1, factors=((),), base_prob=0.2)
        assert reward_probability(spec, (0.9, 0.1), 0) == pytest.approx(0.2)

    def test_dimension_mismatch(self):
        with pytest.raises(SchemaError):
            reward_probability(single_bump((0.5, 0.5)), (0.5,), 0)

    def test_clipped_above(self):
        spec = SyntheticEnvSpec(d=1, K=1, factors=((GaussianFactor((0.5,), 0.2, 1.0),),), base_prob=0.5)
        assert reward_probability(spec, (0.5,), 0) == 1.0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32), st.lists(st.floats(0, 1), min_size=3, max_size=3))
    def test_in_unit_interval(self, seed, s):
        spec = generate_spec(3, 3, 4, seed=seed, base_prob=0.5)
        p = reward_probabilities(spec, s)
        assert np.all((p >= 0) & (p <= 1))


class TestPull:
    def test_degenerate(self, rng):
        assert pull(single_bump((0.5,)), (0.5,), 0, rng) == 1.0
        assert pull(constant_spec([0.0]), (0.5,), 0, rng) == 0.0

    def test_empirical_mean(self):
        spec = constant_spec([0.6])
        rng = np.random.default_rng(1)
        draws = [pull(spec, (0.5,), 0, rng) for _ in range(100_000)]
        assert set(draws) <= {0.0, 1.0}
        assert abs(np.mean(draws) - 0.6) < 0.005

    @pytest.mark.parametrize("p", [0.1, 0.45, 0.9])
    def test_convergence_band(self, p):
        spec = constant_spec([p])
        rng = np.random.default_rng(int(p * 100))
        n = 20_000
        mean = np.mean([pull(spec, (0.5,), 0, rng) for _ in range(n)])
        assert abs(mean - p) <= 3 * math.sqrt(p * (1 - p) / n)

    def test_noise_keeps_rewards_binary(self, rng):
        spec = SyntheticEnvSpec(d=1, K=1, factors=((),), base_prob=0.5, noise_std=2.0)
        assert {pull(spec, (0.1,), 0, rng) for _ in range(200)} == {0.0, 1.0}


class TestOptimalAction:
    def test_argmax(self):
        assert optimal_action(constant_spec([0.3, 0.7]), (0.5,)) == (1, 0.7)

    def test_tie_break_lowest(self):
        assert optimal_action(constant_spec([0.5, 0.5]), (0.5,)) == (0, 0.5)

    def test_matches_exhaustive_on_grid(self):
        spec = generate_spec(2, 3, 3, seed=21)
        g = (np.arange(10) + 0.5) / 10
        for x in g:
            for y in g:
                s = (x, y)
                values = [reward_probability(spec, s, a) for a in range(spec.K)]
                best = max(values)
                a, v = optimal_action(spec, s)
                assert v == best
                assert a == values.index(best)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 1000), st.lists(st.floats(0, 1), min_size=2, max_size=2))
    def test_dominates_every_action(self, seed, s):
        spec = generate_spec(2, 4, 2, seed=seed)
        _, best = optimal_action(spec, s)
        assert all(best >= reward_probability(spec, s, a) for a in range(4))


class TestGridHeatmap:
    def test_constant_field(self):
        spec = SyntheticEnvSpec(d=2, K=2, factors=((), ()), base_prob=0.5)
        np.testing.assert_array_equal(grid_heatmap(spec, (0, 1), 3), np.full((3, 3), 0.5))

    def test_center_bump_peaks_in_center_cell(self):
        m = grid_heatmap(single_bump((0.5, 0.5), sigma=0.2), (0, 1), 5)
        assert np.unravel_index(np.argmax(m), m.shape) == (2, 2)

    def test_matches_direct_evaluation_d5(self):
        spec = generate_spec(5, 3, 5, seed=8)
        fixed = [0.2, 0.7, 0.4]
        m = grid_heatmap(spec, (0, 1), 4, fixed)
        centers = [0.125, 0.375, 0.625, 0.875]
        for r, x in enumerate(centers):
            for c, y in enumerate(centers):
                s = (x, y, *fixed)
                direct = np.mean([reward_probability(spec, s, a) for a in range(spec.K)])
                assert m[r, c] == pytest.approx(direct, abs=1e-12)

    def test_nonadjacent_dims(self):
        spec = generate_spec(4, 2, 3, seed=2)
        m = grid_heatmap(spec, (3, 1), 2, [0.1, 0.9, 0.3, 0.6])
        s = (0.1, 0.75, 0.3, 0.25)  # row -> dim 3, col -> dim 1
        assert m[0, 1] == pytest.approx(np.mean(reward_probabilities(spec, s)), abs=1e-12)

    @pytest.mark.parametrize("dims", [(0, 0), (0, 2), (-1, 1)])
    def test_bad_dims(self, dims):
        with pytest.raises(ConfigError):
            grid_heatmap(generate_spec(2, 2, 1), dims, 3)

    def test_csv_export(self, tmp_path):
        m = grid_heatmap(generate_spec(2, 2, 2, seed=1), (0, 1), 3)
        write_heatmap_csv(m, tmp_path / "h.csv")
        back = np.loadtxt(tmp_path / "h.csv", delimiter=",")
        np.testing.assert_array_equal(back, m)
