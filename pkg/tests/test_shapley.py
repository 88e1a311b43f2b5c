import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from datavalue.shapley import (
    AggregationMode,
    McConfig,
    UtilityEvaluationError,
    exact_shapley,
    has_converged,
    loo_values,
    monte_carlo_shapley,
    sample_permutation,
    transform_marginal,
)
from datavalue.randomness import stream

from games import (
    DistinctRowsGame,
    FailingGame,
    CountingGame,
    TableGame,
    additive_game,
    cardinality_game,
    majority_game,
    negated,
    random_game,
    scaled,
    summed,
    symmetrized,
    with_dummy,
)

ORI = AggregationMode.ORIGINAL
ZERO = AggregationMode.ZERO
ABS = AggregationMode.ABSOLUTE
ALL_MODES = [ORI, ZERO, ABS]


def brute_force_shapley(u, n, mode):
    """Independent oracle: average transformed marginal over all n! orders."""
    totals = [0.0] * n
    for perm in itertools.permutations(range(n)):
        prefix = []
        previous = u(())
        for idx in perm:
            current = u(tuple(sorted(prefix + [idx])))
            totals[idx] += transform_marginal(current - previous, mode)
            previous = current
            prefix.append(idx)
    return np.array(totals) / math.factorial(n)


class TestTransformMarginal:
    def test_original_is_identity(self):
        assert transform_marginal(-0.2, ORI) == -0.2

    def test_zero_clamps_negatives(self):
        assert transform_marginal(-0.2, ZERO) == 0.0

    def test_absolute_flips_negatives(self):
        assert transform_marginal(-0.2, ABS) == 0.2

    @pytest.mark.parametrize("mode", ALL_MODES)
    def test_nonnegative_deltas_are_fixed_points(self, mode):
        assert transform_marginal(0.3, mode) == 0.3


class TestExactShapley:
    def test_additive_game(self):
        game = additive_game([1.0, 2.0, 3.0])
        assert np.allclose(exact_shapley(game, 3, ORI), [1.0, 2.0, 3.0], atol=1e-12)

    @pytest.mark.parametrize("mode", ALL_MODES)
    def test_symmetric_game_splits_evenly(self, mode):
        values = exact_shapley(cardinality_game(4), 4, mode)
        assert np.allclose(values, 0.25, atol=1e-12)

    def test_majority_game(self):
        values = exact_shapley(majority_game(3, 2), 3, ORI)
        assert np.allclose(values, 1.0 / 3.0, atol=1e-12)

    def test_two_player_worked_example(self):
        # u(empty)=0, u({0})=1, u({1})=0, u({0,1})=0.5
        game = TableGame(2, [0.0, 1.0, 0.0, 0.5])
        assert np.allclose(exact_shapley(game, 2, ORI), [0.75, -0.25])
        assert np.allclose(exact_shapley(game, 2, ZERO), [0.75, 0.0])
        assert np.allclose(exact_shapley(game, 2, ABS), [0.75, 0.25])

    @pytest.mark.parametrize("mode", ALL_MODES)
    @pytest.mark.parametrize("seed", range(6))
    def test_matches_permutation_oracle(self, mode, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 6))
        game = random_game(n, rng)
        expected = brute_force_shapley(game, n, mode)
        assert np.allclose(exact_shapley(game, n, mode), expected, atol=1e-12)

    def test_memoizes_to_2_pow_n_evaluations(self):
        counter = CountingGame(random_game(5, np.random.default_rng(0)))
        exact_shapley(counter, 5, ORI)
        assert counter.calls == 2**5

    def test_cap_is_enforced(self):
        with pytest.raises(ValueError, match="capped at n=12"):
            exact_shapley(additive_game([1.0] * 13), 13, ORI)

    def test_cap_override(self):
        values = exact_shapley(additive_game([1.0] * 13), 13, ORI, max_players=13)
        assert np.allclose(values, 1.0)


class TestAxioms:
    @given(seed=st.integers(0, 10_000), n=st.integers(3, 8))
    @settings(max_examples=40, deadline=None)
    def test_efficiency(self, seed, n):
        game = random_game(n, np.random.default_rng(seed))
        values = exact_shapley(game, n, ORI)
        full = (1 << n) - 1
        assert abs(values.sum() - (game.table[full] - game.table[0])) < 1e-9

    @given(seed=st.integers(0, 10_000), n=st.integers(3, 8))
    @settings(max_examples=40, deadline=None)
    def test_symmetry(self, seed, n):
        rng = np.random.default_rng(seed)
        i, j = rng.choice(n, size=2, replace=False)
        game = symmetrized(random_game(n, rng), int(i), int(j))
        for mode in ALL_MODES:
            values = exact_shapley(game, n, mode)
            assert abs(values[i] - values[j]) < 1e-12

    @given(seed=st.integers(0, 10_000), n=st.integers(3, 8))
    @settings(max_examples=40, deadline=None)
    def test_dummy_player(self, seed, n):
        rng = np.random.default_rng(seed)
        dummy = int(rng.integers(0, n))
        game = with_dummy(random_game(n - 1, rng), dummy)
        assert exact_shapley(game, n, ORI)[dummy] == 0.0

    @given(seed=st.integers(0, 10_000), n=st.integers(3, 8))
    @settings(max_examples=40, deadline=None)
    def test_additivity_original(self, seed, n):
        rng = np.random.default_rng(seed)
        a, b = random_game(n, rng), random_game(n, rng)
        lhs = exact_shapley(summed(a, b), n, ORI)
        rhs = exact_shapley(a, n, ORI) + exact_shapley(b, n, ORI)
        assert np.allclose(lhs, rhs, atol=1e-9)

    @pytest.mark.parametrize("mode", [ZERO, ABS])
    def test_additivity_fails_for_clamped_modes(self, mode):
        # u + (-u) is the zero game, but the clamped parts do not cancel.
        game = TableGame(2, [0.0, 1.0, 0.0, 0.5])
        zero_game = summed(game, negated(game))
        lhs = exact_shapley(zero_game, 2, mode)
        rhs = exact_shapley(game, 2, mode) + exact_shapley(negated(game), 2, mode)
        assert np.allclose(lhs, 0.0)
        assert not np.allclose(lhs, rhs)

    @given(seed=st.integers(0, 10_000), factor=st.floats(0.1, 50.0))
    @settings(max_examples=30, deadline=None)
    def test_positive_scaling_preserves_ranking(self, seed, factor):
        rng = np.random.default_rng(seed)
        game = random_game(5, rng)
        base = exact_shapley(game, 5, ORI)
        rescaled = exact_shapley(scaled(game, factor), 5, ORI)
        assert np.allclose(rescaled, factor * base, atol=1e-9)
        assert np.array_equal(np.argsort(base), np.argsort(rescaled))


class TestModeRelations:
    @given(seed=st.integers(0, 10_000), n=st.integers(2, 7))
    @settings(max_examples=40, deadline=None)
    def test_pointwise_ordering_exact(self, seed, n):
        game = random_game(n, np.random.default_rng(seed))
        v_ori = exact_shapley(game, n, ORI)
        v_zero = exact_shapley(game, n, ZERO)
        v_abs = exact_shapley(game, n, ABS)
        assert np.all(v_abs >= v_zero) and np.all(v_zero >= v_ori)
        assert np.all(v_zero >= 0.0) and np.all(v_abs >= 0.0)

    def test_pointwise_ordering_monte_carlo_shared_stream(self):
        game = random_game(6, np.random.default_rng(3))
        cfg = McConfig(max_permutations=300, master_seed=11, convergence_epsilon=0.0)
        est = monte_carlo_shapley(game, 6, ALL_MODES, cfg)
        assert np.all(est[ABS].values >= est[ZERO].values)
        assert np.all(est[ZERO].values >= est[ORI].values)
        assert np.all(est[ZERO].values >= 0.0)
        assert np.all(est[ABS].values >= 0.0)

    def test_modes_agree_on_monotone_game(self):
        game = additive_game([0.5, 1.5, 2.5])  # all marginals nonnegative
        results = [exact_shapley(game, 3, mode) for mode in ALL_MODES]
        assert np.allclose(results[0], results[1])
        assert np.allclose(results[1], results[2])


class TestSamplePermutation:
    def test_single_element(self):
        assert sample_permutation(stream(0, 0), 1).tolist() == [0]

    @given(seed=st.integers(0, 2**63), index=st.integers(0, 2**31), n=st.integers(1, 40))
    @settings(max_examples=60, deadline=None)
    def test_bijection(self, seed, index, n):
        perm = sample_permutation(stream(seed, index), n)
        assert sorted(perm.tolist()) == list(range(n))

    def test_uniform_frequencies_n3(self):
        counts = {}
        draws = 60_000
        for k in range(draws):
            key = tuple(sample_permutation(stream(123, k), 3).tolist())
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 6
        for count in counts.values():
            assert abs(count / draws - 1.0 / 6.0) < 0.01


class TestHasConverged:
    def test_constant_history_converges_after_window(self):
        vec = np.array([0.5, 0.5])
        assert not has_converged([vec] * 10, epsilon=0.01, window=10)
        assert has_converged([vec] * 11, epsilon=0.01, window=10)

    def test_zero_epsilon_disables(self):
        vec = np.array([0.5])
        assert not has_converged([vec] * 200, epsilon=0.0, window=10)

    def test_oscillation_above_epsilon(self):
        history = [np.array([0.0 if t % 2 else 0.05]) for t in range(50)]
        assert not has_converged(history, epsilon=0.01, window=11)


class TestLooValues:
    def test_additive_game(self):
        assert np.allclose(loo_values(additive_game([1.0, 2.0, 3.0]), 3), [1.0, 2.0, 3.0])

    def test_symmetric_game(self):
        assert np.allclose(loo_values(cardinality_game(4), 4), 0.25)

    def test_duplicates_get_zero(self):
        game = DistinctRowsGame([0, 0, 1, 2, 3])
        values = loo_values(game, 5)
        assert values[0] == 0.0 and values[1] == 0.0
        assert np.all(values[2:] > 0.0)

    def test_exactly_n_plus_one_evaluations(self):
        counter = CountingGame(additive_game([1.0, 2.0, 3.0, 4.0]))
        loo_values(counter, 4)
        assert counter.calls == 5


class TestMonteCarlo:
    def test_single_player_single_permutation(self):
        game = TableGame(1, [0.25, 0.75])
        cfg = McConfig(max_permutations=1, master_seed=0, convergence_epsilon=0.0)
        est = monte_carlo_shapley(game, 1, [ORI], cfg)
        assert est[ORI].values[0] == 0.75 - 0.25
        assert est[ORI].permutations_used == 1

    def test_additive_game_is_exact(self):
        # every sampled marginal equals the weight itself, variance 0
        game = additive_game([1.0, 2.0, 3.0])
        cfg = McConfig(max_permutations=500, master_seed=5, convergence_epsilon=0.0)
        est = monte_carlo_shapley(game, 3, [ORI], cfg)
        assert np.allclose(est[ORI].values, [1.0, 2.0, 3.0], atol=1e-9)
        assert np.allclose(est[ORI].variances, 0.0, atol=1e-18)

    def test_majority_game_against_exact(self):
        game = majority_game(3, 2)
        cfg = McConfig(max_permutations=50_000, master_seed=17, convergence_epsilon=0.0)
        est = monte_carlo_shapley(game, 3, [ORI], cfg)
        assert np.all(np.abs(est[ORI].values - 1.0 / 3.0) < 0.02)

    def test_original_sum_telescopes_per_permutation(self):
        game = random_game(7, np.random.default_rng(9))
        cfg = McConfig(max_permutations=173, master_seed=2, convergence_epsilon=0.0)
        est = monte_carlo_shapley(game, 7, [ORI], cfg)
        full = (1 << 7) - 1
        assert abs(est[ORI].values.sum() - (game.table[full] - game.table[0])) < 1e-12

    def test_sample_counts_match_permutations_used(self):
        game = random_game(4, np.random.default_rng(1))
        cfg = McConfig(max_permutations=64, master_seed=3, convergence_epsilon=0.0)
        for est in monte_carlo_shapley(game, 4, ALL_MODES, cfg).values():
            assert est.permutations_used == 64
            assert np.all(est.sample_counts == 64)

    def test_deterministic_repeat(self):
        game = random_game(5, np.random.default_rng(4))
        cfg = McConfig(max_permutations=200, master_seed=21, convergence_epsilon=0.0)
        a = monte_carlo_shapley(game, 5, ALL_MODES, cfg)
        b = monte_carlo_shapley(game, 5, ALL_MODES, cfg)
        for mode in ALL_MODES:
            assert np.array_equal(a[mode].values, b[mode].values)
            assert np.array_equal(a[mode].variances, b[mode].variances)

    @pytest.mark.parametrize("workers", [2, 8])
    def test_worker_count_does_not_change_results(self, workers):
        game = random_game(5, np.random.default_rng(8))
        base_cfg = McConfig(max_permutations=150, master_seed=13, convergence_epsilon=0.0)
        parallel_cfg = McConfig(
            max_permutations=150, master_seed=13, convergence_epsilon=0.0, workers=workers
        )
        serial = monte_carlo_shapley(game, 5, ALL_MODES, base_cfg)
        parallel = monte_carlo_shapley(game, 5, ALL_MODES, parallel_cfg)
        for mode in ALL_MODES:
            assert np.array_equal(serial[mode].values, parallel[mode].values)
            assert np.array_equal(serial[mode].variances, parallel[mode].variances)
            assert serial[mode].permutations_used == parallel[mode].permutations_used

    def test_early_stop_on_convergence(self):
        # additive games produce constant estimates, so the stop fires as
        # soon as the history exceeds the window
        game = additive_game([1.0, 2.0])
        cfg = McConfig(
            max_permutations=1000, master_seed=0,
            convergence_epsilon=1e-6, convergence_window=5,
        )
        est = monte_carlo_shapley(game, 2, [ORI], cfg)
        assert est[ORI].permutations_used == 6
        assert est[ORI].converged

    def test_zero_epsilon_runs_full_budget(self):
        game = additive_game([1.0, 2.0])
        cfg = McConfig(max_permutations=40, master_seed=0, convergence_epsilon=0.0)
        est = monte_carlo_shapley(game, 2, [ORI], cfg)
        assert est[ORI].permutations_used == 40
        assert not est[ORI].converged

    def test_utility_failure_attaches_coalition(self):
        bad = (1, 2)
        game = FailingGame(bad)
        cfg = McConfig(max_permutations=50, master_seed=0, convergence_epsilon=0.0)
        with pytest.raises(UtilityEvaluationError) as excinfo:
            monte_carlo_shapley(game, 3, [ORI], cfg)
        assert excinfo.value.coalition == bad

    def test_utility_failure_in_worker_process(self):
        game = FailingGame((0, 1, 2))
        cfg = McConfig(max_permutations=50, master_seed=0, convergence_epsilon=0.0, workers=2)
        with pytest.raises(UtilityEvaluationError) as excinfo:
            monte_carlo_shapley(game, 3, [ORI], cfg)
        assert excinfo.value.coalition == (0, 1, 2)


class TestEstimateSerialization:
    def test_json_schema_field_names(self):
        game = additive_game([1.0, 2.0])
        cfg = McConfig(max_permutations=3, master_seed=9, convergence_epsilon=0.0)
        est = monte_carlo_shapley(game, 2, [ORI], cfg)[ORI]
        doc = est.to_json_dict(ids=[10, 20])
        assert doc == {
            "mode": "ori",
            "seed": 9,
            "permutations": 3,
            "converged": False,
            "values": [
                {"id": 10, "value": 1.0, "variance": 0.0},
                {"id": 20, "value": 2.0, "variance": 0.0},
            ],
        }
        assert json.loads(est.to_json(ids=[10, 20])) == doc

    def test_ids_default_to_player_indices(self):
        game = additive_game([1.0, 2.0])
        cfg = McConfig(max_permutations=3, master_seed=0, convergence_epsilon=0.0)
        doc = monte_carlo_shapley(game, 2, [ORI], cfg)[ORI].to_json_dict()
        assert [entry["id"] for entry in doc["values"]] == [0, 1]

    def test_ids_length_mismatch(self):
        game = additive_game([1.0, 2.0])
        cfg = McConfig(max_permutations=3, master_seed=0, convergence_epsilon=0.0)
        est = monte_carlo_shapley(game, 2, [ORI], cfg)[ORI]
        with pytest.raises(ValueError, match="ids length"):
            est.to_json_dict(ids=[1, 2, 3])


class TestConfigValidation:
    def test_bad_mc_config(self):
        with pytest.raises(ValueError):
            McConfig(max_permutations=0)
        with pytest.raises(ValueError):
            McConfig(max_permutations=1, convergence_epsilon=-1.0)
        with pytest.raises(ValueError):
            McConfig(max_permutations=1, convergence_window=0)
        with pytest.raises(ValueError):
            McConfig(max_permutations=1, workers=0)

    def test_empty_mode_list_rejected(self):
        game = additive_game([1.0])
        with pytest.raises(ValueError, match="at least one"):
            monte_carlo_shapley(game, 1, [], McConfig(max_permutations=1))
