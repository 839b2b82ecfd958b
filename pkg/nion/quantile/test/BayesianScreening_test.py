# standard libraries
import itertools
import logging
import math
import os
import typing
import unittest

# third party libraries
import numpy

# local libraries
from nion.quantile import BayesianScreening
from nion.quantile import CoinOracle
from nion.quantile import Core
from nion.quantile import Experiment
from nion.quantile import Weights


LONG_TESTS = bool(os.environ.get("NIONQUANTILE_LONG_TESTS"))


class TestBinaryAsymmetricChannel(unittest.TestCase):

    def test_symmetric_target_splits_in_half(self) -> None:
        for alpha in (0.01, 0.1, 0.24):
            with self.subTest(alpha=alpha):
                params = BayesianScreening.bac_quantile_and_capacity(0.5, alpha)
                self.assertAlmostEqual(params.q_star, 0.5, delta=1e-9)

    def test_capacity_at_one_quarter(self) -> None:
        params = BayesianScreening.bac_quantile_and_capacity(0.5, 0.25)
        self.assertAlmostEqual(params.capacity, 1 - float(BayesianScreening.binary_entropy(0.25)), delta=1e-9)

    def test_closed_form_maximizes_the_objective(self) -> None:
        for tau, alpha in ((0.3, 0.05), (0.62, 0.1), (0.8, 0.05), (0.5, 0.2)):
            with self.subTest(tau=tau, alpha=alpha):
                params = BayesianScreening.bac_quantile_and_capacity(tau, alpha)
                grid = numpy.linspace(0.0, 1.0, 2001)
                best = max(BayesianScreening.bac_objective(x, tau, alpha) for x in grid)
                self.assertGreaterEqual(params.capacity, best - 1e-9)
                self.assertTrue(0.0 < params.q_star < 1.0)

    def test_bayes_weights_conserve_mass(self) -> None:
        for tau, alpha in ((0.5, 0.1), (0.3, 0.1), (0.7311, 0.02)):
            with self.subTest(tau=tau, alpha=alpha):
                params = BayesianScreening.bac_quantile_and_capacity(tau, alpha)
                q = params.q_star
                for y in (0, 1):
                    self.assertAlmostEqual(params.d(y, 0) * q + params.d(y, 1) * (1 - q), 1.0, delta=1e-12)
                self.assertLess(params.d00, 1.0)
                self.assertGreater(params.d01, 1.0)
                self.assertGreater(params.d10, 1.0)
                self.assertLess(params.d11, 1.0)

    def test_invalid_parameters_raise(self) -> None:
        for tau, alpha in ((0.0, 0.1), (0.5, 0.0), (0.1, 0.1), (0.5, 0.3)):
            with self.subTest(tau=tau, alpha=alpha):
                with self.assertRaises(ValueError):
                    BayesianScreening.bac_quantile_and_capacity(tau, alpha)


class TestBayesUpdate(unittest.TestCase):

    def test_interval_and_coin_rounding(self) -> None:
        w = Weights.WeightVector.uniform(4)
        self.assertEqual(BayesianScreening.get_interval_from_quantile(w, 0.3), 2)
        self.assertEqual(BayesianScreening.round_interval_to_coin(2, w, 0.3), 2)
        self.assertEqual(BayesianScreening.get_interval_from_quantile(w, 0.5), 2)
        self.assertEqual(BayesianScreening.round_interval_to_coin(2, w, 0.5), 3)

    def test_update_example(self) -> None:
        params = BayesianScreening.bac_quantile_and_capacity(0.5, 0.1)
        w = Weights.WeightVector.uniform(2)
        j = BayesianScreening.get_interval_from_quantile(w, params.q_star)
        self.assertEqual(j, 1)
        BayesianScreening.bayes_update(w, j, 1, params)
        numpy.testing.assert_allclose(w.to_array(), [0.6, 0.4], atol=1e-12)

    def test_random_updates_conserve_the_posterior(self) -> None:
        rng = numpy.random.default_rng(21)
        calls = 100000 if LONG_TESTS else 5000
        worst = 0.0
        for _ in range(calls):
            tau = float(rng.uniform(0.05, 0.95))
            alpha = float(rng.uniform(0.001, 0.5 * min(tau, 1 - tau)))
            params = BayesianScreening.bac_quantile_and_capacity(tau, alpha)
            w = Weights.WeightVector(rng.dirichlet(numpy.ones(int(rng.integers(1, 20)))))
            j = BayesianScreening.get_interval_from_quantile(w, params.q_star)
            BayesianScreening.bayes_update(w, j, int(rng.integers(0, 2)), params)
            worst = max(worst, abs(w.total() - 1.0))
        self.assertLessEqual(worst, 1e-9)


class TestBayesLearn(unittest.TestCase):

    def test_learner_visits_the_true_interval_most(self) -> None:
        dataset = Core.Dataset([3, 5, 6, 9, 11, 12, 14], 16)
        oracle = CoinOracle.ThresholdOracle(dataset, budget=200)
        learned = BayesianScreening.bayes_learn(oracle, range(1, 17), 0.5, 0.1, 200)
        self.assertEqual(len(learned), 200)
        self.assertIn(learned.modal_interval(), (8, 9))
        self.assertAlmostEqual(learned.weights.total(), 1.0, delta=1e-9)

    def test_tree_and_vector_learn_the_same_way(self) -> None:
        B = 1025
        dataset = Core.Dataset(numpy.arange(100, 1000, 3), B)
        vector_run = BayesianScreening.bayes_learn(CoinOracle.ThresholdOracle(dataset, budget=300), range(1, B + 1), 0.5, 0.1, 300)
        tree_run = BayesianScreening.bayes_learn(CoinOracle.ThresholdOracle(dataset, budget=300), range(1, B + 1), 0.5, 0.1, 300,
                                                 weights_factory=Weights.WeightTree.uniform)
        self.assertEqual(vector_run.intervals, tree_run.intervals)
        numpy.testing.assert_allclose(tree_run.weights.to_array(), vector_run.weights.to_array(), rtol=1e-7, atol=1e-15)

    def test_learner_finds_a_good_interval_against_an_adversary(self) -> None:
        B, alpha, c, rounds = 64, 0.1, 0.5, 1000
        dataset = Core.Dataset(range(1, B + 1), B)
        bound = c * alpha
        fixed = numpy.where(numpy.arange(B + 1) < B // 2, bound, -bound)
        perturbations: typing.Dict[str, typing.Any] = {
            "fixed": fixed,
            "alternating": lambda t, j: bound if (t // 250) % 2 == 0 else -bound,
        }
        for name, perturbation in perturbations.items():
            for seed in range(3):
                with self.subTest(perturbation=name, seed=seed):
                    oracle = CoinOracle.AdversarialOracle(dataset.cdf_values, perturbation, c, alpha, numpy.random.default_rng(seed), rounds)
                    learned = BayesianScreening.bayes_learn(oracle, range(1, B + 1), 0.5, alpha, rounds)
                    self.assertEqual(oracle.flips_used, rounds)
                    self.assertTrue(Core.is_good_coin(dataset, learned.left_coin(learned.modal_interval()), "1/2", "3/20"))
                    candidates = BayesianScreening.gamma_quantile_coins(learned, 1 / 13)
                    self.assertTrue(any(Core.is_good_coin(dataset, coin, "1/2", "3/20") for coin in candidates))

    def test_coin_set_must_increase(self) -> None:
        oracle = CoinOracle.ThresholdOracle(Core.Dataset([1, 2], 4), budget=10)
        for coins in ([1], [2, 2, 3], [3, 1]):
            with self.subTest(coins=coins):
                with self.assertRaises(ValueError):
                    BayesianScreening.bayes_learn(oracle, coins, 0.5, 0.1, 1)

    def test_users_exhausted_propagates(self) -> None:
        oracle = CoinOracle.ThresholdOracle(Core.Dataset([1, 2], 4), budget=3)
        with self.assertRaises(Core.UsersExhausted):
            BayesianScreening.bayes_learn(oracle, range(1, 5), 0.5, 0.1, 4)


class TestReductionToGamma(unittest.TestCase):

    def test_reduction_is_small_sorted_and_holds_the_true_coin(self) -> None:
        dataset = Core.Dataset(numpy.arange(1, 201), 256)
        oracle = CoinOracle.ThresholdOracle(dataset, budget=400)
        candidates = BayesianScreening.reduction_to_gamma(oracle, range(1, 257), 0.1, None, 1 / 13, 400)
        self.assertLessEqual(len(candidates), 13)
        self.assertEqual(candidates, sorted(set(candidates)))
        self.assertTrue({99, 100} & set(candidates))
        self.assertEqual(oracle.flips_used, 400)

    def test_positions_for_one_hundred_visits(self) -> None:
        # ceil(100 / 13) = 8, so positions 8, 16, ..., 96 of the sorted visits are kept
        learned = BayesianScreening.IntervalMultiset(range(1, 102), list(range(100, 0, -1)), Weights.WeightVector.uniform(100))
        self.assertEqual(BayesianScreening.gamma_quantile_coins(learned, 1 / 13), list(range(8, 97, 8)))

    def test_repeated_visits_collapse(self) -> None:
        learned = BayesianScreening.IntervalMultiset([2, 5, 9, 12], [3, 3, 1, 2, 2, 3], Weights.WeightVector.uniform(3))
        self.assertEqual(BayesianScreening.gamma_quantile_coins(learned, 0.5), [5, 9])
        self.assertEqual(learned.modal_interval(), 3)

    def test_gamma_is_checked(self) -> None:
        oracle = CoinOracle.ThresholdOracle(Core.Dataset([1, 2], 4), budget=10)
        with self.assertRaises(ValueError):
            BayesianScreening.reduction_to_gamma(oracle, range(1, 5), 0.1, None, 1.0, 4)


class TestBudget(unittest.TestCase):

    def test_split_uses_every_user(self) -> None:
        for n, B in ((2500, 4 ** 9), (100, 16), (10, 2), (7, 3)):
            with self.subTest(n=n, B=B):
                split = BayesianScreening.BudgetSplit(n, B)
                self.assertEqual(split.first + split.second + split.final, n)
                self.assertGreaterEqual(split.second, 0)

    def test_split_ratio(self) -> None:
        split = BayesianScreening.BudgetSplit(10000, 4 ** 9)
        log_b = math.log(4 ** 9)
        self.assertAlmostEqual(split.first / split.final, log_b, delta=0.01 * log_b)
        self.assertAlmostEqual(split.second / split.final, math.log(log_b), delta=0.05)

    def test_learning_alpha_is_capped(self) -> None:
        self.assertAlmostEqual(BayesianScreening.learning_alpha(2500, 4 ** 9, 0.5, 1.0), 0.6 * math.sqrt(math.log(4 ** 9) / 2500))
        capped = BayesianScreening.learning_alpha(10, 4 ** 9, 0.5, 0.1)
        self.assertLessEqual(capped, 0.25)


class TestBayesSearch(unittest.TestCase):

    def test_noiseless_search_on_all_small_datasets(self) -> None:
        # every estimate from threshold coins is 0 or 1, so only the search step can rank the candidates
        domain_sizes = range(2, 17) if LONG_TESTS else (8, 16)
        max_n = 6 if LONG_TESTS else 3
        for B in domain_sizes:
            for n in range(1, max_n + 1):
                with self.subTest(B=B, n=n):
                    successes, total = 0, 0
                    for values in itertools.combinations_with_replacement(range(1, B + 1), n):
                        dataset = Core.Dataset(values, B)
                        result = BayesianScreening.bayess_search(CoinOracle.ThresholdOracle(dataset, budget=400), B, final_step="search")
                        successes += Core.is_good_coin(dataset, result.index, "1/2", "1/25")
                        total += 1
                    self.assertGreaterEqual(successes / total, 195 / 200)

    def test_closest_is_the_default_final_step(self) -> None:
        dataset = Experiment.gen_pareto(3000, 4 ** 6, 5)
        for seed in range(3):
            with self.subTest(seed=seed):
                default = BayesianScreening.dp_bayess(dataset, 4 ** 6, 1.0, seed)
                closest = BayesianScreening.dp_bayess(dataset, 4 ** 6, 1.0, seed, final_step="closest")
                self.assertEqual(default, closest)

    def test_closest_final_step(self) -> None:
        B = 256
        dataset = Core.Dataset(numpy.tile(numpy.arange(1, B + 1), 50), B)
        successes = 0
        for seed in range(5):
            oracle = CoinOracle.EmpiricalOracle(dataset, numpy.random.default_rng(seed))
            result = BayesianScreening.bayess_search(oracle, B, final_step="closest")
            successes += Core.is_good_coin(dataset, result.index, "1/2", "1/10")
        self.assertGreaterEqual(successes, 4)
        with self.assertRaises(ValueError):
            BayesianScreening.bayess_search(CoinOracle.ThresholdOracle(dataset, budget=600), B, final_step="vote")

    def test_private_search_is_accurate(self) -> None:
        B, n = 256, 5000
        successes = 0
        for seed in range(10):
            dataset = Experiment.gen_uniform_interval(n, B, seed)
            result = BayesianScreening.dp_bayess(dataset, B, 2.0, seed)
            self.assertEqual(result.users_consumed, n)
            successes += Core.is_good_coin(dataset, result.index, "1/2", "1/10")
        self.assertGreaterEqual(successes, 7)

    def test_same_seed_same_result(self) -> None:
        dataset = Experiment.gen_pareto(2500, 4 ** 6, 3)
        first = BayesianScreening.dp_bayess(dataset, 4 ** 6, 1.0, 11)
        second = BayesianScreening.dp_bayess(dataset, 4 ** 6, 1.0, 11)
        self.assertEqual(first, second)

    def test_other_quantiles(self) -> None:
        dataset = Core.Dataset(numpy.arange(1, 201), 256)
        for tau in (0.25, 0.75):
            with self.subTest(tau=tau):
                result = BayesianScreening.bayess_search(CoinOracle.ThresholdOracle(dataset, tau, budget=600), 256, tau=tau, final_step="search")
                self.assertTrue(Core.is_good_coin(dataset, result.index, tau, "1/25"))

    def test_too_few_users_is_infeasible(self) -> None:
        with self.assertRaises(Core.ProtocolInfeasible):
            BayesianScreening.bayess_search(CoinOracle.ThresholdOracle(Core.Dataset([1, 2], 1024), budget=5), 1024)

    @unittest.skipUnless(LONG_TESTS, "long test")
    def test_uniform_interval_success_rate(self) -> None:
        B, n, trials = 10 ** 6, 2500, 200
        successes = 0
        for trial in range(trials):
            dataset = Experiment.gen_uniform_interval(n, B, trial)
            result = BayesianScreening.dp_bayess(dataset, B, 1.0, trial)
            successes += Core.is_good_coin(dataset, result.index, "1/2", "1/20")
        self.assertGreaterEqual(successes / trials, 0.75)


if __name__ == '__main__':
    logging.getLogger().setLevel(logging.DEBUG)
    unittest.main()
