# standard libraries
import fractions
import itertools
import logging
import os
import typing
import unittest

# third party libraries
import numpy

# local libraries
from nion.quantile import CoinOracle
from nion.quantile import Core
from nion.quantile import NaiveSearch
from nion.quantile import RandomizedResponse


LONG_TESTS = bool(os.environ.get("NIONQUANTILE_LONG_TESTS"))


def reference_search(dataset: Core.Dataset, tau: fractions.Fraction) -> int:
    """Textbook search on the exact CDF: the number of coins 1..B-1 whose CDF is below tau."""
    return sum(1 for j in range(1, dataset.domain_size) if Core.empirical_cdf(dataset, j) < tau)


class TestAllocateBatches(unittest.TestCase):

    def test_examples(self) -> None:
        self.assertEqual(NaiveSearch.allocate_batches(100, 1024).batch_sizes, (10,) * 10)
        self.assertEqual(NaiveSearch.allocate_batches(105, 1024).batch_sizes, (11,) * 5 + (10,) * 5)
        self.assertEqual(NaiveSearch.allocate_batches(16, 2 ** 16).batch_sizes, (1,) * 16)

    def test_plan_sums_to_n(self) -> None:
        for n, B in ((2500, 4 ** 9), (37, 5), (1000, 1000)):
            with self.subTest(n=n, B=B):
                plan = NaiveSearch.allocate_batches(n, B)
                self.assertEqual(plan.total, n)
                self.assertEqual(len(plan), NaiveSearch.search_rounds(B))

    def test_too_few_users_is_infeasible(self) -> None:
        with self.assertRaises(Core.ProtocolInfeasible):
            NaiveSearch.allocate_batches(9, 1024)

    def test_search_rounds(self) -> None:
        self.assertEqual([NaiveSearch.search_rounds(size) for size in (1, 2, 3, 4, 5, 1024, 1025)], [0, 1, 2, 2, 3, 10, 11])

    def test_unbalanced_plan_raises(self) -> None:
        for sizes in ([3, 1], [1, 2], [0]):
            with self.subTest(sizes=sizes):
                with self.assertRaises(ValueError):
                    NaiveSearch.BatchPlan(sizes)


class TestNoisyBinarySearch(unittest.TestCase):

    def test_search_on_a_step_function(self) -> None:
        coins = list(range(1, 16))
        plan = NaiveSearch.BatchPlan([1] * 4)
        for first_heads in range(1, 17):
            with self.subTest(first_heads=first_heads):
                outcome = NaiveSearch.noisy_binary_search(lambda coin, batch: 1.0 if coin >= first_heads else 0.0, coins, plan)
                self.assertEqual(outcome.position, first_heads - 1)

    def test_ties_go_left(self) -> None:
        outcome = NaiveSearch.noisy_binary_search(lambda coin, batch: 0.5, [1, 2, 3], NaiveSearch.BatchPlan([1, 1]))
        self.assertEqual(outcome.position, 0)

    def test_steps_are_reported(self) -> None:
        steps: typing.List[typing.Tuple[int, int, int, int, float]] = list()
        NaiveSearch.noisy_binary_search(lambda coin, batch: float(coin >= 6), list(range(1, 8)), NaiveSearch.BatchPlan([2, 2, 2]),
                                        on_step=lambda *args: steps.append(args))
        self.assertEqual([step[0] for step in steps], [0, 1, 2])
        self.assertEqual(steps[0][3], 4)
        self.assertEqual((steps[-1][1], steps[-1][2]), (5, 5))

    def test_short_plan_is_infeasible(self) -> None:
        with self.assertRaises(Core.ProtocolInfeasible):
            NaiveSearch.noisy_binary_search(lambda coin, batch: 0.0, list(range(1, 16)), NaiveSearch.BatchPlan([1] * 3))

    def test_early_stop_spends_the_whole_plan(self) -> None:
        batches: typing.List[int] = list()

        def estimate(coin: int, batch: int) -> float:
            batches.append(batch)
            return 1.0 if coin >= 4 else 0.0

        outcome = NaiveSearch.noisy_binary_search(estimate, [1, 2, 3, 4], NaiveSearch.BatchPlan([1, 1, 1]))
        self.assertEqual(outcome.position, 3)
        self.assertEqual(batches, [1, 2])
        self.assertEqual(outcome.users_consumed, 3)

    def test_full_length_search_follows_the_plan(self) -> None:
        batches: typing.List[int] = list()

        def estimate(coin: int, batch: int) -> float:
            batches.append(batch)
            return 0.0

        plan = NaiveSearch.allocate_batches(105, 1024)
        outcome = NaiveSearch.noisy_binary_search(estimate, range(1, 1024), plan)
        self.assertEqual(tuple(batches), plan.batch_sizes)
        self.assertEqual(outcome.users_consumed, 105)


class TestDpNaiveNBS(unittest.TestCase):

    def test_noiseless_search_matches_reference_on_all_small_datasets(self) -> None:
        domain_sizes = range(2, 17) if LONG_TESTS else (2, 3, 5, 8, 16)
        max_n = 6 if LONG_TESTS else 4
        half = fractions.Fraction(1, 2)
        for B in domain_sizes:
            for n in range(1, max_n + 1):
                for values in itertools.combinations_with_replacement(range(1, B + 1), n):
                    dataset = Core.Dataset(values, B)
                    oracle = CoinOracle.ThresholdOracle(dataset, half, budget=64)
                    result = NaiveSearch.dp_naive_nbs(oracle, B)
                    self.assertEqual(result.index, reference_search(dataset, half), (B, values))
                    self.assertTrue(Core.is_good_coin(dataset, result.index, half, "1/25"), (B, values))

    def test_noiseless_search_on_one_to_1024(self) -> None:
        dataset = Core.Dataset(range(1, 1025), 1024)
        result = NaiveSearch.dp_naive_nbs(CoinOracle.ThresholdOracle(dataset, budget=10), 1024)
        self.assertEqual(result.index, 511)
        self.assertTrue(Core.is_good_coin(dataset, result.index, "1/2", fractions.Fraction(1, 1024)))
        self.assertEqual(result.users_consumed, 10)

    def test_all_equal_dataset_returns_coin_below(self) -> None:
        dataset = Core.Dataset([9] * 6, 16)
        result = NaiveSearch.dp_naive_nbs(CoinOracle.ThresholdOracle(dataset, budget=8), 16)
        self.assertEqual(result.index, 8)

    def test_other_quantiles(self) -> None:
        dataset = Core.Dataset(range(1, 101), 128)
        for tau in ("1/4", "3/4", "9/10"):
            with self.subTest(tau=tau):
                tau_f = fractions.Fraction(tau)
                result = NaiveSearch.dp_naive_nbs(CoinOracle.ThresholdOracle(dataset, tau_f, budget=7), 128, tau=float(tau_f))
                self.assertEqual(result.index, reference_search(dataset, tau_f))

    def test_private_search_is_accurate_with_many_users(self) -> None:
        B, n = 1024, 20000
        successes = 0
        for seed in range(20):
            rng = numpy.random.default_rng(seed)
            dataset = Core.Dataset(rng.integers(1, B + 1, size=n), B)
            oracle = CoinOracle.EmpiricalOracle(dataset, rng, RandomizedResponse.RRChannel(1.0))
            result = NaiveSearch.dp_naive_nbs(oracle, B)
            self.assertEqual(result.users_consumed, n)
            successes += Core.is_good_coin(dataset, result.index, "1/2", "1/10")
        self.assertGreaterEqual(successes, 19)

    def test_every_user_is_consumed_when_the_search_stops_early(self) -> None:
        B, n = 1000, 1000
        for seed in range(10):
            with self.subTest(seed=seed):
                rng = numpy.random.default_rng(seed)
                dataset = Core.Dataset(rng.integers(1, B + 1, size=n), B)
                oracle = CoinOracle.EmpiricalOracle(dataset, rng, RandomizedResponse.RRChannel(1.0))
                result = NaiveSearch.dp_naive_nbs(oracle, B)
                self.assertEqual(result.users_consumed, n)
                self.assertEqual(oracle.remaining(), 0)

    def test_domain_mismatch_raises(self) -> None:
        oracle = CoinOracle.ThresholdOracle(Core.Dataset([1, 2], 4), budget=10)
        with self.assertRaises(ValueError):
            NaiveSearch.dp_naive_nbs(oracle, 8)

    def test_exhausted_users_propagate(self) -> None:
        oracle = CoinOracle.ThresholdOracle(Core.Dataset([1, 2], 4), budget=1)
        with self.assertRaises(Core.UsersExhausted):
            NaiveSearch.dp_naive_nbs(oracle, 4, plan=NaiveSearch.BatchPlan([1, 1]))


if __name__ == '__main__':
    logging.getLogger().setLevel(logging.DEBUG)
    unittest.main()
