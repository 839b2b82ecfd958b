from __future__ import annotations

# standard libraries
import collections
import logging
import math
import typing

# third party libraries
import numpy
import numpy.typing
import scipy.special

# local libraries
from nion.quantile import CoinOracle
from nion.quantile import Core
from nion.quantile import NaiveSearch
from nion.quantile import RandomizedResponse
from nion.quantile import Weights


SECOND_REDUCTION_SIZE = 13
WeightsFactory = typing.Callable[[int], Weights.Weights]


def binary_entropy(p: typing.Union[float, numpy.typing.NDArray[numpy.float64]]) -> typing.Any:
    """H(p) in bits."""
    return (scipy.special.entr(p) + scipy.special.entr(1 - p)) / math.log(2)


class BacParams:
    """
        The (tau, alpha) binary asymmetric channel: its optimal split quantile q_star, its capacity in bits
        and the multiplicative Bayes weights d[y][side].

        After a flip with outcome y, weight left of the split is multiplied by d[y][0] and weight right of
        it by d[y][1].
    """

    def __init__(self, tau: float, alpha: float, q_star: float, capacity: float) -> None:
        self.tau = tau
        self.alpha = alpha
        self.q_star = q_star
        self.capacity = capacity
        skew = (2 * q_star - 1) * alpha
        self.d00 = (1 - tau - alpha) / (1 - tau - skew)
        self.d01 = (1 - tau + alpha) / (1 - tau - skew)
        self.d10 = (tau + alpha) / (tau + skew)
        self.d11 = (tau - alpha) / (tau + skew)

    def __repr__(self) -> str:
        return "BacParams(tau={}, alpha={}, q_star={}, capacity={})".format(self.tau, self.alpha, self.q_star, self.capacity)

    def d(self, y: int, side: int) -> float:
        return ((self.d00, self.d01), (self.d10, self.d11))[y][side]


def bac_objective(x: float, tau: float, alpha: float) -> float:
    """Mutual information of the (tau, alpha) channel when heads-at-tau-plus-alpha has prior weight x."""
    low, high = tau - alpha, tau + alpha
    return float(binary_entropy((1 - x) * low + x * high) - (1 - x) * binary_entropy(low) - x * binary_entropy(high))


def bac_quantile_and_capacity(tau: float, alpha: float) -> BacParams:
    """
        Maximize the channel objective over x in [0, 1].

        The objective is concave and its derivative vanishes where the output probability p satisfies
        log2((1 - p)/p) = (H(tau + alpha) - H(tau - alpha)) / (2 alpha), which is solved in closed form.
    """
    if not 0 < tau < 1:
        raise ValueError("BAC: tau must lie in (0, 1).")
    if not 0 < alpha <= 0.5 * min(tau, 1 - tau):
        raise ValueError("BAC: alpha must lie in (0, min(tau, 1 - tau) / 2].")
    low, high = tau - alpha, tau + alpha
    slope = float(binary_entropy(high) - binary_entropy(low)) / (high - low)
    p_star = float(scipy.special.expit(-slope * math.log(2)))
    q_star = (p_star - low) / (high - low)
    return BacParams(tau, alpha, q_star, bac_objective(q_star, tau, alpha))


def get_interval_from_quantile(w: Weights.Weights, q: float) -> int:
    """Smallest interval i with W(i) >= q; the last interval when rounding leaves W(size) just below q."""
    return w.find_prefix(q)


def round_interval_to_coin(i: int, w: Weights.Weights, q: float) -> int:
    """Interval i's left coin i when at most a q fraction of its weight lies left of the split, else coin i + 1."""
    ratio = (q - w.prefix_sum(i - 1)) / w.weight(i)
    return i if ratio <= q else i + 1


def bayes_update(w: Weights.Weights, j: int, y: int, params: BacParams) -> Weights.Weights:
    """Apply the Bayes weights for outcome y of the coin split at params.q_star inside interval j, in place."""
    q = params.q_star
    left_mass = q - w.prefix_sum(j - 1)
    right_mass = w.prefix_sum(j) - q
    w.multiply_range(1, j - 1, params.d(y, 0))
    w.multiply_range(j + 1, w.size, params.d(y, 1))
    w.set_weight(j, params.d(y, 0) * left_mass + params.d(y, 1) * right_mass)
    return w


class IntervalMultiset:
    """The intervals a Bayes learner visited, in visit order, with the coins bounding them and the final weights."""

    def __init__(self, coins: typing.Sequence[int], intervals: typing.Sequence[int], weights: Weights.Weights) -> None:
        self.coins = list(coins)
        self.intervals = list(intervals)
        self.weights = weights

    def __len__(self) -> int:
        return len(self.intervals)

    def __repr__(self) -> str:
        return "IntervalMultiset(rounds={}, coins={})".format(len(self.intervals), len(self.coins))

    def left_coin(self, interval: int) -> int:
        return self.coins[interval - 1]

    def modal_interval(self) -> int:
        """The most visited interval, the smallest one among equally frequent intervals."""
        counts = collections.Counter(self.intervals)
        best = max(counts.values())
        return min(interval for interval, count in counts.items() if count == best)


def bayes_learn(oracle: CoinOracle.CoinOracle, coin_set: typing.Sequence[int], tau: float, alpha: float,
                rounds: int, eps: typing.Optional[float] = None,
                weights_factory: WeightsFactory = Weights.WeightVector.uniform) -> IntervalMultiset:
    """
        Run rounds steps of the Bayes learner over the intervals between consecutive coins of coin_set.

        Flips are randomized by the oracle, so the learner targets the image of tau under the channel:
        at eps < inf the coin whose bias is tau shows heads with probability rr_forward(tau, eps).
        alpha is used as given.
    """
    coins = list(coin_set)
    if len(coins) < 2 or any(a >= b for a, b in zip(coins, coins[1:])):
        raise ValueError("Bayes learn: coin set must hold at least two increasing coins.")
    learn_eps = oracle.eps if eps is None else eps
    learn_tau = float(RandomizedResponse.rr_forward(tau, learn_eps))
    params = bac_quantile_and_capacity(learn_tau, alpha)
    w = weights_factory(len(coins) - 1)
    intervals: typing.List[int] = list()
    for _ in range(rounds):
        j = get_interval_from_quantile(w, params.q_star)
        c = round_interval_to_coin(j, w, params.q_star)
        intervals.append(j)
        y = oracle.flip(coins[c - 1])
        bayes_update(w, j, y, params)
        total = w.total()
        if abs(total - 1.0) > 1e-12:
            w.multiply_range(1, w.size, 1.0 / total)
    return IntervalMultiset(coins, intervals, w)


def gamma_quantile_coins(learned: IntervalMultiset, gamma: float) -> typing.List[int]:
    """Left coins of the sorted visit list at 1-based positions g, 2g, ... with g = ceil(gamma |L|)."""
    visited = sorted(learned.intervals)
    if not visited:
        return list()
    step = math.ceil(gamma * len(visited))
    reduced = sorted({learned.left_coin(visited[step * i - 1]) for i in range(1, len(visited) // step + 1)})
    assert len(reduced) <= math.floor(1 / gamma + 1e-9)
    return reduced


def reduction_to_gamma(oracle: CoinOracle.CoinOracle, coin_set: typing.Sequence[int], alpha: float,
                       eps: typing.Optional[float], gamma: float, rounds: int, tau: float = 0.5,
                       weights_factory: WeightsFactory = Weights.WeightVector.uniform) -> typing.List[int]:
    """
        Learn for rounds steps, then keep the gamma-quantiles of the visited intervals.

        With L the sorted visit list and g = ceil(gamma |L|), the entries at 1-based positions g, 2g, ...
        are kept and mapped to their left coins. The result is sorted, duplicate free and has at most
        floor(1/gamma) coins.
    """
    if not 0 < gamma < 1:
        raise ValueError("Reduction: gamma must lie in (0, 1).")
    learned = bayes_learn(oracle, coin_set, tau, alpha, rounds, eps, weights_factory)
    return gamma_quantile_coins(learned, gamma)


class BudgetSplit:
    """How a screening search divides its users: two learning stages and the final search."""

    def __init__(self, n: int, B: int) -> None:
        log_b = math.log(B)
        # ln ln B is negative below B = e and clamped there
        log_log_b = max(math.log(log_b), 0.0)
        denominator = log_b + log_log_b + 1
        self.first = math.floor(n * log_b / denominator)
        self.second = math.floor(n * log_log_b / denominator)
        self.final = n - self.first - self.second

    def __repr__(self) -> str:
        return "BudgetSplit(first={}, second={}, final={})".format(self.first, self.second, self.final)


def learning_alpha(n: int, B: int, tau: float, eps: float, alpha_constant: float = 0.6) -> float:
    """alpha_constant sqrt(ln B / n), capped at half the distance of the learning target to 0 or 1."""
    learn_tau = float(RandomizedResponse.rr_forward(tau, eps))
    alpha = alpha_constant * math.sqrt(math.log(B) / n)
    cap = 0.5 * min(learn_tau, 1 - learn_tau)
    if alpha > cap:
        logging.debug("Screening search: alpha %s capped at %s", alpha, cap)
        alpha = cap
    return alpha


def _search_candidates(oracle: CoinOracle.CoinOracle, candidates: typing.Sequence[int], tau: float, eps: float) -> int:
    plan = NaiveSearch.allocate_batches(oracle.remaining(), len(candidates) + 1)
    outcome = NaiveSearch.noisy_binary_search(NaiveSearch.batch_estimator(oracle, eps), candidates, plan, tau)
    if outcome.position > 0:
        return candidates[outcome.position - 1]
    return candidates[0] - 1


def _closest_candidate(oracle: CoinOracle.CoinOracle, candidates: typing.Sequence[int], tau: float, eps: float) -> int:
    share, extra = divmod(oracle.remaining(), len(candidates))
    if share < 1:
        raise Core.ProtocolInfeasible("Screening search: {} users cannot estimate {} candidates.".format(oracle.remaining(), len(candidates)))
    estimate = NaiveSearch.batch_estimator(oracle, eps)
    distances = [abs(estimate(coin, share + (1 if index < extra else 0)) - tau) for index, coin in enumerate(candidates)]
    return candidates[int(numpy.argmin(distances))]


def bayess_search(oracle: CoinOracle.CoinOracle, B: int, eps: typing.Optional[float] = None, tau: float = 0.5,
                  alpha_constant: float = 0.6, use_tree: bool = False, final_step: str = "closest") -> Core.CoinResult:
    """
        Screening search over coins 1..B using every user the oracle has left.

        The users are split in ratio ln B : ln ln B : 1 between a first learning stage over all coins
        (gamma = 1/ln^2 B), a second learning stage over the padded survivors (gamma = 1/13, only when more
        than 13 coins survive the first; otherwise its users go to the final step) and a final step over the
        survivors. The default final step ("closest") gives every candidate an equal share of the final users
        and returns the one whose estimate is closest to tau, ties to the smaller coin. "search" runs a noisy
        binary search over the sorted candidates instead and returns the last one whose estimate stays
        below tau; it is the step to use with deterministic coins, whose estimates are all 0 or 1.
    """
    if B != oracle.domain_size:
        raise ValueError("Screening search: B does not match the oracle's domain size.")
    if final_step not in ("search", "closest"):
        raise ValueError("Screening search: unknown final step '{}'.".format(final_step))
    search_eps = oracle.eps if eps is None else eps
    n = oracle.remaining()
    users_before = oracle.users_consumed
    if n < NaiveSearch.search_rounds(B):
        raise Core.ProtocolInfeasible("Screening search: {} users are too few for B={}.".format(n, B))
    split = BudgetSplit(n, B)
    if split.first < 1:
        raise Core.ProtocolInfeasible("Screening search: degenerate budget split {}.".format(split))
    alpha = learning_alpha(n, B, tau, search_eps, alpha_constant)
    factory: WeightsFactory = Weights.WeightTree.uniform if use_tree else Weights.WeightVector.uniform
    gamma = min(1.0 / math.log(B) ** 2, 0.5)
    logging.debug("Screening search: n=%s B=%s %s alpha=%s gamma=%s", n, B, split, alpha, gamma)
    candidates = reduction_to_gamma(oracle, range(1, B + 1), alpha, search_eps, gamma, split.first, tau, factory)
    if len(candidates) > SECOND_REDUCTION_SIZE:
        padded = sorted(set([1] + candidates + [B]))
        candidates = reduction_to_gamma(oracle, padded, alpha, search_eps, 1.0 / SECOND_REDUCTION_SIZE, split.second, tau, factory)
    if not candidates:
        raise Core.ProtocolInfeasible("Screening search: no candidate coin survived.")
    logging.debug("Screening search: %s candidates for %s users", len(candidates), oracle.remaining())
    if final_step == "search":
        index = _search_candidates(oracle, candidates, tau, search_eps)
    else:
        index = _closest_candidate(oracle, candidates, tau, search_eps)
    users = oracle.users_consumed - users_before
    return Core.CoinResult(index, users, users)


def dp_bayess(dataset: Core.Dataset, B: int, eps: float, seed: typing.Union[int, numpy.random.SeedSequence], **kwargs: typing.Any) -> Core.CoinResult:
    """Run the screening search on a dataset with eps-randomized response, users in an order drawn from seed."""
    rng = numpy.random.default_rng(seed)
    oracle = CoinOracle.EmpiricalOracle(dataset, rng, RandomizedResponse.RRChannel(eps))
    return bayess_search(oracle, B, eps, **kwargs)
