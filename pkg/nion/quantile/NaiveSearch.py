from __future__ import annotations

# standard libraries
import logging
import typing

# third party libraries
import numpy

# local libraries
from nion.quantile import CoinOracle
from nion.quantile import Core
from nion.quantile import RandomizedResponse


EstimateFunction = typing.Callable[[int, int], float]
StepCallback = typing.Callable[[int, int, int, int, float], None]


def search_rounds(size: int) -> int:
    """ceil(log2(size)), the number of halvings needed to isolate one of size positions."""
    if size < 1:
        raise ValueError("Search rounds: size must be positive.")
    return (size - 1).bit_length()


class BatchPlan:
    """Batch sizes for the successive pivots of a search; they sum to the user budget, larger batches first."""

    def __init__(self, batch_sizes: typing.Sequence[int]) -> None:
        sizes = tuple(int(size) for size in batch_sizes)
        if any(size < 1 for size in sizes):
            raise ValueError("Batch plan: batch sizes must be positive.")
        if sizes and (max(sizes) - min(sizes) > 1 or list(sizes) != sorted(sizes, reverse=True)):
            raise ValueError("Batch plan: batch sizes must differ by at most one, larger first.")
        self.__batch_sizes = sizes

    def __repr__(self) -> str:
        return "BatchPlan({})".format(list(self.__batch_sizes))

    def __eq__(self, other: typing.Any) -> bool:
        if isinstance(other, self.__class__):
            return self.batch_sizes == other.batch_sizes
        return False

    def __len__(self) -> int:
        return len(self.__batch_sizes)

    def __getitem__(self, index: int) -> int:
        return self.__batch_sizes[index]

    @property
    def batch_sizes(self) -> typing.Tuple[int, ...]:
        return self.__batch_sizes

    @property
    def total(self) -> int:
        return sum(self.__batch_sizes)


def allocate_batches(n: int, B: int) -> BatchPlan:
    """
        Split n users into ceil(log2 B) batches of size floor(n / ceil(log2 B)), handing the remainder
        out one user per batch starting from the first.
    """
    if B < 2:
        raise ValueError("Allocate batches: B must be at least 2.")
    rounds = search_rounds(B)
    if n < rounds:
        raise Core.ProtocolInfeasible("Allocate batches: {} users cannot fill {} batches.".format(n, rounds))
    base, extra = divmod(n, rounds)
    return BatchPlan([base + 1] * extra + [base] * (rounds - extra))


class SearchOutcome:
    """The result of a search over an ordered coin list: the first position whose estimate reached tau."""

    def __init__(self, position: int, estimates: typing.Mapping[int, float], users_consumed: int) -> None:
        self.position = position
        self.estimates = dict(estimates)
        self.users_consumed = users_consumed

    def __repr__(self) -> str:
        return "SearchOutcome(position={}, steps={})".format(self.position, len(self.estimates))


def noisy_binary_search(estimate_fn: EstimateFunction, coins: typing.Sequence[int], plan: BatchPlan,
                        tau: float = 0.5, on_step: typing.Optional[StepCallback] = None) -> SearchOutcome:
    """
        Search positions 0..k of an ordered list of k coins for the first coin whose estimated CDF is >= tau.

        Position k means no coin reached tau. Each step estimates coin coins[mid] with mid = (lo + hi) // 2,
        moving hi to mid when the estimate is at least tau (ties go left) and lo to mid + 1 otherwise. The
        search stops when lo >= hi.

        The plan's users are spent in full. A step takes an equal share (larger shares first) of the users
        not yet spent over the steps the open interval can still need, so the step sizes equal the plan when
        every planned step runs and grow when the interval closes early.
    """
    lo, hi = 0, len(coins)
    if len(plan) < search_rounds(len(coins) + 1):
        raise Core.ProtocolInfeasible("Noisy binary search: {} batches cannot resolve {} coins.".format(len(plan), len(coins)))
    estimates: typing.Dict[int, float] = dict()
    users_consumed = 0
    step = 0
    while lo < hi:
        mid = (lo + hi) // 2
        share, extra = divmod(plan.total - users_consumed, search_rounds(hi - lo + 1))
        batch = share + (1 if extra else 0)
        estimate = estimate_fn(coins[mid], batch)
        estimates[coins[mid]] = estimate
        users_consumed += batch
        if estimate >= tau:
            hi = mid
        else:
            lo = mid + 1
        if on_step:
            on_step(step, lo, hi, coins[mid], estimate)
        step += 1
    return SearchOutcome(lo, estimates, users_consumed)


def batch_estimator(oracle: CoinOracle.CoinOracle, eps: typing.Optional[float] = None) -> EstimateFunction:
    """Estimate a coin as the unbiased mean of a batch of private flips."""
    unbias_eps = oracle.eps if eps is None else eps

    def estimate(coin: int, batch: int) -> float:
        bits = oracle.flip_batch(coin, batch)
        return float(RandomizedResponse.rr_unbias(float(numpy.mean(bits)), unbias_eps))

    return estimate


def dp_naive_nbs(oracle: CoinOracle.CoinOracle, B: int, eps: typing.Optional[float] = None,
                 plan: typing.Optional[BatchPlan] = None, tau: float = 0.5,
                 on_step: typing.Optional[StepCallback] = None) -> Core.CoinResult:
    """
        Binary search over coins 1..B-1 and return the number of coins whose estimate fell below tau.

        That index m has an estimated F(m) < tau and an estimated F(m + 1) >= tau, so it is the returned
        quantile coin; 0 means even coin 1 reached tau. eps is the budget the oracle randomizes with and
        defaults to the oracle's own. The plan defaults to allocate_batches over the oracle's remaining users.
    """
    if B != oracle.domain_size:
        raise ValueError("Naive search: B does not match the oracle's domain size.")
    if plan is None:
        plan = allocate_batches(oracle.remaining(), B)
    users_before = oracle.users_consumed
    outcome = noisy_binary_search(batch_estimator(oracle, eps), range(1, B), plan, tau, on_step)
    logging.debug("Naive search: B=%s steps=%s result=%s", B, len(outcome.estimates), outcome.position)
    users = oracle.users_consumed - users_before
    return Core.CoinResult(outcome.position, users, users)
