from __future__ import annotations

# standard libraries
import logging
import math
import typing

# third party libraries
import numpy
import numpy.typing

# local libraries
from nion.quantile import CoinOracle
from nion.quantile import Core
from nion.quantile import NaiveSearch
from nion.quantile import RandomizedResponse


class ShuffleBudget:
    """A central (eps, delta) target, the shuffled batch size and the local budget it allows."""

    def __init__(self, eps: float, delta: float, batch_size: int, eps_local: float) -> None:
        self.eps = eps
        self.delta = delta
        self.batch_size = batch_size
        self.eps_local = eps_local

    def __repr__(self) -> str:
        return "ShuffleBudget(eps={}, delta={}, batch_size={}, eps_local={})".format(self.eps, self.delta, self.batch_size, self.eps_local)


class Infeasible:
    """The batch is too small to amplify to the target; minimal_batch_size is the smallest that works."""

    def __init__(self, eps: float, delta: float, batch_size: int, minimal_batch_size: int) -> None:
        self.eps = eps
        self.delta = delta
        self.batch_size = batch_size
        self.minimal_batch_size = minimal_batch_size

    def __repr__(self) -> str:
        return "Infeasible(eps={}, delta={}, batch_size={}, minimal_batch_size={})".format(self.eps, self.delta, self.batch_size, self.minimal_batch_size)

    def __bool__(self) -> bool:
        return False


class AmplificationInfeasible(Core.ProtocolInfeasible):

    def __init__(self, infeasible: Infeasible) -> None:
        super().__init__("Shuffle: batch of {} users cannot reach eps={} delta={}; {} needed.".format(
            infeasible.batch_size, infeasible.eps, infeasible.delta, infeasible.minimal_batch_size))
        self.infeasible = infeasible


def _local_eps(eps: float, delta: float, batch_size: int) -> float:
    return math.log(eps * eps * batch_size / (80.0 * math.log(4.0 / delta)))


def _is_feasible(eps: float, delta: float, batch_size: int, strict: bool) -> bool:
    # a local budget within rounding of zero counts as zero
    if _local_eps(eps, delta, batch_size) <= 1e-12:
        return False
    return not strict or eps > 16.0 * math.sqrt(math.log(4.0 / delta) / batch_size)


def minimal_batch_size(eps: float, delta: float, strict: bool = True) -> int:
    """Smallest batch for which amplification to (eps, delta) is feasible."""
    log_term = math.log(4.0 / delta)
    factor = 256.0 if strict else 80.0
    batch_size = max(math.floor(factor * log_term / (eps * eps)), 1)
    while batch_size > 1 and _is_feasible(eps, delta, batch_size - 1, strict):
        batch_size -= 1
    while not _is_feasible(eps, delta, batch_size, strict):
        batch_size += 1
    return batch_size


def amplified_local_eps(eps: float, delta: float, batch_size: int, strict: bool = True) -> typing.Union[float, Infeasible]:
    """
        Local budget ln(eps^2 n / (80 ln(4/delta))) that shuffling n = batch_size messages amplifies to
        (eps, delta), or Infeasible.

        The local budget must be positive. In strict mode the amplification bound's preconditions also apply:
        eps <= 1 and eps > 16 sqrt(ln(4/delta) / batch_size). Non-strict mode applies the formula alone
        and allows eps > 1.
    """
    if not 0 < delta <= 1:
        raise ValueError("Shuffle: delta must lie in (0, 1].")
    if batch_size < 1:
        raise ValueError("Shuffle: batch size must be at least 1.")
    if not eps > 0 or (strict and eps > 1):
        raise ValueError("Shuffle: eps must lie in (0, 1]." if strict else "Shuffle: eps must be positive.")
    if not _is_feasible(eps, delta, batch_size, strict):
        return Infeasible(eps, delta, batch_size, minimal_batch_size(eps, delta, strict))
    return _local_eps(eps, delta, batch_size)


def shuffle_budget(eps: float, delta: float, batch_size: int, strict: bool = True) -> ShuffleBudget:
    eps_local = amplified_local_eps(eps, delta, batch_size, strict)
    if isinstance(eps_local, Infeasible):
        raise AmplificationInfeasible(eps_local)
    return ShuffleBudget(eps, delta, batch_size, eps_local)


def shuffle_batch(messages: numpy.typing.ArrayLike, rng: numpy.random.Generator) -> numpy.typing.NDArray[typing.Any]:
    """The messages in uniformly random order."""
    return rng.permutation(numpy.asarray(messages))


def amplification_batch_size(n: int, B: int) -> int:
    """floor(n / ceil(log2 B)) + 1, the batch size the local budget is computed for."""
    return n // NaiveSearch.search_rounds(B) + 1


def shuffle_nbs(dataset: Core.Dataset, B: int, eps: float, delta: float, rng: numpy.random.Generator,
                strict: bool = False, tau: float = 0.5) -> Core.CoinResult:
    """
        Binary search over coins 1..B-1 in ceil(log2 B) rounds of shuffled batches.

        Every user of a round's batch answers with randomized response at the amplified local budget, the
        batch is shuffled and the aggregator branches on the unbiased mean.
    """
    if B != dataset.domain_size:
        raise ValueError("Shuffle search: B does not match the dataset's domain size.")
    budget = shuffle_budget(eps, delta, amplification_batch_size(dataset.n, B), strict)
    logging.debug("Shuffle search: n=%s B=%s %s", dataset.n, B, budget)
    oracle = CoinOracle.EmpiricalOracle(dataset, rng, RandomizedResponse.RRChannel(budget.eps_local))
    plan = NaiveSearch.allocate_batches(dataset.n, B)

    def estimate(coin: int, batch: int) -> float:
        shuffled = shuffle_batch(oracle.flip_batch(coin, batch), rng)
        return float(RandomizedResponse.rr_unbias(float(numpy.mean(shuffled)), budget.eps_local))

    outcome = NaiveSearch.noisy_binary_search(estimate, range(1, B), plan, tau)
    return Core.CoinResult(outcome.position, oracle.users_consumed, oracle.users_consumed)


def minimal_users(eps: float, delta: float, B: int, strict: bool = False) -> int:
    """Smallest n for which shuffle_nbs is feasible at (eps, delta) over [B]."""
    rounds = NaiveSearch.search_rounds(B)
    return max(rounds * (minimal_batch_size(eps, delta, strict) - 1), rounds)


def feasibility_frontier(eps_values: typing.Iterable[float], delta: float, B: int, strict: bool = False) -> typing.List[typing.Tuple[float, int]]:
    """(eps, minimal n) for every eps."""
    return [(float(eps), minimal_users(eps, delta, B, strict)) for eps in eps_values]
