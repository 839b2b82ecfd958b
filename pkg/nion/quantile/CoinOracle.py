from __future__ import annotations

# standard libraries
import math
import typing

# third party libraries
import numpy
import numpy.typing

# local libraries
from nion.quantile import Core
from nion.quantile import RandomizedResponse


_BitArrayType = numpy.typing.NDArray[numpy.int8]
_ProbabilityArrayType = numpy.typing.NDArray[numpy.float64]
_PerturbationSchedule = typing.Callable[[int, int], float]


class CoinOracle:
    """
        The one-shot flip interface. Every flip consumes exactly one unit of budget.

        Coin j shows heads for a user holding x when x <= j, so its bias is the CDF at j.

        Subclasses implement _draw (noiseless bits for the next users) and the budget bookkeeping.
    """

    def __init__(self, domain_size: int, channel: typing.Optional[RandomizedResponse.RRChannel]) -> None:
        self.__domain_size = int(domain_size)
        self.__channel = channel
        self.__flips_used = 0

    @property
    def domain_size(self) -> int:
        return self.__domain_size

    @property
    def channel(self) -> typing.Optional[RandomizedResponse.RRChannel]:
        return self.__channel

    @property
    def eps(self) -> float:
        """The local budget the flips are randomized with; inf when flips are not randomized."""
        return self.__channel.eps if self.__channel else math.inf

    @property
    def flips_used(self) -> int:
        return self.__flips_used

    @property
    def users_consumed(self) -> int:
        return self.__flips_used

    def remaining(self) -> int:
        raise NotImplementedError()

    def _draw(self, j: int, count: int, rng: numpy.random.Generator) -> typing.Tuple[_BitArrayType, typing.Optional[numpy.typing.NDArray[numpy.bool_]]]:
        raise NotImplementedError()

    def _rng(self) -> numpy.random.Generator:
        raise NotImplementedError()

    def _check_coin(self, j: int) -> None:
        if not 1 <= j <= self.__domain_size:
            raise ValueError("Coin oracle: coin {} out of range [1, {}].".format(j, self.__domain_size))

    def flip(self, j: int) -> int:
        return int(self.flip_batch(j, 1)[0])

    def flip_batch(self, j: int, count: int) -> _BitArrayType:
        """Flip coin j once for each of the next count users."""
        self._check_coin(j)
        if count < 0:
            raise ValueError("Coin oracle: count must be nonnegative.")
        if count > self.remaining():
            raise Core.UsersExhausted("Coin oracle: {} flips requested, {} users left.".format(count, self.remaining()))
        rng = self._rng()
        bits, exact = self._draw(j, count, rng)
        if self.__channel is not None:
            noisy = RandomizedResponse.rr_flip_array(bits, self.__channel, rng)
            bits = numpy.where(exact, bits, noisy).astype(numpy.int8) if exact is not None else noisy
        self.__flips_used += count
        return bits


class EmpiricalOracle(CoinOracle):
    """
        Coins backed by a finite population, each user answering at most one query.

        Users are visited in a uniformly random order drawn at construction. exact_users marks users that
        answer without randomization (the virtual users of the quantile reduction).
    """

    def __init__(self, dataset: Core.Dataset, rng: numpy.random.Generator,
                 channel: typing.Optional[RandomizedResponse.RRChannel] = None,
                 exact_users: typing.Optional[numpy.typing.NDArray[numpy.bool_]] = None) -> None:
        super().__init__(dataset.domain_size, channel)
        self.__dataset = dataset
        self.__rng = rng
        self.__permutation = rng.permutation(dataset.n)
        self.__cursor = 0
        if exact_users is not None:
            exact_users = numpy.asarray(exact_users, dtype=bool)
            if exact_users.shape != (dataset.n,):
                raise ValueError("Empirical oracle: exact user mask must have one entry per user.")
        self.__exact_users = exact_users

    @property
    def dataset(self) -> Core.Dataset:
        return self.__dataset

    @property
    def cursor(self) -> int:
        return self.__cursor

    @property
    def consumed_users(self) -> numpy.typing.NDArray[numpy.int64]:
        """Indices into the dataset of the users queried so far, in query order."""
        return numpy.array(self.__permutation[:self.__cursor])

    def remaining(self) -> int:
        return self.__dataset.n - self.__cursor

    def _rng(self) -> numpy.random.Generator:
        return self.__rng

    def _draw(self, j: int, count: int, rng: numpy.random.Generator) -> typing.Tuple[_BitArrayType, typing.Optional[numpy.typing.NDArray[numpy.bool_]]]:
        users = self.__permutation[self.__cursor:self.__cursor + count]
        self.__cursor += count
        bits = (self.__dataset.values[users] <= j).astype(numpy.int8)
        exact = self.__exact_users[users] if self.__exact_users is not None else None
        return bits, exact


def _check_probabilities(probabilities: numpy.typing.ArrayLike) -> _ProbabilityArrayType:
    p = numpy.asarray(probabilities, dtype=float)
    if p.ndim != 1 or p.shape[0] < 3:
        raise ValueError("Coin oracle: expected coin probabilities for 0..B with B >= 2.")
    if numpy.any(p < 0) or numpy.any(p > 1) or numpy.any(numpy.diff(p) < 0):
        raise ValueError("Coin oracle: coin probabilities must be nondecreasing in [0, 1].")
    return p


class StatisticalOracle(CoinOracle):
    """
        i.i.d. coins: flip j shows heads with probability p_j, independently of every other flip.

        probabilities holds p_0..p_B, the CDF of the user distribution.
    """

    def __init__(self, probabilities: numpy.typing.ArrayLike, rng: numpy.random.Generator, budget: int,
                 channel: typing.Optional[RandomizedResponse.RRChannel] = None) -> None:
        self.__probabilities = _check_probabilities(probabilities)
        super().__init__(self.__probabilities.shape[0] - 1, channel)
        self.__rng = rng
        self.__budget = int(budget)

    @classmethod
    def from_dataset(cls, dataset: Core.Dataset, rng: numpy.random.Generator,
                     channel: typing.Optional[RandomizedResponse.RRChannel] = None,
                     budget: typing.Optional[int] = None) -> StatisticalOracle:
        """The oracle of users drawn with replacement from the dataset's empirical distribution."""
        return cls(dataset.cdf_values, rng, budget if budget is not None else dataset.n, channel)

    @property
    def probabilities(self) -> _ProbabilityArrayType:
        return self.__probabilities

    def remaining(self) -> int:
        return self.__budget - self.flips_used

    def _rng(self) -> numpy.random.Generator:
        return self.__rng

    def _draw(self, j: int, count: int, rng: numpy.random.Generator) -> typing.Tuple[_BitArrayType, typing.Optional[numpy.typing.NDArray[numpy.bool_]]]:
        return (rng.random(count) < self.__probabilities[j]).astype(numpy.int8), None


class AdversarialOracle(CoinOracle):
    """
        i.i.d. coins whose biases an adversary moves by at most c * alpha from the base probabilities.

        perturbation is either a fixed array over coins 0..B (checked here) or a schedule called with
        (flip count so far, coin) whose values are checked at flip time.
    """

    def __init__(self, probabilities: numpy.typing.ArrayLike,
                 perturbation: typing.Union[numpy.typing.ArrayLike, _PerturbationSchedule],
                 c: float, alpha: float, rng: numpy.random.Generator, budget: int,
                 channel: typing.Optional[RandomizedResponse.RRChannel] = None) -> None:
        self.__probabilities = _check_probabilities(probabilities)
        super().__init__(self.__probabilities.shape[0] - 1, channel)
        self.__bound = float(c) * float(alpha)
        if callable(perturbation):
            self.__schedule: _PerturbationSchedule = perturbation
        else:
            offsets = numpy.asarray(perturbation, dtype=float)
            if offsets.shape != self.__probabilities.shape:
                raise ValueError("Adversarial oracle: perturbation must have one entry per coin.")
            if numpy.any(numpy.abs(offsets) > self.__bound):
                raise ValueError("Adversarial oracle: perturbation exceeds c * alpha.")
            self.__schedule = lambda t, j: float(offsets[j])
        self.__rng = rng
        self.__budget = int(budget)

    @property
    def bound(self) -> float:
        return self.__bound

    def perturbed_probability(self, j: int) -> float:
        offset = self.__schedule(self.flips_used, j)
        assert abs(offset) <= self.__bound, "Adversarial oracle: perturbation {} exceeds {}".format(offset, self.__bound)
        return float(numpy.clip(self.__probabilities[j] + offset, 0.0, 1.0))

    def remaining(self) -> int:
        return self.__budget - self.flips_used

    def _rng(self) -> numpy.random.Generator:
        return self.__rng

    def _draw(self, j: int, count: int, rng: numpy.random.Generator) -> typing.Tuple[_BitArrayType, typing.Optional[numpy.typing.NDArray[numpy.bool_]]]:
        p = self.perturbed_probability(j)
        return (rng.random(count) < p).astype(numpy.int8), None


class ThresholdOracle(CoinOracle):
    """
        Deterministic coins of a dataset: coin j always shows heads iff F_X(j) >= tau (exact comparison).

        This is the noiseless oracle: every estimate a protocol makes from it is exact on the side of tau
        that matters, so searches on it are deterministic.
    """

    def __init__(self, dataset: Core.Dataset, tau: typing.Union[float, str, int] = "1/2", budget: typing.Optional[int] = None) -> None:
        super().__init__(dataset.domain_size, None)
        tau_f = Core.as_fraction(tau)
        counts = dataset.cumulative_counts.astype(object)
        self.__heads = numpy.array([count * tau_f.denominator >= tau_f.numerator * dataset.n for count in counts], dtype=numpy.int8)
        self.__budget = int(budget) if budget is not None else dataset.n
        self.__rng = numpy.random.default_rng(0)

    def remaining(self) -> int:
        return self.__budget - self.flips_used

    def _rng(self) -> numpy.random.Generator:
        return self.__rng

    def _draw(self, j: int, count: int, rng: numpy.random.Generator) -> typing.Tuple[_BitArrayType, typing.Optional[numpy.typing.NDArray[numpy.bool_]]]:
        return numpy.full(count, self.__heads[j], dtype=numpy.int8), None


def drift_tail_bound(n: int, t: float) -> float:
    """Tail bound 2 exp(-t^2 n / 2) on the drift of one coin of a population as users are removed, capped at 1."""
    if n < 1:
        raise ValueError("Drift bound: n must be at least 1.")
    if t < 0:
        raise ValueError("Drift bound: t must be nonnegative.")
    return min(1.0, 2.0 * math.exp(-t * t * n / 2.0))


def measure_max_drift(dataset: Core.Dataset, trials: int, rng: numpy.random.Generator) -> numpy.typing.NDArray[numpy.float64]:
    """
        For each trial draw a fresh user order and return max over coins j and 0 <= t <= n/2 of
        |p_j^t - p_j^0|, where p_j^t is the CDF at j of the users not among the first t.

        An odd-sized dataset is padded to even size by duplicating its last element. The drift is
        constant between consecutive distinct data values, so only those coins are evaluated.
    """
    values = dataset.values
    if values.shape[0] % 2 == 1:
        values = numpy.append(values, values[-1])
    n = values.shape[0]
    half = n // 2
    distinct = numpy.unique(values)
    total_le = numpy.searchsorted(numpy.sort(values), distinct, side="right").astype(float)
    initial = total_le / n
    remaining_users = (n - numpy.arange(half + 1, dtype=float))[:, numpy.newaxis]
    drifts = numpy.empty(trials, dtype=float)
    for trial in range(trials):
        removed = values[rng.permutation(n)[:half]]
        removed_le = numpy.zeros((half + 1, distinct.shape[0]), dtype=float)
        numpy.cumsum(removed[:, numpy.newaxis] <= distinct[numpy.newaxis, :], axis=0, dtype=float, out=removed_le[1:])
        drifts[trial] = numpy.max(numpy.abs((total_le - removed_le) / remaining_users - initial))
    return drifts
