from __future__ import annotations

# standard libraries
import enum
import fractions
import math
import numbers
import typing

# third party libraries
import numpy
import numpy.typing


_ValuesType = numpy.typing.NDArray[numpy.int64]
_RationalLike = typing.Union[fractions.Fraction, int, float, str]


class UsersExhausted(Exception):
    """Raised when a protocol asks an oracle for a flip and no unqueried user is left."""
    pass


class ProtocolInfeasible(Exception):
    """Raised when the user budget is too small for the requested protocol."""
    pass


class Protocol(enum.Enum):
    BAYESS = "bayess"
    NAIVE = "naive"
    HIERARCHICAL = "hier"
    SHUFFLE_NAIVE = "shuffle-naive"


def as_fraction(value: _RationalLike) -> fractions.Fraction:
    """Return value as an exact fraction; floats are read through their shortest repr, so 0.04 becomes 1/25."""
    if isinstance(value, fractions.Fraction):
        return value
    if isinstance(value, numbers.Integral):
        return fractions.Fraction(int(value))
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError("Fraction: value must be finite.")
        return fractions.Fraction(repr(value))
    return fractions.Fraction(value)


class Dataset:
    """
        An ordered multiset of user values in [1, B].

        The cumulative counts are computed once: cumulative_counts[i] is the number of users holding a
        value at most i, for i in 0..B.
    """

    def __init__(self, values: numpy.typing.ArrayLike, domain_size: int, metadata: typing.Optional[typing.Mapping[str, typing.Any]] = None) -> None:
        array = numpy.asarray(values)
        if array.ndim != 1 or array.shape[0] < 1:
            raise ValueError("Dataset: expected a non-empty one dimensional sequence of values.")
        if int(domain_size) != domain_size or domain_size < 2:
            raise ValueError("Dataset: domain size must be an integer of at least 2.")
        if not numpy.issubdtype(array.dtype, numpy.integer):
            if not numpy.all(numpy.equal(numpy.mod(array, 1), 0)):
                raise ValueError("Dataset: values must be integers.")
        self.__domain_size = int(domain_size)
        self.__values: _ValuesType = array.astype(numpy.int64)
        if self.__values.min() < 1 or self.__values.max() > self.__domain_size:
            raise ValueError("Dataset: values must lie in [1, {}].".format(self.__domain_size))
        self.__values.setflags(write=False)
        counts = numpy.bincount(self.__values, minlength=self.__domain_size + 1)
        self.__cumulative_counts: _ValuesType = numpy.cumsum(counts).astype(numpy.int64)
        self.__cumulative_counts.setflags(write=False)
        self.__metadata = dict(metadata) if metadata else dict()

    def __repr__(self) -> str:
        return "Dataset(n={}, B={})".format(self.n, self.domain_size)

    def __len__(self) -> int:
        return self.__values.shape[0]

    def __eq__(self, other: typing.Any) -> bool:
        if isinstance(other, self.__class__):
            return self.domain_size == other.domain_size and numpy.array_equal(self.values, other.values)
        return False

    @property
    def values(self) -> _ValuesType:
        return self.__values

    @property
    def domain_size(self) -> int:
        return self.__domain_size

    @property
    def n(self) -> int:
        return self.__values.shape[0]

    @property
    def metadata(self) -> typing.Dict[str, typing.Any]:
        return dict(self.__metadata)

    @property
    def cumulative_counts(self) -> _ValuesType:
        return self.__cumulative_counts

    @property
    def cdf_values(self) -> numpy.typing.NDArray[numpy.float64]:
        """Floating point F_X(i) for i in 0..B, for protocols and oracles; metrics use empirical_cdf."""
        return self.__cumulative_counts / float(self.n)


class QuantileSpec:
    """The target quantile q with its accuracy alpha and privacy parameters (eps, delta)."""

    def __init__(self, q: _RationalLike, alpha: _RationalLike, eps: float, delta: float = 0.0) -> None:
        self.q = as_fraction(q)
        self.alpha = as_fraction(alpha)
        self.eps = float(eps)
        self.delta = float(delta)
        if not 0 < self.q < 1:
            raise ValueError("Quantile spec: q must lie in (0, 1).")
        if not 0 < self.alpha < fractions.Fraction(1, 4):
            raise ValueError("Quantile spec: alpha must lie in (0, 1/4).")
        if not self.eps > 0:
            raise ValueError("Quantile spec: eps must be positive.")
        if not 0 <= self.delta < 1:
            raise ValueError("Quantile spec: delta must lie in [0, 1).")

    def __repr__(self) -> str:
        return "QuantileSpec(q={}, alpha={}, eps={}, delta={})".format(self.q, self.alpha, self.eps, self.delta)


class CoinResult:
    """A protocol's returned coin index with its budget accounting."""

    def __init__(self, index: int, flips_used: int, users_consumed: int) -> None:
        assert flips_used >= 0 and users_consumed >= 0
        self.index = int(index)
        self.flips_used = int(flips_used)
        self.users_consumed = int(users_consumed)

    def __repr__(self) -> str:
        return "CoinResult(index={}, flips_used={}, users_consumed={})".format(self.index, self.flips_used, self.users_consumed)

    def __eq__(self, other: typing.Any) -> bool:
        if isinstance(other, self.__class__):
            return self.index == other.index and self.flips_used == other.flips_used and self.users_consumed == other.users_consumed
        return False


TRIAL_COLUMNS = ("protocol", "seed", "trial", "n", "B", "eps", "delta", "alpha_test", "m_tilde", "abs_error", "success", "users_consumed", "reason")


class TrialRecord:
    """One protocol run, as written to a row of the trial CSV."""

    def __init__(self, protocol: Protocol, seed: int, trial: int, n: int, B: int, eps: float, delta: float,
                 alpha_test: float, m_tilde: typing.Optional[int], abs_error: float, success: bool,
                 users_consumed: int = 0, reason: str = str()) -> None:
        self.protocol = Protocol(protocol)
        self.seed = int(seed)
        self.trial = int(trial)
        self.n = int(n)
        self.B = int(B)
        self.eps = float(eps)
        self.delta = float(delta)
        self.alpha_test = float(alpha_test)
        self.m_tilde = m_tilde
        self.abs_error = float(abs_error)
        self.success = bool(success)
        self.users_consumed = int(users_consumed)
        self.reason = reason

    def __repr__(self) -> str:
        return "TrialRecord({} trial={} eps={} m_tilde={} success={})".format(self.protocol.value, self.trial, self.eps, self.m_tilde, self.success)

    @property
    def is_failure(self) -> bool:
        return bool(self.reason)

    def write_dict(self) -> typing.Dict[str, typing.Any]:
        return {
            "protocol": self.protocol.value,
            "seed": self.seed,
            "trial": self.trial,
            "n": self.n,
            "B": self.B,
            "eps": self.eps,
            "delta": self.delta,
            "alpha_test": self.alpha_test,
            "m_tilde": self.m_tilde if self.m_tilde is not None else -1,
            "abs_error": self.abs_error,
            "success": self.success,
            "users_consumed": self.users_consumed,
            "reason": self.reason,
        }


def _check_index(dataset: Dataset, i: int, label: str) -> None:
    if int(i) != i or not 0 <= i <= dataset.domain_size:
        raise ValueError("{}: index {} out of range [0, {}].".format(label, i, dataset.domain_size))


def empirical_cdf(dataset: Dataset, i: int) -> fractions.Fraction:
    """Return F_X(i) = |{j : x_j <= i}| / n exactly, with F_X(0) = 0."""
    _check_index(dataset, i, "Empirical CDF")
    return fractions.Fraction(int(dataset.cumulative_counts[int(i)]), dataset.n)


def _cdf_above(dataset: Dataset, m: int) -> fractions.Fraction:
    # F_X(B + 1) := 1
    return empirical_cdf(dataset, m + 1) if m < dataset.domain_size else fractions.Fraction(1)


def is_good_coin(dataset: Dataset, m: int, tau: _RationalLike, alpha: _RationalLike) -> bool:
    """
        Return whether coin m is a (tau, alpha)-good coin of the dataset.

        That is F_X(m) < tau + alpha and F_X(m + 1) > tau - alpha, compared exactly. Coin B is accepted
        with F_X(B + 1) taken as 1, since the quantile reduction can return the top of the domain.
    """
    _check_index(dataset, m, "Good coin")
    tau_f = as_fraction(tau)
    alpha_f = as_fraction(alpha)
    return empirical_cdf(dataset, m) < tau_f + alpha_f and _cdf_above(dataset, m) > tau_f - alpha_f


def coin_interval_intersects(dataset: Dataset, m: int, tau: _RationalLike, alpha: _RationalLike) -> bool:
    """Return whether [F_X(m), F_X(m + 1)] meets the open interval (tau - alpha, tau + alpha)."""
    _check_index(dataset, m, "Good coin")
    tau_f = as_fraction(tau)
    alpha_f = as_fraction(alpha)
    low = max(empirical_cdf(dataset, m), tau_f - alpha_f)
    high = min(_cdf_above(dataset, m), tau_f + alpha_f)
    if low < high:
        return True
    return low == high and tau_f - alpha_f < low < tau_f + alpha_f


def round_quantile(q: _RationalLike, n: int) -> fractions.Fraction:
    """Round q to the nearest multiple of 1/n. The extra quantile error is at most 1/(2n)."""
    q_f = as_fraction(q)
    return fractions.Fraction(round(q_f * n), n)


def pad_for_quantile(dataset: Dataset, q: _RationalLike) -> Dataset:
    """
        Append (1 - q)n copies of 1 and qn copies of B.

        The q-quantile of the input becomes the median of the result, which has size 2n and satisfies
        F_P(y) = (1 - q)/2 + F_X(y)/2 for y in [1, B - 1].
    """
    q_f = as_fraction(q)
    low_count = (1 - q_f) * dataset.n
    high_count = q_f * dataset.n
    if low_count.denominator != 1 or high_count.denominator != 1:
        raise ValueError("Padding: (1 - q)n and qn must be integers; round q first.")
    B = dataset.domain_size
    values = numpy.concatenate([dataset.values,
                                numpy.full(int(low_count), 1, dtype=numpy.int64),
                                numpy.full(int(high_count), B, dtype=numpy.int64)])
    metadata = dataset.metadata
    metadata["padded_quantile"] = str(q_f)
    metadata["real_users"] = dataset.n
    return Dataset(values, B, metadata)


# a median solver receives the padded dataset and a mask of users that answer without randomization
# (None when every user, virtual or not, goes through the mechanism).
MedianSolver = typing.Callable[[Dataset, typing.Optional[numpy.typing.NDArray[numpy.bool_]]], CoinResult]


def quantile_via_median(median_solver: MedianSolver, dataset: Dataset, spec: QuantileSpec, *, noiseless_virtual: bool = False) -> CoinResult:
    """
        Solve the q-quantile problem with an alpha-approximate median solver.

        q is rounded to a multiple of 1/n, the dataset is padded with n virtual users, and the solver runs
        on the padded population. The result is a 2 alpha approximate q-quantile of the input. Quantiles
        within alpha of either end of the domain are answered with 1 or B without asking anyone.

        Virtual users go through the same randomizer as real users unless noiseless_virtual is set.
        Answering them exactly improves accuracy but their answers are then distinguishable from the
        real users' reports, so that mode is meant for accuracy studies only.
    """
    if spec.q <= spec.alpha:
        return CoinResult(1, 0, 0)
    if spec.q >= 1 - spec.alpha:
        return CoinResult(dataset.domain_size, 0, 0)
    q_rounded = round_quantile(spec.q, dataset.n)
    padded = pad_for_quantile(dataset, q_rounded)
    exact_mask: typing.Optional[numpy.typing.NDArray[numpy.bool_]] = None
    if noiseless_virtual:
        exact_mask = numpy.zeros(padded.n, dtype=bool)
        exact_mask[dataset.n:] = True
    return median_solver(padded, exact_mask)


def bucketize(raw: numpy.typing.ArrayLike, cuts: numpy.typing.ArrayLike) -> Dataset:
    """
        Map continuous values to buckets 1..B given cut points y_1 < ... < y_{B-1}.

        Buckets are left-closed: a value v lands in bucket i when y_{i-1} <= v < y_i, with y_0 = -inf and
        y_B = +inf, so a value equal to cut y_i belongs to bucket i + 1.
    """
    cuts_array = numpy.asarray(cuts, dtype=float)
    raw_array = numpy.asarray(raw, dtype=float)
    if cuts_array.ndim != 1 or cuts_array.shape[0] < 1:
        raise ValueError("Bucketize: at least one cut is required.")
    if not numpy.all(numpy.diff(cuts_array) > 0):
        raise ValueError("Bucketize: cuts must be strictly increasing.")
    if numpy.any(numpy.isnan(raw_array)):
        raise ValueError("Bucketize: values must not be NaN.")
    values = numpy.searchsorted(cuts_array, raw_array, side="right") + 1
    return Dataset(values, cuts_array.shape[0] + 1, {"cuts": cuts_array.tolist()})


def true_quantile_coin(dataset: Dataset, tau: _RationalLike) -> int:
    """Return m_true = max{m in [0, B] : F_X(m) <= tau}."""
    tau_f = as_fraction(tau)
    threshold = math.floor(tau_f * dataset.n)
    return int(numpy.searchsorted(dataset.cumulative_counts, threshold, side="right")) - 1


def evaluate_trial(dataset: Dataset, m_tilde: int, tau: _RationalLike, alpha_test: _RationalLike) -> typing.Tuple[fractions.Fraction, bool]:
    """Return (|F_X(m_tilde) - F_X(m_true)|, whether m_tilde is a (tau, alpha_test)-good coin)."""
    _check_index(dataset, m_tilde, "Evaluate trial")
    m_true = true_quantile_coin(dataset, tau)
    abs_error = abs(empirical_cdf(dataset, m_tilde) - empirical_cdf(dataset, m_true))
    return abs_error, is_good_coin(dataset, m_tilde, tau, alpha_test)
