from __future__ import annotations

# standard libraries
import math
import typing

# third party libraries
import numpy
import numpy.typing
import scipy.special


_BitArrayType = numpy.typing.NDArray[numpy.int8]
_FloatLike = typing.Union[float, numpy.typing.NDArray[numpy.float64]]


class RRChannel:
    """
        The eps-LDP binary channel: keep the bit with probability e^eps/(e^eps + 1), flip it otherwise.

        eps may be math.inf, which gives the identity channel used by noiseless runs.
    """

    def __init__(self, eps: float) -> None:
        eps = float(eps)
        if math.isnan(eps) or eps <= 0:
            raise ValueError("Randomized response: eps must be positive.")
        self.__eps = eps
        self.__retain_prob = float(scipy.special.expit(eps))
        self.__flip_prob = float(scipy.special.expit(-eps))

    def __repr__(self) -> str:
        return "RRChannel(eps={})".format(self.__eps)

    def __eq__(self, other: typing.Any) -> bool:
        if isinstance(other, self.__class__):
            return self.eps == other.eps
        return False

    @property
    def eps(self) -> float:
        return self.__eps

    @property
    def retain_prob(self) -> float:
        return self.__retain_prob

    @property
    def flip_prob(self) -> float:
        return self.__flip_prob

    @property
    def is_identity(self) -> bool:
        return self.__flip_prob == 0.0

    def output_probability(self, bit: int, output: int) -> float:
        return self.__retain_prob if bit == output else self.__flip_prob


def rr_flip(bit: int, channel: RRChannel, rng: numpy.random.Generator) -> int:
    """Pass one bit through the channel, consuming exactly one uniform draw from rng."""
    if bit not in (0, 1):
        raise ValueError("Randomized response: bit must be 0 or 1.")
    return bit if rng.random() < channel.retain_prob else 1 - bit


def rr_flip_array(bits: numpy.typing.ArrayLike, channel: RRChannel, rng: numpy.random.Generator) -> _BitArrayType:
    """Vectorized rr_flip: one uniform draw per bit, drawn in order."""
    bits_array = numpy.asarray(bits, dtype=numpy.int8)
    keep = rng.random(bits_array.shape) < channel.retain_prob
    return numpy.where(keep, bits_array, 1 - bits_array).astype(numpy.int8)


def rr_forward(p: _FloatLike, eps: float) -> _FloatLike:
    """Return the probability that the channel outputs 1 when the input is 1 with probability p."""
    retain = scipy.special.expit(eps)
    flip = scipy.special.expit(-eps)
    return p * retain + (1 - p) * flip


def rr_unbias(p_hat: _FloatLike, eps: float) -> _FloatLike:
    """
        Invert rr_forward: (p_hat - 1/(e^eps + 1)) (e^eps + 1)/(e^eps - 1).

        The result is not clamped to [0, 1]; protocols compare it against a threshold and clamping would
        bias the comparison near the boundary.
    """
    if eps == 0:
        raise ValueError("Randomized response: cannot unbias at eps = 0.")
    if not eps > 0:
        raise ValueError("Randomized response: eps must be positive.")
    if math.isinf(eps):
        return p_hat
    # (e^eps - 1)/(e^eps + 1) == tanh(eps/2)
    return (p_hat - scipy.special.expit(-eps)) / math.tanh(eps / 2)


def _check_bound_arguments(alpha: float, beta: float, eps: float) -> None:
    if not alpha > 0:
        raise ValueError("Sample bound: alpha must be positive.")
    if not 0 < beta < 1:
        raise ValueError("Sample bound: beta must lie in (0, 1).")
    if not 0 < eps < math.inf:
        raise ValueError("Sample bound: eps must be positive and finite.")


def _privacy_terms(alpha: float, eps: float) -> float:
    e = math.exp(eps)
    em1 = math.expm1(eps)
    return 2 * e / (alpha * alpha * em1 * em1) + 2 * (e + 1) / (3 * alpha * em1)


def stat_coin_sample_bound(p: float, alpha: float, beta: float, eps: float) -> int:
    """
        Number of private flips needed to learn a coin of bias p to its mean within alpha, with failure
        probability beta (Bernstein bound on the unbiased randomized responses).

        The last term uses 3 in the denominator, as the Bernstein derivation gives.
    """
    if not 0 <= p <= 1:
        raise ValueError("Sample bound: p must lie in [0, 1].")
    _check_bound_arguments(alpha, beta, eps)
    variance_term = 2 * p * (1 - p) / (alpha * alpha)
    return math.ceil((variance_term + _privacy_terms(alpha, eps)) * math.log(1 / beta))


def emp_coin_sample_bound(alpha: float, beta: float, eps: float) -> int:
    """Number of private flips needed to learn a sample mean within alpha with failure probability beta."""
    _check_bound_arguments(alpha, beta, eps)
    return math.ceil(_privacy_terms(alpha, eps) * math.log(1 / beta))
