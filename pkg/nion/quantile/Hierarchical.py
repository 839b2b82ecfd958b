from __future__ import annotations

# standard libraries
import math
import typing

# third party libraries
import numpy
import numpy.typing
import scipy.optimize

# local libraries
from nion.quantile import Core
from nion.quantile import RandomizedResponse


_EstimateArrayType = numpy.typing.NDArray[numpy.float64]
_NodeType = typing.Tuple[int, int]


class LevelReport:
    """One user's randomized one-hot vector over the nodes of a level."""

    def __init__(self, level: int, noisy_bits: numpy.typing.ArrayLike) -> None:
        self.level = int(level)
        self.noisy_bits = numpy.asarray(noisy_bits, dtype=numpy.int8)

    def __repr__(self) -> str:
        return "LevelReport(level={}, bits={})".format(self.level, self.noisy_bits.shape[0])


class IntervalTree:
    """
        Geometry of the b-adic decomposition of [1, B] plus, once aggregated, per-node count estimates.

        Level l nodes have width b^(depth - l); node k covers [k w + 1, min((k + 1) w, B)], so the last node of
        a level is ragged when B is not a power of b. Levels without reports are unavailable and read
        through their children.
    """

    def __init__(self, domain_size: int, branching: int = 4,
                 estimates: typing.Optional[typing.Mapping[int, typing.Optional[_EstimateArrayType]]] = None,
                 n: typing.Optional[int] = None, eps: float = math.inf) -> None:
        if domain_size < 2:
            raise ValueError("Interval tree: B must be at least 2.")
        if branching < 2:
            raise ValueError("Interval tree: branching must be at least 2.")
        self.__domain_size = int(domain_size)
        self.__branching = int(branching)
        depth, width = 0, 1
        while width < self.__domain_size:
            width *= self.__branching
            depth += 1
        self.__depth = depth
        for level in self.levels:
            self.__check_partition(level)
        self.__estimates = dict(estimates) if estimates is not None else dict()
        self.__n = n
        self.__eps = eps

    def __repr__(self) -> str:
        return "IntervalTree(B={}, b={}, depth={})".format(self.__domain_size, self.__branching, self.__depth)

    def __check_partition(self, level: int) -> None:
        width = self.width(level)
        starts = numpy.arange(self.node_count(level), dtype=numpy.int64) * width + 1
        ends = numpy.minimum(starts + width - 1, self.__domain_size)
        assert starts[0] == 1 and ends[-1] == self.__domain_size
        assert numpy.all(starts[1:] == ends[:-1] + 1)

    @property
    def domain_size(self) -> int:
        return self.__domain_size

    @property
    def branching(self) -> int:
        return self.__branching

    @property
    def depth(self) -> int:
        return self.__depth

    @property
    def levels(self) -> range:
        return range(1, self.__depth + 1)

    @property
    def n(self) -> typing.Optional[int]:
        return self.__n

    @property
    def eps(self) -> float:
        return self.__eps

    @property
    def is_aggregated(self) -> bool:
        return self.__n is not None

    def width(self, level: int) -> int:
        return int(self.__branching ** (self.__depth - level))

    def node_count(self, level: int) -> int:
        return -(-self.__domain_size // self.width(level))

    def node_of(self, x: int, level: int) -> int:
        return (x - 1) // self.width(level)

    def node_interval(self, level: int, k: int) -> typing.Tuple[int, int]:
        width = self.width(level)
        return k * width + 1, min((k + 1) * width, self.__domain_size)

    def is_available(self, level: int) -> bool:
        return self.__estimates.get(level) is not None

    def level_estimates(self, level: int) -> _EstimateArrayType:
        estimates = self.__estimates.get(level)
        if estimates is None:
            raise ValueError("Interval tree: level {} has no reports.".format(level))
        return estimates

    def with_estimates(self, estimates: typing.Mapping[int, typing.Optional[_EstimateArrayType]], n: int, eps: float) -> IntervalTree:
        return IntervalTree(self.__domain_size, self.__branching, estimates, n, eps)


def encode_report(tree: IntervalTree, x: int, level: int, eps: float, rng: numpy.random.Generator) -> LevelReport:
    """One-hot encode x's node at the level and pass every bit through randomized response at eps/2."""
    if not 1 <= x <= tree.domain_size:
        raise ValueError("Encode report: value {} out of range [1, {}].".format(x, tree.domain_size))
    if level not in tree.levels:
        raise ValueError("Encode report: level {} out of range [1, {}].".format(level, tree.depth))
    bits = numpy.zeros(tree.node_count(level), dtype=numpy.int8)
    bits[tree.node_of(x, level)] = 1
    return LevelReport(level, RandomizedResponse.rr_flip_array(bits, RandomizedResponse.RRChannel(eps / 2), rng))


def _unbiased_counts(bit_sums: _EstimateArrayType, reports: int, n: int, eps: float) -> _EstimateArrayType:
    frequencies = RandomizedResponse.rr_unbias(bit_sums / reports, eps / 2)
    return numpy.asarray(frequencies, dtype=float) * n


def aggregate(tree: IntervalTree, reports: typing.Sequence[LevelReport], eps: float, n: typing.Optional[int] = None) -> IntervalTree:
    """
        Estimate every node's count from the reports: unbias each level's mean bit vector and scale it by
        n / (reports at the level). n defaults to the number of reports, one per user.
    """
    if not reports:
        raise ValueError("Aggregate: no reports.")
    population = len(reports) if n is None else int(n)
    sums = {level: numpy.zeros(tree.node_count(level), dtype=float) for level in tree.levels}
    counts = {level: 0 for level in tree.levels}
    for report in reports:
        if report.level not in sums or report.noisy_bits.shape[0] != tree.node_count(report.level):
            raise ValueError("Aggregate: report does not match the tree geometry.")
        sums[report.level] += report.noisy_bits
        counts[report.level] += 1
    estimates: typing.Dict[int, typing.Optional[_EstimateArrayType]] = dict()
    for level in tree.levels:
        estimates[level] = _unbiased_counts(sums[level], counts[level], population, eps) if counts[level] else None
    return tree.with_estimates(estimates, population, eps)


def decompose(tree: IntervalTree, lo: int, hi: int) -> typing.List[_NodeType]:
    """
        Canonical decomposition of [lo, hi] into (level, node) pairs, left to right; (0, 0) is the root.

        Nodes of unavailable levels are replaced by their children. A tree without estimates yields the
        plain geometric decomposition.
    """
    if not 1 <= lo <= hi <= tree.domain_size:
        raise ValueError("Range query: invalid range [{}, {}].".format(lo, hi))
    nodes: typing.List[_NodeType] = list()

    def visit(level: int, k: int, start: int, end: int) -> None:
        if end < lo or hi < start:
            return
        if lo <= start and end <= hi and (level == 0 or not tree.is_aggregated or tree.is_available(level)):
            nodes.append((level, k))
            return
        if level == tree.depth:
            raise ValueError("Range query: level {} has no reports.".format(level))
        child_width = tree.width(level + 1)
        first = k * tree.branching
        for child in range(first, min(first + tree.branching, tree.node_count(level + 1))):
            child_start = child * child_width + 1
            visit(level + 1, child, child_start, min(child_start + child_width - 1, tree.domain_size))

    visit(0, 0, 1, tree.domain_size)
    return nodes


def range_query(tree: IntervalTree, lo: int, hi: int) -> float:
    """Estimated fraction of users in [lo, hi]: the decomposition's node estimates summed and divided by n."""
    if not tree.is_aggregated:
        raise ValueError("Range query: tree has no estimates.")
    n = typing.cast(int, tree.n)
    total = 0.0
    for level, k in decompose(tree, lo, hi):
        total += float(n) if level == 0 else float(tree.level_estimates(level)[k])
    return total / n


def cdf_estimates(tree: IntervalTree) -> _EstimateArrayType:
    """
        F(i) = range_query(1, i) for every i in 1..B, computed level by level with prefix sums.

        Along a prefix [1, i] the decomposition takes, at each available level, the nodes between the end
        of the previous available level's nodes and floor(i / width).
    """
    if not tree.is_aggregated:
        raise ValueError("CDF estimates: tree has no estimates.")
    if not tree.is_available(tree.depth):
        raise ValueError("CDF estimates: level {} has no reports.".format(tree.depth))
    n = typing.cast(int, tree.n)
    i = numpy.arange(1, tree.domain_size + 1, dtype=numpy.int64)
    totals = numpy.zeros(tree.domain_size, dtype=float)
    covered = numpy.zeros(tree.domain_size, dtype=numpy.int64)
    for level in tree.levels:
        if not tree.is_available(level):
            continue
        width = tree.width(level)
        prefix = numpy.concatenate([[0.0], numpy.cumsum(tree.level_estimates(level))])
        totals += prefix[i // width] - prefix[covered // width]
        covered = (i // width) * width
    totals[-1] = float(n)
    return totals / n


def monotone_cdf(estimates: numpy.typing.ArrayLike) -> _EstimateArrayType:
    """Least squares nondecreasing fit of the estimated CDF, clipped to [0, 1]."""
    fitted = scipy.optimize.isotonic_regression(numpy.asarray(estimates, dtype=float), increasing=True).x
    return numpy.clip(fitted, 0.0, 1.0)


def simulate_level_counts(tree: IntervalTree, dataset: Core.Dataset, eps: float, rng: numpy.random.Generator) -> IntervalTree:
    """
        Every user reports at a uniformly chosen level; the per-node noisy bit sums are drawn directly.

        A node's sum over a level's reports is Binomial(c, p) + Binomial(m - c, 1 - p), with c the users at
        the level holding the node, m the users at the level and p the unary bit retain probability. This
        has the same distribution as summing the individual reports of encode_report.
    """
    channel = RandomizedResponse.RRChannel(eps / 2)
    levels = rng.integers(1, tree.depth + 1, size=dataset.n)
    estimates: typing.Dict[int, typing.Optional[_EstimateArrayType]] = dict()
    for level in tree.levels:
        values = dataset.values[levels == level]
        reports = values.shape[0]
        if reports == 0:
            estimates[level] = None
            continue
        hot = numpy.bincount((values - 1) // tree.width(level), minlength=tree.node_count(level))
        bit_sums = rng.binomial(hot, channel.retain_prob) + rng.binomial(reports - hot, channel.flip_prob)
        estimates[level] = _unbiased_counts(bit_sums.astype(float), reports, dataset.n, eps)
    return tree.with_estimates(estimates, dataset.n, eps)


def hier_median(dataset: Core.Dataset, B: int, eps: float, rng: numpy.random.Generator,
                branching: int = 4, tau: float = 0.5) -> Core.CoinResult:
    """Coin whose monotone estimated CDF is closest to tau, the smaller coin on ties."""
    tree = IntervalTree(B, branching)
    if dataset.n < tree.depth:
        raise Core.ProtocolInfeasible("Hierarchical: {} users cannot cover {} levels.".format(dataset.n, tree.depth))
    tree = simulate_level_counts(tree, dataset, eps, rng)
    if not tree.is_available(tree.depth):
        raise Core.ProtocolInfeasible("Hierarchical: no user reported at the leaf level.")
    cdf = monotone_cdf(cdf_estimates(tree))
    index = int(numpy.argmin(numpy.abs(cdf - tau))) + 1
    return Core.CoinResult(index, dataset.n, dataset.n)
