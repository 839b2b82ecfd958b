from __future__ import annotations

# standard libraries
import typing

# third party libraries
import numpy
import numpy.typing


class WeightVector:
    """Dense weights. Prefix queries share one cumulative sum, recomputed after the next write."""

    def __init__(self, weights: numpy.typing.ArrayLike) -> None:
        self.__weights = numpy.array(weights, dtype=float)
        if self.__weights.ndim != 1 or self.__weights.shape[0] < 1:
            raise ValueError("Weights: at least one interval is required.")
        self.__cumulative: typing.Optional[numpy.typing.NDArray[numpy.float64]] = None

    @classmethod
    def uniform(cls, size: int) -> WeightVector:
        return cls(numpy.full(size, 1.0 / size))

    def __len__(self) -> int:
        return self.__weights.shape[0]

    @property
    def size(self) -> int:
        return self.__weights.shape[0]

    def __prefix_sums(self) -> numpy.typing.NDArray[numpy.float64]:
        if self.__cumulative is None:
            self.__cumulative = numpy.cumsum(self.__weights)
        return self.__cumulative

    def total(self) -> float:
        return float(self.__prefix_sums()[-1])

    def to_array(self) -> numpy.typing.NDArray[numpy.float64]:
        return self.__weights.copy()

    def weight(self, i: int) -> float:
        return float(self.__weights[i - 1])

    def prefix_sum(self, i: int) -> float:
        if i <= 0:
            return 0.0
        return float(self.__prefix_sums()[min(i, self.size) - 1])

    def find_prefix(self, q: float) -> int:
        index = int(numpy.searchsorted(self.__prefix_sums(), q, side="left")) + 1
        return min(index, self.size)

    def multiply_range(self, start: int, end: int, factor: float) -> None:
        if start <= end:
            self.__weights[start - 1:end] *= factor
            self.__cumulative = None

    def set_weight(self, i: int, value: float) -> None:
        self.__weights[i - 1] = value
        self.__cumulative = None


class WeightTree:
    """
        Sum segment tree with lazy range multiplication.

        Leaves beyond size are zero. A node's lazy factor applies to its children, never to itself; its
        own sum is always current.
    """

    def __init__(self, weights: numpy.typing.ArrayLike) -> None:
        values = [float(value) for value in numpy.asarray(weights, dtype=float)]
        if len(values) < 1:
            raise ValueError("Weights: at least one interval is required.")
        self.__size = len(values)
        self.__capacity = 1 << max(self.__size - 1, 0).bit_length()
        self.__sum = [0.0] * (2 * self.__capacity)
        self.__lazy = [1.0] * (2 * self.__capacity)
        self.__sum[self.__capacity:self.__capacity + self.__size] = values
        for node in range(self.__capacity - 1, 0, -1):
            self.__sum[node] = self.__sum[node << 1] + self.__sum[node << 1 | 1]

    @classmethod
    def uniform(cls, size: int) -> WeightTree:
        return cls(numpy.full(size, 1.0 / size))

    def __len__(self) -> int:
        return self.__size

    @property
    def size(self) -> int:
        return self.__size

    def total(self) -> float:
        return self.__sum[1]

    def to_array(self) -> numpy.typing.NDArray[numpy.float64]:
        for node in range(1, self.__capacity):
            self.__push(node)
        return numpy.array(self.__sum[self.__capacity:self.__capacity + self.__size])

    def weight(self, i: int) -> float:
        return self.__range_sum(i - 1, i - 1, 1, 0, self.__capacity - 1)

    def prefix_sum(self, i: int) -> float:
        if i <= 0:
            return 0.0
        return self.__range_sum(0, min(i, self.__size) - 1, 1, 0, self.__capacity - 1)

    def find_prefix(self, q: float) -> int:
        node = 1
        while node < self.__capacity:
            self.__push(node)
            left = node << 1
            if self.__sum[left] >= q:
                node = left
            else:
                q -= self.__sum[left]
                node = left | 1
        return min(node - self.__capacity + 1, self.__size)

    def multiply_range(self, start: int, end: int, factor: float) -> None:
        if start <= end:
            self.__multiply(start - 1, end - 1, factor, 1, 0, self.__capacity - 1)

    def set_weight(self, i: int, value: float) -> None:
        node, node_start, node_end = 1, 0, self.__capacity - 1
        index = i - 1
        path = list()
        while node < self.__capacity:
            self.__push(node)
            path.append(node)
            mid = (node_start + node_end) >> 1
            if index <= mid:
                node, node_end = node << 1, mid
            else:
                node, node_start = node << 1 | 1, mid + 1
        self.__sum[node] = float(value)
        for parent in reversed(path):
            self.__sum[parent] = self.__sum[parent << 1] + self.__sum[parent << 1 | 1]

    def __apply(self, node: int, factor: float) -> None:
        self.__sum[node] *= factor
        if node < self.__capacity:
            self.__lazy[node] *= factor

    def __push(self, node: int) -> None:
        factor = self.__lazy[node]
        if factor != 1.0:
            self.__apply(node << 1, factor)
            self.__apply(node << 1 | 1, factor)
            self.__lazy[node] = 1.0

    def __multiply(self, start: int, end: int, factor: float, node: int, node_start: int, node_end: int) -> None:
        if end < node_start or node_end < start:
            return
        if start <= node_start and node_end <= end:
            self.__apply(node, factor)
            return
        self.__push(node)
        mid = (node_start + node_end) >> 1
        self.__multiply(start, end, factor, node << 1, node_start, mid)
        self.__multiply(start, end, factor, node << 1 | 1, mid + 1, node_end)
        self.__sum[node] = self.__sum[node << 1] + self.__sum[node << 1 | 1]

    def __range_sum(self, start: int, end: int, node: int, node_start: int, node_end: int) -> float:
        if start == node_start and end == node_end:
            return self.__sum[node]
        self.__push(node)
        mid = (node_start + node_end) >> 1
        if end <= mid:
            return self.__range_sum(start, end, node << 1, node_start, mid)
        if start > mid:
            return self.__range_sum(start, end, node << 1 | 1, mid + 1, node_end)
        return self.__range_sum(start, mid, node << 1, node_start, mid) + self.__range_sum(mid + 1, end, node << 1 | 1, mid + 1, node_end)


Weights = typing.Union[WeightVector, WeightTree]
