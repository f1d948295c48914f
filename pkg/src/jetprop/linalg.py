"""Dense kernels: matrix product, column broadcast and element-wise expressions.

Matrices are 2-D numpy arrays laid out neurons x patterns, one column per
input pattern.  Every kernel can report its scalar operation count to an
:class:`OpCounter`, which is how the engine is checked against the analytic
cost model in :mod:`jetprop.opcount`.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

DEFAULT_DTYPE = np.float64


@dataclass
class OpCounter:
    matrix_ops: int = 0
    elementwise_ops: int = 0

    @property
    def total(self) -> int:
        return self.matrix_ops + self.elementwise_ops

    def reset(self) -> None:
        self.matrix_ops = 0
        self.elementwise_ops = 0


_counter: OpCounter | None = None


@contextmanager
def counting(counter: OpCounter | None = None) -> Iterator[OpCounter]:
    """Route operation counts of all kernels into ``counter`` inside the block."""
    global _counter
    counter = counter if counter is not None else OpCounter()
    previous, _counter = _counter, counter
    try:
        yield counter
    finally:
        _counter = previous


def count_elementwise(n: int) -> None:
    if _counter is not None:
        _counter.elementwise_ops += int(n)


def gemm(a: np.ndarray, b: np.ndarray, transpose_a: bool = False) -> np.ndarray:
    """``a @ b`` (or ``a.T @ b``) with a dimension check.

    Backed by numpy's BLAS; for a fixed thread count the reduction order
    depends only on the shapes, so equal inputs give bit-equal outputs.
    """
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("gemm expects 2-D operands")
    lhs = a.T if transpose_a else a
    if lhs.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions disagree: {lhs.shape} x {b.shape}")
    if _counter is not None:
        m, k = lhs.shape
        _counter.matrix_ops += (2 * k - 1) * m * b.shape[1]
    return lhs @ b


def add_column_vector(m: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Add the vector ``t`` to every column of ``m``."""
    t = np.asarray(t)
    if t.ndim != 1 or t.shape[0] != m.shape[0]:
        raise ValueError(f"vector of length {t.shape} does not match {m.shape[0]} rows")
    count_elementwise(m.size)
    return m + t[:, None]


def ewise(expr: Callable[..., np.ndarray], *operands: np.ndarray, ops: int = 0) -> np.ndarray:
    """Apply a scalar expression entry-wise to equally shaped matrices.

    ``ops`` is the number of scalar operations ``expr`` performs per entry;
    it only feeds the operation counter.

    >>> ewise(lambda a, b: 10 * a**3 * b, np.full((1, 1), 2.0), np.ones((1, 1)), ops=4)
    array([[80.]])
    """
    if not operands:
        raise ValueError("ewise needs at least one operand")
    shape = np.shape(operands[0])
    for op in operands[1:]:
        if np.shape(op) != shape:
            raise ValueError(f"operand shapes differ: {shape} vs {np.shape(op)}")
    count_elementwise(ops * int(np.prod(shape)))
    return expr(*operands)
