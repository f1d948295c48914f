from __future__ import annotations

import itertools

import numpy as np
import pytest

from jetprop.cost import make_fit_target
from jetprop.multiindex import total_basis

# fourth-order accurate central stencils: offsets (in steps) and weights
STENCILS = {
    0: ((0,), (1.0,)),
    1: ((-2, -1, 1, 2), (1 / 12, -8 / 12, 8 / 12, -1 / 12)),
    2: ((-2, -1, 0, 1, 2), (-1 / 12, 16 / 12, -30 / 12, 16 / 12, -1 / 12)),
    3: ((-3, -2, -1, 1, 2, 3), (1 / 8, -1, 13 / 8, -13 / 8, 1, -1 / 8)),
}


def fd_derivative(f, x: np.ndarray, s, h: float) -> np.ndarray:
    """Mixed partial ``d^s f`` at the columns of ``x`` by tensor-product stencils.

    ``f`` maps ``(n_in, patterns) -> (n_out, patterns)`` and the derivative
    variables are the first ``len(s)`` rows of ``x``.
    """
    out = 0.0
    per_var = [list(zip(*STENCILS[p])) for p in s]
    for combo in itertools.product(*per_var):
        shift = np.zeros((x.shape[0], 1))
        w = 1.0
        for i, (off, wt) in enumerate(combo):
            shift[i] = off * h
            w *= wt
        out = out + w * f(x + shift)
    return out / h ** sum(s)


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Largest deviation relative to the largest reference entry."""
    scale = max(np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_fit_problem_data(rng, basis, outputs=1, patterns=12):
    values = rng.normal(size=(len(basis), outputs, patterns))
    return make_fit_target(basis, values)


@pytest.fixture
def basis2_3():
    return total_basis(2, 3)
