"""Datasets with analytic derivative jets for the three experiments.

* a random 2-D Fourier series on the square ``[-1, 1]^2``;
* points on the helix ``(cos t, sin t, t/pi)`` for the 1-neuron bottleneck
  autoencoder;
* collocation and test grids on the unit disk for the Poisson problem,
  together with the jets of ``phi = 1 - x^2 - y^2`` and of the analytic
  solution ``4 / (x^2 + y^2 - 3)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from jetprop.cost import FitTarget, make_fit_target
from jetprop.multiindex import DerivativeBasis, MultiIndex, binomial, label, lower_set, sub, total_basis
from jetprop.network import Jet

FOURIER_TERMS = 10
# (x factor, y factor) for the four coefficient arrays
FOURIER_COMBOS = (("sin", "cos"), ("sin", "sin"), ("cos", "cos"), ("cos", "sin"))

TRAIN_GRID_SIDE = 27
TEST_GRID_SIDE = 95
HELIX_TRAIN = 64
HELIX_TEST = 1184
DISK_TEST_SIDE = 101


# --- 2-D Fourier target -----------------------------------------------------


def _trig_derivative(kind: str, freq: np.ndarray, x: np.ndarray, p: int) -> np.ndarray:
    """``d^p/dx^p`` of ``sin(n x)`` or ``cos(n x)`` for every frequency, shape ``(len(freq), len(x))``."""
    phase = (0.5 * math.pi) * (p + (kind == "cos"))
    return freq[:, None] ** p * np.sin(freq[:, None] * x[None, :] + phase)


@dataclass
class FourierTarget2D:
    """``f = sum_{n,k} r_nk / (n k) * X(n x) * Y(k y)`` summed over four sin/cos pairings."""

    coefficients: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (4, FOURIER_TERMS, FOURIER_TERMS):
            raise ValueError(f"expected coefficients of shape (4, 10, 10), got {self.coefficients.shape}")

    @classmethod
    def random(cls, seed: int) -> "FourierTarget2D":
        rng = np.random.default_rng(seed)
        return cls(rng.uniform(-1.0, 1.0, size=(4, FOURIER_TERMS, FOURIER_TERMS)), seed)

    @property
    def n_parameters(self) -> int:
        return self.coefficients.size

    def derivative(self, s: MultiIndex, points: np.ndarray) -> np.ndarray:
        """``d^s f`` at ``points`` (2 x patterns)."""
        p, q = s
        x, y = np.asarray(points, dtype=float)
        freq = np.arange(1, FOURIER_TERMS + 1, dtype=float)
        scale = 1.0 / np.outer(freq, freq)
        out = np.zeros(x.shape)
        for r, (kx, ky) in zip(self.coefficients, FOURIER_COMBOS):
            xs = _trig_derivative(kx, freq, x, p)
            ys = _trig_derivative(ky, freq, y, q)
            out += np.einsum("nk,np,kp->p", r * scale, xs, ys)
        return out

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.derivative((0, 0), points)


def fourier2d_jet(target: FourierTarget2D, points: np.ndarray, basis: DerivativeBasis) -> FitTarget:
    """Values and all basis derivatives of the series, with ``1/std`` weights over ``points``."""
    if basis.n_vars != 2:
        raise ValueError("the Fourier target has two variables")
    values = np.stack([target.derivative(s, points) for s in basis])
    return make_fit_target(basis, values[:, None, :])


def square_grid(points_per_side: int) -> np.ndarray:
    """Cartesian grid on ``[-1, 1]^2`` including the boundary, shape ``(2, m^2)``."""
    if points_per_side < 2:
        raise ValueError("need at least two points per side")
    c = np.linspace(-1.0, 1.0, points_per_side)
    x, y = np.meshgrid(c, c, indexing="xy")
    return np.stack([x.ravel(), y.ravel()])


# --- helix autoencoder ------------------------------------------------------


def helix_parameters(count: int) -> np.ndarray:
    """``count`` equidistant values of ``t`` in ``[-2 pi, 2 pi]``."""
    return np.linspace(-2 * math.pi, 2 * math.pi, count)


def helix_derivative(t: np.ndarray, j: int) -> np.ndarray:
    """``d^j/dt^j (cos t, sin t, t/pi)``, shape ``(3, len(t))``."""
    t = np.asarray(t, dtype=float)
    shift = 0.5 * math.pi * j
    third = t / math.pi if j == 0 else np.full_like(t, 1.0 / math.pi) if j == 1 else np.zeros_like(t)
    return np.stack([np.cos(t + shift), np.sin(t + shift), third])


@dataclass
class HelixData:
    """Points on the helix, the autoencoder target and the input derivative rule."""

    t: np.ndarray
    inputs: np.ndarray
    target: FitTarget

    def input_rule(self, s: MultiIndex) -> np.ndarray:
        return helix_derivative(self.t, s[0])


def helix_jet(t_values, max_order: int) -> HelixData:
    if not 0 <= max_order <= 5:
        raise ValueError("helix derivatives are provided up to order 5")
    t = np.asarray(t_values, dtype=float)
    basis = total_basis(1, max_order)
    values = np.stack([helix_derivative(t, s[0]) for s in basis])
    return HelixData(t, helix_derivative(t, 0), make_fit_target(basis, values))


# --- unit disk --------------------------------------------------------------


def circle_grid(spacing: float) -> np.ndarray:
    """Collocation points for the unit disk, shape ``(2, patterns)``.

    The interior part is a Cartesian grid over ``[-1, 1]^2`` whose outer
    points lie on the square's boundary; only points closer to the origin
    than ``1 - spacing/2`` are kept so that no interior point crowds the
    circle.  About ``2 pi / spacing`` boundary points follow, starting at
    angle 0; their number is rounded to an even count so the set is
    symmetric under ``(x, y) -> (-x, -y)``.
    """
    if not 0 < spacing <= 1:
        raise ValueError("spacing must be in (0, 1]")
    grid = square_grid(int(round(2.0 / spacing)) + 1)
    radius = np.hypot(grid[0], grid[1])
    interior = grid[:, radius < 1.0 - 0.5 * spacing]
    n_boundary = max(2 * int(round(math.pi / spacing)), 4)
    angle = 2 * math.pi * np.arange(n_boundary) / n_boundary
    boundary = np.stack([np.cos(angle), np.sin(angle)])
    return np.concatenate([interior, boundary], axis=1)


def disk_test_grid(points_per_side: int = DISK_TEST_SIDE) -> np.ndarray:
    """Square-grid points inside the closed unit disk (about 7.9k at the default)."""
    grid = square_grid(points_per_side)
    return grid[:, grid[0] ** 2 + grid[1] ** 2 <= 1.0 + 1e-12]


def poisson_analytic(points: np.ndarray) -> np.ndarray:
    x, y = np.asarray(points, dtype=float)
    return 4.0 / (x ** 2 + y ** 2 - 3.0)


def _quadric_jet(points: np.ndarray, basis: DerivativeBasis, sign: float, const: float) -> Jet:
    # sign * (x^2 + y^2) + const
    x, y = np.asarray(points, dtype=float)
    data = np.zeros((len(basis), 1, x.size))
    known = {
        (0, 0): sign * (x ** 2 + y ** 2) + const,
        (1, 0): 2 * sign * x,
        (0, 1): 2 * sign * y,
        (2, 0): np.full_like(x, 2 * sign),
        (0, 2): np.full_like(x, 2 * sign),
    }
    for s, v in known.items():
        if s in basis:
            data[basis.position(s), 0] = v
    return Jet(basis, data)


def phi_jet(points: np.ndarray, basis: DerivativeBasis) -> Jet:
    """Jet of the boundary factor ``1 - x^2 - y^2``."""
    return _quadric_jet(points, basis, -1.0, 1.0)


def poisson_analytic_jet(points: np.ndarray, basis: DerivativeBasis) -> Jet:
    """Jet of ``4 / w`` with ``w = x^2 + y^2 - 3`` by the reciprocal recursion.

    From ``w g = 1``: ``g_q = -(1/w) sum_{0 < r <= q} binom(q, r) w_r g_(q-r)``.
    """
    w = _quadric_jet(points, basis, 1.0, -3.0)
    g = np.zeros_like(w.data)
    inv = 1.0 / w.values
    g[0] = inv
    for i, q in enumerate(basis.indices[1:], start=1):
        acc = np.zeros_like(inv)
        for r in lower_set(q)[1:]:
            acc += binomial(q, r) * w[r] * g[basis.position(sub(q, r))]
        g[i] = -inv * acc
    return Jet(basis, 4.0 * g)


# --- export -----------------------------------------------------------------


def export_csv(path: str | Path, inputs: np.ndarray, target: FitTarget | Jet, input_names=None) -> None:
    """Write one pattern per row: inputs, then each target derivative in basis order."""
    inputs = np.asarray(inputs)
    data = target.values if isinstance(target, FitTarget) else target.data
    basis = target.basis
    input_names = input_names or [f"in{i}" for i in range(inputs.shape[0])]
    header = list(input_names)
    for s in basis:
        name = "value" if sum(s) == 0 else "d_" + label(s, "xyz" if basis.n_vars > 1 else "t")
        for i in range(data.shape[1]):
            header.append(f"{name}_{i}" if data.shape[1] > 1 else name)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        flat = data.transpose(2, 0, 1).reshape(data.shape[2], -1)
        for row_in, row_t in zip(inputs.T, flat):
            writer.writerow([repr(float(v)) for v in row_in] + [repr(float(v)) for v in row_t])
