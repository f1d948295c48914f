"""Cost functionals on output jets.

Two families are provided:

* the weighted fit cost ``sum c^2 (d^s z - d^s f)^2`` over values and
  derivatives of the network output against known targets;
* the residual cost of the nonlinear Poisson problem
  ``u_xx + u_yy = u^2 + 1.5 u^3`` on the unit disk, where the network
  output ``v`` enters through ``u = v * phi + f`` and the squared residual
  and its derivatives up to a chosen order are summed.

Both return the scalar cost summed over patterns and a jet of partial
derivatives ``dE/d(d^s z)`` ready for :func:`jetprop.backprop.backward`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from jetprop.multiindex import DerivativeBasis, MultiIndex, add, binomial, lower_set, sub, total_basis
from jetprop.network import Jet

DEGENERATE_STD = 1e-12
POISSON_BOUNDARY_VALUE = -2.0
MAX_RESIDUAL_ORDER = 3


# --- fitting known targets -------------------------------------------------


@dataclass
class FitTarget:
    """Target values and derivatives ``(len(basis), outputs, patterns)`` with weights ``c``."""

    basis: DerivativeBasis
    values: np.ndarray
    coefficients: np.ndarray

    def restrict(self, basis: DerivativeBasis) -> "FitTarget":
        idx = [self.basis.position(s) for s in basis]
        return FitTarget(basis, self.values[idx], self.coefficients[idx])

    def as_jet(self) -> Jet:
        return Jet(self.basis, self.values)


def compute_coefficients(values: np.ndarray) -> np.ndarray:
    """Inverse population standard deviation of each target over the patterns.

    ``values`` has shape ``(..., patterns)``.  Targets that are constant
    (std below ``1e-12 * (1 + |mean|)``) get weight 1.
    """
    values = np.asarray(values)
    if values.shape[-1] < 2:
        raise ValueError("need at least two patterns to estimate a spread")
    std = values.std(axis=-1)
    mean = values.mean(axis=-1)
    degenerate = std < DEGENERATE_STD * (1.0 + np.abs(mean))
    return np.where(degenerate, 1.0, 1.0 / np.where(degenerate, 1.0, std))


def make_fit_target(basis: DerivativeBasis, values: np.ndarray) -> FitTarget:
    values = np.asarray(values)
    if values.ndim == 2:
        values = values[:, None, :]
    return FitTarget(basis, values, compute_coefficients(values))


def fit_cost(output_jet: Jet, target: FitTarget) -> tuple[float, Jet]:
    """``E = sum_patterns sum_{s,i} c^2 (d^s z_i - d^s f_i)^2`` and its partials."""
    if output_jet.basis != target.basis:
        raise ValueError("output jet and target use different bases")
    if output_jet.data.shape != target.values.shape:
        raise ValueError(f"output jet {output_jet.data.shape} vs target {target.values.shape}")
    c2 = (target.coefficients ** 2)[:, :, None]
    diff = output_jet.data - target.values
    weighted = c2 * diff
    return float(np.sum(weighted * diff)), Jet(output_jet.basis, 2.0 * weighted)


# --- jet products -----------------------------------------------------------


def leibniz(a: Jet, b: Jet, basis: DerivativeBasis) -> Jet:
    """Jet of the product ``a * b`` on ``basis`` by the general Leibniz rule."""
    out = np.empty((len(basis),) + np.broadcast_shapes(a.data.shape[1:], b.data.shape[1:]))
    for i, q in enumerate(basis):
        acc = 0.0
        for r in lower_set(q):
            acc = acc + binomial(q, r) * a[r] * b[sub(q, r)]
        out[i] = acc
    return Jet(basis, out)


def leibniz_vjp(grad: Jet, a: Jet, b: Jet) -> tuple[np.ndarray, np.ndarray]:
    """Pull partials of a :func:`leibniz` product back onto both factors."""
    ga = np.zeros_like(a.data)
    gb = np.zeros_like(b.data)
    for q in grad.basis:
        g = grad[q]
        for r in lower_set(q):
            c = binomial(q, r)
            rest = sub(q, r)
            ga[a.basis.position(r)] += _sum_to(c * g * b[rest], a.data.shape[1:])
            gb[b.basis.position(rest)] += _sum_to(c * g * a[r], b.data.shape[1:])
    return ga, gb


def _sum_to(x: np.ndarray, shape) -> np.ndarray:
    # undo broadcasting of a factor with fewer rows
    if x.shape == tuple(shape):
        return x
    return x.sum(axis=0, keepdims=True)


# --- Poisson residual -------------------------------------------------------


@dataclass(frozen=True)
class ResidualSpec:
    """Residual ``V = u_xx + u_yy - u^2 - 1.5 u^3`` and its derivatives up to ``order``."""

    order: int = 0
    boundary_value: float = POISSON_BOUNDARY_VALUE

    def __post_init__(self):
        if not 0 <= self.order <= MAX_RESIDUAL_ORDER:
            raise ValueError(f"residual order must be in [0, {MAX_RESIDUAL_ORDER}], got {self.order}")

    @property
    def residual_basis(self) -> DerivativeBasis:
        return total_basis(2, self.order)

    @property
    def network_basis(self) -> DerivativeBasis:
        return total_basis(2, self.order + 2)


def substitute_solution(v_jet: Jet, phi_jet: Jet, boundary_value: float) -> Jet:
    """Jet of ``u = v * phi + f`` where ``f`` is a constant."""
    u = leibniz(v_jet, phi_jet.restrict(v_jet.basis), v_jet.basis)
    u.data[0] += boundary_value
    return u


def residual_jet(u_jet: Jet, order: int) -> tuple[Jet, dict]:
    """Derivatives ``d^q V`` for ``|q| <= order``; also returns intermediates for the reverse pass."""
    rb = total_basis(2, order)
    if not all(add(q, (2, 0)) in u_jet.basis and add(q, (0, 2)) in u_jet.basis for q in rb):
        raise ValueError(f"u-jet must cover all derivatives up to order {order + 2}")
    u_low = u_jet.restrict(rb)
    u2 = leibniz(u_low, u_low, rb)
    u3 = leibniz(u_low, u2, rb)
    v = np.empty_like(u2.data)
    for i, q in enumerate(rb):
        v[i] = u_jet[add(q, (2, 0))] + u_jet[add(q, (0, 2))] - u2.data[i] - 1.5 * u3.data[i]
    return Jet(rb, v), {"u_low": u_low, "u2": u2}


def residual_cost_u(u_jet: Jet, order: int) -> tuple[float, Jet]:
    """``E = sum_patterns sum_{|q| <= order} (d^q V)^2`` with partials on the u-jet."""
    vjet, aux = residual_jet(u_jet, order)
    rb = vjet.basis
    gv = 2.0 * vjet.data
    gu = np.zeros_like(u_jet.data)
    for i, q in enumerate(rb):
        gu[u_jet.basis.position(add(q, (2, 0)))] += gv[i]
        gu[u_jet.basis.position(add(q, (0, 2)))] += gv[i]
    u_low, u2 = aux["u_low"], aux["u2"]
    # u3 = u * u2 and u2 = u * u
    g_u_a, g_u2 = leibniz_vjp(Jet(rb, -1.5 * gv), u_low, u2)
    g_u2 = g_u2 - gv
    g_u_b, g_u_c = leibniz_vjp(Jet(rb, g_u2), u_low, u_low)
    g_low = g_u_a + g_u_b + g_u_c
    for i, q in enumerate(rb):
        gu[u_jet.basis.position(q)] += g_low[i]
    return float(np.sum(vjet.data ** 2)), Jet(u_jet.basis, gu)


def residual_cost(v_jet: Jet, phi_jet: Jet, spec: ResidualSpec) -> tuple[float, Jet]:
    """Residual cost of the network output ``v`` and its partials on the v-jet."""
    if v_jet.basis != spec.network_basis:
        v_jet = v_jet.restrict(spec.network_basis)
    u = substitute_solution(v_jet, phi_jet, spec.boundary_value)
    e, gu = residual_cost_u(u, spec.order)
    gv, _ = leibniz_vjp(gu, v_jet, phi_jet.restrict(v_jet.basis))
    return e, Jet(v_jet.basis, gv)


# --- exclusion schedule -----------------------------------------------------


def exclusion_stage_basis(stage_order: int, task: str, n_vars: int) -> DerivativeBasis:
    """Network basis used while training with derivatives up to ``stage_order``."""
    if stage_order < 0:
        raise ValueError("stage order must be non-negative")
    if task == "fit":
        return total_basis(n_vars, stage_order)
    if task == "pde":
        return total_basis(n_vars, stage_order + 2)
    raise ValueError(f"unknown task {task!r}; expected 'fit' or 'pde'")


def exclusion_orders(start_order: int) -> list[int]:
    return list(range(start_order, -1, -1))


@dataclass
class ExclusionSchedule:
    start_order: int
    epochs_per_stage: int
    stage_delta: float = 1e-5

    @property
    def orders(self) -> list[int]:
        return exclusion_orders(self.start_order)


def restrict_index(s: MultiIndex, basis: DerivativeBasis) -> bool:
    return s in basis
