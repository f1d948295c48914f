"""Analytic operation counts for one training epoch.

Matrix arithmetic per connection ``k -> t`` and per propagated derivative:

    forward   (2|k| - 1) |t| |patterns|
    backward  (2|t| - 1) |k| |patterns|     (not needed into the input layer)
    gradient  |k| |t| (2|patterns| - 1)

Element-wise arithmetic per sigmoid neuron and pattern is tallied from

* the sigma-chain plus the products in front of each parenthesis,
  ``SIGMA_TALLY[|s|]`` for every non-zero ``s``;
* the parentheses themselves, :func:`parentheses_ops`;
* the extra products turning those parentheses into ``d^q sigma'``,
  ``BACKWARD_EXTRA[|q|]`` for every ``q`` of the basis, plus the cost of one
  more sigma derivative;
* one product per backward pair ``(r, s)`` with ``s >= r``.

Only activities are cached, so the expansions of the first two items are
evaluated three times per epoch: in the forward pass and twice on demand in
the backward pass.  Binomial scalings and the sums over ``s`` are not
counted.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from jetprop.activation import SIGMA_STEP_OPS, ActivationKind
from jetprop.cost import exclusion_stage_basis
from jetprop.multiindex import DerivativeBasis, MultiIndex, as_index, bruno_terms, dominates, total_basis
from jetprop.network import LayerSpec, parse_layers

SIGMA_TALLY = (0, 3, 8, 13, 18, 23, 30)
BACKWARD_EXTRA = (0, 1, 3, 4, 7, 9)
EXPANSION_PASSES = 3


def parentheses_ops(s: Sequence[int]) -> int:
    """Scalar operations per neuron and pattern for all parentheses of ``d^s``.

    Per unique partition: one product less than its number of blocks and one
    more product for a coefficient other than 1.  Partitions sharing a sigma
    derivative are added together.
    """
    s = as_index(s)
    if sum(s) <= 1:
        return 0
    groups: Counter = Counter()
    ops = 0
    for term in bruno_terms(s):
        groups[term.sigma_order] += 1
        if term.sigma_order > 1:
            ops += term.sigma_order - 1 + (term.coefficient != 1)
    ops += sum(n - 1 for k, n in groups.items() if k > 1)
    return ops


def backward_pairs(basis: DerivativeBasis) -> int:
    return sum(1 for r in basis for s in basis if dominates(s, r))


def layer_elementwise(basis: DerivativeBasis) -> int:
    """Element-wise operations per sigmoid neuron and pattern for one epoch."""
    expansion = sum(SIGMA_TALLY[sum(s)] + parentheses_ops(s) for s in basis.indices[1:])
    shifted = sum(BACKWARD_EXTRA[sum(q)] for q in basis)
    raise_order = SIGMA_STEP_OPS[basis.max_order + 1]
    return EXPANSION_PASSES * expansion + shifted + raise_order + backward_pairs(basis)


@dataclass(frozen=True)
class OpBudget:
    forward_matrix: int = 0
    backward_matrix: int = 0
    gradient_matrix: int = 0
    elementwise_ops: int = 0

    @property
    def matrix_ops(self) -> int:
        return self.forward_matrix + self.backward_matrix + self.gradient_matrix

    @property
    def total(self) -> int:
        return self.matrix_ops + self.elementwise_ops

    @property
    def elementwise_percent(self) -> float:
        return 100.0 * self.elementwise_ops / self.matrix_ops

    def __add__(self, other: "OpBudget") -> "OpBudget":
        return OpBudget(self.forward_matrix + other.forward_matrix, self.backward_matrix + other.backward_matrix,
                        self.gradient_matrix + other.gradient_matrix, self.elementwise_ops + other.elementwise_ops)

    def scaled(self, factor: int) -> "OpBudget":
        return OpBudget(self.forward_matrix * factor, self.backward_matrix * factor,
                        self.gradient_matrix * factor, self.elementwise_ops * factor)


def epoch_cost(layers: Sequence[LayerSpec] | str, basis: DerivativeBasis, patterns: int) -> OpBudget:
    """Modelled operations of one full-batch epoch of extended training on ``basis``."""
    layers = parse_layers(layers)
    n = len(basis)
    fwd = bwd = grad = 0
    for i, (k, t) in enumerate(zip(layers[:-1], layers[1:])):
        fwd += n * (2 * k.width - 1) * t.width * patterns
        grad += n * k.width * t.width * (2 * patterns - 1)
        if i > 0:
            bwd += n * (2 * t.width - 1) * k.width * patterns
    per_neuron = layer_elementwise(basis)
    sig = sum(l.width for l in layers[1:-1] if l.activation is ActivationKind.SIGMOID)
    return OpBudget(fwd, bwd, grad, sig * per_neuron * patterns)


def elementwise_percent(layers, basis: DerivativeBasis, patterns: int) -> float:
    """Element-wise work as a percentage of matrix work for one epoch."""
    return epoch_cost(layers, basis, patterns).elementwise_percent


def relative_cost(layers, basis: DerivativeBasis, patterns: int = 1024) -> float:
    """Epoch cost on ``basis`` divided by the value-only epoch cost."""
    base = total_basis(basis.n_vars, 0)
    return epoch_cost(layers, basis, patterns).total / epoch_cost(layers, base, patterns).total


def relative_cost_expansion(n_vars: int, order: int, hidden: int = 4) -> tuple[int, Fraction]:
    """Leading terms ``N + c/n`` of the relative cost for ``n*, n, ..., n, n*`` nets.

    With ``hidden`` sigmoid layers there are ``hidden + 1`` connections, the
    matrix work per derivative and pattern is ``(6 hidden + 4) n^2 + O(n)``
    and the element-wise work is ``hidden * n * e``, giving
    ``c = hidden (e_d - N e_0) / (6 hidden + 4)``.
    """
    basis = total_basis(n_vars, order)
    n = len(basis)
    e_d = layer_elementwise(basis)
    e_0 = layer_elementwise(total_basis(n_vars, 0))
    return n, Fraction(hidden * (e_d - n * e_0), 6 * hidden + 4)


def format_expansion(n: int, c: Fraction) -> str:
    if c == 0:
        return str(n)
    return f"{n}+{c.numerator}/({c.denominator}n)" if c.denominator != 1 else f"{n}+{c.numerator}/n"


# --- equalising budgets -----------------------------------------------------


def schedule_cost(layers, bases: Sequence[DerivativeBasis], epochs_per_stage: int, patterns: int) -> int:
    """Total modelled operations of consecutive stages with equal epoch counts."""
    return sum(epoch_cost(layers, b, patterns).total for b in bases) * epochs_per_stage


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def equalized_epochs(layers, reference_bases: Sequence[DerivativeBasis], reference_epochs: int,
                     reference_patterns: int, target_bases: Sequence[DerivativeBasis],
                     target_patterns: int) -> int:
    """Epochs per stage for the target schedule that spend the reference's operations."""
    total = schedule_cost(layers, reference_bases, reference_epochs, reference_patterns)
    per_epoch = schedule_cost(layers, target_bases, 1, target_patterns)
    return max(1, round_half_up(total / per_epoch))


def exclusion_bases(order: int, task: str, n_vars: int) -> list[DerivativeBasis]:
    return [exclusion_stage_basis(k, task, n_vars) for k in range(order, -1, -1)]


def equalized_exclusion_epochs(layers, task: str, n_vars: int, reference: tuple[int, int, int],
                               target: tuple[int, int]) -> int:
    """``reference = (order, epochs per stage, patterns)``, ``target = (order, patterns)``."""
    ref_order, ref_epochs, ref_patterns = reference
    tgt_order, tgt_patterns = target
    return equalized_epochs(layers, exclusion_bases(ref_order, task, n_vars), ref_epochs, ref_patterns,
                            exclusion_bases(tgt_order, task, n_vars), tgt_patterns)


def format_kiloepochs(epochs: int) -> str:
    """Kilo-epochs rounded to two significant digits."""
    if epochs <= 0:
        return "0"
    ke = epochs / 1000.0
    digits = 1 - int(math.floor(math.log10(ke)))
    value = round(ke, digits)
    return f"{value:.{max(digits, 0)}f}"


def report(layers, basis: DerivativeBasis, patterns: int) -> str:
    """Plain-text summary used by the command line."""
    layers = parse_layers(layers)
    budget = epoch_cost(layers, basis, patterns)
    lines = [
        f"layers            {','.join(str(l) for l in layers)}",
        f"derivatives       {len(basis)} (max order {basis.max_order}, {basis.n_vars} variables)",
        f"patterns          {patterns}",
        f"forward matrix    {budget.forward_matrix}",
        f"backward matrix   {budget.backward_matrix}",
        f"gradient matrix   {budget.gradient_matrix}",
        f"element-wise      {budget.elementwise_ops} ({budget.elementwise_percent:.1f}% of matrix)",
        f"total per epoch   {budget.total}",
        f"relative to d=0   {relative_cost(layers, basis, patterns):.4f}",
    ]
    return "\n".join(lines)


def index_ops_table(indices: Sequence[MultiIndex]) -> dict[MultiIndex, int]:
    return {as_index(s): parentheses_ops(s) for s in indices}
