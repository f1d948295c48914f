"""Network topology, parameter initialisation and the jet forward pass.

Every layer carries a *jet*: its activity matrix ``z`` (neurons x patterns)
together with the matrices of all derivatives ``d^s z`` for the multi-indices
``s`` of a derivative basis.  Moving from layer ``k`` to layer ``t``:

    z_t       = thresholds + W @ sigma(z_k)
    d^s z_t   = W @ d^s sigma(z_k)

where ``d^s sigma(z_k)`` is expanded with :func:`jetprop.multiindex.bruno_terms`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np

from jetprop.activation import ActivationKind, sigma_derivatives
from jetprop.linalg import DEFAULT_DTYPE, add_column_vector, count_elementwise, gemm
from jetprop.multiindex import DerivativeBasis, MultiIndex, binomial, bruno_terms, sub

WEIGHT_CLAMP = 20.0


class DivergenceError(FloatingPointError):
    """A non-finite value appeared during a pass."""

    def __init__(self, message: str, layer: int | None = None, epoch: int | None = None):
        super().__init__(message)
        self.layer = layer
        self.epoch = epoch

    def __str__(self) -> str:
        where = []
        if self.epoch is not None:
            where.append(f"epoch {self.epoch}")
        if self.layer is not None:
            where.append(f"layer {self.layer}")
        text = super().__str__()
        return f"{text} ({', '.join(where)})" if where else text


@dataclass(frozen=True)
class LayerSpec:
    width: int
    activation: ActivationKind = ActivationKind.SIGMOID

    def __post_init__(self):
        if self.width < 1:
            raise ValueError(f"layer width must be >= 1, got {self.width}")
        object.__setattr__(self, "activation", ActivationKind(self.activation))

    def __str__(self) -> str:
        return f"{self.width}*" if self.activation is ActivationKind.LINEAR else str(self.width)


def parse_layers(spec: str | Sequence) -> list[LayerSpec]:
    """Parse ``"2*,32,32,1*"``; an asterisk marks a linear layer.

    The first and last layers are always linear.
    """
    if isinstance(spec, str):
        items = [p.strip() for p in spec.split(",") if p.strip()]
    else:
        items = list(spec)
    layers = []
    for i, item in enumerate(items):
        if isinstance(item, LayerSpec):
            layers.append(item)
            continue
        text = str(item)
        linear = text.endswith("*") or i in (0, len(items) - 1)
        layers.append(LayerSpec(int(text.rstrip("*")), ActivationKind.LINEAR if linear else ActivationKind.SIGMOID))
    if len(layers) < 2:
        raise ValueError("a network needs at least an input and an output layer")
    return layers


def format_layers(layers: Sequence[LayerSpec]) -> str:
    return ",".join(str(l) for l in layers)


@dataclass
class NetworkParams:
    """Weights ``W[i]`` (``width[i+1] x width[i]``) and thresholds ``t[i]`` per connection."""

    layers: tuple[LayerSpec, ...]
    weights: list[np.ndarray]
    thresholds: list[np.ndarray]

    def __post_init__(self):
        self.layers = tuple(self.layers)
        if len(self.weights) != len(self.layers) - 1 or len(self.thresholds) != len(self.layers) - 1:
            raise ValueError("need one weight matrix and threshold vector per connection")
        for i, (w, t) in enumerate(zip(self.weights, self.thresholds)):
            expect = (self.layers[i + 1].width, self.layers[i].width)
            if w.shape != expect or t.shape != (expect[0],):
                raise ValueError(f"connection {i}: got W{w.shape}, t{t.shape}, expected W{expect}")

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.layers, [w.copy() for w in self.weights], [t.copy() for t in self.thresholds])

    def arrays(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order: W0, t0, W1, t1, ..."""
        out = []
        for w, t in zip(self.weights, self.thresholds):
            out += [w, t]
        return out

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    @property
    def dtype(self):
        return self.weights[0].dtype

    def astype(self, dtype) -> "NetworkParams":
        return NetworkParams(self.layers, [w.astype(dtype) for w in self.weights], [t.astype(dtype) for t in self.thresholds])


def init_params(layers: Sequence[LayerSpec] | str, rng_seed: int, dtype=DEFAULT_DTYPE) -> NetworkParams:
    """Uniform weights in +-2/sqrt(senders) and thresholds in +-0.1, fixed by the seed."""
    layers = parse_layers(layers)
    rng = np.random.default_rng(rng_seed)
    weights, thresholds = [], []
    for sender, receiver in zip(layers[:-1], layers[1:]):
        bound = 2.0 / np.sqrt(sender.width)
        weights.append(rng.uniform(-bound, bound, size=(receiver.width, sender.width)).astype(dtype))
        thresholds.append(rng.uniform(-0.1, 0.1, size=receiver.width).astype(dtype))
    return NetworkParams(tuple(layers), weights, thresholds)


class Jet:
    """Activity matrix of one layer plus all its derivative matrices over a basis.

    ``data`` has shape ``(len(basis), neurons, patterns)``; ``jet[s]`` is the
    matrix for multi-index ``s`` and ``jet.values`` the plain activities.
    """

    def __init__(self, basis: DerivativeBasis, data: np.ndarray):
        data = np.asarray(data)
        if data.ndim != 3 or data.shape[0] != len(basis):
            raise ValueError(f"jet data of shape {data.shape} does not fit a basis of {len(basis)} indices")
        self.basis = basis
        self.data = data

    def __getitem__(self, s) -> np.ndarray:
        return self.data[self.basis.position(s)]

    def __setitem__(self, s, value) -> None:
        self.data[self.basis.position(s)] = value

    def __repr__(self) -> str:
        return f"Jet({self.basis!r}, shape={self.data.shape[1:]})"

    @property
    def values(self) -> np.ndarray:
        return self.data[0]

    @property
    def rows(self) -> int:
        return self.data.shape[1]

    @property
    def patterns(self) -> int:
        return self.data.shape[2]

    def copy(self) -> "Jet":
        return Jet(self.basis, self.data.copy())

    def restrict(self, basis: DerivativeBasis) -> "Jet":
        """Sub-jet on a smaller basis."""
        return Jet(basis, self.data[[self.basis.position(s) for s in basis]])

    @classmethod
    def zeros(cls, basis: DerivativeBasis, rows: int, patterns: int, dtype=DEFAULT_DTYPE) -> "Jet":
        return cls(basis, np.zeros((len(basis), rows, patterns), dtype=dtype))


@dataclass
class ForwardTape:
    """Per-layer activity jets of a forward pass (input layer included)."""

    basis: DerivativeBasis
    activities: list[Jet]
    sigma_jets: list[np.ndarray | None] | None = None
    layers: tuple[LayerSpec, ...] = field(default=())


InputRule = Callable[[MultiIndex], np.ndarray] | Mapping[MultiIndex, np.ndarray]


def init_input_jet(inputs: np.ndarray, basis: DerivativeBasis, rule: InputRule | None = None) -> Jet:
    """Build the input-layer jet.

    Without ``rule`` the differentiation variables are the first
    ``basis.n_vars`` input coordinates: the first derivative by variable
    ``i`` is the one-hot row ``i`` and every higher derivative vanishes.
    For inputs that are functions of a parameter (points on a curve), ``rule``
    maps each non-zero multi-index to its ``(inputs x patterns)`` matrix.
    """
    inputs = np.asarray(inputs)
    if inputs.ndim != 2:
        raise ValueError("inputs must be a (features x patterns) matrix")
    rows, patterns = inputs.shape
    jet = Jet.zeros(basis, rows, patterns, dtype=inputs.dtype if inputs.dtype.kind == "f" else DEFAULT_DTYPE)
    jet.data[0] = inputs
    for s in basis.indices[1:]:
        if rule is None:
            if basis.n_vars > rows:
                raise ValueError(f"{basis.n_vars} coordinate variables but only {rows} inputs")
            if sum(s) == 1:
                jet[s][s.index(1)] = 1.0
            continue
        try:
            m = rule[s] if isinstance(rule, Mapping) else rule(s)
        except KeyError:
            m = None
        if m is None:
            raise KeyError(f"input derivative rule gives nothing for {s}")
        m = np.asarray(m)
        if m.shape != (rows, patterns):
            raise ValueError(f"input derivative {s} has shape {m.shape}, expected {(rows, patterns)}")
        jet[s] = m
    return jet


# --- jet expansion ---------------------------------------------------------


@dataclass(frozen=True)
class ExpansionPlan:
    """Positions-based recipe for ``d^s sigma(z)`` and the backward pairs of a basis.

    ``groups[i]`` lists, for basis entry ``i``, pairs ``(k, terms)`` where
    ``terms`` are ``(coefficient, factor positions)`` summed into the
    parenthesis multiplied by ``sigma^(k)``.  ``pairs[r]`` lists
    ``(binomial(s, r), position(s - r), position(s))`` for all ``s >= r``.
    """

    basis: DerivativeBasis
    groups: tuple
    pairs: tuple


@lru_cache(maxsize=64)
def expansion_plan(basis: DerivativeBasis) -> ExpansionPlan:
    pos = basis.position
    groups = [()]
    for s in basis.indices[1:]:
        by_k: dict[int, list] = {}
        for term in bruno_terms(s):
            by_k.setdefault(term.sigma_order, []).append((term.coefficient, tuple(pos(f) for f in term.factors)))
        groups.append(tuple((k, tuple(by_k[k])) for k in sorted(by_k)))
    pairs = []
    for r in basis.indices:
        pairs.append(tuple((binomial(s, r), pos(sub(s, r)), pos(s)) for s in basis.indices if _ge(s, r)))
    return ExpansionPlan(basis, tuple(groups), tuple(pairs))


def _ge(s: MultiIndex, r: MultiIndex) -> bool:
    return all(a >= b for a, b in zip(s, r))


def _product(z: np.ndarray, coef: int, factors: tuple[int, ...]) -> np.ndarray:
    out = z[factors[0]]
    for f in factors[1:]:
        out = out * z[f]
    if coef != 1:
        out = coef * out
    elif len(factors) == 1:
        out = out.copy()
    return out


def parentheses(z: np.ndarray, plan: ExpansionPlan) -> list[list[tuple[int, np.ndarray]]]:
    """Evaluate the bracketed sums multiplying each sigma derivative.

    ``z`` is jet data ``(len(basis), neurons, patterns)``; the result holds,
    per basis entry, ``(k, parenthesis_k)`` pairs.  They are shared by
    ``d^s sigma(z)`` and ``d^s sigma'(z)``.
    """
    size = z[0].size
    out: list[list[tuple[int, np.ndarray]]] = [[]]
    for groups in plan.groups[1:]:
        entry = []
        for k, terms in groups:
            acc = None
            ops = len(terms) - 1
            for coef, factors in terms:
                p = _product(z, coef, factors)
                ops += len(factors) - 1 + (coef != 1)
                acc = p if acc is None else acc + p
            entry.append((k, acc))
            count_elementwise(ops * size)
        out.append(entry)
    return out


def sigma_jet(z: np.ndarray, plan: ExpansionPlan, sig: Sequence[np.ndarray], parens=None, shift: int = 0) -> np.ndarray:
    """``d^s sigma^(shift)(z)`` for every basis entry, stacked like ``z``.

    ``sig`` is the list of sigma derivatives at the activities ``z[0]`` and
    must reach order ``max|s| + shift``.
    """
    if parens is None:
        parens = parentheses(z, plan)
    out = np.empty_like(z)
    out[0] = sig[shift]
    for i in range(1, len(plan.basis)):
        acc = None
        for k, paren in parens[i]:
            term = sig[k + shift] * paren
            acc = term if acc is None else acc + term
        out[i] = acc
        n = len(parens[i])
        count_elementwise((2 * n - 1) * z[0].size)
    return out


def stacked_gemm(w: np.ndarray, data: np.ndarray, transpose_w: bool = False) -> np.ndarray:
    """Apply ``w`` (or ``w.T``) to every derivative matrix with a single product."""
    n, rows, patterns = data.shape
    wide = data.transpose(1, 0, 2).reshape(rows, n * patterns)
    res = gemm(w, wide, transpose_a=transpose_w)
    return res.reshape(res.shape[0], n, patterns).transpose(1, 0, 2)


def _check_finite(data: np.ndarray, layer: int) -> None:
    if not np.isfinite(data).all():
        raise DivergenceError("non-finite activity", layer=layer)


def forward(params: NetworkParams, input_jet: Jet, basis: DerivativeBasis | None = None,
            cache_sigma: bool = False) -> tuple[Jet, ForwardTape]:
    """Propagate ``input_jet`` through the network.

    Returns the output-layer jet and a tape with every layer's activity jet,
    which :func:`jetprop.backprop.backward` consumes.  With ``cache_sigma``
    the tape also keeps ``d^s sigma(z)`` per layer so the backward pass does
    not rebuild it.
    """
    if basis is None:
        basis = input_jet.basis
    elif input_jet.basis != basis:
        input_jet = input_jet.restrict(basis)
    if basis.max_order > 5:
        raise ValueError("jets are limited to total order 5")
    plan = expansion_plan(basis)
    activities = [input_jet]
    cached: list[np.ndarray | None] = []
    z = input_jet.data
    for i, (w, t) in enumerate(zip(params.weights, params.thresholds)):
        kind = params.layers[i].activation
        if kind is ActivationKind.LINEAR:
            sj = z
        else:
            sig = sigma_derivatives(z[0], basis.max_order, kind)
            sj = sigma_jet(z, plan, sig)
        cached.append(sj if cache_sigma else None)
        nxt = stacked_gemm(w, sj)
        nxt[0] = add_column_vector(nxt[0], t)
        _check_finite(nxt, i + 1)
        z = nxt
        activities.append(Jet(basis, z))
    tape = ForwardTape(basis, activities, cached if cache_sigma else None, params.layers)
    return activities[-1], tape


def forward_values(params: NetworkParams, inputs: np.ndarray) -> np.ndarray:
    """Plain value-only forward pass."""
    from jetprop.activation import sigmoid

    z = np.asarray(inputs)
    for i, (w, t) in enumerate(zip(params.weights, params.thresholds)):
        a = z if params.layers[i].activation is ActivationKind.LINEAR else sigmoid(z)
        z = w @ a + t[:, None]
    return z


# --- checkpoint serialisation ---------------------------------------------


def params_to_dict(params: NetworkParams, prefix: str = "") -> dict[str, np.ndarray]:
    out = {f"{prefix}layers": np.array([format_layers(params.layers)])}
    for i, (w, t) in enumerate(zip(params.weights, params.thresholds)):
        out[f"{prefix}W{i}"] = w
        out[f"{prefix}t{i}"] = t
    return out


def params_from_dict(d: Mapping[str, np.ndarray], prefix: str = "") -> NetworkParams:
    layers = parse_layers(str(d[f"{prefix}layers"][0]))
    n = len(layers) - 1
    return NetworkParams(tuple(layers), [np.array(d[f"{prefix}W{i}"]) for i in range(n)],
                         [np.array(d[f"{prefix}t{i}"]) for i in range(n)])
