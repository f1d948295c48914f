"""Backward pass for costs that depend on output derivatives.

Given ``dE/d(d^s z)`` at the output layer, the partials are carried back one
connection at a time:

    dE/d(d^r z_k) = sum_{s >= r} binom(s, r) * d^(s-r) sigma'(z_k) * (W.T @ dE/d(d^s z_t))
    dE/dW         = sum_s dE/d(d^s z_t) @ d^s sigma(z_k).T
    dE/dt         = row sums of dE/dz_t

The products ``W.T @ dE/d(d^s z_t)`` are formed once per ``s`` and reused for
every ``r``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from jetprop.activation import ActivationKind, sigma_derivatives
from jetprop.linalg import count_elementwise, gemm
from jetprop.network import (
    ForwardTape,
    Jet,
    NetworkParams,
    expansion_plan,
    forward,
    parentheses,
    sigma_jet,
    stacked_gemm,
)


@dataclass
class ParamGradient:
    weights: list[np.ndarray]
    thresholds: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, t in zip(self.weights, self.thresholds):
            out += [w, t]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])


def propagate_partials(partials: np.ndarray, z: np.ndarray, plan, sig, parens) -> np.ndarray:
    """Turn ``W.T @ dE/d(d^s z_t)`` (stacked over ``s``) into ``dE/d(d^r z_k)``."""
    dsigp = sigma_jet(z, plan, sig, parens, shift=1)
    out = np.empty_like(partials)
    size = z[0].size
    for r, pairs in enumerate(plan.pairs):
        acc = None
        ops = 0
        for coef, q, s in pairs:
            term = dsigp[q] * partials[s]
            ops += 1
            if coef != 1:
                term *= coef
                ops += 1
            if acc is None:
                acc = term
            else:
                acc += term
                ops += 1
        out[r] = acc
        count_elementwise(ops * size)
    return out


def backward(params: NetworkParams, tape: ForwardTape, output_partials: Jet, basis=None) -> ParamGradient:
    """Gradient of the cost with respect to every weight and threshold."""
    basis = basis if basis is not None else tape.basis
    if output_partials.basis != basis or tape.basis != basis:
        raise ValueError("cost partials, tape and basis must share one derivative basis")
    if len(tape.activities) != len(params.layers):
        raise ValueError("tape does not match the network depth")
    plan = expansion_plan(basis)
    g = output_partials.data
    n_conn = len(params.weights)
    dW: list[np.ndarray] = [None] * n_conn
    dt: list[np.ndarray] = [None] * n_conn
    for i in reversed(range(n_conn)):
        z = tape.activities[i].data
        kind = params.layers[i].activation
        sig = parens = None
        if kind is ActivationKind.LINEAR:
            sj = z
        elif tape.sigma_jets is not None and tape.sigma_jets[i] is not None:
            sj = tape.sigma_jets[i]
        else:
            sig = sigma_derivatives(z[0], basis.max_order + 1, kind)
            parens = parentheses(z, plan)
            sj = sigma_jet(z, plan, sig, parens)
        n, rows, patterns = g.shape
        dW[i] = gemm(g.transpose(1, 0, 2).reshape(rows, n * patterns),
                     sj.transpose(1, 0, 2).reshape(sj.shape[1], n * patterns).T)
        dt[i] = g[0].sum(axis=1)
        count_elementwise(g[0].size)
        if i == 0:
            break
        p = stacked_gemm(params.weights[i], g, transpose_w=True)
        if kind is ActivationKind.LINEAR:
            g = p
            continue
        if sig is None:
            sig = sigma_derivatives(z[0], basis.max_order + 1, kind)
            parens = parentheses(z, plan)
        g = propagate_partials(p, z, plan, sig, parens)
    return ParamGradient(dW, dt)


CostFn = Callable[[Jet], tuple[float, Jet]]


@dataclass
class GradCheckReport:
    max_rel_error: float
    mean_rel_error: float
    per_layer: list[tuple[float, float]]
    analytic: np.ndarray
    numeric: np.ndarray

    def __str__(self) -> str:
        lines = [f"max rel err {self.max_rel_error:.3e}  mean rel err {self.mean_rel_error:.3e}"]
        for i, (mx, mn) in enumerate(self.per_layer):
            lines.append(f"  connection {i}: max {mx:.3e}  mean {mn:.3e}")
        return "\n".join(lines)


def relative_errors(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor * max|n|)``.

    The floor keeps entries that are tiny compared with the largest gradient
    component from being dominated by finite-difference round-off.
    """
    scale = max(float(np.max(np.abs(numeric), initial=0.0)), float(np.max(np.abs(analytic), initial=0.0)))
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor * scale)
    with np.errstate(invalid="ignore", divide="ignore"):
        err = np.abs(analytic - numeric) / denom
    return np.where(denom > 0, err, 0.0)


def grad_check(params: NetworkParams, input_jet: Jet, cost: CostFn, step: float = 1e-5,
               floor: float = 1e-6) -> GradCheckReport:
    """Compare :func:`backward` with central differences of the total cost."""
    out, tape = forward(params, input_jet)
    _, partials = cost(out)
    grad = backward(params, tape, partials)
    work = params.copy()
    analytic, numeric, per_layer = [], [], []
    for i in range(len(params.weights)):
        a_conn, n_conn = [], []
        for arr_w, arr_g in ((work.weights[i], grad.weights[i]), (work.thresholds[i], grad.thresholds[i])):
            flat = arr_w.reshape(-1)
            num = np.empty(flat.size)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + step
                e_plus = cost(forward(work, input_jet)[0])[0]
                flat[j] = orig - step
                e_minus = cost(forward(work, input_jet)[0])[0]
                flat[j] = orig
                num[j] = (e_plus - e_minus) / (2 * step)
            a_conn.append(arr_g.reshape(-1))
            n_conn.append(num)
        analytic.append(np.concatenate(a_conn))
        numeric.append(np.concatenate(n_conn))
    a_all, n_all = np.concatenate(analytic), np.concatenate(numeric)
    err_all = relative_errors(a_all, n_all, floor)
    start = 0
    for a in analytic:
        e = err_all[start:start + a.size]
        per_layer.append((float(e.max()), float(e.mean())))
        start += a.size
    return GradCheckReport(float(err_all.max()), float(err_all.mean()), per_layer, a_all, n_all)
