"""Resilient backpropagation (RProp) with weight clamping and step resurrection.

Each parameter keeps its own step size.  The step grows by ``eta_plus`` while
the gradient keeps its sign and shrinks by ``eta_minus`` on a sign flip; the
parameter moves against the gradient sign by the current step.  Steps have
no lower bound; growth stops at the width of the clamp interval, beyond which
a larger step cannot change where a parameter lands.  When a stage is long (more than 5000
epochs) steps that have collapsed to zero are reset to a small value every 8%
of the stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from jetprop.backprop import ParamGradient
from jetprop.network import WEIGHT_CLAMP, DivergenceError, NetworkParams

DELTA0 = 2e-4
DELTA_STAGE = 1e-5
ETA_PLUS = 1.2
ETA_MINUS = 0.5
RESURRECT_VALUE = 1e-6
RESURRECT_FRACTION = 0.08
RESURRECT_MIN_EPOCHS = 5000
# steps below this count as "reduced to zero"
RESURRECT_THRESHOLD = 2 * np.finfo(np.float64).tiny


@dataclass
class RpropState:
    steps: list[np.ndarray]
    prev_grads: list[np.ndarray]
    eta_plus: float = ETA_PLUS
    eta_minus: float = ETA_MINUS
    clamp: float = WEIGHT_CLAMP
    backtracking: bool = False
    max_step: float | None = 2 * WEIGHT_CLAMP
    prev_updates: list[np.ndarray] = field(default_factory=list)
    resurrect_value: float = RESURRECT_VALUE
    resurrect_threshold: float = RESURRECT_THRESHOLD

    def to_dict(self, prefix: str = "rprop_") -> dict[str, np.ndarray]:
        out = {}
        for i, (s, g) in enumerate(zip(self.steps, self.prev_grads)):
            out[f"{prefix}step{i}"] = s
            out[f"{prefix}grad{i}"] = g
        for i, u in enumerate(self.prev_updates):
            out[f"{prefix}update{i}"] = u
        return out

    def load_dict(self, d, prefix: str = "rprop_") -> None:
        for i in range(len(self.steps)):
            self.steps[i] = np.array(d[f"{prefix}step{i}"])
            self.prev_grads[i] = np.array(d[f"{prefix}grad{i}"])
        keys = set(d.keys())
        self.prev_updates = [np.array(d[f"{prefix}update{i}"]) for i in range(len(self.steps))
                             if f"{prefix}update{i}" in keys]


def rprop_init(params: NetworkParams, delta0: float = DELTA0, **config) -> RpropState:
    """Fresh optimizer state: every step equals ``delta0``, no gradient memory."""
    if not delta0 > 0:
        raise ValueError("delta0 must be positive")
    arrays = params.arrays()
    return RpropState(
        steps=[np.full(a.shape, delta0, dtype=a.dtype) for a in arrays],
        prev_grads=[np.zeros_like(a) for a in arrays],
        prev_updates=[np.zeros_like(a) for a in arrays],
        **config,
    )


def rprop_step(state: RpropState, grad: ParamGradient, params: NetworkParams) -> None:
    """Update ``params`` and ``state`` in place from one full-batch gradient.

    A sign flip halves the step and clears the gradient memory so the next
    epoch neither grows nor shrinks that step.  With ``state.backtracking``
    the previous move of a flipped parameter is undone instead of making a
    new one.
    """
    arrays = params.arrays()
    grads = grad.arrays()
    if len(arrays) != len(grads) or any(a.shape != g.shape for a, g in zip(arrays, grads)):
        raise ValueError("gradient shapes do not match the parameters")
    for g in grads:
        if not np.isfinite(g).all():
            raise DivergenceError("non-finite gradient")
    if not state.prev_updates:
        state.prev_updates = [np.zeros_like(a) for a in arrays]
    for w, g, step, prev, upd in zip(arrays, grads, state.steps, state.prev_grads, state.prev_updates):
        prod = g * prev
        grow = prod > 0
        flip = prod < 0
        step[grow] *= state.eta_plus
        step[flip] *= state.eta_minus
        if state.max_step is not None:
            np.minimum(step, state.max_step, out=step)
        move = -np.sign(g) * step
        if state.backtracking:
            move[flip] = -upd[flip]
        new = np.clip(w + move, -state.clamp, state.clamp)
        upd[...] = new - w
        w[...] = new
        prev[...] = np.where(flip, 0.0, g)


def resurrection_period(stage_epochs: int) -> int:
    return max(1, math.ceil(RESURRECT_FRACTION * stage_epochs))


def resurrection_due(epoch: int, stage_epochs: int) -> bool:
    """Whether resurrection fires after ``epoch`` (1-based within the stage)."""
    if stage_epochs <= RESURRECT_MIN_EPOCHS or epoch <= 0:
        return False
    return epoch % resurrection_period(stage_epochs) == 0


def resurrect_steps(state: RpropState, epoch: int, stage_epochs: int) -> int:
    """Reset collapsed steps to ``state.resurrect_value`` when due; returns how many."""
    if not resurrection_due(epoch, stage_epochs):
        return 0
    n = 0
    for step in state.steps:
        dead = step < state.resurrect_threshold
        n += int(dead.sum())
        step[dead] = state.resurrect_value
    return n
