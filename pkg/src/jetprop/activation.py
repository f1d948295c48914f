"""Logistic sigmoid and its derivatives up to order 6, plus the linear activation."""

from __future__ import annotations

from enum import Enum

import numpy as np

from jetprop.linalg import count_elementwise

MAX_SIGMA_ORDER = 6

# Scalar ops spent on each derivative when built from the lower ones below.
SIGMA_STEP_OPS = (0, 2, 3, 3, 3, 3, 5)


class ActivationKind(str, Enum):
    SIGMOID = "sigmoid"
    LINEAR = "linear"


def sigmoid(z: np.ndarray) -> np.ndarray:
    # exp(-|z|) never overflows; pick the algebraically equal form per sign
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigma_derivatives(z: np.ndarray, max_order: int, kind: ActivationKind = ActivationKind.SIGMOID) -> list[np.ndarray]:
    """Return ``[s, s', ..., s^(max_order)]`` evaluated entry-wise at ``z``.

    Higher derivatives are polynomials in the sigmoid and are assembled from
    the lower ones:

        s'   = s (1 - s)            s''   = s' (1 - 2 s)
        s''' = s' (1 - 6 s')        s^IV  = s'' (1 - 12 s')
        s^V  = s' - 30 (s'')^2      s^VI  = s'' + (s^IV - s'') (5 - 30 s')

    For the linear activation the list is ``[z, 1, 0, 0, ...]``.
    """
    if not 0 <= max_order <= MAX_SIGMA_ORDER:
        raise ValueError(f"max_order must be in [0, {MAX_SIGMA_ORDER}], got {max_order}")
    if ActivationKind(kind) is ActivationKind.LINEAR:
        out = [z]
        if max_order >= 1:
            out.append(np.ones_like(z))
        out.extend(np.zeros_like(z) for _ in range(max_order - 1))
        return out

    s0 = sigmoid(z)
    out = [s0]
    if max_order >= 1:
        out.append(s0 * (1.0 - s0))
    if max_order >= 2:
        out.append(out[1] * (1.0 - 2.0 * s0))
    if max_order >= 3:
        out.append(out[1] * (1.0 - 6.0 * out[1]))
    if max_order >= 4:
        out.append(out[2] * (1.0 - 12.0 * out[1]))
    if max_order >= 5:
        out.append(out[1] - 30.0 * out[2] ** 2)
    if max_order >= 6:
        out.append(out[2] + (out[4] - out[2]) * (5.0 - 30.0 * out[1]))
    count_elementwise(sum(SIGMA_STEP_OPS[: max_order + 1]) * np.size(z))
    return out
