"""Propagate a derivative jet through a small network and check it numerically.

Run with ``python3 demos/jet_walkthrough.py``.
"""

from __future__ import annotations

import numpy as np

from jetprop.multiindex import bruno_terms, label, total_basis
from jetprop.network import forward, forward_values, init_input_jet, init_params

# the chain rule for a mixed third derivative, grouped by the sigma derivative it multiplies
print("d^(2,1) sigma(z) =")
for term in bruno_terms((2, 1)):
    factors = " * ".join("z_" + label(f) for f in term.factors)
    print(f"  {term.coefficient} * sigma^({term.sigma_order}) * {factors}")

seed = 1
params = init_params("2*,8,8,1*", seed)
basis = total_basis(2, 3)
point = np.array([[0.3], [-0.4]])
out, _ = forward(params, init_input_jet(point, basis))

print(f"\noutput jet of a 2*,8,8,1* network (seed {seed}) at (0.3, -0.4):")
for s in basis:
    print(f"  d_{label(s):<4s} {out[s][0, 0]: .10f}")

# one entry against a central difference of the value-only pass
h = 1e-4
fd = (forward_values(params, point + [[h], [0]]) - forward_values(params, point - [[h], [0]])) / (2 * h)
print(f"\nd_a by central difference: {fd[0, 0]: .10f}")
