"""Operation-count model: per-epoch budgets and op-equalized training lengths.

Run with ``python3 demos/op_budget.py``.
"""

from __future__ import annotations

from jetprop.multiindex import total_basis
from jetprop.opcount import (
    elementwise_percent,
    equalized_exclusion_epochs,
    format_expansion,
    format_kiloepochs,
    relative_cost_expansion,
)
from jetprop.trainer import DEFAULT_LAYERS

print("relative epoch cost N + c/n for n*,n,n,n,n,n* networks")
for n_vars in (1, 2):
    row = [format_expansion(*relative_cost_expansion(n_vars, d)) for d in range(6)]
    print(f"  {n_vars} variable(s): " + "  ".join(row))

print("\nelement-wise work as a share of matrix work")
for exp, n_vars, offset, patterns in (("fit2d", 2, 0, [729] * 6), ("autoencoder", 1, 0, [64] * 6),
                                      ("poisson", 2, 2, [1210, 352, 233, 157])):
    pct = [elementwise_percent(DEFAULT_LAYERS[exp], total_basis(n_vars, d + offset), p)
           for d, p in enumerate(patterns)]
    print(f"  {exp:12s}" + "".join(f"{v:7.1f}%" for v in pct))

print("\nkilo-epochs per stage that match 2D exclusion training of order 5 at 1750 epochs")
ke = [format_kiloepochs(equalized_exclusion_epochs(DEFAULT_LAYERS["fit2d"], "fit", 2, (5, 1750, 729), (d, 729)))
      for d in range(6)]
print("  d=0..5: " + "  ".join(ke))
