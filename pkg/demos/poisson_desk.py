"""Solve the nonlinear Poisson problem on the unit disk with a small network.

Trains the same network twice on the same operation budget: once on the
residual alone and once with its first derivatives added for the first
stage.  Takes a few minutes on one core.

Run with ``python3 demos/poisson_desk.py [epochs_per_stage]``.
"""

from __future__ import annotations

import sys

from jetprop.opcount import equalized_exclusion_epochs
from jetprop.targets import circle_grid
from jetprop.trainer import RunConfig, train

layers = "2*,32,32,32,32,1*"
stage_epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 3000
patterns = circle_grid(0.15).shape[1]
plain_epochs = equalized_exclusion_epochs(layers, "pde", 2, (1, stage_epochs, patterns), (0, patterns))

for order, epochs in ((1, stage_epochs), (0, plain_epochs)):
    cfg = RunConfig(experiment="poisson", layers=layers, order=order, schedule="exclusion", epochs=epochs,
                    spacing=0.15, metrics_every=epochs)
    m = train(cfg).history[-1].metrics
    print(f"order {order}, {epochs} epochs per stage: rms(V) {m['rms_V']:.2e}  rms(u-u_a) {m['rms_u']:.2e}")
