"""Training feedforward networks on values and input-derivatives up to order 5."""

from jetprop.multiindex import DerivativeBasis, binomial, bruno_terms, lower_set, total_basis
from jetprop.network import Jet, LayerSpec, NetworkParams, forward, init_input_jet, init_params, parse_layers
from jetprop.backprop import backward, grad_check
from jetprop.rprop import RpropState, rprop_init, rprop_step, resurrect_steps

__version__ = "0.1.0"

__all__ = [
    "DerivativeBasis",
    "Jet",
    "LayerSpec",
    "NetworkParams",
    "RpropState",
    "backward",
    "binomial",
    "bruno_terms",
    "forward",
    "grad_check",
    "init_input_jet",
    "init_params",
    "lower_set",
    "parse_layers",
    "resurrect_steps",
    "rprop_init",
    "rprop_step",
    "total_basis",
]
