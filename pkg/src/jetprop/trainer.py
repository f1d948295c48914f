"""Training loops: extended and exclusion schedules, metrics and checkpoints.

Every epoch processes all patterns in one batch: forward jets, cost and its
partials, the extended backward pass and one RProp update.  Exclusion
training repeats this in stages of decreasing derivative order with a fresh
optimizer (small initial steps) at every stage after the first.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from jetprop.backprop import backward
from jetprop.cost import (
    FitTarget,
    ResidualSpec,
    compute_coefficients,
    exclusion_stage_basis,
    fit_cost,
    make_fit_target,
    residual_cost,
    residual_jet,
    substitute_solution,
)
from jetprop.linalg import OpCounter, counting
from jetprop.multiindex import DerivativeBasis, total_basis
from jetprop.network import (
    DivergenceError,
    Jet,
    NetworkParams,
    forward,
    init_input_jet,
    init_params,
    params_from_dict,
    params_to_dict,
    parse_layers,
)
from jetprop.opcount import epoch_cost
from jetprop.rprop import DELTA0, DELTA_STAGE, RpropState, resurrect_steps, rprop_init, rprop_step
from jetprop.targets import (
    FourierTarget2D,
    circle_grid,
    disk_test_grid,
    fourier2d_jet,
    helix_derivative,
    helix_jet,
    helix_parameters,
    phi_jet,
    poisson_analytic,
    square_grid,
)

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "jetprop-checkpoint-v1"
EXPERIMENTS = ("fit2d", "autoencoder", "poisson")
DEFAULT_LAYERS = {
    "fit2d": "2*,128,128,128,128,1*",
    "autoencoder": "3*,64,64,1*,64,64,3*",
    "poisson": "2*,64,64,64,64,64,64,1*",
}


@dataclass
class RunConfig:
    """Everything that determines a training run."""

    experiment: str = "fit2d"
    name: str = "run"
    layers: str = ""
    order: int = 0
    schedule: str = "extended"
    epochs: int = 1000
    seed: int = 0
    target_seed: int = 0
    grid_side: int = 27
    test_grid_side: int = 95
    helix_train: int = 64
    helix_test: int = 1184
    spacing: float = 0.15
    disk_test_side: int = 101
    delta0: float = DELTA0
    stage_delta: float = DELTA_STAGE
    backtracking: bool = False
    precision: str = "float64"
    cache_sigma: bool = False
    metrics_every: int = 25
    checkpoint_every: int = 0
    out_dir: str = "runs"

    def __post_init__(self):
        if not self.layers:
            self.layers = DEFAULT_LAYERS.get(self.experiment, "")

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.schedule not in ("extended", "exclusion"):
            raise ValueError(f"schedule must be 'extended' or 'exclusion', got {self.schedule!r}")
        layers = parse_layers(self.layers)
        n_in, n_out = layers[0].width, layers[-1].width
        expect = {"fit2d": (2, 1), "autoencoder": (3, 3), "poisson": (2, 1)}[self.experiment]
        if (n_in, n_out) != expect:
            raise ValueError(f"{self.experiment} needs {expect[0]} inputs and {expect[1]} outputs, got {n_in} and {n_out}")
        max_order = 3 if self.experiment == "poisson" else 5
        if not 0 <= self.order <= max_order:
            raise ValueError(f"order must be in [0, {max_order}] for {self.experiment}")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.precision not in ("float64", "float32"):
            raise ValueError("precision must be float64 or float32")
        if self.metrics_every < 1:
            raise ValueError("metrics_every must be positive")
        if not self.delta0 > 0 or not self.stage_delta > 0:
            raise ValueError("initial steps must be positive")
        if self.experiment == "poisson" and not 0 < self.spacing <= 1:
            raise ValueError("spacing must be in (0, 1]")

    @property
    def task(self) -> str:
        return "pde" if self.experiment == "poisson" else "fit"

    @property
    def n_vars(self) -> int:
        return 1 if self.experiment == "autoencoder" else 2

    @property
    def dtype(self):
        return np.float32 if self.precision == "float32" else np.float64

    def stage_orders(self) -> list[int]:
        if self.schedule == "exclusion":
            return list(range(self.order, -1, -1))
        return [self.order]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


# --- problems ---------------------------------------------------------------


class Problem:
    """Training data, cost and evaluation for one experiment."""

    n_vars: int
    task: str
    train_patterns: int

    def input_jet(self, basis: DerivativeBasis) -> Jet:
        raise NotImplementedError

    def cost(self, output_jet: Jet, stage_order: int) -> tuple[float, Jet]:
        raise NotImplementedError

    def evaluate(self, params: NetworkParams) -> dict[str, float]:
        raise NotImplementedError


def normalized_rms(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per row: rms deviation over patterns divided by the target's spread (1 when flat)."""
    rms = np.sqrt(np.mean((pred - target) ** 2, axis=-1))
    return rms * compute_coefficients(target)


def per_order_rms(output: Jet, target: FitTarget) -> dict[int, float]:
    """Normalized rms averaged over all derivatives (and outputs) of equal total order."""
    out: dict[int, list[float]] = {}
    for s in output.basis:
        vals = normalized_rms(output[s], target.values[target.basis.position(s)])
        out.setdefault(sum(s), []).extend(vals.tolist())
    return {k: float(np.mean(v)) for k, v in out.items()}


@dataclass
class FitProblem(Problem):
    """Fit known values and derivatives; ``rule`` supplies input derivatives for curves."""

    n_vars: int
    train_inputs: np.ndarray
    train_target: FitTarget
    test_inputs: np.ndarray | None = None
    test_target: FitTarget | None = None
    train_rule: Callable | None = None
    test_rule: Callable | None = None
    task: str = "fit"

    @property
    def train_patterns(self) -> int:
        return self.train_inputs.shape[1]

    def input_jet(self, basis: DerivativeBasis) -> Jet:
        return init_input_jet(self.train_inputs, basis, self.train_rule)

    def cost(self, output_jet: Jet, stage_order: int | None = None) -> tuple[float, Jet]:
        return fit_cost(output_jet, self.train_target.restrict(output_jet.basis))

    def evaluate(self, params: NetworkParams) -> dict[str, float]:
        basis = self.train_target.basis
        res = {}
        out, _ = forward(params, self.input_jet(basis))
        for k, v in per_order_rms(out, self.train_target).items():
            res[f"train_rms_order{k}"] = v
        if self.test_target is not None:
            out, _ = forward(params, init_input_jet(self.test_inputs, basis, self.test_rule))
            for k, v in per_order_rms(out, self.test_target).items():
                res[f"test_rms_order{k}"] = v
        return res


@dataclass
class PoissonProblem(Problem):
    """``u_xx + u_yy = u^2 + 1.5 u^3`` on the unit disk with ``u = -2`` on the circle."""

    train_points: np.ndarray
    test_points: np.ndarray
    max_order: int
    boundary_value: float = -2.0
    n_vars: int = 2
    task: str = "pde"
    dtype: type = np.float64

    def __post_init__(self):
        self._phi = phi_jet(self.train_points, total_basis(2, self.max_order + 2))
        self._test_phi = phi_jet(self.test_points, total_basis(2, 2))
        self._test_exact = poisson_analytic(self.test_points)

    @property
    def train_patterns(self) -> int:
        return self.train_points.shape[1]

    def input_jet(self, basis: DerivativeBasis) -> Jet:
        return init_input_jet(self.train_points.astype(self.dtype), basis)

    def cost(self, output_jet: Jet, stage_order: int) -> tuple[float, Jet]:
        spec = ResidualSpec(stage_order, self.boundary_value)
        return residual_cost(output_jet, self._phi.restrict(output_jet.basis), spec)

    def solution(self, params: NetworkParams, points: np.ndarray, phi: Jet) -> Jet:
        out, _ = forward(params, init_input_jet(points.astype(self.dtype), phi.basis))
        return substitute_solution(out, phi, self.boundary_value)

    def evaluate(self, params: NetworkParams) -> dict[str, float]:
        u = self.solution(params, self.test_points, self._test_phi)
        v, _ = residual_jet(u, 0)
        return {
            "rms_V": float(np.sqrt(np.mean(v.values ** 2))),
            "rms_u": float(np.sqrt(np.mean((u.values[0] - self._test_exact) ** 2))),
        }


def build_problem(config: RunConfig) -> Problem:
    dtype = config.dtype
    if config.experiment == "fit2d":
        target = FourierTarget2D.random(config.target_seed)
        basis = total_basis(2, config.order)
        train = square_grid(config.grid_side)
        test = square_grid(config.test_grid_side)
        tr, te = fourier2d_jet(target, train, basis), fourier2d_jet(target, test, basis)
        return FitProblem(2, train.astype(dtype), _cast(tr, dtype), test.astype(dtype), _cast(te, dtype))
    if config.experiment == "autoencoder":
        tr = helix_jet(helix_parameters(config.helix_train), config.order)
        te = helix_jet(helix_parameters(config.helix_test), config.order)
        return FitProblem(1, tr.inputs.astype(dtype), _cast(tr.target, dtype), te.inputs.astype(dtype),
                          _cast(te.target, dtype), _helix_rule(tr.t, dtype), _helix_rule(te.t, dtype))
    return PoissonProblem(circle_grid(config.spacing), disk_test_grid(config.disk_test_side), config.order,
                          dtype=dtype)


def _cast(target: FitTarget, dtype) -> FitTarget:
    return FitTarget(target.basis, target.values.astype(dtype), target.coefficients.astype(dtype))


def _helix_rule(t: np.ndarray, dtype):
    def rule(s):
        return helix_derivative(t, s[0]).astype(dtype)

    return rule


# --- metrics and checkpoints ------------------------------------------------


@dataclass
class MetricsRow:
    epoch: int
    stage: int
    order: int
    cost: float
    ops: int
    ops_model: int
    metrics: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {"epoch": self.epoch, "stage": self.stage, "order": self.order, "E": self.cost,
             "ops": self.ops, "ops_model": self.ops_model}
        d.update(self.metrics)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsRow":
        d = dict(d)
        base = [d.pop(k) for k in ("epoch", "stage", "order", "E", "ops", "ops_model")]
        return cls(int(base[0]), int(base[1]), int(base[2]), float(base[3]), int(base[4]), int(base[5]),
                   {k: float(v) for k, v in d.items()})


def write_metrics_csv(path: str | Path, history: list[MetricsRow]) -> None:
    rows = [r.as_dict() for r in history]
    header: list[str] = []
    for r in rows:
        header += [k for k in r if k not in header]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header, restval="")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


@dataclass
class TrainState:
    """Position inside a schedule; enough to resume a run exactly."""

    stage: int = 0
    stage_epoch: int = 0
    epoch: int = 0
    ops: int = 0
    ops_model: int = 0


def save_checkpoint(path: str | Path, params: NetworkParams, rprop: RpropState, pos: TrainState,
                    config: RunConfig, history: list[MetricsRow]) -> None:
    payload = params_to_dict(params)
    payload.update(rprop.to_dict())
    payload["format"] = np.array([CHECKPOINT_FORMAT])
    payload["position"] = np.array([json.dumps(asdict(pos))])
    payload["config"] = np.array([json.dumps(config.to_dict())])
    payload["history"] = np.array([json.dumps([r.as_dict() for r in history])])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(str(path) + ".tmp.npz")
    np.savez(tmp, **payload)
    tmp.replace(path)


def load_checkpoint(path: str | Path):
    """Return ``(params, rprop arrays, position, config dict, history)``."""
    with np.load(path, allow_pickle=False) as d:
        if "format" not in d.files or str(d["format"][0]) != CHECKPOINT_FORMAT:
            raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} file")
        params = params_from_dict(d)
        arrays = {k: np.array(d[k]) for k in d.files if k.startswith("rprop_")}
        pos = TrainState(**json.loads(str(d["position"][0])))
        cfg = json.loads(str(d["config"][0]))
        history = [MetricsRow.from_dict(r) for r in json.loads(str(d["history"][0]))]
    return params, arrays, pos, cfg, history


# --- training ---------------------------------------------------------------


@dataclass
class TrainResult:
    params: NetworkParams
    history: list[MetricsRow]
    rprop: RpropState
    position: TrainState


def attempt_seeds(base_seed: int, attempts: int) -> list[int]:
    return [base_seed + i for i in range(attempts)]


def stage_basis(config: RunConfig, stage_order: int) -> DerivativeBasis:
    return exclusion_stage_basis(stage_order, config.task, config.n_vars)


def train(config: RunConfig, problem: Problem | None = None, checkpoint_dir: str | Path | None = None,
          resume: str | Path | None = None, progress: Callable[[MetricsRow], None] | None = None) -> TrainResult:
    """Run the configured schedule; exclusion with ``order = 0`` equals extended order 0."""
    config.validate()
    problem = problem if problem is not None else build_problem(config)
    orders = config.stage_orders()
    if resume is not None:
        params, arrays, pos, _, history = load_checkpoint(resume)
        params = params.astype(config.dtype)
        rprop = rprop_init(params, config.delta0 if pos.stage == 0 else config.stage_delta,
                           backtracking=config.backtracking)
        rprop.load_dict(arrays)
    else:
        params = init_params(config.layers, config.seed, config.dtype)
        rprop = rprop_init(params, config.delta0, backtracking=config.backtracking)
        pos = TrainState()
        history = []

    def record(stage_order: int, cost: float) -> None:
        row = MetricsRow(pos.epoch, pos.stage, stage_order, cost, pos.ops, pos.ops_model, problem.evaluate(params))
        history.append(row)
        if progress is not None:
            progress(row)

    def checkpoint(name: str) -> None:
        if checkpoint_dir is not None:
            save_checkpoint(Path(checkpoint_dir) / name, params, rprop, pos, config, history)

    counter = OpCounter()
    while pos.stage < len(orders):
        stage_order = orders[pos.stage]
        basis = stage_basis(config, stage_order)
        in_jet = problem.input_jet(basis)
        model = epoch_cost(params.layers, basis, problem.train_patterns).total
        if pos.stage_epoch == 0:
            if pos.stage > 0:
                rprop = rprop_init(params, config.stage_delta, backtracking=config.backtracking)
            if not history or history[-1].epoch != pos.epoch:
                out, _ = forward(params, in_jet)
                record(stage_order, problem.cost(out, stage_order)[0])
        try:
            while pos.stage_epoch < config.epochs:
                counter.reset()
                with counting(counter):
                    out, tape = forward(params, in_jet, cache_sigma=config.cache_sigma)
                    cost, partials = problem.cost(out, stage_order)
                    if not np.isfinite(cost):
                        raise DivergenceError("non-finite cost")
                    grad = backward(params, tape, partials)
                rprop_step(rprop, grad, params)
                pos.stage_epoch += 1
                pos.epoch += 1
                pos.ops += counter.total
                pos.ops_model += model
                resurrect_steps(rprop, pos.stage_epoch, config.epochs)
                if pos.stage_epoch % config.metrics_every == 0 or pos.stage_epoch == config.epochs:
                    record(stage_order, cost)
                if config.checkpoint_every and pos.stage_epoch % config.checkpoint_every == 0:
                    checkpoint("latest.npz")
        except DivergenceError as exc:
            exc.epoch = pos.epoch + 1
            checkpoint("abort.npz")
            raise
        pos.stage += 1
        pos.stage_epoch = 0
        checkpoint(f"stage{pos.stage - 1}.npz")
        checkpoint("latest.npz")
    return TrainResult(params, history, rprop, pos)


def train_extended(config: RunConfig, **kwargs) -> TrainResult:
    if config.schedule != "extended":
        config = RunConfig(**{**config.to_dict(), "schedule": "extended"})
    return train(config, **kwargs)


def train_exclusion(config: RunConfig, **kwargs) -> TrainResult:
    if config.schedule != "exclusion":
        config = RunConfig(**{**config.to_dict(), "schedule": "exclusion"})
    return train(config, **kwargs)


def evaluate(params: NetworkParams, problem: Problem) -> dict[str, float]:
    return problem.evaluate(params)


def make_fit_problem(inputs: np.ndarray, values: np.ndarray, basis: DerivativeBasis,
                     test_inputs: np.ndarray | None = None, test_values: np.ndarray | None = None) -> FitProblem:
    """Fit problem on coordinate inputs from plain arrays ``(len(basis), outputs, patterns)``."""
    test = make_fit_target(basis, test_values) if test_values is not None else None
    return FitProblem(basis.n_vars, np.asarray(inputs), make_fit_target(basis, values), test_inputs, test)
