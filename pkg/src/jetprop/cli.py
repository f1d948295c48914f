"""Command line: ``jetprop run | gradcheck | opcount CONFIG [--set key=value ...]``.

Configs are YAML documents with the sections ``network``, ``training``,
``data`` and ``output`` (top-level keys ``experiment`` and ``name``).  Every
key can be overridden with ``--set section.key=value`` or just
``--set key=value``; ``d`` and ``lambda`` are accepted for ``order`` and
``spacing``.

Exit codes: 0 ok, 2 configuration error, 3 divergence, 4 check failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
import yaml

from jetprop import __version__
from jetprop.backprop import grad_check
from jetprop.network import DivergenceError, Jet, init_params
from jetprop.opcount import equalized_exclusion_epochs, format_kiloepochs, relative_cost, report
from jetprop.trainer import (
    FitProblem,
    PoissonProblem,
    RunConfig,
    build_problem,
    stage_basis,
    train,
    write_metrics_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_CHECK = 0, 2, 3, 4
GRADCHECK_LIMIT = 1e-4

SECTIONS = {
    None: ("experiment", "name"),
    "network": ("layers", "seed", "precision", "cache_sigma"),
    "training": ("order", "schedule", "epochs", "delta0", "stage_delta", "backtracking"),
    "data": ("target_seed", "grid_side", "test_grid_side", "helix_train", "helix_test", "spacing",
             "disk_test_side"),
    "output": ("out_dir", "metrics_every", "checkpoint_every"),
}
ALIASES = {"d": "order", "lambda": "spacing"}
FIELD_TYPES = {f.name: type(f.default) for f in fields(RunConfig)}

log = logging.getLogger("jetprop")


class ConfigError(ValueError):
    pass


def _section_of(key: str) -> str | None:
    for section, keys in SECTIONS.items():
        if key in keys:
            return section
    raise KeyError(key)


def _coerce(key: str, value, where: str):
    kind = FIELD_TYPES[key]
    try:
        if kind is bool:
            if isinstance(value, bool):
                return value
            if str(value).lower() in ("true", "yes", "1"):
                return True
            if str(value).lower() in ("false", "no", "0"):
                return False
            raise ValueError
        if kind is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            return int(value)
        if kind is float:
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: {key} expects {kind.__name__}, got {value!r}") from None


def _resolve_key(path: str, where: str) -> str:
    parts = path.split(".")
    key = ALIASES.get(parts[-1], parts[-1])
    if key not in FIELD_TYPES:
        raise ConfigError(f"{where}: unknown key {path!r}")
    if len(parts) > 2 or (len(parts) == 2 and parts[0] != _section_of(key)):
        raise ConfigError(f"{where}: unknown key {path!r}")
    return key


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Flatten a YAML config to RunConfig keywords, rejecting unknown keys with their line."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if root is None:
        return {}
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError(f"{source}:{root.start_mark.line + 1}: the config must be a mapping")
    out: dict = {}

    def walk(node: yaml.MappingNode, prefix: str) -> None:
        for key_node, value_node in node.value:
            where = f"{source}:{key_node.start_mark.line + 1}"
            name = f"{prefix}{key_node.value}"
            if isinstance(value_node, yaml.MappingNode):
                if prefix or key_node.value not in SECTIONS:
                    raise ConfigError(f"{where}: unknown section {name!r}")
                walk(value_node, name + ".")
                continue
            key = _resolve_key(name, where)
            value = yaml.safe_load(yaml.serialize(value_node))
            if key in out:
                raise ConfigError(f"{where}: {key!r} given twice")
            out[key] = _coerce(key, value, where)

    walk(root, "")
    return out


def apply_overrides(values: dict, overrides: list[str]) -> dict:
    values = dict(values)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        path, raw = item.split("=", 1)
        where = f"--set {item}"
        key = _resolve_key(path.strip(), where)
        values[key] = _coerce(key, yaml.safe_load(raw) if raw.strip() else "", where)
    return values


def load_config(path: str | None, overrides: list[str] | None = None) -> RunConfig:
    values: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        values = parse_config_text(p.read_text(), str(p))
    values = apply_overrides(values, overrides or [])
    try:
        config = RunConfig(**values)
        config.validate()
    except ValueError as exc:
        raise ConfigError(f"{path or '<defaults>'}: {exc}") from None
    return config


def dump_config(config: RunConfig) -> str:
    d = config.to_dict()
    nested: dict = {}
    for section, keys in SECTIONS.items():
        if section is None:
            nested.update({k: d[k] for k in keys})
        else:
            nested[section] = {k: d[k] for k in keys}
    return "# jetprop-config-v1\n" + yaml.safe_dump(nested, sort_keys=False)


# --- commands ---------------------------------------------------------------


def run_dir(config: RunConfig) -> Path:
    return Path(config.out_dir) / config.experiment / config.name


def summary_text(config: RunConfig, result) -> str:
    last = result.history[-1]
    lines = [f"experiment {config.experiment}", f"name {config.name}", f"layers {config.layers}",
             f"schedule {config.schedule} order {config.order} epochs {config.epochs}", f"seed {config.seed}",
             f"total epochs {result.position.epoch}", f"final E {last.cost!r}",
             f"ops {last.ops}", f"ops_model {last.ops_model}"]
    for k, v in last.metrics.items():
        label = {"rms_V": "rms(V)", "rms_u": "rms(u-u_a)"}.get(k, k)
        lines.append(f"{label} {v!r}")
    return "\n".join(lines) + "\n"


def cmd_run(args) -> int:
    config = load_config(args.config, args.set)
    out = run_dir(config)
    ckpt = out / "checkpoints"
    resume = None
    if args.resume is not None:
        resume = Path(args.resume) if args.resume != "auto" else ckpt / "latest.npz"
        if not resume.is_file():
            raise ConfigError(f"no checkpoint to resume from at {resume}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_config(config))

    def progress(row):
        log.info("epoch %d stage %d order %d E %.6g %s", row.epoch, row.stage, row.order, row.cost,
                 " ".join(f"{k}={v:.3g}" for k, v in row.metrics.items()))

    try:
        result = train(config, checkpoint_dir=ckpt, resume=resume, progress=progress)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    write_metrics_csv(out / "metrics.csv", result.history)
    text = summary_text(config, result)
    (out / "summary.txt").write_text(text)
    print(text, end="")
    print(f"outputs in {out}")
    return EXIT_OK


def _subsample(problem, patterns: int):
    n = problem.train_patterns
    idx = np.linspace(0, n - 1, min(patterns, n)).round().astype(int)
    if isinstance(problem, FitProblem):
        target = problem.train_target
        sub = type(target)(target.basis, target.values[:, :, idx], target.coefficients)
        full = problem.train_rule
        rule = None if full is None else (lambda s: full(s)[:, idx])
        return FitProblem(problem.n_vars, problem.train_inputs[:, idx], sub, train_rule=rule)
    return PoissonProblem(problem.train_points[:, idx], problem.test_points[:, :1], problem.max_order,
                          problem.boundary_value)


def cmd_gradcheck(args) -> int:
    config = load_config(args.config, args.set)
    problem = _subsample(build_problem(config), args.patterns)
    params = init_params(config.layers, config.seed)
    if args.zero_weights:
        for a in params.arrays():
            a[...] = 0.0
    basis = stage_basis(config, config.order)
    in_jet = problem.input_jet(basis)

    def cost(out: Jet):
        return problem.cost(out, config.order)

    rep = grad_check(params, in_jet, cost, step=args.step)
    print(f"gradcheck {config.experiment} layers {config.layers} order {config.order} "
          f"({len(basis)} derivatives, {problem.train_patterns} patterns, {params.n_params} parameters)")
    print(rep)
    ok = rep.max_rel_error <= args.limit
    print("PASS" if ok else f"FAIL (limit {args.limit:g})")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_opcount(args) -> int:
    config = load_config(args.config, args.set)
    problem = build_problem(config)
    patterns = problem.train_patterns
    basis = stage_basis(config, config.order)
    print(report(config.layers, basis, patterns))
    print()
    print("relative epoch cost and equalized exclusion epochs per stage")
    print(f"  reference: order {config.order}, {config.epochs} epochs per stage, {patterns} patterns")
    for d in range(config.order, -1, -1):
        rel = relative_cost(config.layers, stage_basis(config, d), patterns)
        ep = equalized_exclusion_epochs(config.layers, config.task, config.n_vars,
                                        (config.order, config.epochs, patterns), (d, patterns))
        print(f"  order {d}: relative {rel:.4f}  epochs {ep}  KE {format_kiloepochs(ep)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jetprop", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"jetprop {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log metrics while training")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", nargs="?", help="YAML config file (defaults when omitted)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")

    p = sub.add_parser("run", help="train and write metrics, checkpoints and a summary")
    common(p)
    p.add_argument("--resume", nargs="?", const="auto", default=None, metavar="CHECKPOINT",
                   help="continue from a checkpoint (default: the run's latest)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gradcheck", help="compare backward gradients with central differences")
    common(p)
    p.add_argument("--patterns", type=int, default=32, help="training patterns used (subsampled)")
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--limit", type=float, default=GRADCHECK_LIMIT)
    p.add_argument("--zero-weights", action="store_true", help="check a network with all parameters zero")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("opcount", help="print modelled operation counts")
    common(p)
    p.set_defaults(func=cmd_opcount)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
