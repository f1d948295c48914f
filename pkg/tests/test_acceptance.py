"""Acceptance criteria, one test per criterion.

Each test prints a single ``[PASS]`` or ``[FAIL]`` line with the measured
numbers.  Criteria the implementation cannot reach are marked as strict
expected failures, so they still run at their full tolerance and the line
shows ``[FAIL]``.
"""

from __future__ import annotations

import statistics

import numpy as np
import pytest
from conftest import fd_derivative, rel_err
from hypothesis import given, settings
from hypothesis import strategies as st
from test_multiindex import Z_AAAAA, Z_AAAAB, Z_AAABB, Z_AB, Z_ABC, Z_ABCD, expected_terms, generated

from jetprop.backprop import ParamGradient, grad_check
from jetprop.cost import ResidualSpec, fit_cost, make_fit_target, residual_cost, residual_jet
from jetprop.multiindex import bruno_terms, sub, total_basis
from jetprop.network import NetworkParams, forward, forward_values, init_input_jet, init_params, parse_layers
from jetprop.opcount import elementwise_percent, format_expansion, parentheses_ops, relative_cost_expansion
from jetprop.opcount import equalized_exclusion_epochs
from jetprop.rprop import resurrection_due, rprop_init, rprop_step
from jetprop.targets import circle_grid, phi_jet, poisson_analytic_jet, square_grid
from jetprop.trainer import DEFAULT_LAYERS, RunConfig, attempt_seeds, train, write_metrics_csv


@pytest.fixture
def verdict(capsys):
    def emit(name: str, ok: bool, detail: str) -> bool:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        return ok

    return emit


# --- gradient oracle ----------------------------------------------------------


def test_gradient_oracle(verdict):
    rng = np.random.default_rng(2024)
    worst_fit = 0.0
    cases = [("2*,8,8,1*", d) for d in range(4)] + [("2*,4,4,1*", 5)]
    for layers, order in cases:
        basis = total_basis(2, order)
        params = init_params(layers, int(rng.integers(1 << 31)))
        x = rng.uniform(-1, 1, size=(2, 12))
        target = make_fit_target(basis, rng.normal(size=(len(basis), 1, 12)))
        rep = grad_check(params, init_input_jet(x, basis), lambda out, t=target: fit_cost(out, t), step=1e-5)
        worst_fit = max(worst_fit, rep.max_rel_error)
    worst_pde = 0.0
    pts = circle_grid(0.5)
    for order in range(3):
        spec = ResidualSpec(order)
        basis = spec.network_basis
        params = init_params("2*,8,8,1*", int(rng.integers(1 << 31)))
        phi = phi_jet(pts, basis)
        rep = grad_check(params, init_input_jet(pts, basis), lambda out, s=spec, p=phi: residual_cost(out, p, s))
        worst_pde = max(worst_pde, rep.max_rel_error)
    ok = worst_fit <= 1e-5 and worst_pde <= 1e-4
    assert verdict("gradient oracle", ok, f"fit max rel {worst_fit:.2e} (<=1e-5), pde max rel {worst_pde:.2e} (<=1e-4)")


# --- jet oracle ---------------------------------------------------------------


def test_jet_oracle(verdict):
    rng = np.random.default_rng(77)
    worst = 0.0
    steps = {1: 1e-3, 2: 5e-3, 3: 1e-2}
    low = total_basis(2, 3)
    full = total_basis(2, 5)
    for trial in range(3):
        params = init_params("2*,8,8,1*", int(rng.integers(1 << 31)))
        x = rng.uniform(-1, 1, size=(2, 6))
        out, _ = forward(params, init_input_jet(x, full))
        for s in full.indices[1:]:
            if sum(s) <= 3:
                fd = fd_derivative(lambda p: forward_values(params, p), x, s, steps[sum(s)])
            else:
                r = next(r for r in low.of_order(3) if all(a >= b for a, b in zip(s, r)))
                fd = fd_derivative(lambda p, r=r: forward(params, init_input_jet(p, low))[0][r], x, sub(s, r), 5e-3)
            worst = max(worst, rel_err(out[s], fd))
    assert verdict("jet oracle", worst <= 1e-5, f"max rel {worst:.2e} over orders 1-5 (<=1e-5)")


# --- Bruno equivalence ----------------------------------------------------------


def test_bruno_equivalence(verdict):
    tables = [((1, 1), Z_AB, 2), ((1, 1, 1), Z_ABC, 3), ((1, 1, 1, 1), Z_ABCD, 4),
              ((5,), Z_AAAAA, 1), ((4, 1), Z_AAAAB, 2), ((3, 2), Z_AAABB, 2)]
    matched = [generated(s) == expected_terms(t, n) for s, t, n in tables]
    fifth = sorted(t.coefficient for t in bruno_terms((5,)) if t.coefficient > 1)
    ok = all(matched) and fifth == [5, 10, 10, 10, 15]
    assert verdict("Bruno equivalence", ok, f"{sum(matched)}/6 expansions term-for-term, fifth-order coefficients {fifth}")


# --- complexity model -----------------------------------------------------------

PAPER_PARENTHESES = {(0,): 0, (1,): 0, (2,): 1, (1, 1): 1, (3,): 4, (2, 1): 6, (4,): 11, (3, 1): 19, (2, 2): 22,
                     (5,): 20, (4, 1): 38, (3, 2): 54}
PAPER_RELATIVE = {
    1: ["1", "2+2/(5n)", "3+6/n", "4+15/n", "5+28/n", "6+48/n"],
    2: ["1", "3+2/(5n)", "6+13/n", "10+45/n", "15+120/n", "21+280/n"],
}
PAPER_PERCENT = {
    "fit2d": (2, [729] * 6, [1, 2, 4, 6, 10, 17]),
    "autoencoder": (1, [64] * 6, [2, 4, 10, 15, 22, 30]),
    "poisson": (2, [1210, 352, 233, 157], [7, 12, 19, 31]),
}


@pytest.mark.xfail(strict=True, reason="counting rule gives 17/52 for (3,1)/(3,2) and other relative-cost "
                                        "coefficients; see the decisions ledger")
def test_complexity_model(verdict):
    paren_bad = {s: parentheses_ops(s) for s, v in PAPER_PARENTHESES.items() if parentheses_ops(s) != v}
    rel_bad = []
    for n_vars, row in PAPER_RELATIVE.items():
        for d, expect in enumerate(row):
            got = format_expansion(*relative_cost_expansion(n_vars, d))
            if got != expect:
                rel_bad.append(f"{n_vars}-var d={d}: {got} vs {expect}")
    pct_dev = 0.0
    for exp, (n_vars, patterns, paper) in PAPER_PERCENT.items():
        offset = 2 if exp == "poisson" else 0
        for d, (p, q) in enumerate(zip(patterns, paper)):
            got = elementwise_percent(DEFAULT_LAYERS[exp], total_basis(n_vars, d + offset), p)
            pct_dev = max(pct_dev, abs(got - q))
    ok = not paren_bad and not rel_bad and pct_dev <= 3
    detail = (f"parentheses mismatches {paren_bad or 'none'}; relative-cost mismatches {len(rel_bad)}/12"
              f"{' (' + rel_bad[0] + ', ...)' if rel_bad else ''}; percentages max deviation {pct_dev:.2f} points (<=3)")
    assert verdict("complexity model", ok, detail)


# --- analytic solution ------------------------------------------------------------


def test_analytic_solution(verdict):
    worst = 0.0
    for spacing in (0.052, 0.1, 0.125, 0.15, 0.3):
        pts = circle_grid(spacing)
        for order in range(4):
            spec = ResidualSpec(order)
            v, _ = residual_jet(poisson_analytic_jet(pts, spec.network_basis), order)
            worst = max(worst, float(np.sqrt(np.mean(v.data ** 2))))
    assert verdict("analytic solution", worst <= 1e-10, f"max residual-jet rms {worst:.2e} over 5 grids, d<=3 (<=1e-10)")


# --- desk-scale trends ------------------------------------------------------------

DESK_LAYERS = "2*,32,32,32,32,1*"
DESK_SEEDS = attempt_seeds(0, 5)


@pytest.mark.slow
def test_desk_trend_fit2d(verdict):
    stage_epochs = 2000
    d0_epochs = equalized_exclusion_epochs(DESK_LAYERS, "fit", 2, (2, stage_epochs, 729), (0, 729))
    rms = {2: [], 0: []}
    for seed in DESK_SEEDS:
        for order, epochs in ((2, stage_epochs), (0, d0_epochs)):
            cfg = RunConfig(experiment="fit2d", layers=DESK_LAYERS, order=order, schedule="exclusion",
                            epochs=epochs, seed=seed, metrics_every=epochs)
            rms[order].append(train(cfg).history[-1].metrics["test_rms_order0"])
    m2, m0 = statistics.median(rms[2]), statistics.median(rms[0])
    ok = m0 >= 3 * m2
    assert verdict("desk trend 2D fit", ok, f"median rms d=2 {m2:.2e}, d=0 {m0:.2e} ({d0_epochs} epochs), "
                                            f"gain {m0 / m2:.1f}x (>=3x)")


@pytest.mark.slow
def test_desk_trend_poisson(verdict):
    stage_epochs = 3000
    n = circle_grid(0.15).shape[1]
    d0_epochs = equalized_exclusion_epochs(DESK_LAYERS, "pde", 2, (1, stage_epochs, n), (0, n))
    rms = {1: [], 0: []}
    for seed in DESK_SEEDS:
        for order, epochs in ((1, stage_epochs), (0, d0_epochs)):
            cfg = RunConfig(experiment="poisson", layers=DESK_LAYERS, order=order, schedule="exclusion",
                            epochs=epochs, seed=seed, spacing=0.15, metrics_every=epochs)
            rms[order].append(train(cfg).history[-1].metrics["rms_u"])
    m1, m0 = statistics.median(rms[1]), statistics.median(rms[0])
    ok = m0 >= 2 * m1 and m1 <= 1e-3
    assert verdict("desk trend Poisson", ok, f"median rms(u-u_a) d=1 {m1:.2e} (<=1e-3), d=0 {m0:.2e} "
                                             f"({d0_epochs} epochs), gain {m0 / m1:.1f}x (>=2x)")


# --- RProp suite --------------------------------------------------------------------


def _scalar_params(w):
    return NetworkParams(tuple(parse_layers("1*,1*")), [np.array([[w]])], [np.array([-w])])


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=30), st.floats(1e-8, 1e8),
       st.floats(-20, 20))
@settings(max_examples=100, deadline=None)
def _clamp_property(grads, delta, w0):
    p = _scalar_params(w0)
    s = rprop_init(p, delta)
    for g in grads:
        rprop_step(s, ParamGradient([np.array([[g]])], [np.array([g])]), p)
        assert np.abs(p.weights[0]).max() <= 20 and np.abs(p.thresholds[0]).max() <= 20


def _trajectory(scale):
    rng = np.random.default_rng(9)
    p = init_params("2*,4,1*", 0)
    s = rprop_init(p)
    path = []
    for _ in range(40):
        g = [rng.normal(size=w.shape) * scale for w in p.arrays()]
        rprop_step(s, ParamGradient(g[0::2], g[1::2]), p)
        path.append(np.concatenate([a.ravel() for a in p.arrays()]))
    return np.array(path)


def test_rprop_suite(verdict):
    try:
        _clamp_property()
        clamp_ok = True
    except AssertionError:
        clamp_ok = False
    base = _trajectory(1.0)
    scale_ok = all(np.array_equal(base, _trajectory(c)) for c in (1e-9, 3.7, 1e9))
    short = not any(resurrection_due(e, n) for n in (1000, 5000) for e in range(1, n + 1))
    fired = [e for e in range(1, 10001) if resurrection_due(e, 10000)]
    res_ok = short and fired == list(range(800, 10001, 800))
    ok = clamp_ok and scale_ok and res_ok
    assert verdict("RProp suite", ok, f"clamp {clamp_ok}, scale invariance {scale_ok}, resurrection schedule {res_ok}")


# --- determinism --------------------------------------------------------------------


def test_determinism(verdict, tmp_path):
    cfg = dict(experiment="fit2d", layers="2*,16,16,1*", order=2, schedule="exclusion", epochs=40, seed=11,
               grid_side=9, test_grid_side=11, metrics_every=10)
    blobs = []
    for i in range(2):
        res = train(RunConfig(**cfg))
        write_metrics_csv(tmp_path / f"m{i}.csv", res.history)
        blobs.append((tmp_path / f"m{i}.csv").read_bytes())
    ok = blobs[0] == blobs[1]
    assert verdict("determinism", ok, f"metrics CSV bit-identical across two runs: {ok}")


# --- grid counts --------------------------------------------------------------------


def test_grid_counts(verdict):
    a, b, c = circle_grid(0.15).shape[1], circle_grid(0.052).shape[1], square_grid(27).shape[1]
    ok = abs(a - 157) <= 5 and abs(b - 1210) <= 20 and c == 729
    assert verdict("grid counts", ok, f"circle(0.15)={a} (157+-5), circle(0.052)={b} (1210+-20), square(27)={c}")

