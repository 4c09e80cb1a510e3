"""Quick invariant checks on a tiny instance, used by the ``validate`` command."""

from __future__ import annotations

import math
import warnings

import numpy as np

from . import rng
from .config import ExperimentConfig
from .experiment import run_experiment
from .features import build_knots, eval_basis, psi
from .fqi import FitConfig, assemble_dataset, fit, optimal_action, optimal_q, qlbs_price, u_w
from .hedging import (
    StrategyMatrix,
    fair_price,
    portfolio_recursion,
    rewards,
    sample_strategy,
    terminal_variance,
)
from .market import ImpactSeries, MarketParams, propagate_impact, sample_impact, simulate_unaffected, state_variables

TINY = MarketParams(T=2, n_mc=50)


def _tiny_run(seed: int, n_basis: int = 4):
    p = TINY
    F = simulate_unaffected(p, seed)
    u = sample_strategy(-1.0, 1.0, p.n_mc, p.T, seed)
    imp = sample_impact(p.n_mc, p.T, (0.0, 1.0), (0.01, 0.03), seed)
    q = propagate_impact(F, u, imp)
    S = state_variables(q, p.F_prev)
    pi = portfolio_recursion(q, u, p)
    R = rewards(q, u, pi, p, 0.001)
    data = assemble_dataset(q, u, R, imp, S, pi)
    knots = build_knots(S, n_basis)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = fit(data, knots, FitConfig(p.gamma, 0.001, 1.0, (-1.0, 1.0)))
    return p, F, u, imp, q, S, pi, data, knots, model


def check_neutrality(seed=1):
    p = TINY
    F = simulate_unaffected(p, seed)
    u = sample_strategy(-1.0, 1.0, p.n_mc, p.T, seed)
    zero_beta = ImpactSeries(np.zeros_like(F.values), np.full_like(F.values, 0.02))
    a = np.array_equal(propagate_impact(F, u, zero_beta).values, F.values)
    imp = sample_impact(p.n_mc, p.T, (0.0, 1.0), (0.01, 0.03), seed)
    flat = StrategyMatrix(np.zeros_like(F.values))
    b = np.array_equal(propagate_impact(F, flat, imp).values, F.values)
    return a and b, "beta=0 and u=0 leave rates untouched"


def check_basis(seed=2):
    g = rng.stream(seed, "run", 99)
    s = g.normal(0.0, 0.02, 1000)
    knots = build_knots(s, 12)
    x = g.uniform(knots.lo, knots.hi, 1000)
    B = eval_basis(knots, x)
    err = float(np.max(np.abs(B.sum(axis=1) - 1.0)))
    return err <= 1e-10 and B.min() >= -1e-10, f"max |sum - 1| = {err:.3g}"


def check_representation(seed=3):
    g = rng.stream(seed, "run", 98)
    knots = build_knots(g.normal(0.0, 0.02, 200), 12)
    W = g.normal(size=(3, 12))
    worst = 0.0
    for s, a in zip(g.uniform(knots.lo, knots.hi, 50), g.uniform(-3, 3, 50)):
        lhs = W.ravel() @ psi(s, a, knots)
        rhs = np.array([1.0, a, 0.5 * a * a]) @ (W @ eval_basis(knots, s))
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    return worst <= 1e-12, f"max rel diff {worst:.3g}"


def check_closed_form():
    p = MarketParams(sigma=0.0)
    cfg = ExperimentConfig(
        market=p, strategy_range=(0.0, 0.0), beta_range=(0.0, 0.0), risk_aversion=0.0, n_runs=1
    )
    rep = run_experiment(cfg, 0)
    want = math.exp(-0.015) * (3.0 - 2.4 * math.exp(0.015))
    err = max(abs(rep.fair_price - want), abs(rep.qlbs_price - want))
    return err <= 1e-10, f"fair={rep.fair_price:.12f} qlbs={rep.qlbs_price:.12f} want={want:.12f}"


def check_price_identity(seed=4):
    p, _, _, _, q, _, pi, _, _, _ = _tiny_run(seed)
    fair = fair_price(q, p)
    gap = qlbs_price(pi.values[:, -1], p, 0.001) - fair
    want = math.exp(-p.r_d * p.tau) * 0.001 * terminal_variance(pi.values[:, -1])
    # relative to the price level: the gap itself is a difference of two O(1) numbers
    err = abs(gap - want)
    return err <= 1e-12 * abs(fair), f"gap={gap:.6g} want={want:.6g} err={err:.2g}"


def check_fqi_oracle(seed=5):
    """Refit the last step densely and compare; then grid-check the argmax."""
    p, *_, data, knots, model = _tiny_run(seed)
    t = p.T - 1
    y = data.r[:, t] + p.gamma * (-data.pi_T - 0.001 * terminal_variance(data.pi_T))
    P = psi(data.s[:, t], data.a[:, t], knots)
    nb = knots.n_basis
    ybar = y.mean()
    e = np.zeros(3 * nb)
    e[:nb] = 1.0
    A = np.vstack([P, np.sqrt(model.ridge) * np.eye(3 * nb)])
    b = np.concatenate([y, np.sqrt(model.ridge) * ybar * e])
    w = np.linalg.lstsq(A, b, rcond=None)[0]
    q_err = float(np.max(np.abs(P @ w - optimal_q(model, t, data.s[:, t], data.a[:, t]))))

    grid = np.linspace(*model.action_bounds, 601)
    cell = grid[1] - grid[0]
    s = data.s[:, 0]
    u = u_w(model, 0, s)
    vals = u.u0[:, None] + grid[None, :] * u.u1[:, None] + 0.5 * grid[None, :] ** 2 * u.u2[:, None]
    a_err = float(np.max(np.abs(grid[vals.argmax(axis=1)] - optimal_action(model, 0, s))))
    return q_err <= 1e-8 and a_err <= cell, f"max |dQ| = {q_err:.3g}, max |da| = {a_err:.3g} (cell {cell:.3g})"


def check_determinism():
    cfg = ExperimentConfig(market=MarketParams(T=4, n_mc=64), n_basis=4, n_runs=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a, b = run_experiment(cfg, 11), run_experiment(cfg, 11)
    return a == b, "same seed, same report"


CHECKS = {
    "impact neutrality": check_neutrality,
    "basis partition of unity": check_basis,
    "feature representation": check_representation,
    "closed-form degenerate price": check_closed_form,
    "price gap identity": check_price_identity,
    "fqi dense oracle and argmax grid": check_fqi_oracle,
    "rerun determinism": check_determinism,
}


def run_checks(out=print) -> bool:
    ok_all = True
    for name, check in CHECKS.items():
        try:
            ok, detail = check()
        except Exception as exc:  # a crash is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        ok_all &= bool(ok)
        out(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return ok_all
