"""Acceptance gate.  One recorded PASS/FAIL line per criterion; the lines are
repeated in the pytest terminal summary under "acceptance criteria"."""

import json
import math
import os
import subprocess
import sys

import numpy as np
from scipy.interpolate import BSpline

from impact_qlbs import (
    MarketParams,
    fair_price,
    portfolio_recursion,
    qlbs_price,
    StrategyMatrix,
    build_knots,
    eval_basis,
    optimal_action,
    optimal_q,
    propagate_impact,
    psi,
    sample_impact,
    sample_strategy,
    simulate_unaffected,
    u_w,
)
from impact_qlbs.config import ExperimentConfig, preset_rows
from impact_qlbs.experiment import run_batch, run_experiment
from impact_qlbs.report import FILES

_batches = {}


def _preset(name, label, **market):
    key = (name, label, tuple(sorted(market.items())))
    if key not in _batches:
        cfg = dict(preset_rows(name))[label]
        if market:
            cfg = cfg.replace(market=cfg.market.__class__(**{**cfg.market.__dict__, **market}))
        _batches[key] = run_batch(cfg)
    return _batches[key]


def _rows(name):
    return [label for label, _ in preset_rows(name)]


def test_table2_costs(criterion):
    b = _preset("table2", "M_0.01_0.03")
    ok = abs(b.avg_Lp - 0.480) <= 0.03 and b.avg_Lstar < b.avg_Lp
    criterion(
        "Table-2 cost reproduction (50 runs, N_MC=1000)",
        ok,
        f"avg_Lp={b.avg_Lp:.6f} (target 0.480 +/- 0.03), avg_Lstar={b.avg_Lstar:.6f} < avg_Lp",
    )


def test_table2_costs_desk_scale(criterion):
    cfg = dict(preset_rows("table2"))["M_0.01_0.03"]
    cfg = cfg.replace(market=MarketParams(n_mc=200), n_runs=10)
    b = run_batch(cfg)
    wins = sum(r.mean_cost_optimal < r.mean_cost_postulated for r in b.runs)
    ok = abs(b.avg_Lp - 0.48) <= 0.06 and wins >= 8
    criterion(
        "Table-2 cost reproduction, desk scale (10 runs, N_MC=200)",
        ok,
        f"avg_Lp={b.avg_Lp:.6f} (target 0.48 +/- 0.06), Lstar < Lp in {wins}/10 runs (need >= 8)",
    )


def test_table3_costs(criterion):
    lps = {label: _preset("table3", label).avg_Lp for label in _rows("table3")}
    ok = all(abs(v - 0.72) <= 0.04 for v in lps.values())
    detail = ", ".join(f"{k}: {v:.6f}" for k, v in lps.items())
    criterion("Table-3 cost reproduction, u in [-1.5, 1.5)", ok, f"avg_Lp {detail} (target 0.72 +/- 0.04)")


def test_table4_wide_range_costs(criterion):
    b = _preset("table4", "u_-5_5")
    ok = abs(b.avg_Lp - 2.40) <= 0.12
    criterion("Table-4 cost reproduction, u in [-5, 5)", ok, f"avg_Lp={b.avg_Lp:.6f} (target 2.40 +/- 0.12)")


def test_price_convergence(criterion):
    worst_mse, ordered = 0.0, True
    for name in ("table2", "table3"):
        for label in _rows(name):
            b = _preset(name, label)
            worst_mse = max(worst_mse, b.mse)
            ordered &= b.avg_Lstar < b.avg_Lp
            assert all(r.squared_error == (r.qlbs_price - r.fair_price) ** 2 for r in b.runs)
    ok = worst_mse <= 1e-5 and ordered
    criterion(
        "Price convergence (MSE <= 1e-5 on every Table-2/3 preset)",
        ok,
        f"worst MSE {worst_mse:.3g}; avg_Lstar < avg_Lp on all 8 rows: {ordered}",
    )


def test_price_gap_identity(criterion):
    # variance premium recomputed from each run's terminal portfolio
    p = MarketParams()
    worst = 0.0
    for seed in range(10):
        F = simulate_unaffected(p, seed)
        u = sample_strategy(-1.0, 1.0, p.n_mc, p.T, seed)
        q = propagate_impact(F, u, sample_impact(p.n_mc, p.T, (0.0, 1.0), (0.01, 0.03), seed))
        pi_T = portfolio_recursion(q, u, p).values[:, -1]
        var = float(np.var(pi_T, ddof=1))
        gap = qlbs_price(pi_T, p, 0.001) - fair_price(q, p)
        want = math.exp(-p.r_d * p.tau) * 0.001 * var
        worst = max(worst, abs(gap - want) / fair_price(q, p))
    criterion(
        "Price gap identity qlbs - fair = exp(-r_d tau) lambda Var[Pi_T]",
        worst <= 1e-12,
        f"worst |error| relative to the price: {worst:.3g} (tolerance 1e-12)",
    )


def test_closed_form_degenerate(criterion):
    cfg = ExperimentConfig(
        market=MarketParams(sigma=0.0), strategy_range=(0.0, 0.0), beta_range=(0.0, 0.0), risk_aversion=0.0
    )
    r = run_experiment(cfg, 12345)
    want = math.exp(-0.015) * (3.0 - 2.4 * math.exp(0.015))
    err = max(abs(r.fair_price - want), abs(r.qlbs_price - want))
    criterion(
        "Closed-form degenerate check",
        err <= 1e-10 and r.squared_error == 0.0,
        f"fair={r.fair_price:.12f} qlbs={r.qlbs_price:.12f} closed form={want:.12f} |err|={err:.2g}",
    )


def test_impact_neutrality(criterion):
    p = MarketParams()
    exact = True
    for seed in range(5):
        F = simulate_unaffected(p, seed)
        u = sample_strategy(-5.0, 5.0, p.n_mc, p.T, seed)
        zero_beta = sample_impact(p.n_mc, p.T, (0.0, 0.0), (0.01, 0.10), seed)
        exact &= np.array_equal(propagate_impact(F, u, zero_beta).values, F.values)
        imp = sample_impact(p.n_mc, p.T, (0.0, 1.0), (0.01, 0.10), seed)
        flat = StrategyMatrix(np.zeros_like(F.values))
        exact &= np.array_equal(propagate_impact(F, flat, imp).values, F.values)
    criterion("Impact neutrality (beta=0, u=0)", bool(exact), "quoted equals unaffected bit for bit on 5 seeds")


# -- independent FQI oracle -------------------------------------------------


def _oracle_fit(run):
    """Backward pass rebuilt from scratch: scipy basis, dense SVD least squares,
    hand-written quadratic maximizer."""
    d, kv, cfg = run.data, run.knots, run.config
    nb = kv.n_basis
    basis = [BSpline(kv.knots, np.eye(nb)[j], kv.degree, extrapolate=False) for j in range(nb)]

    def phi(s):
        s = np.clip(s, kv.lo, kv.hi)
        return np.nan_to_num(np.column_stack([b(s) for b in basis]))

    def features(s, a):
        F = phi(s)
        return np.hstack([F, a[:, None] * F, 0.5 * (a * a)[:, None] * F])

    def best(W, s):
        u0, u1, u2 = W @ phi(s).T
        lo, hi = cfg.action_bounds
        out = np.empty_like(u0)
        for k in range(len(u0)):
            q = lambda a: u0[k] + a * u1[k] + 0.5 * a * a * u2[k]
            if u2[k] < 0:
                out[k] = q(min(max(-u1[k] / u2[k], lo), hi))
            else:
                out[k] = max(q(lo), q(hi))
        return out

    pi_T = d.pi_T
    nxt = -pi_T - cfg.risk_aversion * pi_T.var(ddof=1)
    Ws = [None] * d.T
    for t in range(d.T - 1, -1, -1):
        y = d.r[:, t] + cfg.gamma * nxt
        P = features(d.s[:, t], d.a[:, t])
        anchor = np.zeros(3 * nb)
        anchor[:nb] = y.mean()
        root = math.sqrt(cfg.ridge)
        A = np.vstack([P, root * np.eye(3 * nb)])
        w = np.linalg.lstsq(A, np.concatenate([y, root * anchor]), rcond=None)[0]
        Ws[t] = w.reshape(3, nb)
        if t:
            nxt = best(Ws[t], d.s_next[:, t - 1])
    return Ws, features


def test_fqi_oracle_equivalence(criterion, make_run):
    worst_q, worst_a, cells = 0.0, 0.0, []
    for seed in range(20):
        run = make_run(seed, T=2, n_mc=50, n_basis=4)
        Ws, features = _oracle_fit(run)
        lo, hi = run.config.action_bounds
        grid = np.linspace(lo, hi, 601)
        cell = grid[1] - grid[0]
        for t in range(run.data.T):
            s, a = run.data.s[:, t], run.data.a[:, t]
            oracle_q = features(s, a) @ Ws[t].ravel()
            worst_q = max(worst_q, float(np.max(np.abs(optimal_q(run.model, t, s, a) - oracle_q))))
            u = u_w(run.model, t, s)
            vals = u.u0[:, None] + grid * u.u1[:, None] + 0.5 * grid**2 * u.u2[:, None]
            gap = np.abs(grid[vals.argmax(axis=1)] - optimal_action(run.model, t, s)) / cell
            worst_a = max(worst_a, float(gap.max()))
    ok = worst_q <= 1e-8 and worst_a <= 1.0
    criterion(
        "FQI oracle equivalence (T=2, n_mc=50, n_basis=4, 20 seeds)",
        ok,
        f"max |Q - oracle| = {worst_q:.3g} (tol 1e-8); max |a* - grid argmax| = {worst_a:.3g} cells (tol 1)",
    )


def test_basis_properties(criterion):
    g = np.random.default_rng(20240611)
    kv = build_knots(g.normal(0.0, 0.02, 30000), 12)
    x = g.uniform(kv.lo, kv.hi, 10_000)
    B = eval_basis(kv, x)
    pou = float(np.max(np.abs(B.sum(axis=1) - 1.0)))
    neg = float(-min(B.min(), 0.0))
    worst = 0.0
    for _ in range(1000):
        W = g.normal(size=(3, 12))
        s, a = g.uniform(kv.lo, kv.hi), g.uniform(-5, 5)
        lhs = W.ravel() @ psi(s, a, kv)
        rhs = np.array([1.0, a, 0.5 * a * a]) @ (W @ eval_basis(kv, s))
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    ok = pou <= 1e-10 and neg <= 1e-10 and worst <= 1e-12
    criterion(
        "Basis properties",
        ok,
        f"max |sum Phi - 1| = {pou:.2g}, most negative Phi = {-neg:.2g} at 1e4 points; "
        f"representation identity max rel diff {worst:.2g}",
    )


def test_batch_determinism(criterion, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"market": {"n_mc": 400}, "n_runs": 4}))
    outputs = []
    for threads, workers in ((1, 1), (8, 2)):
        env = {k: v for k, v in os.environ.items() if k != "IMPACT_QLBS_SEED"}
        env.update(OMP_NUM_THREADS=str(threads), OPENBLAS_NUM_THREADS=str(threads), MKL_NUM_THREADS=str(threads))
        out = tmp_path / f"t{threads}"
        proc = subprocess.run(
            [sys.executable, "-m", "impact_qlbs.cli", "batch", "--config", str(cfg), "--seed", "99",
             "--out", str(out), "--workers", str(workers)],
            env=env, capture_output=True, text=True, timeout=600,
        )
        assert proc.returncode == 0, proc.stderr
        outputs.append({f: (out / f).read_bytes() for f in FILES})
    same = [f for f in FILES if outputs[0][f] == outputs[1][f]]
    criterion(
        "Determinism of batch reports",
        len(same) == len(FILES),
        f"{len(same)}/{len(FILES)} report files byte-identical across 1 vs 8 threads (1 vs 2 workers)",
    )
