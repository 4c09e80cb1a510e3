"""Single runs and seeded batches of the full pricing and hedging pipeline."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng
from .config import ExperimentConfig
from .errors import ModelError
from .features import build_knots
from .fqi import FitConfig, assemble_dataset, concavity_violations, fit, optimal_strategy, q0_price, qlbs_price
from .hedging import fair_price, portfolio_recursion, rewards, sample_strategy, transaction_costs
from .market import PathMatrix, impacted_rates, nonpositive_rows, sample_impact, simulate_unaffected, state_variables


@dataclass(frozen=True)
class RunReport:
    run_index: int
    seed_used: int
    fair_price: float
    qlbs_price: float
    squared_error: float
    mean_cost_postulated: float
    mean_cost_optimal: float
    concavity_violations: int
    dropped_paths: int
    dropped_implied: int
    q0_diagnostic: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RunFailure:
    run_index: int
    seed_used: int
    error: str


@dataclass
class BatchReport:
    config: ExperimentConfig
    runs: list
    failures: list = field(default_factory=list)
    wall_time: float = 0.0
    # {kind: (path_ids, rates)} from the first successful run
    sample_paths: dict = field(default_factory=dict, repr=False)

    @property
    def mse(self) -> float:
        return _mean([r.squared_error for r in self.runs])

    @property
    def avg_Lp(self) -> float:
        return _mean([r.mean_cost_postulated for r in self.runs])

    @property
    def avg_Lstar(self) -> float:
        return _mean([r.mean_cost_optimal for r in self.runs])

    def aggregates(self) -> dict:
        return {
            "n_runs": len(self.runs),
            "n_failed": len(self.failures),
            "mse": self.mse,
            "avg_Lp": self.avg_Lp,
            "avg_Lstar": self.avg_Lstar,
        }


def _mean(xs) -> float:
    return float(np.mean(xs)) if len(xs) else math.nan


def _screen(raw: np.ndarray, kind: str, mode: str):
    """Wrap raw rates, dropping or rejecting paths with a non-positive entry."""
    if mode == "error":
        return PathMatrix(raw, kind), np.arange(raw.shape[0])
    keep = np.setdiff1d(np.arange(raw.shape[0]), nonpositive_rows(raw))
    if keep.size < 2:
        raise ModelError(f"only {keep.size} {kind} paths left after dropping non-positive rates")
    return PathMatrix(raw[keep], kind), keep


def _execute(config: ExperimentConfig, run_seed: int, n_keep: int = 0):
    p = config.market
    lam = config.risk_aversion
    unaffected = simulate_unaffected(p, run_seed)
    strategy = sample_strategy(*config.strategy_range, p.n_mc, p.T, run_seed)
    impact = sample_impact(p.n_mc, p.T, config.beta_range, config.m_range, run_seed, config.share_across_paths)

    raw = impacted_rates(unaffected.values, strategy.positions, impact)
    quoted, keep = _screen(raw, "quoted", config.on_nonpositive)
    if keep.size < p.n_mc:
        unaffected, strategy, impact = unaffected.take(keep), strategy.take(keep), impact.take(keep)

    states = state_variables(quoted, p.F_prev)
    portfolio = portfolio_recursion(quoted, strategy, p)
    reward = rewards(quoted, strategy, portfolio, p, lam)
    data = assemble_dataset(quoted, strategy, reward, impact, states, portfolio)
    knots = build_knots(states, config.n_basis, config.degree)
    model = fit(data, knots, FitConfig(p.gamma, lam, config.ridge, config.fit_bounds))

    optimal = optimal_strategy(model, states)
    implied, keep2 = _screen(
        impacted_rates(unaffected.values, optimal.positions, impact), "implied", config.on_nonpositive
    )

    fair = fair_price(quoted, p)
    qlbs = qlbs_price(portfolio.values[:, -1], p, lam)
    report = RunReport(
        run_index=-1,
        seed_used=int(run_seed),
        fair_price=fair,
        qlbs_price=qlbs,
        squared_error=(qlbs - fair) ** 2,
        mean_cost_postulated=float(np.mean(transaction_costs(quoted, strategy, config.kappa))),
        mean_cost_optimal=float(np.mean(transaction_costs(implied, optimal.take(keep2), config.kappa))),
        concavity_violations=sum(concavity_violations(model, t, states.values[:, t]) for t in range(model.T)),
        dropped_paths=int(p.n_mc - keep.size),
        dropped_implied=int(keep.size - keep2.size),
        q0_diagnostic=q0_price(model, states),
    )

    samples = {}
    if n_keep:
        # path ids refer to the original simulation index
        ids = keep[:n_keep]
        sel = np.isin(keep, ids)
        samples["unaffected"] = (ids, unaffected.values[sel])
        samples["quoted"] = (ids, quoted.values[sel])
        ok = np.isin(keep[keep2], ids)
        samples["implied"] = (keep[keep2][ok], implied.values[ok])
    return report, samples


def run_experiment(config: ExperimentConfig, run_seed: int) -> RunReport:
    """One full pass: simulate, fit, roll out, price and cost.  Deterministic in ``run_seed``."""
    try:
        return _execute(config, run_seed)[0]
    except ModelError as exc:
        exc.args = (f"seed {run_seed}: {exc}",)
        exc.seed = run_seed
        raise


def _job(args):
    config, i, seed, n_keep, skip = args
    try:
        rep, samples = _execute(config, seed, n_keep)
    except ModelError as exc:
        if not skip:
            exc.args = (f"run {i} (seed {seed}): {exc}",)
            exc.run_index, exc.seed = i, seed
            raise
        return RunFailure(i, seed, f"{type(exc).__name__}: {exc}"), {}
    return RunReport(**{**rep.to_dict(), "run_index": i}), samples


def run_batch(config: ExperimentConfig, workers: int = 1, skip_failed: bool = False) -> BatchReport:
    """``config.n_runs`` independent runs; run ``i`` uses ``rng.run_seed(config.seed, i)``.

    Results are collected by run index, so the report does not depend on
    ``workers``.
    """
    start = time.perf_counter()
    jobs = []
    for i in range(config.n_runs):
        jobs.append((config, i, rng.run_seed(config.seed, i), config.n_sample_paths, skip_failed))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]

    runs = [r for r, _ in results if isinstance(r, RunReport)]
    failures = [r for r, _ in results if isinstance(r, RunFailure)]
    if not runs:
        raise ModelError(f"all {len(failures)} runs failed; first: {failures[0].error}")
    sample = next((s for r, s in results if isinstance(r, RunReport)), {})
    return BatchReport(config, runs, failures, time.perf_counter() - start, sample)
