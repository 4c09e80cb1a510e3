"""Hedge strategies, the self-financing portfolio, one-step rewards and costs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .market import MarketParams, PathMatrix, _frozen

STRATEGY_KINDS = ("postulated", "optimal")


@dataclass(frozen=True)
class StrategyMatrix:
    """Hedge positions ``u[k, t]``; the final column is always zero."""

    positions: np.ndarray
    kind: str = "postulated"

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        u = _frozen(self.positions)
        if u.ndim != 2:
            raise ValueError("strategy must be 2-D")
        if not np.all(u[:, -1] == 0):
            raise ValueError("hedge position at maturity must be zero")
        if not np.all(np.isfinite(u)):
            raise ValueError("hedge positions must be finite")
        object.__setattr__(self, "positions", u)

    @classmethod
    def liquidating(cls, positions, kind: str = "postulated") -> "StrategyMatrix":
        """Build from positions, forcing the maturity column to zero."""
        u = np.array(positions, dtype=float, copy=True)
        u[:, -1] = 0.0
        return cls(u, kind)

    def take(self, rows) -> "StrategyMatrix":
        return StrategyMatrix(self.positions[rows], self.kind)


@dataclass(frozen=True)
class PortfolioMatrix:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))


@dataclass(frozen=True)
class RewardMatrix:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))


def sample_strategy(lo: float, hi: float, n_mc: int, T: int, seed: int) -> StrategyMatrix:
    """i.i.d. Uniform[lo, hi) positions for ``t < T``; zero at maturity."""
    if lo > hi:
        raise ValueError(f"empty strategy range [{lo}, {hi})")
    u = np.zeros((n_mc, T + 1))
    for k, g in enumerate(rng.streams(seed, "strategy", n_mc)):
        u[k, :T] = g.uniform(lo, hi, T)
    return StrategyMatrix(u, "postulated")


def payoff(f_T, K: float):
    """Put payoff ``max(K - F, 0)``."""
    return np.maximum(K - np.asarray(f_T, dtype=float), 0.0) if np.ndim(f_T) else max(K - f_T, 0.0)


def rate_increments(rates: np.ndarray, r_d: float, dt: float) -> np.ndarray:
    """``dF_t = F_{t+1} - e^{r_d dt} F_t`` for ``t = 0..T-1``."""
    return rates[:, 1:] - math.exp(r_d * dt) * rates[:, :-1]


def portfolio_recursion(quoted: PathMatrix, strategy: StrategyMatrix, params: MarketParams) -> PortfolioMatrix:
    """Roll the hedge portfolio back from the payoff at maturity."""
    F, u = quoted.values, strategy.positions
    if F.shape != u.shape:
        raise ValueError(f"shape mismatch: rates {F.shape} vs strategy {u.shape}")
    dF = rate_increments(F, params.r_d, params.dt)
    disc = params.gamma
    pi = np.empty_like(F)
    pi[:, -1] = payoff(F[:, -1], params.K)
    for t in range(F.shape[1] - 2, -1, -1):
        pi[:, t] = disc * (pi[:, t + 1] - u[:, t] * dF[:, t])
    return PortfolioMatrix(pi)


def rewards(
    quoted: PathMatrix,
    strategy: StrategyMatrix,
    portfolio: PortfolioMatrix,
    params: MarketParams,
    risk_aversion: float,
) -> RewardMatrix:
    """Drift gain less the risk-aversion-weighted one-step portfolio variance.

    Hatted quantities are deviations from the cross-sectional mean at each
    time, so the variance term is realized per path.  The terminal column is
    the constant ``-lambda Var[Pi_T]``.
    """
    F, a, pi = quoted.values, strategy.positions, portfolio.values
    n = F.shape[0]
    if n < 2:
        raise ValueError("at least two paths are needed to form variances")
    g = params.gamma
    dF = rate_increments(F, params.r_d, params.dt)
    dF_hat = dF - dF.mean(axis=0)
    pi_hat = pi[:, 1:] - pi[:, 1:].mean(axis=0)
    at = a[:, :-1]
    R = np.empty_like(F)
    R[:, :-1] = g * at * dF - risk_aversion * g**2 * (pi_hat**2 - 2.0 * at * dF_hat * pi_hat + at**2 * dF_hat**2)
    R[:, -1] = -risk_aversion * terminal_variance(pi[:, -1])
    return RewardMatrix(R)


def terminal_variance(pi_T: np.ndarray) -> float:
    """Cross-sectional sample variance (``ddof=1``) of terminal portfolio values."""
    return float(np.var(pi_T, ddof=1))


def transaction_costs(paths: PathMatrix, strategy: StrategyMatrix, kappa: float) -> np.ndarray:
    """Per-path total proportional cost ``sum_t kappa |F_t da_t|``, ``da_0 = a_0``."""
    F, a = paths.values, strategy.positions
    if F.shape != a.shape:
        raise ValueError(f"shape mismatch: rates {F.shape} vs strategy {a.shape}")
    da = np.diff(a, axis=1, prepend=0.0)
    return kappa * np.abs(F * da).sum(axis=1)


def fair_price(quoted: PathMatrix, params: MarketParams) -> float:
    """Discounted Monte Carlo mean of the put payoff on the traded rates."""
    return math.exp(-params.r_d * params.tau) * float(np.mean(payoff(quoted.values[:, -1], params.K)))


def write_cost_csv(costs: np.ndarray, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "total_cost"])
        for k, c in enumerate(costs):
            w.writerow([k, f"{c:.17g}"])
