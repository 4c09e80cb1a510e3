"""Unaffected FX dynamics and the supply-curve order book.

The large trader faces a linear supply curve ``F + M u``.  Each repositioning
``du`` permanently shifts the mid-price by ``2 beta M du``; the rate the trader
actually trades at (quoted, or implied when the optimal actions drive it) is
the mid-price plus the same-step shift.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from . import rng
from .errors import ConfigError, NonPositiveRate

if TYPE_CHECKING:
    from .hedging import StrategyMatrix

PATH_KINDS = ("unaffected", "quoted", "implied")


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class MarketParams:
    """Static model inputs.  Defaults are the table2 preset base case."""

    F0: float = 2.4
    K: float = 3.0
    mu: float = 0.05
    sigma: float = 0.05
    r_d: float = 0.05
    r_f: float = 0.0  # recorded only; does not enter the drift
    tau: float = 0.3
    T: int = 30
    n_mc: int = 1000
    F_prev: float = 2.3

    def __post_init__(self):
        for name in ("F0", "F_prev", "K", "tau"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"must be a positive finite number, got {v!r}", f"market.{name}")
        for name in ("mu", "sigma", "r_d", "r_f"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError("must be finite", f"market.{name}")
        if self.sigma < 0:
            raise ConfigError(f"must be >= 0, got {self.sigma!r}", "market.sigma")
        if int(self.T) != self.T or self.T < 2:
            raise ConfigError(f"must be an integer >= 2, got {self.T!r}", "market.T")
        if int(self.n_mc) != self.n_mc or self.n_mc < 1:
            raise ConfigError(f"must be an integer >= 1, got {self.n_mc!r}", "market.n_mc")

    @property
    def dt(self) -> float:
        return self.tau / self.T

    @property
    def gamma(self) -> float:
        """One-step discount factor."""
        return math.exp(-self.r_d * self.dt)


@dataclass(frozen=True)
class PathMatrix:
    """``n_mc x (T+1)`` exchange rates, indexed ``[path, time]``."""

    values: np.ndarray
    kind: str = "unaffected"

    def __post_init__(self):
        if self.kind not in PATH_KINDS:
            raise ValueError(f"unknown path kind {self.kind!r}")
        v = _frozen(self.values)
        if v.ndim != 2 or v.shape[1] < 2:
            raise ValueError(f"path matrix must be 2-D with >= 2 columns, got shape {v.shape}")
        bad = np.argwhere(~(v > 0))
        if len(bad):
            k, t = bad[0]
            raise NonPositiveRate(int(k), int(t), float(v[k, t]))
        object.__setattr__(self, "values", v)

    @property
    def n_mc(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1] - 1

    def take(self, rows) -> "PathMatrix":
        return PathMatrix(self.values[rows], self.kind)


@dataclass(frozen=True)
class ImpactSeries:
    """Per-path, per-time market impact ``beta`` and book thinness ``m``."""

    beta: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        beta, m = _frozen(self.beta), _frozen(self.m)
        if beta.shape != m.shape or beta.ndim != 2:
            raise ValueError(f"beta/m shape mismatch: {beta.shape} vs {m.shape}")
        if not np.all((beta >= 0) & (beta < 1)):
            raise ValueError("market impact beta must lie in [0, 1)")
        if not np.all(m > 0):
            raise ValueError("book thinness m must be positive")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "m", m)

    def take(self, rows) -> "ImpactSeries":
        return ImpactSeries(self.beta[rows], self.m[rows])


@dataclass(frozen=True)
class StateMatrix:
    """Log-return states ``S[k, t]``."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = _frozen(self.values)
        if not np.all(np.isfinite(v)):
            raise ValueError("states must be finite")
        object.__setattr__(self, "values", v)


def simulate_unaffected(params: MarketParams, seed: int) -> PathMatrix:
    """GBM paths by the exact log scheme, one substream per path."""
    T, dt = params.T, params.dt
    drift = (params.mu - 0.5 * params.sigma**2) * dt
    vol = params.sigma * math.sqrt(dt)
    z = np.empty((params.n_mc, T))
    for k, g in enumerate(rng.streams(seed, "gbm", params.n_mc)):
        z[k] = g.standard_normal(T)
    log_incr = np.concatenate([np.zeros((params.n_mc, 1)), drift + vol * z], axis=1)
    return PathMatrix(params.F0 * np.exp(np.cumsum(log_incr, axis=1)), "unaffected")


def _uniform_rows(seed, purpose, n_rows, n_cols, lo, hi, shared):
    if shared:
        row = rng.stream(seed, purpose, 0).uniform(lo, hi, n_cols)
        return np.broadcast_to(row, (n_rows, n_cols)).copy()
    out = np.empty((n_rows, n_cols))
    for k, g in enumerate(rng.streams(seed, purpose, n_rows)):
        out[k] = g.uniform(lo, hi, n_cols)
    return out


def sample_impact(
    n_mc: int,
    T: int,
    beta_range: tuple[float, float],
    m_range: tuple[float, float],
    seed: int,
    share_across_paths: bool = False,
) -> ImpactSeries:
    """Uniform ``beta`` and ``m`` on half-open ranges, one value per (path, time).

    With ``share_across_paths`` a single row per quantity is drawn and reused
    by every path.
    """
    beta = _uniform_rows(seed, "beta", n_mc, T + 1, *beta_range, share_across_paths)
    m = _uniform_rows(seed, "thinness", n_mc, T + 1, *m_range, share_across_paths)
    # numpy's uniform may round up to the upper bound
    beta = np.minimum(beta, np.nextafter(1.0, 0.0))
    return ImpactSeries(beta, m)


def supply_price(f: float, m: float, u: float) -> float:
    """Marginal rate on the linear supply curve for an order of size ``u``."""
    return f + m * u


def book_density(m: float) -> float:
    """Uniform order-book density implied by thinness ``m``."""
    if not m > 0:
        raise ConfigError(f"thinness must be positive, got {m!r}", "m")
    return 1.0 / (2.0 * m)


def order_cost(f: float, m: float, u: float) -> float:
    """Cost of walking the book for ``u`` units: ``f u + m u^2``."""
    return f * u + m * u * u


def impact_increments(positions: np.ndarray, beta: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Per-step permanent shifts ``2 beta_t m_t du_t`` with ``du_0 = u_0``."""
    du = np.diff(positions, axis=1, prepend=0.0)
    return 2.0 * beta * m * du


def impacted_rates(unaffected: np.ndarray, positions: np.ndarray, impact: ImpactSeries) -> np.ndarray:
    """Raw impacted rates, without the positivity check."""
    if not (unaffected.shape == positions.shape == impact.beta.shape):
        raise ValueError(
            f"shape mismatch: rates {unaffected.shape}, strategy {positions.shape}, impact {impact.beta.shape}"
        )
    # mid-price carries shifts j < t; the traded rate adds the shift at t
    return unaffected + np.cumsum(impact_increments(positions, impact.beta, impact.m), axis=1)


def propagate_impact(unaffected: PathMatrix, strategy: "StrategyMatrix", impact: ImpactSeries) -> PathMatrix:
    """Rates seen after the strategy's orders have moved the book.

    The result is ``quoted`` for a postulated strategy and ``implied`` for an
    optimal one.  Raises :class:`NonPositiveRate` if any rate is <= 0.
    """
    if not np.all(strategy.positions[:, -1] == 0):
        raise ValueError("strategy must liquidate at maturity")
    kind = "implied" if strategy.kind == "optimal" else "quoted"
    return PathMatrix(impacted_rates(unaffected.values, strategy.positions, impact), kind)


def nonpositive_rows(values: np.ndarray) -> np.ndarray:
    """Indices of paths with any non-positive (or NaN) rate."""
    return np.flatnonzero(~np.all(values > 0, axis=1))


def state_variables(paths: PathMatrix, f_prev: float) -> StateMatrix:
    """One-step log returns, anchored at ``f_prev`` for ``t = 0``."""
    if not f_prev > 0:
        raise NonPositiveRate(-1, -1, f_prev)
    v = paths.values
    prev = np.concatenate([np.full((v.shape[0], 1), float(f_prev)), v[:, :-1]], axis=1)
    return StateMatrix(np.log(v / prev))


def write_path_csv(matrix, path) -> None:
    """``path,t0,...,tT`` layout, shared by path, strategy and portfolio matrices."""
    values = getattr(matrix, "values", None)
    if values is None:
        values = matrix.positions
    n, cols = values.shape
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path"] + [f"t{t}" for t in range(cols)])
        for k in range(n):
            w.writerow([k] + [f"{x:.17g}" for x in values[k]])


def read_path_csv(path, kind: str = "unaffected") -> PathMatrix:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[0] != "path" or header[1:] != [f"t{t}" for t in range(len(header) - 1)]:
        raise ValueError(f"{path}: unexpected header {header[:3]}...")
    return PathMatrix(np.array([[float(x) for x in r[1:]] for r in body]), kind)
