"""Backward Fitted Q-Iteration on quadratic-in-action Q-functions.

At each time step the Q-function is ``u0(s) + a u1(s) + a^2/2 u2(s)`` where
``(u0, u1, u2) = W_t Phi(s)``.  Weights are fitted from ``t = T-1`` down to
``0`` by ridge-regularized least squares against the one-step Bellman targets
``R_t + gamma max_a Q_{t+1}(S_{t+1}, a)``, starting from the terminal value
``-Pi_T - lambda Var[Pi_T]``.

The ridge penalty shrinks toward the constant function at the mean target
rather than toward zero: targets are demeaned before the solve and the mean is
added back to the constant-in-``a`` block, which is exact because the basis
sums to one.  Shrinking toward zero drags ``u0`` away from its (negative)
level and, at small ridge, lets the max over actions feed spline wiggles back
into the next step until the weights blow up.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _io
from .errors import SingularSystem
from .features import KnotVector, eval_basis, psi
from .hedging import PortfolioMatrix, RewardMatrix, StrategyMatrix, terminal_variance
from .market import ImpactSeries, MarketParams, PathMatrix, StateMatrix, _frozen, propagate_impact

SCHEMA_VERSION = 1
REDUCTION_BLOCK = 128


@dataclass(frozen=True)
class Dataset:
    """Transition tuples ``(S_t, S_{t+1}, a_t, R_t, beta_t, M_t)`` for ``t < T``
    plus the terminal states and portfolio values.  All arrays are
    ``n_mc x T`` except the two terminal vectors."""

    s: np.ndarray
    s_next: np.ndarray
    a: np.ndarray
    r: np.ndarray
    beta: np.ndarray
    m: np.ndarray
    s_T: np.ndarray
    pi_T: np.ndarray

    def __post_init__(self):
        shape = np.shape(self.s)
        for name in ("s", "s_next", "a", "r", "beta", "m", "s_T", "pi_T"):
            v = _frozen(getattr(self, name))
            want = shape if name not in ("s_T", "pi_T") else shape[:1]
            if v.shape != want:
                raise ValueError(f"dataset field {name!r} has shape {v.shape}, expected {want}")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"dataset field {name!r} has non-finite entries")
            object.__setattr__(self, name, v)

    @property
    def n_mc(self) -> int:
        return self.s.shape[0]

    @property
    def T(self) -> int:
        return self.s.shape[1]

    def __len__(self) -> int:
        return self.s.size

    def save(self, path) -> None:
        np.savez(path, **{k: getattr(self, k) for k in self.__dataclass_fields__})

    @classmethod
    def load(cls, path) -> "Dataset":
        with np.load(path) as z:
            return cls(**{k: z[k] for k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class FitConfig:
    gamma: float
    risk_aversion: float = 0.001
    ridge: float = 1.0
    action_bounds: tuple[float, float] = (-5.0, 5.0)

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")
        lo, hi = self.action_bounds
        if not lo < hi:
            raise ValueError(f"action bounds must satisfy lo < hi, got {self.action_bounds}")


@dataclass(frozen=True)
class FittedModel:
    weights: tuple  # T arrays of shape (3, n_basis)
    knots: KnotVector
    gamma: float
    risk_aversion: float
    ridge: float
    action_bounds: tuple[float, float] = (-5.0, 5.0)

    def __post_init__(self):
        w = tuple(_frozen(x) for x in self.weights)
        for t, x in enumerate(w):
            if x.shape != (3, self.knots.n_basis):
                raise ValueError(f"weights[{t}] has shape {x.shape}")
            if not np.all(np.isfinite(x)):
                raise ValueError(f"weights[{t}] are not finite")
        object.__setattr__(self, "weights", w)
        FitConfig(self.gamma, self.risk_aversion, self.ridge, tuple(self.action_bounds))

    @property
    def T(self) -> int:
        return len(self.weights)

    def to_json(self) -> str:
        return _io.dumps(
            {
                "schema_version": SCHEMA_VERSION,
                "degree": self.knots.degree,
                "knots": self.knots.knots,
                "weights": [w.tolist() for w in self.weights],
                "gamma": self.gamma,
                "lambda": self.risk_aversion,
                "ridge": self.ridge,
                "action_bounds": list(self.action_bounds),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "FittedModel":
        d = json.loads(text)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema version {d.get('schema_version')!r}")
        return cls(
            weights=tuple(np.array(w, dtype=float) for w in d["weights"]),
            knots=KnotVector(np.array(d["knots"], dtype=float), int(d["degree"])),
            gamma=d["gamma"],
            risk_aversion=d["lambda"],
            ridge=d["ridge"],
            action_bounds=tuple(d["action_bounds"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "FittedModel":
        return cls.from_json(Path(path).read_text())


class UWRows(NamedTuple):
    """Rows of ``W_t Phi(s)``: constant, linear and curvature coefficients in ``a``."""

    u0: np.ndarray
    u1: np.ndarray
    u2: np.ndarray


def assemble_dataset(
    quoted: PathMatrix,
    strategy: StrategyMatrix,
    rewards: RewardMatrix,
    impact: ImpactSeries,
    states: StateMatrix,
    portfolio: PortfolioMatrix,
) -> Dataset:
    """Pack one run into transition tuples.  Rates enter only through the states."""
    shape = quoted.values.shape
    for name, arr in (
        ("strategy", strategy.positions),
        ("rewards", rewards.values),
        ("impact", impact.beta),
        ("states", states.values),
        ("portfolio", portfolio.values),
    ):
        if arr.shape != shape:
            raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
    S = states.values
    return Dataset(
        s=S[:, :-1],
        s_next=S[:, 1:],
        a=strategy.positions[:, :-1],
        r=rewards.values[:, :-1],
        beta=impact.beta[:, :-1],
        m=impact.m[:, :-1],
        s_T=S[:, -1],
        pi_T=portfolio.values[:, -1],
    )


def _uw(W: np.ndarray, knots: KnotVector, s) -> UWRows:
    phi = eval_basis(knots, np.atleast_1d(s))
    u = np.einsum("bj,kj->bk", W, phi)
    return UWRows(u[0], u[1], u[2])


def _quadratic(u: UWRows, a):
    return u.u0 + a * u.u1 + 0.5 * a * a * u.u2


def _argmax(u: UWRows, bounds) -> np.ndarray:
    lo, hi = bounds
    concave = u.u2 < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        vertex = np.clip(-u.u1 / np.where(concave, u.u2, -1.0), lo, hi)
    endpoint = np.where(_quadratic(u, lo) >= _quadratic(u, hi), lo, hi)
    return np.where(concave, vertex, endpoint).astype(float)


def u_w(model: FittedModel, t: int, s) -> UWRows:
    return _uw(model.weights[t], model.knots, s)


def optimal_action(model: FittedModel, t: int, s):
    """Maximizer of the fitted quadratic within the action bounds.

    Concave fits use the vertex ``-u1/u2`` (clipped); otherwise the better
    endpoint is returned.
    """
    a = _argmax(u_w(model, t, s), model.action_bounds)
    return float(a[0]) if np.ndim(s) == 0 else a


def concavity_violations(model: FittedModel, t: int, s) -> int:
    """Number of states where the fitted quadratic is not strictly concave in ``a``."""
    return int(np.count_nonzero(u_w(model, t, s).u2 >= 0))


def optimal_q(model: FittedModel, t: int, s, a):
    q = _quadratic(u_w(model, t, s), np.asarray(a, dtype=float))
    return float(q[0]) if np.ndim(s) == 0 and np.ndim(a) == 0 else q


def _tree_sum(parts):
    while len(parts) > 1:
        parts = [parts[i] + parts[i + 1] if i + 1 < len(parts) else parts[i] for i in range(0, len(parts), 2)]
    return parts[0]


def normal_equations(features: np.ndarray, targets: np.ndarray, ridge: float) -> tuple[np.ndarray, np.ndarray]:
    """``(sum psi psi^T + ridge I, sum psi y)`` accumulated over fixed blocks of
    paths and combined pairwise, so the result does not depend on BLAS
    threading."""
    # einsum's inner loops follow memory layout, so fix it
    features = np.ascontiguousarray(features, dtype=float)
    targets = np.ascontiguousarray(targets, dtype=float)
    n, d = features.shape
    grams, moments = [], []
    for i in range(0, max(n, 1), REDUCTION_BLOCK):
        P = features[i : i + REDUCTION_BLOCK]
        grams.append(np.einsum("ki,kj->ij", P, P))
        moments.append(np.einsum("ki,k->i", P, targets[i : i + REDUCTION_BLOCK]))
    return _tree_sum(grams) + ridge * np.eye(d), _tree_sum(moments)


def ridge_solve(features: np.ndarray, targets: np.ndarray, ridge: float, n_basis: int) -> np.ndarray:
    """Weights minimizing ``|P w - y|^2 + ridge |w - ybar e|^2``, ``e`` the constant-in-``a`` block."""
    ybar = float(np.mean(targets))
    S, M = normal_equations(features, targets - ybar, ridge)
    w = np.linalg.solve(S, M)
    w[:n_basis] += ybar
    return w


def terminal_q(pi_T: np.ndarray, risk_aversion: float) -> np.ndarray:
    return -pi_T - risk_aversion * terminal_variance(pi_T)


def next_values(model: FittedModel, dataset: Dataset, t: int) -> np.ndarray:
    """``max_a Q_{t+1}(S_{t+1}, a)`` per path, or the terminal value when ``t+1 == T``."""
    if t + 1 == dataset.T:
        return terminal_q(dataset.pi_T, model.risk_aversion)
    u = u_w(model, t + 1, dataset.s_next[:, t])
    return _quadratic(u, _argmax(u, model.action_bounds))


def targets(model: FittedModel, dataset: Dataset, t: int) -> np.ndarray:
    """Regression targets used when fitting ``W_t``."""
    return dataset.r[:, t] + model.gamma * next_values(model, dataset, t)


def fit(dataset: Dataset, knots: KnotVector, config: FitConfig) -> FittedModel:
    """Backward pass over ``t = T-1, ..., 0``; each step is one ridge solve."""
    nb = knots.n_basis
    if dataset.n_mc < 3 * nb:
        warnings.warn(
            f"{dataset.n_mc} paths for {3 * nb} features per time step; the fit will lean on the ridge term",
            stacklevel=2,
        )
    T = dataset.T
    weights: list = [None] * T
    q_next = terminal_q(dataset.pi_T, config.risk_aversion)
    for t in range(T - 1, -1, -1):
        y = dataset.r[:, t] + config.gamma * q_next
        P = psi(dataset.s[:, t], dataset.a[:, t], knots)
        try:
            w = ridge_solve(P, y, config.ridge, nb)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(t, str(exc)) from exc
        if not np.all(np.isfinite(w)):
            raise SingularSystem(t, "non-finite weights")
        weights[t] = w.reshape(3, nb)
        if t > 0:
            u = _uw(weights[t], knots, dataset.s_next[:, t - 1])
            q_next = _quadratic(u, _argmax(u, config.action_bounds))
    return FittedModel(
        weights=tuple(weights),
        knots=knots,
        gamma=config.gamma,
        risk_aversion=config.risk_aversion,
        ridge=config.ridge,
        action_bounds=tuple(config.action_bounds),
    )


def qlbs_price(pi_T: np.ndarray, params: MarketParams, risk_aversion: float) -> float:
    """Negative discounted terminal Q averaged over paths.

    Equals the discounted mean terminal portfolio plus the variance premium
    ``e^{-r_d tau} lambda Var[Pi_T]``.
    """
    pi_T = np.asarray(pi_T, dtype=float)
    if pi_T.size < 2:
        raise ValueError("at least two paths are needed to form variances")
    q_T = terminal_q(pi_T, risk_aversion)
    # discount outside the mean, as for the fair price, so lambda = 0 reproduces it bit for bit
    return math.exp(-params.r_d * params.tau) * float(np.mean(-q_T))


def q0_price(model: FittedModel, states: StateMatrix) -> float:
    """``-mean Q_0(S_0, a*_0)``.  Diagnostic only; not used for reporting prices."""
    s0 = states.values[:, 0]
    return -float(np.mean(optimal_q(model, 0, s0, optimal_action(model, 0, s0))))


def optimal_strategy(model: FittedModel, states: StateMatrix) -> StrategyMatrix:
    S = states.values
    a = np.zeros_like(S)
    for t in range(model.T):
        a[:, t] = optimal_action(model, t, S[:, t])
    return StrategyMatrix(a, "optimal")


def implied_rollout(
    model: FittedModel, unaffected: PathMatrix, impact: ImpactSeries, quoted_states: StateMatrix
) -> tuple[PathMatrix, StrategyMatrix]:
    """Drive the order book with the greedy actions taken at the training states."""
    optimal = optimal_strategy(model, quoted_states)
    return propagate_impact(unaffected, optimal, impact), optimal
