"""Cubic B-spline state basis and the joint state-action feature vector.

The Q-function at each time step is ``A(a)^T W Phi(s)`` with
``A(a) = [1, a, a^2/2]``.  Flattening ``W`` row-major gives the weight vector
whose inner product with ``psi(s, a)`` reproduces the same value; block ``b``
of ``psi`` (entries ``b*n_basis .. (b+1)*n_basis - 1``) is ``A_b(a) Phi(s)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market import StateMatrix, _frozen

DEGENERATE_PAD = 1e-6


@dataclass(frozen=True)
class KnotVector:
    knots: np.ndarray
    degree: int = 3

    def __post_init__(self):
        k = _frozen(self.knots)
        p = self.degree
        if p < 0 or k.ndim != 1 or len(k) < 2 * (p + 1):
            raise ValueError("knot vector too short for the requested degree")
        if np.any(np.diff(k) < 0):
            raise ValueError("knots must be nondecreasing")
        if not (np.all(k[: p + 1] == k[0]) and np.all(k[-p - 1 :] == k[-1])):
            raise ValueError("knot vector must be clamped")
        if np.any(np.diff(k[p:-p]) <= 0):
            raise ValueError("interior knots must be strictly increasing")
        object.__setattr__(self, "knots", k)

    @property
    def n_basis(self) -> int:
        return len(self.knots) - self.degree - 1

    @property
    def lo(self) -> float:
        return float(self.knots[0])

    @property
    def hi(self) -> float:
        return float(self.knots[-1])


def build_knots(states, n_basis: int = 12, degree: int = 3) -> KnotVector:
    """Clamped knots, uniform over the global range of ``states``."""
    s = np.asarray(states.values if isinstance(states, StateMatrix) else states, dtype=float)
    if s.size == 0:
        raise ValueError("no states to place knots over")
    if not np.all(np.isfinite(s)):
        raise ValueError("states must be finite")
    if n_basis <= degree:
        raise ValueError(f"n_basis ({n_basis}) must exceed degree ({degree})")
    lo, hi = float(s.min()), float(s.max())
    if hi == lo:
        lo, hi = lo - DEGENERATE_PAD, hi + DEGENERATE_PAD
    breaks = np.linspace(lo, hi, n_basis - degree + 1)
    breaks[0], breaks[-1] = lo, hi
    knots = np.concatenate([np.full(degree, lo), breaks, np.full(degree, hi)])
    return KnotVector(knots, degree)


def eval_basis(knots: KnotVector, s) -> np.ndarray:
    """B-spline values at ``s`` (clamped into the knot span).

    Returns shape ``(n_basis,)`` for scalar ``s`` and ``(len(s), n_basis)``
    otherwise.
    """
    scalar = np.ndim(s) == 0
    x = np.clip(np.atleast_1d(np.asarray(s, dtype=float)).ravel(), knots.lo, knots.hi)
    U, p, n = knots.knots, knots.degree, knots.n_basis
    span = np.clip(np.searchsorted(U, x, side="right") - 1, p, n - 1)

    # Cox-de Boor in triangular form: only the p+1 functions live on the span
    m = x.size
    N = np.zeros((m, p + 1))
    N[:, 0] = 1.0
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - U[span + 1 - j]
        right[:, j] = U[span + j] - x
        saved = np.zeros(m)
        for r in range(j):
            temp = N[:, r] / (right[:, r + 1] + left[:, j - r])
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved

    out = np.zeros((m, n))
    cols = span[:, None] - p + np.arange(p + 1)
    np.put_along_axis(out, cols, N, axis=1)
    return out[0] if scalar else out


def action_vector(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return np.stack([np.ones_like(a), a, 0.5 * a * a], axis=-1)


def psi(s, a, knots: KnotVector) -> np.ndarray:
    """Joint features ``vec(A(a) outer Phi(s))``, length ``3 * n_basis``."""
    phi = eval_basis(knots, s)
    A = action_vector(a)
    if phi.ndim == 1:
        return (A[:, None] * phi[None, :]).ravel()
    A = np.broadcast_to(A, (phi.shape[0], 3))
    return (A[:, :, None] * phi[:, None, :]).reshape(phi.shape[0], -1)
