"""Exact risk of tabulated estimators under relative-entropy loss.

Two independent evaluation paths are provided.  ``pointwise_risk`` sums
Pr(D|rho) * D(rho || rho_hat(D)) over every dataset with compensated
summation.  ``RiskEvaluator`` instead uses the split

    D(rho || sigma) = sum_l l*log(l)  -  c(sigma)  -  r . v(sigma)

so the risk at any rho is  negentropy(rho) - E_rho[c] - r . E_rho[v], and the
expectations factor over measurement groups.  That makes risk evaluation on
large state grids cheap; it is what the max-risk search uses.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DesignMismatch, UnphysicalArgument
from .estimators import TabulatedEstimator
from .experiment import group_pmfs, log_likelihood_matrix
from .qstate import BlochState, StateKind, clamp_to_ball, log_features, neg_entropy, relative_entropy_array

_CHUNK = 2048


def _as_vector(estimator: TabulatedEstimator, rho) -> np.ndarray:
    if isinstance(rho, BlochState):
        if rho.kind is not estimator.design.kind:
            raise DesignMismatch(f"{rho.kind.value} state vs {estimator.design.kind.value} estimator")
        return rho.vector
    return clamp_to_ball(np.asarray(rho, dtype=float))


def pointwise_risk(estimator: TabulatedEstimator, rho) -> float:
    """Expected relative entropy sum_D Pr(D|rho) D(rho || rho_hat(D)), exact."""
    r = _as_vector(estimator, rho)
    table = estimator.table
    if not estimator.is_physical:
        raise UnphysicalArgument("risk needs a physical estimator table")
    p = np.exp(log_likelihood_matrix(estimator.design, r[None, :])[0])
    live = p > 0
    d = relative_entropy_array(r[None, :], table[live])
    if np.any(np.isinf(d)):
        return math.inf
    return math.fsum(p[live] * d)


def bayes_risk(prior, estimator: TabulatedEstimator) -> float:
    """Prior-weighted pointwise risk sum_i w_i d(rho_i)."""
    terms = []
    for w, s in zip(prior.weights, prior.supports):
        if w == 0:
            continue
        d = pointwise_risk(estimator, s)
        if math.isinf(d):
            return math.inf
        terms.append(w * d)
    return math.fsum(terms)


class RiskEvaluator:
    """Vectorized pointwise risk of one estimator at many states."""

    def __init__(self, estimator: TabulatedEstimator, threads: int | None = None):
        if not estimator.is_physical:
            raise UnphysicalArgument("risk needs a physical estimator table")
        self.estimator = estimator
        self.design = estimator.design
        self.threads = threads
        c, v = log_features(estimator.table)
        pure = ~np.isfinite(c)
        feats = np.concatenate([np.where(pure, 0.0, c)[:, None], np.where(pure[:, None], 0.0, v)], axis=1)
        self._features = feats.reshape(*self.design.shape, feats.shape[1])
        self._pure_idx = np.flatnonzero(pure)
        self._pure_counts = self.design.counts_array()[self._pure_idx]
        self._pure_states = estimator.table[self._pure_idx]

    def expectations(self, states: np.ndarray) -> np.ndarray:
        """E_rho[(c, v)] for each state row: shape (S, 1 + dim)."""
        pmfs = group_pmfs(self.design, states)
        out = pmfs[0] @ self._features.reshape(pmfs[0].shape[1], -1)
        for p in pmfs[1:]:
            out = out.reshape(len(states), p.shape[1], -1)
            out = np.einsum("sa,sar->sr", p, out)
        return out

    def _chunk(self, states: np.ndarray) -> np.ndarray:
        e = self.expectations(states)
        risk = neg_entropy(np.linalg.norm(states, axis=1)) - e[:, 0] - np.sum(states * e[:, 1:], axis=1)
        risk = np.maximum(risk, 0.0)
        if len(self._pure_idx):
            pmfs = group_pmfs(self.design, states)
            prob = np.ones((len(states), len(self._pure_idx)))
            for g, p in enumerate(pmfs):
                prob *= p[:, self._pure_counts[:, g]]
            same = np.all(np.abs(states[:, None, :] - self._pure_states[None, :, :]) <= 1e-15, axis=2)
            bad = np.any((prob > 0) & ~same, axis=1)
            risk = np.where(bad, np.inf, risk)
        return risk

    def risk(self, states) -> np.ndarray:
        states = clamp_to_ball(np.atleast_2d(np.asarray(states, dtype=float)))
        chunks = [states[i:i + _CHUNK] for i in range(0, len(states), _CHUNK)]
        if self.threads and self.threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                parts = list(pool.map(self._chunk, chunks))
        else:
            parts = [self._chunk(c) for c in chunks]
        return np.concatenate(parts) if parts else np.empty(0)


@dataclass
class SearchConfig:
    """Grid densities and refinement settings for the max-risk search."""

    n_radial: int = 200
    n_angular: int = 360
    n_sphere: int = 400
    n_shells: int = 100
    n_coin: int = 2001
    refine_top: int = 10
    refine_tol: float = 1e-9
    threads: int | None = None

    def scaled(self, factor: float) -> "SearchConfig":
        return SearchConfig(
            n_radial=int(self.n_radial * factor),
            n_angular=int(self.n_angular * factor),
            n_sphere=int(self.n_sphere * factor),
            n_shells=int(self.n_shells * factor),
            n_coin=int(self.n_coin * factor),
            refine_top=self.refine_top,
            refine_tol=self.refine_tol,
            threads=self.threads,
        )


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = np.pi * (1 + 5**0.5) * i
    rho = np.sqrt(1 - z * z)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


def search_grid(kind: StateKind, config: SearchConfig) -> np.ndarray:
    if kind is StateKind.COIN:
        return np.linspace(-1, 1, config.n_coin)[:, None]
    radii = np.linspace(0, 1, config.n_radial + 1)[1:]
    if kind is StateKind.REBIT:
        theta = 2 * np.pi * np.arange(config.n_angular) / config.n_angular
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    else:
        dirs = _fibonacci_sphere(config.n_sphere)
        radii = np.linspace(0, 1, config.n_shells + 1)[1:]
    pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, dirs.shape[1])
    return np.vstack([np.zeros((1, dirs.shape[1])), pts])


def _project(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.where(n > 1, x / np.where(n > 0, n, 1), x)


def compass_search(f, starts: np.ndarray, step: float, tol: float, max_evals: int = 20000):
    """Maximize ``f`` (vectorized over rows) from several starts inside the unit ball.

    Each start polls +-step along every coordinate axis, moves to the best
    improving neighbour, and halves its step when none improves.
    """
    x = _project(np.array(starts, dtype=float))
    fx = f(x)
    k, dim = x.shape
    steps = np.full(k, float(step))
    moves = np.concatenate([np.eye(dim), -np.eye(dim)])
    evals = k
    while np.any(steps > tol) and evals < max_evals:
        active = np.flatnonzero(steps > tol)
        cand = _project(x[active, None, :] + steps[active, None, None] * moves[None])
        fc = f(cand.reshape(-1, dim)).reshape(len(active), len(moves))
        evals += fc.size
        best = np.argmax(fc, axis=1)
        gain = fc[np.arange(len(active)), best] > fx[active]
        up = active[gain]
        x[up] = cand[gain, best[gain]]
        fx[up] = fc[gain, best[gain]]
        steps[active[~gain]] /= 2
    return x, fx


def max_risk(estimator: TabulatedEstimator, config: SearchConfig | None = None):
    """Grid search plus local refinement; returns (value, argmax BlochState).

    The value is a lower bound on the true maximum risk (it is attained).
    """
    config = config or SearchConfig()
    kind = estimator.design.kind
    ev = RiskEvaluator(estimator, config.threads)
    grid = search_grid(kind, config)
    vals = ev.risk(grid)
    if np.any(np.isinf(vals)):
        i = int(np.argmax(np.isinf(vals)))
        return math.inf, BlochState(kind, tuple(grid[i]))
    top = np.argsort(vals)[::-1][: config.refine_top]
    if kind is StateKind.COIN:
        step = 2.0 / (config.n_coin - 1)
    else:
        step = 1.0 / config.n_radial
    x, fx = compass_search(ev.risk, grid[top], step, config.refine_tol)
    best = int(np.argmax(fx))
    state = BlochState(kind, tuple(x[best]))
    return pointwise_risk(estimator, state), state


def risk_profile(estimator: TabulatedEstimator, axis, num_points: int = 200, threads=None):
    """Risk at r = t * axis for t on a uniform grid over [0, 1]."""
    axis = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(axis) - 1) > 1e-12:
        raise ValueError("axis must be a unit vector")
    t = np.linspace(0, 1, num_points)
    vals = RiskEvaluator(estimator, threads).risk(t[:, None] * axis[None, :])
    return list(zip(t.tolist(), vals.tolist()))


@dataclass
class RiskReport:
    pointwise_max: float
    argmax_state: BlochState
    bayes_risk: float | None = None
    profile: list | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "pointwise_max": _num(self.pointwise_max),
            "argmax_state": self.argmax_state.to_dict(),
            "bayes_risk": None if self.bayes_risk is None else _num(self.bayes_risk),
            "profile": self.profile,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _num(x: float):
    return "inf" if math.isinf(x) else x
