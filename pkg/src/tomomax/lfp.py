"""Least-favorable-prior solvers and minimax certificates.

For a discrete prior {x_i, w_i} with Bayes (posterior-mean) estimator, the
Bayes risk under relative entropy is

    F(w) = sum_D P(D) S(sigma_D) - sum_i w_i S(x_i),

which is concave in w, and dF/dw_i is exactly the pointwise risk of the
Bayes estimator at x_i.  So F(w) <= F* <= max_i risk_i gives a duality-gap
certificate for the weight problem, and at the optimum every support with
positive weight carries the same risk.  Any prior's Bayes risk bounds the
minimax risk from below; any estimator's maximum risk bounds it from above.
"""

from __future__ import annotations

import json
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import NonConvergenceWarning
from .estimators import NEAR_PURE, TabulatedEstimator, _shrink_into_ball, refine_near_pure
from .experiment import ExperimentDesign, log_likelihood_matrix
from .qstate import BlochState, StateKind, log_features, neg_entropy, sample_ball
from .risk import RiskEvaluator, SearchConfig, compass_search, max_risk, search_grid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiscretePrior:
    supports: tuple
    weights: tuple

    def __post_init__(self):
        supports = tuple(self.supports)
        weights = tuple(float(w) for w in self.weights)
        if not supports or len(supports) != len(weights):
            raise ValueError("need one weight per support point")
        if any(not isinstance(s, BlochState) for s in supports):
            raise TypeError("supports must be BlochState instances")
        if len({s.kind for s in supports}) != 1:
            raise ValueError("mixed state kinds in one prior")
        if any(w < 0 for w in weights) or abs(sum(weights) - 1) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        x = np.array([s.r for s in supports])
        if len(x) > 1:
            d = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=2)
            np.fill_diagonal(d, np.inf)
            if d.min() <= 1e-10:
                raise ValueError("duplicate support points")
        object.__setattr__(self, "supports", supports)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_arrays(cls, kind: StateKind, supports, weights) -> "DiscretePrior":
        x = np.atleast_2d(np.asarray(supports, dtype=float))
        w = np.asarray(weights, dtype=float)
        w = w / w.sum()
        return cls(tuple(BlochState(kind, tuple(r)) for r in x), tuple(w))

    @classmethod
    def point(cls, state: BlochState) -> "DiscretePrior":
        return cls((state,), (1.0,))

    @property
    def kind(self) -> StateKind:
        return self.supports[0].kind

    @property
    def support_array(self) -> np.ndarray:
        return np.array([s.r for s in self.supports], dtype=float)

    @property
    def weight_array(self) -> np.ndarray:
        return np.array(self.weights)

    def __len__(self):
        return len(self.supports)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "supports": [list(s.r) for s in self.supports],
                "weights": list(self.weights)}

    @classmethod
    def from_dict(cls, d: dict) -> "DiscretePrior":
        kind = StateKind(d["kind"])
        return cls(tuple(BlochState(kind, tuple(r)) for r in d["supports"]), tuple(d["weights"]))


def merge_close(x: np.ndarray, w: np.ndarray, tol: float = 1e-6):
    """Merge support points closer than ``tol``; weights are summed."""
    keep_x, keep_w = [], []
    for xi, wi in zip(x, w):
        for j, xj in enumerate(keep_x):
            if np.linalg.norm(xi - xj) < tol:
                keep_w[j] += wi
                break
        else:
            keep_x.append(np.array(xi))
            keep_w.append(float(wi))
    return np.array(keep_x), np.array(keep_w)


class BayesRiskModel:
    """Cached likelihoods for a fixed support set; evaluates F(w) and its gradient."""

    def __init__(self, design: ExperimentDesign, supports: np.ndarray, logl: np.ndarray | None = None):
        self.design = design
        self.x = np.atleast_2d(np.asarray(supports, dtype=float))
        if logl is None:
            logl = log_likelihood_matrix(design, self.x)
        self.logl = logl
        self.top = logl.max(axis=0)
        self.lik = np.exp(logl)
        # rows rescaled per dataset so the best support has likelihood 1
        self.scaled = np.exp(logl - self.top)
        self.negent = neg_entropy(np.linalg.norm(self.x, axis=1))
        self.evaluations = 0

    def replace(self, i: int, state) -> "BayesRiskModel":
        """A model with support ``i`` moved to ``state``; other rows are reused."""
        x = self.x.copy()
        x[i] = state
        logl = self.logl.copy()
        logl[i] = log_likelihood_matrix(self.design, x[i][None])[0]
        return BayesRiskModel(self.design, x, logl)

    def posterior_means(self, w: np.ndarray) -> np.ndarray:
        wl = w[:, None] * self.scaled
        z = wl.sum(axis=0)
        means = _shrink_into_ball((wl.T @ self.x) / z[:, None])
        near = np.linalg.norm(means, axis=1) > 1 - NEAR_PURE
        if np.any(near):
            with np.errstate(divide="ignore"):
                logpost = np.log(w)[:, None] + self.logl[:, near]
            logpost -= logsumexp(logpost, axis=0)
            means[near] = refine_near_pure(means[near], logpost, self.x)
        return means

    def evaluate(self, w: np.ndarray):
        """Return (F, risks at supports, Bayes table)."""
        self.evaluations += 1
        table = self.posterior_means(w)
        c, v = log_features(table)
        pure = ~np.isfinite(c)
        c = np.where(pure, 0.0, c)
        v = np.where(pure[:, None], 0.0, v)
        risks = self.negent - self.lik @ c - np.sum(self.x * (self.lik @ v), axis=1)
        risks = np.maximum(risks, 0.0)
        if pure.any():
            cols = np.flatnonzero(pure)
            differ = np.linalg.norm(self.x[:, None, :] - table[None, cols, :], axis=2) > 1e-15
            bad = np.any((self.lik[:, cols] > 0) & differ, axis=1)
            risks = np.where(bad, np.inf, risks)
        live = w > 0
        f = float(np.dot(w[live], risks[live]))
        return f, risks, table

    def hessian(self, w: np.ndarray, table: np.ndarray) -> np.ndarray:
        """Second derivatives of F(w); negative semidefinite.

        With s_D the posterior mean (|s| = b, direction u), a_i = x_i . u,
        t_D = sum_k w_k L_kD and the Frechet derivative of log at s_D,

            d2F/dw_i dw_j = -sum_D L_iD L_jD / t_D * [c0 + c1 (a_i + a_j)
                            + c2 a_i a_j + c3 x_i . x_j]

        with c0 = b^2/(1 - b^2), c1 = -b/(1 - b^2), c2 = 1/(1 - b^2) - atanh(b)/b
        and c3 = atanh(b)/b.  Likelihoods enter rescaled per dataset.
        """
        b = np.minimum(np.linalg.norm(table, axis=1), 1 - 1e-15)
        u = np.where(b[:, None] > 0, table / np.where(b > 0, b, 1)[:, None], 0.0)
        small = b < 1e-6
        ath = np.where(small, 1 + b * b / 3, np.arctanh(b) / np.where(small, 1, b))
        inv = 1 / (1 - b * b)
        c0 = b * b * inv
        c1 = -b * inv
        c2 = np.where(small, 2 * b * b / 3, inv - ath)
        c3 = ath
        t = w @ self.scaled
        k = np.exp(self.top) / t
        ls = self.scaled
        la = ls * (self.x @ u.T)
        h = (ls * (k * c0)) @ ls.T
        cross = (la * (k * c1)) @ ls.T
        h += cross + cross.T
        h += (la * (k * c2)) @ la.T
        h += ((ls * (k * c3)) @ ls.T) * (self.x @ self.x.T)
        return -h


@dataclass
class WeightSolution:
    weights: np.ndarray
    bayes_risk: float
    risks: np.ndarray
    table: np.ndarray
    gap: float
    iterations: int
    converged: bool


def _eg_steps(model, w, f, g, table, eta, rtol, n):
    """Up to ``n`` exponentiated-gradient steps; returns the updated state."""
    it = 0
    for it in range(1, n + 1):
        if np.max(g) - f <= rtol * f:
            break
        wn = w * np.exp(eta * (g - np.max(g)))
        wn /= wn.sum()
        fn, gn, tn = model.evaluate(wn)
        if fn >= f:
            w, f, g, table = wn, fn, gn, tn
            eta *= 1.5
        else:
            eta *= 0.3
            if eta < 1e-12:
                break
    return w, f, g, table, eta, it


def _simplex_qp(grad: np.ndarray, hess: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Maximize grad.(v - w) + (v - w).H.(v - w)/2 over the simplex (H < 0).

    Primal active-set method started at the feasible point ``w``; the working
    set holds the coordinates pinned at zero.
    """
    k = len(w)
    v = w.copy()
    free = v > 0
    # tiny relative ridge keeps the KKT systems nonsingular
    hr = hess - np.diag(1e-12 * np.abs(np.diag(hess)) + 1e-300)
    tol = 1e-13 * float(np.max(np.abs(grad)))
    for _ in range(10 * k + 50):
        c = grad + hr @ (v - w)
        idx = np.flatnonzero(free)
        m = len(idx)
        kkt = np.zeros((m + 1, m + 1))
        kkt[:m, :m] = hr[np.ix_(idx, idx)]
        kkt[:m, m] = -1.0
        kkt[m, :m] = 1.0
        sol = np.linalg.solve(kkt, np.concatenate([-c[idx], [0.0]]))
        p, mu = sol[:m], sol[m]
        trial = v[idx] + p
        if np.all(trial >= 0):
            v[idx] = trial
            c = grad + hr @ (v - w)
            out = np.flatnonzero(~free)
            if out.size:
                j = out[np.argmax(c[out])]
                if c[j] > mu + tol:
                    free[j] = True
                    continue
            break
        neg = np.flatnonzero(p < 0)
        ratios = v[idx[neg]] / -p[neg]
        b = int(np.argmin(ratios))
        v[idx] += ratios[b] * p
        v[idx[neg[b]]] = 0.0
        free[idx[neg[b]]] = False
    v = np.maximum(v, 0.0)
    return v / v.sum()


def _newton_steps(model, w, f, g, table, rtol, n):
    """Proximal Newton ascent of F on the simplex.

    The quadratic model uses the exact Hessian minus lam * diag(1/(w + eps)).
    lam shrinks after accepted steps and grows after rejected ones; a step is
    accepted when F does not drop and the certificate gap does not blow up.
    Large lam gives short, entropy-like steps that keep weights off zero.
    """
    k = len(w)
    eps = 1e-3 / k
    lam = 0.0
    it = 0
    for it in range(1, n + 1):
        gap = float(np.max(g) - f)
        if gap <= rtol * f:
            break
        h = model.hessian(w, table)
        lam_min = 1e-8 * float(np.median(np.abs(np.diag(h)) * (w + eps))) + 1e-300
        for _ in range(40):
            try:
                v = _simplex_qp(g, h - lam * np.diag(1 / (w + eps)), w)
            except np.linalg.LinAlgError:
                v = None
            if v is not None:
                fn, gn, tn = model.evaluate(v)
                gap_n = float(np.max(gn) - fn)
                if (fn > f or fn >= f - 1e-15 * abs(f) and gap_n < gap) and gap_n < max(2 * gap, rtol * fn):
                    break
            lam = max(10 * lam, lam_min)
        else:
            return w, f, g, table, it, False
        w, f, g, table = v, fn, gn, tn
        lam = lam / 10 if lam > 10 * lam_min else 0.0
    return w, f, g, table, it, True


def optimize_weights(model: BayesRiskModel, w0=None, rtol: float = 1e-6,
                     max_iter: int = 2000) -> WeightSolution:
    """Maximize F(w) on the simplex.

    A few exponentiated-gradient steps warm up, then Newton steps (exact
    Hessian, simplex-constrained quadratic subproblem) level the risks.  If Newton
    stalls the remaining budget goes back to exponentiated gradient.  Stops
    when the certificate max_i risk_i - F(w) is at most ``rtol * F``.
    """
    k = len(model.x)
    w = np.full(k, 1.0 / k) if w0 is None else np.asarray(w0, dtype=float) / np.sum(w0)
    f, g, table = model.evaluate(w)
    if k == 1:
        return WeightSolution(w, f, g, table, 0.0, 0, True)
    eta = 1.0 / max(float(np.ptp(g[np.isfinite(g)])), 1e-3)
    w, f, g, table, eta, n1 = _eg_steps(model, w, f, g, table, eta, rtol, min(20, max_iter))
    used = n1
    if np.max(g) - f > rtol * f and used < max_iter:
        w, f, g, table, n2, ok = _newton_steps(model, w, f, g, table, rtol, min(200, max_iter - used))
        used += n2
        if np.max(g) - f > rtol * f and used < max_iter:
            # exact zeros cannot regrow under multiplicative updates
            w = np.maximum(w, 1e-12)
            w /= w.sum()
            f, g, table = model.evaluate(w)
            w, f, g, table, eta, n3 = _eg_steps(model, w, f, g, table, eta, rtol, max_iter - used)
            used += n3
    gap = float(np.max(g) - f)
    return WeightSolution(w, f, g, table, gap, used, gap <= rtol * f)


def maximize_weights(supports, design: ExperimentDesign, init_weights=None, rtol: float = 1e-6,
                     max_iter: int = 20000) -> DiscretePrior:
    """Weights maximizing the Bayes risk with the support points held fixed."""
    x = np.array([s.r for s in supports]) if isinstance(supports[0], BlochState) else np.asarray(supports)
    sol = optimize_weights(BayesRiskModel(design, x), init_weights, rtol, max_iter)
    if not sol.converged:
        warnings.warn(f"weight optimization stopped with gap {sol.gap:.3g}", NonConvergenceWarning)
    w = np.maximum(sol.weights, 0)
    return DiscretePrior.from_arrays(design.kind, x, w / w.sum())


# ---------------------------------------------------------------------------


@dataclass
class LfpResult:
    prior: DiscretePrior
    estimator: TabulatedEstimator
    av_risk: float
    max_risk: float
    gap: float
    iterations: int
    wall_time: float
    algorithm: str
    converged: bool = True
    argmax: BlochState | None = None
    history: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.av_risk > self.max_risk + 1e-9:
            raise ValueError(f"certificate violated: av_risk {self.av_risk} > max_risk {self.max_risk}")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.av_risk + self.max_risk)

    def to_dict(self, embed_table: bool = True) -> dict:
        d = {
            "algorithm": self.algorithm,
            "design": self.estimator.design.to_dict(),
            "prior": self.prior.to_dict(),
            "av_risk": self.av_risk,
            "max_risk": self.max_risk,
            "gap": self.gap,
            "iterations": self.iterations,
            "wall_time": self.wall_time,
            "converged": self.converged,
            "argmax": None if self.argmax is None else self.argmax.to_dict(),
            "history": self.history,
            "config": self.config,
        }
        if embed_table:
            d["estimator"] = self.estimator.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict, estimator: TabulatedEstimator | None = None) -> "LfpResult":
        est = estimator if estimator is not None else TabulatedEstimator.from_dict(d["estimator"])
        return cls(
            prior=DiscretePrior.from_dict(d["prior"]),
            estimator=est,
            av_risk=d["av_risk"],
            max_risk=d["max_risk"],
            gap=d["gap"],
            iterations=d["iterations"],
            wall_time=d["wall_time"],
            algorithm=d["algorithm"],
            converged=d["converged"],
            argmax=None if d.get("argmax") is None else BlochState.from_dict(d["argmax"]),
            history=d.get("history", []),
            config=d.get("config", {}),
        )

    def to_json(self, embed_table: bool = True) -> str:
        return json.dumps(self.to_dict(embed_table), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "LfpResult":
        return cls.from_dict(json.loads(text))


def minimax_certificate(result: LfpResult) -> tuple[float, float]:
    """(lower, upper): the minimax risk lies between the Bayes risk and the max risk."""
    return result.av_risk, result.max_risk


def _relative_gap(av: float, mx: float) -> float:
    if av <= 0:
        return math.inf
    return abs(av - mx) / av


def _certify(design, x, w, provenance, search):
    model = BayesRiskModel(design, x)
    f, _, table = model.evaluate(w)
    est = TabulatedEstimator(design, table, provenance)
    mx, arg = max_risk(est, search)
    return f, est, mx, arg


# ---------------------------------------------------------------------------
# Algorithm: deterministic (Kempthorne-style) support growth


def _optimize_locations(design, x, w, rtol, step, tol, passes):
    """Alternate weight maximization with per-support compass search on locations."""
    model = BayesRiskModel(design, x)
    sol = optimize_weights(model, w, rtol)
    w = sol.weights
    f = sol.bayes_risk
    for _ in range(passes):
        f_start = f
        for i in np.argsort(-w):
            if w[i] <= 0:
                continue

            def objective(cands, i=i):
                return np.array([model.replace(i, c).evaluate(w)[0] for c in cands])

            xi, fi = compass_search(objective, x[i][None], step, tol, max_evals=400)
            if fi[0] > f:
                model = model.replace(i, xi[0])
                x = model.x
                f = fi[0]
        x, w = merge_close(x, w)
        model = BayesRiskModel(design, x)
        sol = optimize_weights(model, w, rtol)
        w, f = sol.weights, sol.bayes_risk
        if f - f_start <= 1e-10 * max(f, 1e-300):
            break
    return x, w, f


def kempthorne_lfp(design: ExperimentDesign, init_prior: DiscretePrior | None = None, tol: float = 1e-3,
                   mixing_alpha: float | None = None, max_iter: int = 200,
                   search: SearchConfig | None = None, weight_rtol: float = 1e-9,
                   location_step: float = 0.05, location_tol: float = 1e-6, location_passes: int = 5,
                   checkpoint: Callable[[LfpResult], None] | None = None) -> LfpResult:
    """Grow a least favorable prior one support at a time.

    Each round maximizes the Bayes risk over weights and support locations,
    certifies with the max risk of its Bayes estimator, and adds a support at
    the argmax with weight ``mixing_alpha`` (default 1/(K+1)) until the
    relative gap is at most ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if mixing_alpha is not None and not 0 < mixing_alpha < 1:
        raise ValueError("mixing_alpha must lie in (0, 1)")
    search = search or SearchConfig()
    t0 = time.perf_counter()
    if init_prior is None:
        x = np.zeros((1, design.kind.dim))
        w = np.ones(1)
    else:
        x, w = init_prior.support_array, init_prior.weight_array
    config = {"tol": tol, "mixing_alpha": mixing_alpha, "weight_rtol": weight_rtol,
              "location_step": location_step, "location_tol": location_tol}
    history = []
    result = None
    for it in range(1, max_iter + 1):
        x, w, _ = _optimize_locations(design, x, w, weight_rtol, location_step, location_tol, location_passes)
        keep = w > 0
        x, w = x[keep], w[keep] / w[keep].sum()
        av, est, mx, arg = _certify(design, x, w, f"Bayes estimator of LFP, kempthorne, tol={tol!r}", search)
        gap = _relative_gap(av, mx)
        history.append({"iteration": it, "av_risk": av, "max_risk": mx, "supports": len(x)})
        log.info("kempthorne it=%d K=%d av=%.8g max=%.8g gap=%.3g", it, len(x), av, mx, gap)
        result = LfpResult(DiscretePrior.from_arrays(design.kind, x, w), est, av, mx, gap, it,
                           time.perf_counter() - t0, "kempthorne", gap <= tol, arg, list(history), config)
        if checkpoint:
            checkpoint(result)
        if gap <= tol:
            return result
        alpha = mixing_alpha if mixing_alpha is not None else 1.0 / (len(x) + 1)
        if len(x) > 0:
            # pseudocode shrinks old weights by alpha/(len-1); clamp at zero and renormalize
            w = np.maximum(w - alpha / len(x), 0.0)
            w = (1 - alpha) * w / w.sum() if w.sum() > 0 else np.full(len(x), (1 - alpha) / len(x))
        x = np.vstack([x, arg.vector])
        w = np.append(w, alpha)
        x, w = merge_close(x, w)
    warnings.warn(f"kempthorne_lfp hit max_iter={max_iter} with gap {result.gap:.3g}", NonConvergenceWarning)
    return result


# ---------------------------------------------------------------------------
# Algorithm: Monte Carlo support resampling


def default_sigma(design: ExperimentDesign) -> float:
    return 0.5 / math.sqrt(design.N)


def _risk_peaks(estimator, search, floor, count, spacing):
    """Up to ``count`` search-grid points with risk above ``floor``, at least ``spacing`` apart."""
    grid = search_grid(estimator.design.kind, search)
    vals = RiskEvaluator(estimator, search.threads).risk(grid)
    chosen = []
    for i in np.argsort(vals)[::-1]:
        if vals[i] <= floor or len(chosen) >= count:
            break
        if all(np.linalg.norm(grid[i] - grid[j]) >= spacing for j in chosen):
            chosen.append(i)
    return grid[chosen]


def mc_lfp(design: ExperimentDesign, n_init: int = 100, tol: float = 1e-3, weight_tol: float = 1e-4,
           m_per_point: int = 5, sigma: float | None = None, seed: int = 0, max_iter: int = 50,
           search: SearchConfig | None = None, weight_rtol: float = 1e-6,
           init_prior: DiscretePrior | None = None, add_argmax: bool = True, n_peaks: int = 10,
           checkpoint: Callable[[LfpResult], None] | None = None) -> LfpResult:
    """Monte Carlo LFP search: optimize weights on random supports, prune, resample.

    Supports start Hilbert-Schmidt uniform.  After each weight optimization the
    supports with weight below ``weight_tol`` are dropped and, while the
    relative gap exceeds ``tol``, each survivor spawns ``m_per_point`` Gaussian
    children (std ``sigma``, projected into the ball).  With ``add_argmax`` the
    current max-risk state and up to ``n_peaks`` further risk peaks (grid
    points with risk above the Bayes risk, ``sigma`` apart) join the survivors
    and spawn children too; otherwise a region the weights abandoned can never
    be re-seeded.  Deterministic in ``seed``.
    """
    if n_init < 1 or tol <= 0 or sigma is not None and sigma <= 0 or weight_tol < 0:
        raise ValueError("invalid mc_lfp hyperparameters")
    sigma = default_sigma(design) if sigma is None else sigma
    search = search or SearchConfig()
    rng = np.random.default_rng(seed)
    dim = design.kind.dim
    t0 = time.perf_counter()
    if init_prior is None:
        x = sample_ball(dim, n_init, rng)
        w = np.full(n_init, 1.0 / n_init)
    else:
        x, w = init_prior.support_array, init_prior.weight_array
    config = {"n_init": n_init, "tol": tol, "weight_tol": weight_tol, "m_per_point": m_per_point,
              "sigma": sigma, "seed": seed, "weight_rtol": weight_rtol, "add_argmax": add_argmax, "n_peaks": n_peaks}
    history = []
    best = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        x, w = merge_close(x, w)
        sol = optimize_weights(BayesRiskModel(design, x), w, weight_rtol)
        av = sol.bayes_risk
        est = TabulatedEstimator(design, sol.table, f"Bayes estimator of LFP, mc, tol={tol!r}")
        mx, arg = max_risk(est, search)
        gap = _relative_gap(av, mx)
        history.append({"iteration": it, "av_risk": av, "max_risk": mx, "supports": len(x)})
        log.info("mc it=%d K=%d av=%.8g max=%.8g gap=%.3g", it, len(x), av, mx, gap)
        live = sol.weights > 0
        current = LfpResult(DiscretePrior.from_arrays(design.kind, x[live], sol.weights[live]), est, av, mx, gap,
                            it, time.perf_counter() - t0, "mc", gap <= tol, arg, list(history), config)
        if best is None or gap < best.gap:
            best = current
        if checkpoint:
            checkpoint(current)
        if gap <= tol:
            converged = True
            break
        keep = sol.weights >= weight_tol
        x = x[keep]
        parents = x
        if add_argmax:
            peaks = _risk_peaks(est, search, av, n_peaks, sigma) if n_peaks > 0 else np.empty((0, dim))
            parents = np.vstack([x, arg.vector[None], peaks])
        children = parents[:, None, :] + sigma * rng.standard_normal((len(parents), m_per_point, dim))
        children = _shrink_into_ball(children.reshape(-1, dim))
        x = np.vstack([parents, children])
        w = np.full(len(x), 1.0 / len(x))
    if not converged:
        warnings.warn(f"mc_lfp hit max_iter={max_iter}; returning best certificate", NonConvergenceWarning)
    # the certified prior keeps its sub-threshold weights: dropping them can
    # change the Bayes estimator a lot where the likelihoods barely overlap
    best.iterations = it
    best.wall_time = time.perf_counter() - t0
    best.history = history
    return best


__all__ = [
    "BayesRiskModel",
    "DiscretePrior",
    "LfpResult",
    "kempthorne_lfp",
    "maximize_weights",
    "mc_lfp",
    "minimax_certificate",
    "optimize_weights",
]
