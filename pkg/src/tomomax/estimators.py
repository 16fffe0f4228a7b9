"""Estimators: linear inversion, MLE, hedged MLE, Bayesian mean, and tables.

Every estimator maps a dataset (tuple of "+1" counts per measurement group)
to a Bloch vector.  ``TabulatedEstimator`` stores such a map densely over all
datasets of a design; the risk and LFP code only ever works with tables.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar
from scipy.special import logsumexp, xlogy

from .errors import ZeroEvidence
from .experiment import DEFAULT_CAP, ExperimentDesign, enumerate_datasets, log_likelihood_matrix
from .qstate import EPS_PHYS, BlochState, StateKind, UnphysicalPoint, make_state

if TYPE_CHECKING:
    from .lfp import DiscretePrior


@dataclass(eq=False)
class TabulatedEstimator:
    """Dense map from every dataset (lexicographic index) to a Bloch vector."""

    design: ExperimentDesign
    table: np.ndarray
    provenance: str = ""
    allow_unphysical: bool = False
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.table = np.array(self.table, dtype=float).reshape(self.design.n_datasets, self.design.kind.dim)
        self.table.setflags(write=False)
        norms = np.linalg.norm(self.table, axis=1)
        if not self.allow_unphysical and np.any(norms > 1 + EPS_PHYS):
            raise ValueError("table has unphysical entries; set allow_unphysical for linear inversion")

    def __len__(self):
        return self.table.shape[0]

    def estimate(self, dataset) -> BlochState | UnphysicalPoint:
        return make_state(self.design.kind, self.table[self.design.index(dataset)])

    @property
    def is_physical(self) -> bool:
        return bool(np.all(np.linalg.norm(self.table, axis=1) <= 1 + EPS_PHYS))

    def to_dict(self) -> dict:
        return {
            "design": self.design.to_dict(),
            "provenance": self.provenance,
            "allow_unphysical": self.allow_unphysical,
            "flags": self.flags,
            "table": self.table.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TabulatedEstimator":
        return cls(
            ExperimentDesign.from_dict(d["design"]),
            np.array(d["table"], dtype=float),
            d.get("provenance", ""),
            d.get("allow_unphysical", False),
            d.get("flags", {}),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "TabulatedEstimator":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        g = len(self.design.shots)
        comps = ["x", "y", "z"][: self.design.kind.dim] if self.design.kind is not StateKind.COIN else ["z"]
        writer.writerow([f"n{i}" for i in range(g)] + [f"r_{c}" for c in comps])
        for counts, r in zip(self.design.counts_array(), self.table):
            writer.writerow([int(n) for n in counts] + [repr(float(x)) for x in r])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# linear inversion


def _inversion_solution(design: ExperimentDesign, counts: np.ndarray) -> np.ndarray:
    """Least-squares solution of axes . r = 2 n/M - 1 for an array of datasets."""
    a = design.axes_array
    f = 2 * np.asarray(counts, dtype=float) / np.array(design.shots) - 1
    if np.allclose(a @ a.T, np.eye(a.shape[0]), atol=0, rtol=0):
        return f @ a
    return np.linalg.lstsq(a, f.T, rcond=None)[0].T


def linear_inversion(design: ExperimentDesign, dataset) -> BlochState | UnphysicalPoint:
    counts = design.check_dataset(dataset)
    r = _inversion_solution(design, np.array([counts]))[0]
    return make_state(design.kind, r)


def linear_inversion_table(design: ExperimentDesign) -> TabulatedEstimator:
    table = _inversion_solution(design, design.counts_array())
    return TabulatedEstimator(design, table, "linear inversion", allow_unphysical=True)


# ---------------------------------------------------------------------------
# likelihood maximization


def _objective(design, counts, beta, r):
    """Log of det(rho)^beta * L(rho) (binomial constants dropped), batched over r."""
    r = np.atleast_2d(r)
    u = np.clip(r @ design.axes_array.T, -1.0, 1.0)
    m = np.array(design.shots)
    val = np.sum(xlogy(counts, 1 + u) + xlogy(m - counts, 1 - u), axis=1)
    if beta:
        s = np.sum(r * r, axis=1)
        with np.errstate(divide="ignore"):
            val = val + beta * np.log(np.maximum(1 - s, 0.0))
    return val


def _gradient(design, counts, r):
    """Gradient in r of the (unhedged) log-likelihood at a single point."""
    a = design.axes_array
    u = a @ r
    m = np.array(design.shots)
    coef = np.where(counts > 0, counts / (1 + u), 0.0) - np.where(m - counts > 0, (m - counts) / (1 - u), 0.0)
    return coef @ a


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = np.pi * (1 + 5**0.5) * i
    rho = np.sqrt(1 - z * z)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


def _boundary_max(design, counts, beta=0.0) -> np.ndarray:
    """Maximize the log-likelihood over the unit sphere |r| = 1."""
    dim = design.kind.dim
    f = lambda r: _objective(design, counts[None, :], beta, r)  # noqa: E731
    if dim == 1:
        cand = np.array([[-1.0], [1.0]])
        return cand[int(np.argmax(f(cand)))]
    if dim == 2:
        n = 4096
        theta = 2 * np.pi * np.arange(n) / n
        vals = f(np.stack([np.cos(theta), np.sin(theta)], axis=1))
        k = int(np.argmax(vals))
        h = 2 * np.pi / n

        def slope(t):
            r = np.array([np.cos(t), np.sin(t)])
            return _gradient(design, counts, r) @ np.array([-np.sin(t), np.cos(t)])

        lo, hi = theta[k] - h, theta[k] + h
        with np.errstate(divide="ignore", invalid="ignore"):
            s_lo, s_hi = slope(lo), slope(hi)
        if np.isfinite(s_lo) and np.isfinite(s_hi) and s_lo > 0 > s_hi:
            t = brentq(slope, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        else:
            res = minimize_scalar(lambda t: -f(np.array([[np.cos(t), np.sin(t)]]))[0],
                                  bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
            t = res.x
        if f(np.array([[np.cos(t), np.sin(t)]]))[0] < vals[k]:
            t = theta[k]
        return np.array([np.cos(t), np.sin(t)])
    pts = _fibonacci_sphere(8192)
    vals = f(pts)
    p0 = pts[int(np.argmax(vals))]

    def to_xyz(ang):
        th, ph = ang
        return np.array([[np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)]])

    ang0 = np.array([np.arccos(np.clip(p0[2], -1, 1)), np.arctan2(p0[1], p0[0])])
    res = minimize(lambda a: -f(to_xyz(a))[0], ang0, method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
    best = to_xyz(res.x)[0]
    return best if f(best[None])[0] >= vals.max() else p0


def _newton_interior(design, counts, beta, r0, max_iter=200, tol=1e-15):
    """Damped Newton ascent of the hedged log-likelihood, batched, inside |r| < 1.

    ``counts`` has shape (B, G), ``r0`` shape (B, dim) strictly interior.
    Returns (r, converged) where ``converged`` is false for rows whose iterates
    pressed against the sphere (only possible when beta == 0).
    """
    a = design.axes_array
    m = np.array(design.shots, dtype=float)
    dim = a.shape[1]
    r = np.array(r0, dtype=float)
    counts = np.asarray(counts, dtype=float)
    active = np.ones(len(r), dtype=bool)
    converged = np.zeros(len(r), dtype=bool)
    eye = np.eye(dim)
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        ra, na = r[idx], counts[idx]
        u = ra @ a.T
        wp = na / (1 + u)
        wm = (m - na) / (1 - u)
        grad = (wp - wm) @ a
        hw = na / (1 + u) ** 2 + (m - na) / (1 - u) ** 2
        hess = -np.einsum("bg,gi,gj->bij", hw, a, a)
        if beta:
            s = np.sum(ra * ra, axis=1)
            grad = grad - 2 * beta * ra / (1 - s)[:, None]
            hess = hess - 2 * beta * (eye[None] / (1 - s)[:, None, None]
                                      + 2 * np.einsum("bi,bj->bij", ra, ra) / ((1 - s) ** 2)[:, None, None])
        # tiny ridge keeps rank-deficient designs solvable when beta == 0
        step = -np.linalg.solve(hess - 1e-12 * eye[None], grad[..., None])[..., 0]
        dec = np.sum(grad * step, axis=1)
        done = (dec < tol) | (np.linalg.norm(step, axis=1) < 1e-14)
        converged[idx[done]] = True
        active[idx[done]] = False
        keep = ~done
        if not keep.any():
            continue
        idx, ra, na, step, dec = idx[keep], ra[keep], na[keep], step[keep], dec[keep]
        f0 = _objective_rows(design, na, beta, ra)
        t = np.ones(len(idx))
        for _ in range(60):
            trial = ra + t[:, None] * step
            inside = np.sum(trial * trial, axis=1) < 1 - 1e-15
            ft = np.where(inside, _objective_rows(design, na, beta, np.where(inside[:, None], trial, 0.0)), -np.inf)
            # near the optimum f differences drown in rounding; take full steps there
            ok = (ft >= f0 + 1e-4 * t * dec) | (inside & (t == 1) & (dec < 1e-8))
            if ok.all():
                break
            t = np.where(ok, t, t / 2)
        stuck = t < 1e-12
        r[idx] = ra + np.where(stuck, 0.0, t)[:, None] * step
        if stuck.any():
            active[idx[stuck]] = False
    return r, converged


def _objective_rows(design, counts, beta, r):
    """Row-wise objective: counts[i] paired with r[i]."""
    u = np.clip(r @ design.axes_array.T, -1.0, 1.0)
    m = np.array(design.shots)
    val = np.sum(xlogy(counts, 1 + u) + xlogy(m - counts, 1 - u), axis=1)
    if beta:
        s = np.sum(r * r, axis=1)
        with np.errstate(divide="ignore"):
            val = val + beta * np.log(np.maximum(1 - s, 0.0))
    return val


def _full_row_rank(design) -> bool:
    a = design.axes_array
    return np.linalg.matrix_rank(a) == a.shape[0]


def _mle_rows(design: ExperimentDesign, counts: np.ndarray) -> np.ndarray:
    counts = np.atleast_2d(counts)
    li = _inversion_solution(design, counts)
    out = np.empty_like(li)
    norms = np.linalg.norm(li, axis=1)
    exact = _full_row_rank(design)
    for i, (c, r, n) in enumerate(zip(counts, li, norms)):
        if exact and n <= 1 + EPS_PHYS:
            out[i] = r / n if n > 1 else r
            continue
        if not exact:
            ri, ok = _newton_interior(design, c[None].astype(float), 0.0, np.zeros((1, design.kind.dim)))
            if ok[0] and np.linalg.norm(ri[0]) < 1 - 1e-9:
                out[i] = ri[0]
                continue
        out[i] = _boundary_max(design, c.astype(float))
    return out


def mle(design: ExperimentDesign, dataset) -> BlochState:
    """Maximum-likelihood state; equals linear inversion whenever that is physical."""
    counts = np.array(design.check_dataset(dataset))
    return BlochState(design.kind, tuple(_mle_rows(design, counts)[0]))


def mle_table(design: ExperimentDesign) -> TabulatedEstimator:
    return TabulatedEstimator(design, _mle_rows(design, design.counts_array()), "maximum likelihood")


def _hml_rows(design, counts, beta_hedge):
    counts = np.atleast_2d(counts).astype(float)
    r, ok = _newton_interior(design, counts, float(beta_hedge), np.zeros((len(counts), design.kind.dim)))
    if not ok.all():
        from .errors import InnerSolverFailure

        raise InnerSolverFailure(f"HML Newton iteration failed on {int((~ok).sum())} datasets")
    return r


def hml(design: ExperimentDesign, dataset, beta_hedge: float) -> BlochState:
    """Hedged MLE: argmax det(rho)^beta * L(rho); always full rank."""
    if beta_hedge <= 0:
        raise ValueError("beta_hedge must be positive")
    counts = np.array(design.check_dataset(dataset))
    return BlochState(design.kind, tuple(_hml_rows(design, counts, beta_hedge)[0]))


def hml_table(design: ExperimentDesign, beta_hedge: float) -> TabulatedEstimator:
    if beta_hedge <= 0:
        raise ValueError("beta_hedge must be positive")
    r = _hml_rows(design, design.counts_array(), beta_hedge)
    return TabulatedEstimator(design, r, f"hedged maximum likelihood, beta={beta_hedge!r}")


# ---------------------------------------------------------------------------
# Bayesian mean


def posterior_mean_rows(log_lik: np.ndarray, log_w: np.ndarray, supports: np.ndarray) -> np.ndarray:
    """Posterior means for each dataset column of ``log_lik`` (K, n)."""
    logpost = log_lik + log_w[:, None]
    with np.errstate(invalid="ignore"):
        lse = logsumexp(logpost, axis=0)
    if np.any(~np.isfinite(lse)):
        raise ZeroEvidence("every support point assigns zero likelihood to some dataset")
    post = np.exp(logpost - lse)
    return refine_near_pure(post.T @ supports, logpost - lse, supports)


#: Posterior means closer than this to the sphere get their radius recomputed.
NEAR_PURE = 1e-8
_BELOW_ONE = float(np.nextafter(1.0, 0.0))


def refine_near_pure(means: np.ndarray, logpost: np.ndarray, supports: np.ndarray) -> np.ndarray:
    """Recompute the radius of near-pure posterior means without cancellation.

    For sigma = sum_j p_j rho_j,  1 - |s|^2 = sum_jk p_j p_k (1 - x_j . x_k),
    a quadratic form with nonnegative entries that stays accurate when the
    direct norm rounds to 1.  Only an exactly pure posterior (all mass on one
    pure support) keeps radius 1; otherwise the radius is at most the largest
    double below 1, so underflow never manufactures an infinite loss.
    ``logpost`` holds log posterior weights (any normalization), shape (K, n).
    """
    b = np.linalg.norm(means, axis=1)
    rows = np.flatnonzero(b > 1 - NEAR_PURE)
    if not len(rows):
        return means
    means = means.copy()
    lp = logpost[:, rows]
    p = np.exp(lp - lp.max(axis=0))
    gap = np.maximum(1 - supports @ supports.T, 0.0)
    defect = np.sum(p * (gap @ p), axis=0) / p.sum(axis=0) ** 2
    u = means[rows] / b[rows, None]
    radius = np.minimum(np.sqrt(np.maximum(1 - defect, 0.0)), _BELOW_ONE)
    for j, d in enumerate(rows):
        if defect[j] == 0:
            live = supports[lp[:, j] > -np.inf]
            if np.all(np.abs(np.linalg.norm(live, axis=1) - 1) == 0) and np.all(live == live[0]):
                radius[j] = 1.0
    means[rows] = u * radius[:, None]
    return means


def bayes_mean(prior: "DiscretePrior", design: ExperimentDesign, dataset) -> BlochState:
    """Posterior mean of the Bloch vector under a discrete prior."""
    counts = design.check_dataset(dataset)
    supports = prior.support_array
    ll = log_likelihood_matrix(design, supports)[:, design.index(counts)]
    with np.errstate(divide="ignore"):
        log_w = np.log(prior.weight_array)
    r = _shrink_into_ball(posterior_mean_rows(ll[:, None], log_w, supports))[0]
    return BlochState(design.kind, tuple(r))


def bayes_table(prior: "DiscretePrior", design: ExperimentDesign, provenance: str = "") -> TabulatedEstimator:
    supports = prior.support_array
    ll = log_likelihood_matrix(design, supports)
    with np.errstate(divide="ignore"):
        log_w = np.log(prior.weight_array)
    table = posterior_mean_rows(ll, log_w, supports)
    return TabulatedEstimator(design, _shrink_into_ball(table), provenance or "Bayesian mean")


def _shrink_into_ball(table: np.ndarray) -> np.ndarray:
    # convex combinations can overshoot |r| = 1 by rounding only
    n = np.linalg.norm(table, axis=1, keepdims=True)
    return np.where(n > 1, table / np.where(n > 0, n, 1), table)


# ---------------------------------------------------------------------------


def tabulate(estimator: Callable, design: ExperimentDesign, cap: int = DEFAULT_CAP,
             threads: int | None = None, provenance: str | None = None) -> TabulatedEstimator:
    """Apply ``estimator(design, dataset)`` to every dataset of the design."""
    datasets = list(enumerate_datasets(design, cap))
    call = lambda d: estimator(design, d)  # noqa: E731
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            states = list(pool.map(call, datasets))
    else:
        states = [call(d) for d in datasets]
    table = np.array([s.r for s in states], dtype=float)
    unphysical = any(isinstance(s, UnphysicalPoint) for s in states)
    name = provenance if provenance is not None else getattr(estimator, "__name__", repr(estimator))
    return TabulatedEstimator(design, table, name, allow_unphysical=unphysical)


def builtin_table(name: str, design: ExperimentDesign, beta_hedge: float | None = None) -> TabulatedEstimator:
    """Table for a named estimator: 'li', 'mle' or 'hml'."""
    if name in ("li", "linear-inversion"):
        return linear_inversion_table(design)
    if name == "mle":
        return mle_table(design)
    if name == "hml":
        return hml_table(design, 0.04 if beta_hedge is None else beta_hedge)
    raise ValueError(f"unknown estimator {name!r}")

