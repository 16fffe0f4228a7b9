"""Noisy classical coins, bimodal priors and the analytic risk lower bounds.

A noisy coin has heads probability p, but trial k reports the wrong outcome
with known probability alpha_k, so the recorded "1" has probability

    q_k(p) = alpha_k + p (1 - 2 alpha_k).

In the Bloch picture (z = 2p - 1) this is the one-dimensional design with
axis 1 - 2 alpha_k, which is how ``NoisyCoinModel.design`` feeds the generic
LFP and risk machinery.  Trials with equal alpha are binned into one group.

The bimodal prior puts mass 1/2 on each of p0 and p1.  Its posterior mean and
risk drive the lower bounds; the qubit version places mass on a pure state
and on the same state mixed with weight p1 of its orthogonal complement.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import logsumexp, xlogy

from .experiment import ExperimentDesign, enumerate_datasets, likelihood, resolution
from .qstate import BlochState, StateKind

#: Outcome-vector enumeration is used for exact sums up to this many trials.
ENUMERATION_LIMIT = 20


@dataclass(frozen=True)
class NoisyCoinModel:
    alphas: tuple

    def __post_init__(self):
        alphas = tuple(float(a) for a in np.ravel(self.alphas))
        if not alphas:
            raise ValueError("need at least one trial")
        if any(not 0 <= a < 0.5 for a in alphas):
            raise ValueError("error probabilities must lie in [0, 1/2)")
        object.__setattr__(self, "alphas", alphas)

    @classmethod
    def uniform(cls, n_trials: int, alpha: float) -> "NoisyCoinModel":
        return cls((alpha,) * n_trials)

    @property
    def N(self) -> int:
        return len(self.alphas)

    @property
    def alpha_array(self) -> np.ndarray:
        return np.array(self.alphas)

    def resolutions(self) -> np.ndarray:
        return np.array([resolution(a) for a in self.alphas])

    def mean_resolution(self) -> float:
        return float(np.mean(self.resolutions()))

    def design(self) -> ExperimentDesign:
        """One binomial group per distinct alpha (sorted), with axis 1 - 2 alpha."""
        values, counts = np.unique(self.alpha_array, return_counts=True)
        return ExperimentDesign(StateKind.COIN, tuple((1 - 2 * a,) for a in values), tuple(int(c) for c in counts))

    def binned_counts(self, outcomes) -> tuple:
        """Sufficient statistic of an outcome vector: number of 1s per alpha bin."""
        outcomes = _check_outcomes(self, outcomes)
        values = np.unique(self.alpha_array)
        return tuple(int(outcomes[self.alpha_array == a].sum()) for a in values)


@dataclass(frozen=True)
class BimodalPrior:
    p0: float
    p1: float

    def __post_init__(self):
        for p in (self.p0, self.p1):
            if not 0 <= p <= 1:
                raise ValueError("bimodal supports must lie in [0, 1]")
        if self.p0 == self.p1:
            raise ValueError("bimodal prior needs two distinct supports")


def default_p1(n_trials: int, beta_bar: float) -> float:
    """Second support 1/sqrt(beta_bar N) used by the lower-bound construction."""
    return 1.0 / math.sqrt(beta_bar * n_trials)


def _check_outcomes(model: NoisyCoinModel, outcomes) -> np.ndarray:
    out = np.asarray(outcomes, dtype=int).ravel()
    if len(out) != model.N or np.any((out != 0) & (out != 1)):
        raise ValueError(f"need a binary outcome vector of length {model.N}")
    return out


def coin_log_likelihood(model: NoisyCoinModel, outcomes, p: float) -> float:
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    out = _check_outcomes(model, outcomes)
    q = model.alpha_array + p * (1 - 2 * model.alpha_array)
    return float(np.sum(xlogy(out, q) + xlogy(1 - out, 1 - q)))


def coin_likelihood(model: NoisyCoinModel, outcomes, p: float) -> float:
    """Pr(outcomes | p) = prod_k q_k^n_k (1 - q_k)^(1 - n_k)."""
    return math.exp(coin_log_likelihood(model, outcomes, p))


def bimodal_bayes_p(model: NoisyCoinModel, prior: BimodalPrior, outcomes) -> float:
    """Posterior mean p1 / (1 + Lambda), Lambda = Pr(n|p0) / Pr(n|p1), with p0 = 0."""
    if prior.p0 != 0:
        raise ValueError("the likelihood-ratio form assumes p0 = 0")
    l0 = coin_log_likelihood(model, outcomes, prior.p0)
    l1 = coin_log_likelihood(model, outcomes, prior.p1)
    if l1 == -math.inf:
        return 0.0
    # p1 / (1 + exp(l0 - l1)) computed as p1 * sigmoid(l1 - l0)
    return prior.p1 * math.exp(-np.logaddexp(0.0, l0 - l1))


def qubit_bimodal_bayes(design: ExperimentDesign, psi_axis, p1: float, dataset) -> BlochState:
    """Posterior mean for mass 1/2 on |psi><psi| and 1/2 on (1 - p1)|psi><psi| + p1 |psi_perp><psi_perp|."""
    if not 0 < p1 < 0.5:
        raise ValueError("p1 must lie in (0, 1/2)")
    psi = np.asarray(psi_axis, dtype=float)
    if abs(np.linalg.norm(psi) - 1) > 1e-12:
        raise ValueError("psi_axis must be a unit vector")
    rho0 = BlochState(design.kind, tuple(psi))
    rho1 = BlochState(design.kind, tuple((1 - 2 * p1) * psi))
    l0 = likelihood(design, dataset, rho0)
    l1 = likelihood(design, dataset, rho1)
    shrink = 2 * p1 * l1 / (l0 + l1)
    return BlochState(design.kind, tuple((1 - shrink) * psi))


def exact_coin_risk(model: NoisyCoinModel, estimator, p: float) -> float:
    """Expected KL divergence sum_n Pr(n|p) KL(p || estimator(n)), exact.

    ``estimator`` maps a binary outcome vector to an estimate of p.  Outcome
    vectors are enumerated when N <= ENUMERATION_LIMIT; larger models must
    supply an estimator of the binned counts (see ``binned_coin_risk``).
    """
    if model.N > ENUMERATION_LIMIT:
        raise ValueError(f"outcome enumeration limited to N <= {ENUMERATION_LIMIT}; use binned_coin_risk")
    terms = []
    for out in itertools.product((0, 1), repeat=model.N):
        prob = coin_likelihood(model, out, p)
        if prob == 0:
            continue
        d = _kl_bernoulli(p, estimator(out))
        if math.isinf(d):
            return math.inf
        terms.append(prob * d)
    return math.fsum(terms)


def binned_coin_risk(model: NoisyCoinModel, estimator, p: float) -> float:
    """Same sum over the binned sufficient statistics; ``estimator`` takes the count tuple."""
    design = model.design()
    terms = []
    state = BlochState(StateKind.COIN, (2 * p - 1,))
    for counts in enumerate_datasets(design):
        prob = likelihood(design, counts, state)
        if prob == 0:
            continue
        d = _kl_bernoulli(p, estimator(counts))
        if math.isinf(d):
            return math.inf
        terms.append(prob * d)
    return math.fsum(terms)


def _kl_bernoulli(p: float, q: float) -> float:
    out = 0.0
    for a, b in ((p, q), (1 - p, 1 - q)):
        if a > 0:
            if b <= 0:
                return math.inf
            out += a * math.log(a / b)
    return max(out, 0.0)


def bimodal_risk_at_p0(model: NoisyCoinModel, p1: float) -> float:
    """Risk at p = 0 of the bimodal (0, p1) posterior mean: E[-log(1 - p_hat)]."""
    prior = BimodalPrior(0.0, p1)
    if model.N <= ENUMERATION_LIMIT:
        return exact_coin_risk(model, lambda out: bimodal_bayes_p(model, prior, out), 0.0)
    design = model.design()
    z0 = BlochState(StateKind.COIN, (-1.0,))
    z1 = BlochState(StateKind.COIN, (2 * p1 - 1,))

    def est(counts):
        l0 = likelihood(design, counts, z0)
        l1 = likelihood(design, counts, z1)
        return p1 * l1 / (l0 + l1)

    return binned_coin_risk(model, est, 0.0)


def chebyshev_prior(n_points: int):
    """Uniform weights on z_i = -cos(pi i / (n - 1)), dense near the pure ends."""
    from .lfp import DiscretePrior

    z = -np.cos(np.pi * np.arange(n_points) / (n_points - 1))
    return DiscretePrior.from_arrays(StateKind.COIN, z[:, None], np.ones(n_points))


def coin_lfp(model: NoisyCoinModel, grid_points: int = 301, tol: float = 1e-3, seed: int = 0, **kwargs):
    """Monte Carlo LFP for a coin model, started from a Chebyshev grid prior.

    Random initial supports are a poor start in one dimension at large N: the
    weight optimum can abandon whole regions whose few supports happen to
    give a lower local Bayes risk.  A fixed grid covers [0, 1] evenly in the
    angle variable instead.
    """
    from .lfp import mc_lfp

    return mc_lfp(model.design(), tol=tol, seed=seed, init_prior=chebyshev_prior(grid_points), **kwargs)


def bound_noisy_coin(n_trials: int, beta_bar: float) -> float:
    """Lower bound e^(-1/2) / (2 sqrt(beta_bar N)) on the noisy-coin minimax risk."""
    if n_trials < 1 or beta_bar <= 0:
        raise ValueError("need N >= 1 and beta_bar > 0")
    return math.exp(-0.5) / (2 * math.sqrt(beta_bar) * math.sqrt(n_trials))


def bound_pauli(n_total: int, D: int) -> float:
    """Lower bound e^(-1/2)/4 * sqrt(D - 1)/sqrt(N) for Pauli tomography (D = 2 rebit, 3 qubit)."""
    if D not in (2, 3) or n_total < 1:
        raise ValueError("need D in {2, 3} and N >= 1")
    return bound_noisy_coin(n_total, 4.0 / (D - 1))


def bound_haar(n_total: int) -> float:
    """Lower bound (2e)^(-3/2) / sqrt(N log N) for Haar-uniform measurements."""
    if n_total < 2:
        raise ValueError("need N >= 2")
    return (2 * math.e) ** -1.5 / math.sqrt(n_total * math.log(n_total))


def truncated_mean_resolution(n_total: int) -> float:
    """Average of beta(alpha) over alpha in [1/(2N), 1 - 1/(2N)].

    With beta = 1/(alpha (1 - alpha)) - 4 the integral is elementary:
    (2 log(2N - 1) - 4 (1 - 1/N)) / (1 - 1/N).
    """
    if n_total < 2:
        raise ValueError("need N >= 2")
    width = 1 - 1 / n_total
    return (2 * math.log(2 * n_total - 1) - 4 * width) / width


def truncated_mean_resolution_quad(n_total: int) -> float:
    """Adaptive-quadrature evaluation of ``truncated_mean_resolution``."""
    a = 1 / (2 * n_total)

    def beta(x):
        return (1 - 2 * x) ** 2 / (x * (1 - x))

    # the integrand is symmetric about 1/2; split there for accuracy
    half, _ = quad(beta, a, 0.5, epsabs=0, epsrel=1e-12, limit=200)
    return 2 * half / (1 - 1 / n_total)


def classical_coin_reference(n_trials: int) -> float:
    """The ~0.5/N minimax risk of a noiseless coin."""
    if n_trials < 1:
        raise ValueError("need N >= 1")
    return 0.5 / n_trials


def add_beta_estimator(model: NoisyCoinModel, outcomes, beta_hedge: float) -> float:
    """Hedged estimate of p: maximizer of [p (1 - p)]^beta Pr(outcomes | p).

    Noiseless coins use the closed form (h + beta) / (N + 2 beta).
    """
    if beta_hedge <= 0:
        raise ValueError("beta_hedge must be positive")
    out = _check_outcomes(model, outcomes)
    a = model.alpha_array
    if np.all(a == 0):
        return (out.sum() + beta_hedge) / (model.N + 2 * beta_hedge)
    slope = 1 - 2 * a

    def deriv(p):
        q = a + p * slope
        return beta_hedge * (1 / p - 1 / (1 - p)) + np.sum(out * slope / q - (1 - out) * slope / (1 - q))

    # the hedged log-likelihood is strictly concave with derivative +inf at 0 and -inf at 1
    lo, hi = 1e-300, 1 - 1e-16
    if deriv(hi) >= 0:
        return hi
    return brentq(deriv, lo, hi, xtol=1e-14, rtol=1e-15)


def bimodal_log_evidence(model: NoisyCoinModel, prior: BimodalPrior, outcomes) -> float:
    """log of (Pr(n|p0) + Pr(n|p1)) / 2."""
    return float(logsumexp([coin_log_likelihood(model, outcomes, prior.p0),
                            coin_log_likelihood(model, outcomes, prior.p1)]) - math.log(2))


BOUNDS_HEADER = ("N", "bound_pauli_D2", "bound_pauli_D3", "bound_noisycoin", "bound_haar", "classical_reference")


def bounds_rows(n_values, beta_bar: float = 4.0) -> list[tuple]:
    rows = []
    for n in n_values:
        n = int(n)
        rows.append((n, bound_pauli(n, 2), bound_pauli(n, 3), bound_noisy_coin(n, beta_bar),
                     bound_haar(n) if n >= 2 else math.nan, classical_coin_reference(n)))
    return rows


def bounds_csv(n_values, beta_bar: float = 4.0) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BOUNDS_HEADER)
    for row in bounds_rows(n_values, beta_bar):
        writer.writerow([row[0]] + [repr(v) for v in row[1:]])
    return buf.getvalue()


__all__ = [
    "BimodalPrior",
    "NoisyCoinModel",
    "add_beta_estimator",
    "bimodal_bayes_p",
    "bimodal_risk_at_p0",
    "bound_haar",
    "bound_noisy_coin",
    "bound_pauli",
    "bounds_csv",
    "chebyshev_prior",
    "classical_coin_reference",
    "coin_likelihood",
    "coin_lfp",
    "default_p1",
    "exact_coin_risk",
    "qubit_bimodal_bayes",
    "truncated_mean_resolution",
    "truncated_mean_resolution_quad",
]
