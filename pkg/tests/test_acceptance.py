"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The expensive least favorable prior runs are session fixtures shared by the
criteria that read them.  Results are also collected in ``RESULTS`` and
repeated in the terminal summary (see conftest.py).
"""
import math
import time

import numpy as np
import pytest

from tomomax.estimators import (
    TabulatedEstimator,
    bayes_table,
    hml_table,
    linear_inversion_table,
    mle_table,
    tabulate,
)
from tomomax.experiment import ExperimentDesign, log_likelihood_matrix
from tomomax.figures import estimator_grid, spacing_variance
from tomomax.lfp import DiscretePrior, kempthorne_lfp, mc_lfp
from tomomax.noisycoin import (
    NoisyCoinModel,
    bimodal_risk_at_p0,
    bound_haar,
    bound_noisy_coin,
    bound_pauli,
    coin_lfp,
    default_p1,
    qubit_bimodal_bayes,
)
from tomomax.qstate import StateKind, relative_entropy_array, sample_ball, sample_hs_uniform
from tomomax.risk import RiskEvaluator, SearchConfig, bayes_risk, max_risk, pointwise_risk, search_grid

RESULTS = {}
DIAG = np.array([1.0, 1.0]) / math.sqrt(2)
REBIT_N = (2, 4, 8, 16)
COIN_N = (16, 32, 64, 128, 256, 512)
COIN_ALPHA = 0.5 * (1 - 1 / math.sqrt(2))


def report(number, ok, detail):
    line = f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[number] = line
    print("\n" + line)
    return ok


def midpoint(result):
    return 0.5 * (result.av_risk + result.max_risk)


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start


def loglog_slope(n, y):
    return float(np.polyfit(np.log(n), np.log(y), 1)[0])


@pytest.fixture(scope="session")
def rebit_runs():
    runs, total = {}, 0.0
    for n in REBIT_N:
        design = ExperimentDesign.from_total(StateKind.REBIT, n)
        kemp, t1 = timed(kempthorne_lfp, design, tol=1e-3)
        mc, t2 = timed(mc_lfp, design, tol=1e-3, seed=n)
        runs[n] = (kemp, mc)
        total += t1 + t2
    return runs, total


@pytest.fixture(scope="session")
def coin_runs():
    runs, total = {}, 0.0
    for label, alpha in (("noisy", COIN_ALPHA), ("noiseless", 0.0)):
        for n in COIN_N:
            runs[label, n], dt = timed(coin_lfp, NoisyCoinModel.uniform(n, alpha), seed=n)
            total += dt
    return runs, total


@pytest.fixture(scope="session")
def minimax128():
    return timed(mc_lfp, ExperimentDesign.from_total(StateKind.REBIT, 128), tol=1e-2, seed=7)


@pytest.fixture(scope="session")
def minimax64():
    return mc_lfp(ExperimentDesign.from_total(StateKind.REBIT, 64), tol=1e-3, seed=7)


def test_criterion_01_bound_formulas():
    checks = [
        abs(bound_pauli(192, 3) - 0.015476) <= 1e-6,
        abs(bound_pauli(128, 2) - 0.013402) <= 1e-6,
        abs(bound_haar(1000) - 9.492e-4) <= 1e-6,
    ]
    same = all(bound_noisy_coin(n, 4 / (d - 1)) == bound_pauli(n, d)
               for n in (2, 16, 64, 100, 128, 192, 1000, 4096) for d in (2, 3))
    ok = all(checks) and same
    report(1, ok, f"pauli(192,3)={bound_pauli(192, 3):.7f} pauli(128,2)={bound_pauli(128, 2):.7f} "
                  f"haar(1000)={bound_haar(1000):.5e} coin==pauli exact: {same}")
    assert ok


def test_criterion_02_duality_sandwich(rebit_runs):
    runs, total = rebit_runs
    ok, parts = total <= 600, []
    for n, (kemp, mc) in runs.items():
        agree = abs(midpoint(kemp) - midpoint(mc)) / midpoint(mc)
        for r in (kemp, mc):
            ok &= r.av_risk <= r.max_risk and r.gap <= 1e-2
        ok &= agree <= 1e-2
        parts.append(f"N={n}: gaps {kemp.gap:.1e}/{mc.gap:.1e} mid diff {agree:.1e}")
    report(2, ok, "; ".join(parts) + f"; {total:.0f} s")
    assert ok


def test_criterion_03_flat_risk(rebit_runs):
    runs, _ = rebit_runs
    worst = 0.0
    for r in runs[16]:
        keep = r.prior.weight_array >= 1e-4
        risks = RiskEvaluator(r.estimator).risk(r.prior.support_array[keep])
        worst = max(worst, float(np.max(np.abs(risks - r.max_risk)) / r.max_risk))
    ok = worst <= 0.05
    report(3, ok, f"N=16 worst support deviation {worst:.2%} of max_risk")
    assert ok


def test_criterion_04_scaling(coin_runs):
    runs, total = coin_runs
    n = np.array(COIN_N, dtype=float)
    noisy = np.array([midpoint(runs["noisy", k]) for k in COIN_N])
    clean = np.array([midpoint(runs["noiseless", k]) for k in COIN_N])
    s_noisy, s_clean = loglog_slope(n, noisy), loglog_slope(n, clean)
    ratio = clean * n / 0.5
    converged = all(r.gap <= 1e-2 for r in runs.values())
    ok = (-0.65 <= s_noisy <= -0.40 and -1.1 <= s_clean <= -0.9 and np.all(np.abs(ratio - 1) <= 0.2)
          and converged and total <= 1800)
    report(4, ok, f"noisy slope {s_noisy:.3f}, noiseless slope {s_clean:.3f}, "
                  f"noiseless N*risk/0.5 in [{ratio.min():.3f}, {ratio.max():.3f}], {total:.0f} s")
    assert ok


def test_criterion_05_bound_validity(coin_runs):
    runs, _ = coin_runs
    beta_bar = NoisyCoinModel.uniform(16, COIN_ALPHA).mean_resolution()
    margins = [runs["noisy", n].av_risk / bound_noisy_coin(n, beta_bar) for n in COIN_N]
    ok = all(m >= 1 for m in margins)
    report(5, ok, f"beta_bar={beta_bar:.6f}, av_risk/bound = " + ", ".join(f"{m:.3f}" for m in margins))
    assert ok


def test_criterion_06_estimator_ordering(minimax128):
    result, seconds = minimax128
    design = result.estimator.design
    mm = result.max_risk
    hml = {b: max_risk(hml_table(design, b))[0] for b in (0.01, 0.04, 0.1)}
    order = mm <= hml[0.04] <= min(hml[0.01], hml[0.1])
    t = np.linspace(0, 0.8, 81)
    pts = t[:, None] * DIAG
    below = RiskEvaluator(hml_table(design, 0.04)).risk(pts) < RiskEvaluator(result.estimator).risk(pts)
    last = float(t[np.argmin(below)]) if not below.all() else 0.8
    ok = order and bool(below.all()) and seconds <= 3600
    report(6, ok, f"minimax {mm:.5f} (gap {result.gap:.1e}) <= HML(0.04) {hml[0.04]:.5f} <= "
                  f"min({hml[0.01]:.5f}, {hml[0.1]:.5f}): {order}; HML(0.04) interior below minimax at "
                  f"{below.sum()}/{below.size} radii (first failure r={last:.2f}); {seconds:.0f} s")
    assert ok


def test_criterion_07_two_maxima():
    n = 128
    est = hml_table(ExperimentDesign.from_total(StateKind.REBIT, n), 0.04)
    t = np.linspace(0, 1, 4001)[1:]
    v = RiskEvaluator(est).risk(t[:, None] * DIAG)
    inner = np.flatnonzero((v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])) + 1
    peaks = list(t[inner]) + ([1.0] if v[-1] > v[-2] else [])
    c = [(1 - p) * math.sqrt(n) for p in peaks]
    ok = len(peaks) == 2 and peaks[-1] == 1.0 and 0.3 <= c[0] <= 3
    report(7, ok, f"local maxima at r = {', '.join(f'{p:.4f}' for p in peaks)} (c = {c[0]:.3f})")
    assert ok


def test_criterion_08_mle_infinite():
    design = ExperimentDesign.pauli(StateKind.REBIT, 8)
    states = np.array([s.r for s in sample_hs_uniform(StateKind.REBIT, 100, 12)])
    assert np.all(np.linalg.norm(states, axis=1) < 1)
    mle = RiskEvaluator(mle_table(design)).risk(states)
    probe = np.vstack([states, search_grid(StateKind.REBIT, SearchConfig())])
    finite = all(np.all(np.isfinite(RiskEvaluator(hml_table(design, b)).risk(probe))) for b in (0.01, 0.04, 0.1))
    ok = bool(np.all(np.isinf(mle))) and finite
    report(8, ok, f"MLE infinite at {int(np.isinf(mle).sum())}/100 full-rank states; "
                  f"HML finite at all {len(probe)} probes: {finite}")
    assert ok


def _swap_xy(m, table):
    return table.reshape(m + 1, m + 1, 2).transpose(1, 0, 2)[:, :, ::-1].reshape(-1, 2)


def _flip_x(m, table):
    return (table.reshape(m + 1, m + 1, 2)[::-1] * np.array([-1, 1])).reshape(-1, 2)


def test_criterion_09_property_suites():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    failures = []

    # relative entropy axioms on 10^4 pairs
    r, s = sample_ball(3, 10_000, rng), sample_ball(3, 10_000, rng)
    d = relative_entropy_array(r, s)
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    if not (np.all(d >= 0) and np.all(np.abs(relative_entropy_array(r, r)) <= 1e-10)
            and np.allclose(relative_entropy_array(r @ q.T, s @ q.T), d, rtol=1e-12, atol=1e-12)):
        failures.append("relative entropy")
    z = rng.uniform(-0.999, 0.999, (1000, 2))
    a, b = (1 + z[:, 0]) / 2, (1 + z[:, 1]) / 2
    kl = a * np.log(a / b) + (1 - a) * np.log((1 - a) / (1 - b))
    zz = np.zeros((1000, 3))
    if not np.allclose(relative_entropy_array(zz + [0, 0, 1] * z[:, :1], zz + [0, 0, 1] * z[:, 1:]), kl,
                       rtol=1e-9, atol=1e-12):
        failures.append("commuting reduction")

    # likelihood normalization for M <= 16
    for kind in (StateKind.REBIT, StateKind.QUBIT):
        for m in (1, 2, 4, 8, 16):
            design = ExperimentDesign.pauli(kind, m)
            total = np.exp(log_likelihood_matrix(design, sample_ball(kind.dim, 10, rng))).sum(axis=1)
            if not np.allclose(total, 1.0, atol=1e-10):
                failures.append(f"normalization {kind.name} M={m}")

    # posterior mean beats 20 competitors under its prior
    design = ExperimentDesign.pauli(StateKind.REBIT, 4)
    for _ in range(20):
        k = int(rng.integers(1, 8))
        prior = DiscretePrior.from_arrays(StateKind.REBIT, sample_ball(2, k, rng) * 0.98, rng.random(k) + 0.05)
        other = TabulatedEstimator(design, sample_ball(2, design.n_datasets, rng) * 0.99, "competitor")
        if bayes_risk(prior, bayes_table(prior, design)) > bayes_risk(prior, other) + 1e-12:
            failures.append("posterior mean optimality")

    # equivariance under X/Y exchange and sign flips
    m = 8
    design = ExperimentDesign.pauli(StateKind.REBIT, m)
    x = sample_ball(2, 5, rng)
    orbit = np.concatenate([x, x[:, ::-1], x * [-1, 1], x[:, ::-1] * [-1, 1],
                            x * [1, -1], x[:, ::-1] * [1, -1], -x, -x[:, ::-1]])
    sym = DiscretePrior.from_arrays(StateKind.REBIT, orbit, np.ones(len(orbit)))
    tables = {"li": linear_inversion_table(design), "mle": mle_table(design), "hml": hml_table(design, 0.04),
              "bayes": bayes_table(sym, design)}
    for name, est in tables.items():
        t = est.table
        if not (np.allclose(_swap_xy(m, t), t, atol=1e-9) and np.allclose(_flip_x(m, t), t, atol=1e-9)):
            failures.append(f"equivariance {name}")

    # Hilbert-Schmidt sampler moments
    ball = np.array([s.r for s in sample_hs_uniform(StateKind.QUBIT, 100_000, 5)])
    disk = np.array([s.r for s in sample_hs_uniform(StateKind.REBIT, 100_000, 5)])
    if abs(np.mean(np.linalg.norm(ball, axis=1) ** 3) - 0.5) > 0.01 or abs(np.mean(np.sum(disk ** 2, 1)) - 0.5) > 0.01:
        failures.append("sampler moments")

    seconds = time.perf_counter() - start
    ok = not failures and seconds <= 300
    report(9, ok, f"failures: {failures or 'none'}; {seconds:.0f} s")
    assert ok


def test_criterion_10_reduction_identity():
    n, beta_bar = 16, 4.0
    design = ExperimentDesign.from_total(StateKind.REBIT, n)
    p1 = default_p1(n, beta_bar)
    qubit = tabulate(lambda dd, ds: qubit_bimodal_bayes(dd, DIAG, p1, ds), design)
    q_risk = pointwise_risk(qubit, DIAG)
    model = NoisyCoinModel.uniform(n, COIN_ALPHA)
    c_risk = bimodal_risk_at_p0(model, p1)
    ok = abs(q_risk - c_risk) <= 1e-10 and model.mean_resolution() == pytest.approx(beta_bar)
    report(10, ok, f"p1={p1}, qubit {q_risk:.15f} vs coin {c_risk:.15f}, diff {abs(q_risk - c_risk):.1e}")
    assert ok


def _all_lines_variance(grid):
    lengths = np.concatenate([np.linalg.norm(np.diff(grid, axis=a), axis=-1).ravel() for a in (0, 1)])
    return float(lengths.var() / lengths.mean() ** 2)


def test_criterion_11_figure_artifacts(minimax64):
    design8 = ExperimentDesign.pauli(StateKind.REBIT, 8)
    li = np.linalg.norm(estimator_grid(linear_inversion_table(design8)), axis=-1)
    mle = np.linalg.norm(estimator_grid(mle_table(design8)), axis=-1)
    hml = np.linalg.norm(estimator_grid(hml_table(design8, 0.04)), axis=-1)
    margin = 1 - float(hml.max())
    design64 = minimax64.estimator.design
    v_mm = spacing_variance(estimator_grid(minimax64.estimator))
    hml64 = estimator_grid(hml_table(design64, 0.04))
    v_hml = spacing_variance(hml64)
    # informational: the same statistic pooled over every grid line
    pooled = _all_lines_variance(estimator_grid(minimax64.estimator)) / _all_lines_variance(hml64)
    ok = (li.max() == pytest.approx(math.sqrt(2), abs=1e-12) and mle.max() <= 1 + 1e-12 and margin > 0
          and v_mm >= 2 * v_hml)
    report(11, ok, f"LI corner {li.max():.15f}; MLE max |r| {mle.max():.12f}; HML min margin {margin:.4f}; "
                   f"N=64 spacing variance minimax {v_mm:.4f} vs HML {v_hml:.4f} (ratio {v_mm / v_hml:.2f}; "
                   f"all grid lines ratio {pooled:.2f})")
    assert ok
