import json
import math
import warnings

import numpy as np
import pytest

from tomomax.errors import NonConvergenceWarning
from tomomax.estimators import bayes_table
from tomomax.experiment import ExperimentDesign
from tomomax.lfp import (
    BayesRiskModel,
    DiscretePrior,
    LfpResult,
    kempthorne_lfp,
    maximize_weights,
    mc_lfp,
    merge_close,
    minimax_certificate,
    optimize_weights,
)
from tomomax.qstate import BlochState, StateKind, sample_ball
from tomomax.risk import RiskEvaluator, SearchConfig, bayes_risk

REBIT2 = ExperimentDesign.pauli(StateKind.REBIT, 1)
REBIT4 = ExperimentDesign.pauli(StateKind.REBIT, 2)
FAST = SearchConfig(n_radial=60, n_angular=120)


@pytest.fixture(scope="module")
def kempthorne_n2():
    return kempthorne_lfp(REBIT2, tol=1e-3, search=FAST)


class TestDiscretePrior:
    def test_weights_must_sum_to_one(self):
        s = BlochState(StateKind.REBIT, (0, 0))
        t = BlochState(StateKind.REBIT, (0.5, 0))
        with pytest.raises(ValueError):
            DiscretePrior((s, t), (0.5, 0.6))

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError):
            DiscretePrior.from_arrays(StateKind.REBIT, [[0.1, 0.1], [0.1, 0.1]], [1, 1])

    def test_round_trip(self):
        p = DiscretePrior.from_arrays(StateKind.QUBIT, sample_ball(3, 4, np.random.default_rng(0)), [1, 2, 3, 4])
        assert DiscretePrior.from_dict(json.loads(json.dumps(p.to_dict()))) == p

    def test_merge_close(self):
        x, w = merge_close(np.array([[0.0, 0.0], [1e-8, 0.0], [0.5, 0.0]]), np.array([0.2, 0.3, 0.5]))
        assert len(x) == 2
        np.testing.assert_allclose(w, [0.5, 0.5])


class TestBayesRiskModel:
    def setup_method(self):
        rng = np.random.default_rng(5)
        self.x = sample_ball(2, 6, rng)
        self.model = BayesRiskModel(REBIT4, self.x)
        self.w = rng.random(6) + 0.1
        self.w /= self.w.sum()

    def test_value_matches_risk_module(self):
        f, risks, table = self.model.evaluate(self.w)
        prior = DiscretePrior.from_arrays(StateKind.REBIT, self.x, self.w)
        est = bayes_table(prior, REBIT4)
        np.testing.assert_allclose(table, est.table, atol=1e-14)
        assert f == pytest.approx(bayes_risk(prior, est), rel=1e-12)
        np.testing.assert_allclose(risks, RiskEvaluator(est).risk(self.x), rtol=1e-11)

    def test_gradient_is_support_risk(self):
        # dF/dw_i = risk at support i, by the envelope property of the posterior mean
        f, risks, _ = self.model.evaluate(self.w)
        h = 1e-6
        for i in range(len(self.w)):
            e = np.zeros_like(self.w)
            e[i] = h
            fp = self.model.evaluate(self.w + e)[0]
            fm = self.model.evaluate(self.w - e)[0]
            assert (fp - fm) / (2 * h) == pytest.approx(risks[i], rel=1e-6, abs=1e-9)

    def test_hessian_finite_difference(self):
        _, _, table = self.model.evaluate(self.w)
        hess = self.model.hessian(self.w, table)
        h = 1e-6
        for i in range(len(self.w)):
            e = np.zeros_like(self.w)
            e[i] = h
            gp = self.model.evaluate(self.w + e)[1]
            gm = self.model.evaluate(self.w - e)[1]
            np.testing.assert_allclose((gp - gm) / (2 * h), hess[:, i], rtol=1e-5, atol=1e-7)

    def test_hessian_negative_semidefinite(self):
        _, _, table = self.model.evaluate(self.w)
        hess = self.model.hessian(self.w, table)
        np.testing.assert_allclose(hess, hess.T, atol=1e-12)
        assert np.linalg.eigvalsh(hess).max() <= 1e-10 * np.abs(hess).max()

    def test_concave_along_segments(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            a = rng.dirichlet(np.ones(6))
            b = rng.dirichlet(np.ones(6))
            fa, fb = self.model.evaluate(a)[0], self.model.evaluate(b)[0]
            fm = self.model.evaluate((a + b) / 2)[0]
            assert fm >= (fa + fb) / 2 - 1e-14


class TestMaximizeWeights:
    def test_single_support(self):
        s = BlochState(StateKind.REBIT, (0.3, 0.1))
        prior = maximize_weights([s], REBIT4)
        assert prior.weights == (1.0,)
        assert bayes_risk(prior, bayes_table(prior, REBIT4)) == pytest.approx(0.0, abs=1e-15)

    def test_symmetric_pair(self):
        supports = [BlochState(StateKind.REBIT, (0.7, 0)), BlochState(StateKind.REBIT, (-0.7, 0))]
        prior = maximize_weights(supports, REBIT4, init_weights=[0.9, 0.1])
        np.testing.assert_allclose(prior.weights, [0.5, 0.5], atol=1e-6)

    def test_certificate(self):
        x = sample_ball(2, 40, np.random.default_rng(7))
        sol = optimize_weights(BayesRiskModel(ExperimentDesign.pauli(StateKind.REBIT, 8), x))
        assert sol.converged
        assert np.max(sol.risks) - sol.bayes_risk <= 1e-6 * sol.bayes_risk
        assert sol.weights.sum() == pytest.approx(1.0)
        # risks on the support are level
        live = sol.weights > 1e-8
        assert np.ptp(sol.risks[live]) <= 1e-5 * sol.bayes_risk

    def test_recovers_kempthorne_value(self, kempthorne_n2):
        prior = maximize_weights(kempthorne_n2.prior.supports, REBIT2)
        f = bayes_risk(prior, bayes_table(prior, REBIT2))
        assert f == pytest.approx(kempthorne_n2.av_risk, abs=1e-4)

    def test_iteration_limit_flagged(self):
        x = sample_ball(2, 60, np.random.default_rng(8))
        with pytest.warns(NonConvergenceWarning):
            maximize_weights(x, ExperimentDesign.pauli(StateKind.REBIT, 8), rtol=1e-15, max_iter=3)


class TestKempthorne:
    def test_n2_converges(self, kempthorne_n2):
        r = kempthorne_n2
        assert r.converged and r.gap <= 1e-3
        assert r.av_risk <= r.max_risk
        assert minimax_certificate(r) == (r.av_risk, r.max_risk)

    def test_av_monotone(self, kempthorne_n2):
        av = [h["av_risk"] for h in kempthorne_n2.history]
        assert all(b >= a - 1e-9 for a, b in zip(av, av[1:]))

    def test_deterministic(self, kempthorne_n2):
        again = kempthorne_lfp(REBIT2, tol=1e-3, search=FAST)
        assert again.av_risk == kempthorne_n2.av_risk
        np.testing.assert_array_equal(again.estimator.table, kempthorne_n2.estimator.table)

    def test_infinite_tol_single_loop(self):
        r = kempthorne_lfp(REBIT4, tol=math.inf, search=FAST)
        assert r.iterations == 1 and r.av_risk <= r.max_risk

    def test_agrees_with_mc(self, kempthorne_n2):
        mc = mc_lfp(REBIT2, seed=1, tol=1e-3, search=FAST)
        assert mc.av_risk == pytest.approx(kempthorne_n2.av_risk, rel=1e-3)

    def test_invalid_mixing(self):
        with pytest.raises(ValueError):
            kempthorne_lfp(REBIT2, mixing_alpha=1.5)

    def test_checkpoint_resume(self, tmp_path):
        seen = []
        with pytest.warns(NonConvergenceWarning):
            kempthorne_lfp(REBIT4, tol=1e-2, search=FAST, max_iter=2, checkpoint=seen.append)
        path = tmp_path / "ck.json"
        path.write_text(seen[-1].to_json())
        back = LfpResult.from_json(path.read_text())
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonConvergenceWarning)
            resumed = kempthorne_lfp(REBIT4, init_prior=back.prior, tol=1e-2, search=FAST)
        assert resumed.av_risk >= back.av_risk - 1e-9


class TestMonteCarlo:
    def test_deterministic_in_seed(self):
        a = mc_lfp(REBIT4, seed=3, tol=1e-2, search=FAST)
        b = mc_lfp(REBIT4, seed=3, tol=1e-2, search=FAST)
        assert a.av_risk == b.av_risk and a.max_risk == b.max_risk
        np.testing.assert_array_equal(a.estimator.table, b.estimator.table)

    def test_no_pruning_growth(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonConvergenceWarning)
            r = mc_lfp(REBIT4, n_init=5, weight_tol=0.0, m_per_point=2, seed=0, tol=1e-12, max_iter=3,
                       add_argmax=False, search=FAST)
        sizes = [h["supports"] for h in r.history]
        assert sizes == [5, 15, 45]

    def test_invalid_hyperparameters(self):
        with pytest.raises(ValueError):
            mc_lfp(REBIT2, n_init=0)
        with pytest.raises(ValueError):
            mc_lfp(REBIT2, sigma=-1.0)

    def test_flat_risk_on_support(self):
        r = mc_lfp(ExperimentDesign.pauli(StateKind.REBIT, 4), seed=2, tol=1e-3, search=FAST)
        risks = RiskEvaluator(r.estimator).risk(r.prior.support_array)
        heavy = r.prior.weight_array >= 1e-4
        assert np.all(np.abs(risks[heavy] - r.max_risk) <= 5 * 1e-3 * r.av_risk + 1e-12)

    def test_symmetry(self):
        r = mc_lfp(ExperimentDesign.pauli(StateKind.REBIT, 4), seed=4, tol=1e-3, search=FAST)
        design = r.estimator.design
        x, w = r.prior.support_array, r.prior.weight_array
        for g in (lambda v: v[:, ::-1], lambda v: v * [-1, 1], lambda v: v * [1, -1]):
            img = DiscretePrior.from_arrays(StateKind.REBIT, g(x), w)
            est = bayes_table(img, design)
            assert bayes_risk(img, est) == pytest.approx(r.av_risk, abs=1e-8)
            # the image estimator is the group image of the original table
            m = design.shots[0]
            grid = r.estimator.table.reshape(m + 1, m + 1, 2)
            if g(np.array([[1.0, 2.0]]))[0, 0] == 2.0:
                want = grid.transpose(1, 0, 2)[:, :, ::-1]
            elif g(np.array([[1.0, 2.0]]))[0, 0] == -1.0:
                want = grid[::-1] * [-1, 1]
            else:
                want = grid[:, ::-1] * [1, -1]
            np.testing.assert_allclose(est.table, want.reshape(-1, 2), atol=1e-6)

    def test_prune_stability(self):
        r = mc_lfp(ExperimentDesign.pauli(StateKind.REBIT, 4), seed=5, tol=1e-3, search=FAST)
        keep = r.prior.weight_array >= 1e-4
        pruned = maximize_weights(r.prior.support_array[keep], r.estimator.design,
                                  init_weights=r.prior.weight_array[keep])
        f = bayes_risk(pruned, bayes_table(pruned, r.estimator.design))
        assert abs(f - r.av_risk) < 1e-4 * r.max_risk

    def test_result_round_trip(self):
        r = mc_lfp(REBIT2, seed=1, tol=1e-2, search=FAST)
        back = LfpResult.from_json(r.to_json())
        assert back.av_risk == r.av_risk and back.prior == r.prior
        np.testing.assert_array_equal(back.estimator.table, r.estimator.table)

    def test_certificate_violation_rejected(self):
        r = mc_lfp(REBIT2, seed=1, tol=1e-2, search=FAST)
        with pytest.raises(ValueError):
            LfpResult(r.prior, r.estimator, 1.0, 0.5, 0.0, 1, 0.0, "mc")
