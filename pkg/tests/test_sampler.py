from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from gnclab.oracle import exact_phat, exact_ptilde, function_tables
from gnclab.quantnet import FcArch, QuantGrid, QuantParams
from gnclab.sampler import (
    DRAW_BLOCK,
    BudgetExhausted,
    PriorSpec,
    draw_block,
    estimate_phat,
    estimate_ptilde,
    gnc,
    gnc_runs,
    gnc_threshold,
    posterior_errors,
)
from gnclab.stats import clopper_pearson
from gnclab.teacher import InputDomain, LabeledSet, TeacherSpec, generate_dataset, sample_teacher

G2, G3 = QuantGrid.default(2), QuantGrid.default(3)


@pytest.fixture(scope="module")
def tiny():
    dom = InputDomain.hypercube(2)
    teacher = sample_teacher(FcArch((2, 1, 1)), G3, 1, "reject-constant", dom)
    S = generate_dataset(dom, teacher, 3, 2)
    return PriorSpec(FcArch((2, 2, 1)), G3), teacher, dom, S


class TestDraws:
    def test_draws_on_grid(self, tiny):
        prior = tiny[0]
        theta = draw_block(prior, 0, 3)
        assert theta.shape == (DRAW_BLOCK, prior.M)
        assert G3.contains(theta)

    def test_block_reproducible(self, tiny):
        prior = tiny[0]
        np.testing.assert_array_equal(draw_block(prior, 5, 2), draw_block(prior, 5, 2))


class TestGuessAndCheck:
    def test_interpolates(self, tiny):
        prior, _, _, S = tiny
        tr = gnc(prior, S, seed=3)
        assert tr.train_error == 0.0
        np.testing.assert_array_equal(TeacherSpec(tr.params).predict(S.X), S.y)
        assert tr.draws_used == tr.T >= 1

    def test_first_run_equals_gnc(self, tiny):
        prior, _, _, S = tiny
        batch = gnc_runs(prior, S, 50, seed=8)
        tr = gnc(prior, S, seed=8)
        assert batch.T[0] == tr.T
        np.testing.assert_array_equal(batch.theta[0], tr.params.values)
        assert batch.draws_used == int(batch.T.sum())

    def test_workers_do_not_change_results(self, tiny):
        prior, _, _, S = tiny
        a = gnc_runs(prior, S, 300, seed=4, workers=1)
        b = gnc_runs(prior, S, 300, seed=4, workers=4)
        np.testing.assert_array_equal(a.T, b.T)
        np.testing.assert_array_equal(a.theta, b.theta)

    def test_budget_exhausted(self):
        prior = PriorSpec(FcArch((1, 1, 1)), G3)
        S = LabeledSet([[1.0], [1.0]], [1, -1])
        with pytest.raises(BudgetExhausted):
            gnc(prior, S, max_draws=1000)

    def test_mean_T_geometric(self, tiny):
        prior, _, _, S = tiny
        p = float(exact_phat(prior.arch, S, G3))
        T = gnc_runs(prior, S, 4000, seed=10).T
        se = np.sqrt((1 - p) / p**2 / len(T))
        assert abs(T.mean() - 1 / p) <= 3 * se

    def test_threshold_acceptance_rate(self, tiny):
        prior, _, _, S = tiny
        gamma = 1 / 3
        tabs = function_tables(prior.arch, G3, S.X)
        errs = (tabs.labels != S.y[None, :]).sum(axis=1)
        p = Fraction(tabs.mass(errs <= 1), tabs.total)
        batch = gnc_runs(prior, S, 2000, seed=2, gamma=gamma)
        lo, hi = clopper_pearson(len(batch.T), batch.draws_used)
        assert lo <= float(p) <= hi
        tr = gnc_threshold(prior, S, gamma, seed=2)
        assert tr.train_error <= gamma

    def test_threshold_validates_gamma(self, tiny):
        prior, _, _, S = tiny
        with pytest.raises(ValueError):
            gnc_threshold(prior, S, 1.0)


class TestEstimators:
    def test_phat_coverage(self, tiny):
        prior, _, _, S = tiny
        exact = float(exact_phat(prior.arch, S, G3))
        hits = 0
        for r in range(100):
            e = estimate_phat(prior, S, 2000, seed=1000 + r)
            hits += e.ci_low <= exact <= e.ci_high
        assert hits >= 95 - 3 * np.sqrt(100 * 0.05 * 0.95)

    def test_phat_width_scaling(self, tiny):
        prior, _, _, S = tiny
        w1 = estimate_phat(prior, S, 20_000, seed=1).half_width
        w2 = estimate_phat(prior, S, 40_000, seed=1).half_width
        assert 0.8 / np.sqrt(2) <= w2 / w1 <= 1.2 / np.sqrt(2)

    def test_ptilde_same_arch(self):
        arch = FcArch((1, 1, 1))
        dom = InputDomain.hypercube(1)
        t = TeacherSpec(QuantParams(arch, G2, [-1, 0, -1, 0]))
        exact = float(exact_ptilde(arch, t, G2, dom))
        est = estimate_ptilde(PriorSpec(arch, G2), t, dom, 20_000, seed=3)
        assert est.mode == "exact-TE"
        assert est.ci_low <= exact <= est.ci_high

    def test_ptilde_probe_mode(self, tiny):
        prior, teacher, _, _ = tiny
        est = estimate_ptilde(prior, teacher, InputDomain.gaussian(2), 5000, seed=3, probe_size=500)
        assert est.mode == "probe-TE"

    def test_posterior_errors_exact(self, tiny):
        prior, teacher, dom, S = tiny
        errors, batch = posterior_errors(prior, S, 200, teacher, dom, seed=6)
        assert len(errors) == len(batch) == 200
        assert np.all((errors * 4) == np.round(errors * 4))


def test_chi_square_small(tiny):
    prior, _, dom, S = tiny
    from gnclab.oracle import exact_posterior
    from gnclab.quantnet import logits, sign_labels

    pts = dom.enumerate()
    post = exact_posterior(prior.arch, S, G3, points=pts)
    batch = gnc_runs(prior, S, 5000, seed=21)
    lab = sign_labels(logits(prior.arch, prior.act, batch.theta, pts))
    index = {t.labels: i for i, t in enumerate(post.tables)}
    obs = np.bincount([index[tuple(int(v) for v in row)] for row in lab], minlength=len(index))
    exp = np.array([float(p) for p in post.probs]) * len(lab)
    assert stats.chisquare(obs, exp).pvalue > 0.01
