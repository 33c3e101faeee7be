import math

import numpy as np
import pytest

from gnclab.contnet import (
    ContTwoLayer,
    activation_match_check,
    first_layer_margin,
    margin_density_experiment,
    margin_stats,
    phat_lower_bound_cont,
    sample_cont_prior,
    second_layer_margin,
)


class TestPrior:
    def test_unit_norms(self, rng):
        net = sample_cont_prior(7, 5, rng)
        np.testing.assert_allclose(np.linalg.norm(net.W1, axis=1), 1, rtol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(net.z), 1, rtol=1e-12)

    def test_spherical_symmetry(self, rng):
        rows = np.array([sample_cont_prior(10, 1, rng).W1[0] for _ in range(10_000)])
        assert np.linalg.norm(rows.mean(axis=0)) <= 0.05

    def test_rejects_non_unit(self):
        with pytest.raises(ValueError):
            ContTwoLayer(np.array([[2.0, 0.0]]), np.array([1.0]))


class TestMargins:
    def test_first_layer_hand_example(self):
        W = np.array([[1.0, 0.0], [0.0, 1.0]])
        # the point lies 30 degrees above the first hyperplane and 60 above the second
        x = np.array([[math.sin(math.pi / 6), math.cos(math.pi / 6)]])
        alpha, (i, n) = first_layer_margin(x, W, return_argmin=True)
        np.testing.assert_allclose(alpha, math.pi / 6, rtol=1e-12)
        assert n == 0

    def test_second_layer_hand_example(self):
        x = np.array([[1.0, 0.0]])
        w = np.array([[0.5, math.sqrt(0.75)]])
        teacher = ContTwoLayer(w, np.array([1.0]), rho=0.0)
        np.testing.assert_allclose(teacher.logits(x), [0.5])
        np.testing.assert_allclose(second_layer_margin(x, teacher, 1, rho=0.0), math.pi / 6, rtol=1e-12)

    def test_zero_norm_input(self):
        with pytest.raises(ValueError, match="index 1"):
            first_layer_margin(np.array([[1.0, 0.0], [0.0, 0.0]]), np.eye(2))

    def test_student_narrower_than_teacher(self, rng):
        t = sample_cont_prior(3, 4, rng)
        with pytest.raises(ValueError):
            second_layer_margin(rng.standard_normal((5, 3)), t, 2)

    def test_stats_gamma_only_when_ordered(self, rng):
        t = sample_cont_prior(5, 3, rng)
        st = margin_stats(rng.standard_normal((50, 5)), t, 10)
        assert (st.gamma is not None) == (0 < st.alpha < st.beta)


def _rotate_toward(w, rng, angle):
    """Unit vector at ``angle`` from unit ``w`` in a random direction."""
    u = rng.standard_normal(w.shape)
    u -= (u @ w) * w
    u /= np.linalg.norm(u)
    return math.cos(angle) * w + math.sin(angle) * u


class TestActivationMatch:
    def test_cone_property(self, rng):
        d0, d1s, d1 = 6, 3, 5
        for _ in range(1000):
            W_t = sample_cont_prior(d0, d1s, rng).W1
            X = rng.standard_normal((20, d0))
            alpha = first_layer_margin(X, W_t)
            W_s = sample_cont_prior(d0, d1, rng).W1.copy()
            for i in range(d1s):
                W_s[i] = _rotate_toward(W_t[i], rng, rng.uniform(0, 0.999) * alpha)
            assert activation_match_check(W_s, W_t, X, d1s)

    def test_detects_mismatch(self):
        W_t = np.array([[1.0, 0.0]])
        X = np.array([[1.0, 0.1]])
        assert not activation_match_check(-W_t, W_t, X, 1)


class TestBound:
    def test_matches_bounds_module(self):
        from gnclab.bounds import log_phat_lower_cont

        assert phat_lower_bound_cont(0.3, 0.6, 10, 20, 3) == log_phat_lower_cont(0.3, 0.6, 10, 20, 3)


class TestDensityExperiment:
    def test_workers_invariant(self):
        a = margin_density_experiment(5, 20, 4, 0.01, 50, 6, seed=3, workers=1)
        b = margin_density_experiment(5, 20, 4, 0.01, 50, 6, seed=3, workers=3)
        np.testing.assert_array_equal(a.alphas, b.alphas)
        np.testing.assert_array_equal(a.betas, b.betas)

    def test_summary_fields(self):
        res = margin_density_experiment(5, 20, 4, 0.01, 50, 4, seed=0)
        s = res.summary()
        assert s["trials"] == 4 and 0 <= s["fraction_beta_gt_alpha"] <= 1
        assert len(res.log_ratios) == 4 - res.n_degenerate
