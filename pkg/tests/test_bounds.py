import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from gnclab import bounds
from gnclab.bounds import (
    BoundRangeError,
    MarginOrderError,
    chat_cnn,
    chat_cont,
    chat_fc,
    chat_scn,
    chat_sfc,
    chat_sparse,
    cont_gamma,
    eps_pscard,
    log_beta_half,
    log_phat_lower_cont,
    n_lemma1,
    n_noninterp,
    n_pacbayes,
    n_pacbayes_markov,
    n_refined,
    n_sparse,
    n_volume,
    pc_fc,
    pc_sfc,
    solve_teacher_scale,
    sparse_beats_sfc,
)

L2, L3 = math.log(2), math.log(3)
REL = 1e-9


class TestComplexities:
    def test_fc(self):
        np.testing.assert_allclose(chat_fc((2, 1), (5, 1), 3, 3), 14 * L3, rtol=REL)
        np.testing.assert_allclose(chat_fc((1,), (1,), 4, 2), 5 * L2, rtol=REL)

    def test_sfc(self):
        np.testing.assert_allclose(chat_sfc((2, 1), (5, 1), 3, 3), 20 * L3, rtol=REL)
        np.testing.assert_allclose(chat_sfc((1,), (1,), 1, 2), 3 * L2, rtol=REL)

    def test_sfc_much_smaller_for_wide_students(self):
        assert pc_sfc((10, 10, 1), (100, 100, 1), 10) == 612
        assert pc_fc((10, 10, 1), (100, 100, 1), 10) == 1221

    def test_conv(self):
        np.testing.assert_allclose(chat_cnn((1, 1), (1, 2), (2,), 4, 3), 8 * L3, rtol=REL)
        np.testing.assert_allclose(chat_scn((1, 1), (1, 2), (2,), 2, 3), 9 * L3, rtol=REL)

    def test_teacher_wider_than_student(self):
        with pytest.raises(BoundRangeError, match="layer 1"):
            chat_fc((9, 1), (5, 1), 3, 3)

    @given(st.lists(st.integers(1, 6), min_size=1, max_size=4), st.integers(1, 5), st.integers(2, 5))
    def test_teacher_equal_student_below_full(self, D, d0, Q):
        D = tuple(D)
        assert chat_fc(D, D, d0, Q) <= bounds.full_complexity_fc(D, d0, Q) * (1 + REL)


class TestSampleSizes:
    def test_lemma1(self):
        assert n_lemma1(15.381, 0.1, 0.05) == 265
        assert n_lemma1(math.log(4), 1 - 1e-12, 0.1) == 11

    def test_volume(self):
        assert n_volume(10, 0.1, 0.05) == 322

    def test_noninterp(self):
        assert n_noninterp(10, 0.1, 0.05) == 1054

    def test_pscard(self):
        want = (20 * L2 + 4 * math.log(160) + 2 * math.log(20 * L2)) / 1e4
        np.testing.assert_allclose(eps_pscard(2.0**-20, 10**4, 0.05), want, rtol=REL)
        # the quoted value has four significant digits
        np.testing.assert_allclose(want, 0.003943, atol=1e-6)

    def test_sparse(self):
        assert n_sparse(7, 1, 3, 0.1, 0.05) == 398
        np.testing.assert_allclose(chat_sparse(7, 1, 3), 14 * math.log(8) + 7 * L3, rtol=REL)

    def test_sparse_comparison(self):
        assert sparse_beats_sfc(chat_sfc((2, 1), (5, 1), 3, 3), 7, 3, 3)
        assert not sparse_beats_sfc(1e6, 7, 3, 3)

    def test_pacbayes(self):
        assert n_pacbayes(10, 0.1, 0.05) == math.ceil((10 + math.log(20)) / 0.1)
        assert n_pacbayes_markov(10, 0.1, 0.05) == math.ceil((10 + math.log(20)) / 0.005)

    @pytest.mark.parametrize("fn,kw", [
        (n_lemma1, dict(eps=1.0, delta=0.1)),
        (n_lemma1, dict(eps=0.1, delta=0.2)),
        (n_noninterp, dict(eps=0.5, delta=0.1)),
        (n_volume, dict(eps=0.0, delta=0.1)),
    ])
    def test_ranges(self, fn, kw):
        with pytest.raises(BoundRangeError, match="eps|delta"):
            fn(1.0, **kw)

    def test_refined_ordering(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            c, eps, delta = rng.uniform(0, 50), rng.uniform(0.01, 0.99), rng.uniform(0.001, 0.19)
            refined = n_refined(c, eps, delta / 2, delta / 2)
            lower = (c + math.log(2 / delta) - 3 * math.log(2 / delta)) / eps
            assert refined >= math.floor(lower)
            assert refined <= n_lemma1(c, eps, delta)

    @given(st.floats(0, 100), st.floats(0.01, 0.99), st.floats(0.001, 0.19))
    def test_lemma1_monotone(self, c, eps, delta):
        assert n_lemma1(c + 1, eps, delta) >= n_lemma1(c, eps, delta)
        assert n_lemma1(c, eps, delta / 2) >= n_lemma1(c, eps, delta)


class TestContinuous:
    def test_beta_identities(self):
        np.testing.assert_allclose(math.exp(log_beta_half(0.5)), math.pi, rtol=1e-10)
        np.testing.assert_allclose(math.exp(log_beta_half(1.0)), 2.0, rtol=1e-10)

    def test_gamma(self):
        np.testing.assert_allclose(cont_gamma(math.pi / 6, math.pi / 3), 0.9553166181245093, rtol=REL)
        np.testing.assert_allclose(cont_gamma(math.pi / 6, math.pi / 3), math.acos(0.5 / math.cos(math.pi / 6)),
                                   rtol=REL)

    def test_margin_order(self):
        with pytest.raises(MarginOrderError):
            cont_gamma(0.5, 0.4)

    def test_exact_above_dominant_terms(self):
        res = chat_cont(100, 50, 5, 0.3, 0.6)
        dominant = -5 * 100 * math.log(math.sin(0.3)) - 50 * math.log(math.sin(res.gamma))
        assert res.exact >= dominant

    @given(st.floats(0.05, 1.2), st.floats(0.01, 0.3), st.floats(0.01, 0.3))
    def test_increasing_in_beta(self, alpha, db1, db2):
        b1 = alpha + db1
        b2 = b1 + db2
        assume(b2 < math.pi / 2 - 1e-3)
        assert log_phat_lower_cont(alpha, b2, 20, 30, 4) > log_phat_lower_cont(alpha, b1, 20, 30, 4)

    @given(st.floats(0.05, 1.4), st.floats(0.05, 1.4))
    def test_increasing_in_alpha_where_derivative_positive(self, a1, a2):
        d0, d1, d1s, beta = 20, 30, 4, 1.5
        a1, a2 = sorted((a1, a2))
        assume(a2 - a1 > 1e-6 and a2 < beta)

        def slope(a):
            g = cont_gamma(a, beta)
            return d1s * (d0 - 1) / math.tan(a) - (d1 - 1) * math.tan(a) / math.tan(g) ** 2

        assume(slope(a2) > 0)
        assert log_phat_lower_cont(a2, beta, d0, d1, d1s) > log_phat_lower_cont(a1, beta, d0, d1, d1s)

    def test_not_monotone_in_alpha_next_to_beta(self):
        # as alpha approaches beta the second-layer cone closes
        lo = log_phat_lower_cont(0.55, 0.6, 100, 50, 5)
        hi = log_phat_lower_cont(0.59, 0.6, 100, 50, 5)
        assert hi < lo

    def test_second_dim_choice(self):
        a = log_phat_lower_cont(0.3, 0.6, 10, 50, 5, "student")
        b = log_phat_lower_cont(0.3, 0.6, 10, 50, 5, "teacher")
        assert b > a


class TestTeacherScale:
    def test_resnet18(self):
        spec = bounds.load_channel_spec("resnet18")
        res = solve_teacher_scale(spec["channels"], spec["kernels"], spec["N"], spec["eps"], spec["delta"],
                                  spec["Q"], spec["head_spatial"], spec["head_outputs"])
        assert 0.08 <= res.alpha <= 0.17
        assert 241_000 / 2 <= res.teacher_params <= 241_000 * 2
        assert res.c_hat <= res.target

    def test_saturates(self):
        res = solve_teacher_scale((1, 2, 2), (3, 3), 10**6, 0.3, 0.05, 4)
        assert res.saturated and res.alpha == 1.0

    def test_infeasible(self):
        with pytest.raises(BoundRangeError):
            solve_teacher_scale((3, 64, 64), (9, 9), 200, 0.3, 0.05, 4)

    def test_report_json(self):
        rep = bounds.BoundReport("chat_fc", 14 * L3, n_lemma1(14 * L3, 0.1, 0.05), {"Q": 3})
        d = rep.to_dict()
        np.testing.assert_allclose(d["c_hat_bits"], 14 * L3 / L2, rtol=REL)
