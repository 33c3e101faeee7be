import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gnclab.quantnet import Activation, ConvArch, FcArch, QuantGrid, QuantParams, param_count
from gnclab.teacher import (
    DegenerateTeacherError,
    EmbeddingError,
    InputDomain,
    LabeledSet,
    TeacherSpec,
    embed_teacher,
    embed_teacher_conv,
    embed_teacher_fc,
    embed_teacher_sfc,
    embedding_map,
    empirical_error,
    generate_dataset,
    is_teacher_equivalent,
    population_error,
    sample_teacher,
    teacher_from_dict,
    teacher_to_dict,
)

G3 = QuantGrid.default(3)


def _random_params(arch, grid, rng):
    return QuantParams(arch, grid, rng.choice(grid.values, size=param_count(arch)))


class TestDomain:
    def test_hypercube_enumeration_order(self):
        pts = InputDomain.hypercube(2).enumerate()
        np.testing.assert_array_equal(pts, [[-1, -1], [-1, 1], [1, -1], [1, 1]])

    def test_enumerable_limit(self):
        assert InputDomain.hypercube(20).enumerable
        assert not InputDomain.hypercube(21).enumerable
        assert not InputDomain.gaussian(2).enumerable

    def test_finite_grid_rejects_duplicates(self):
        with pytest.raises(ValueError):
            InputDomain.finite_grid([[1.0], [1.0]])

    def test_dict_roundtrip(self):
        d = InputDomain.finite_grid([-2, -1, 1, 2])
        back = InputDomain.from_dict(d.to_dict())
        np.testing.assert_array_equal(back.enumerate(), d.enumerate())


class TestTeacherSampling:
    def test_reject_constant_yields_both_labels(self):
        arch = FcArch((3, 2, 1))
        dom = InputDomain.hypercube(3)
        for seed in range(10):
            t = sample_teacher(arch, G3, seed, "reject-constant", dom)
            labels = t.predict(dom.enumerate())
            assert set(np.unique(labels)) == {-1, 1}

    def test_degenerate_error_reports_fractions(self):
        # every draw from the all-zero grid is constant
        with pytest.raises(DegenerateTeacherError) as info:
            sample_teacher(FcArch((1, 1, 1)), QuantGrid((0.0, 1.0)), 0, "reject-constant",
                           InputDomain.finite_grid([[1.0], [2.0]]), max_attempts=20)
        assert len(info.value.positive_fractions) == 20

    def test_seed_reproducible(self):
        a = sample_teacher(FcArch((2, 3, 1)), G3, 99)
        b = sample_teacher(FcArch((2, 3, 1)), G3, 99)
        assert a.params == b.params

    def test_dict_roundtrip(self):
        t = sample_teacher(FcArch((2, 3, 1), "scaled"), G3, 4, act=Activation.lrelu(0.2))
        back = teacher_from_dict(teacher_to_dict(t))
        assert back.params == t.params and back.act == t.act


class TestEmbedding:
    def _check(self, t_arch, s_arch, domain_shape, rng, n_probe=1000):
        teacher = TeacherSpec(_random_params(t_arch, G3, rng))
        filler = _random_params(s_arch, G3, rng)
        student = embed_teacher(teacher, s_arch, filler)
        X = rng.standard_normal((n_probe,) + domain_shape)
        np.testing.assert_array_equal(TeacherSpec(student).predict(X), teacher.predict(X))
        np.testing.assert_allclose(TeacherSpec(student).logits(X), teacher.logits(X), rtol=1e-12, atol=1e-12)

    def test_fc_example(self, rng):
        for _ in range(20):
            self._check(FcArch((1, 1, 1)), FcArch((1, 2, 1)), (1,), rng)

    def test_sfc_example(self, rng):
        for _ in range(20):
            self._check(FcArch((2, 1, 1), "scaled"), FcArch((2, 4, 1), "scaled"), (2,), rng)

    def test_cnn_example(self, rng):
        for _ in range(20):
            self._check(ConvArch((1, 1), (2,), 3), ConvArch((1, 2), (2,), 3), (1, 3), rng)

    def test_scn_deep(self, rng):
        for _ in range(20):
            self._check(ConvArch((2, 1, 2), (2, 2), 5, "scaled"), ConvArch((2, 3, 3), (2, 2), 5, "scaled"), (2, 5), rng)

    @settings(max_examples=40, deadline=None)
    @given(
        t=st.lists(st.integers(1, 3), min_size=1, max_size=3),
        extra=st.lists(st.integers(0, 2), min_size=3, max_size=3),
        d0=st.integers(1, 3),
        flavor=st.sampled_from(["vanilla", "scaled"]),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_fc_property(self, t, extra, d0, flavor, seed):
        t_w = (d0,) + tuple(t) + (1,)
        s_w = (d0,) + tuple(a + b for a, b in zip(t, extra)) + (1,)
        self._check(FcArch(t_w, flavor), FcArch(s_w, flavor), (d0,), np.random.default_rng(seed), 200)

    def test_fc_count(self):
        # copied W and b of the teacher plus zeroed cross blocks
        m = embedding_map(FcArch((3, 2, 1)), FcArch((3, 5, 1)))
        assert m.count == (2 * 3 + 2) + (1 * 5 + 1)

    def test_sfc_count(self):
        m = embedding_map(FcArch((2, 1, 1), "scaled"), FcArch((2, 4, 1), "scaled"))
        # copy W11, b1, g1 (1*2 + 1 + 1), zero b and g of 3 extra units, copy head W and b
        assert m.count == 4 + 6 + 2

    def test_cnn_count(self):
        m = embedding_map(ConvArch((1, 1), (2,), 3), ConvArch((1, 2), (2,), 3))
        s = ConvArch((1, 2), (2,), 3)
        assert m.count == s.head_width + 1 + (2 * 1 * 1 + 1)

    def test_mask_matches_count(self):
        m = embedding_map(FcArch((2, 1, 1), "scaled"), FcArch((2, 3, 1), "scaled"))
        assert int(m.mask().sum()) == m.count

    def test_incompatible(self):
        with pytest.raises(EmbeddingError):
            embedding_map(FcArch((2, 3, 1)), FcArch((2, 2, 1)))
        with pytest.raises(EmbeddingError):
            embedding_map(FcArch((2, 1, 1)), FcArch((2, 3, 1), "scaled"))

    def test_flavor_specific_entry_points(self, rng):
        with pytest.raises(EmbeddingError):
            embed_teacher_sfc(TeacherSpec(_random_params(FcArch((1, 1, 1)), G3, rng)), FcArch((1, 2, 1)))
        with pytest.raises(EmbeddingError):
            embed_teacher_conv(TeacherSpec(_random_params(FcArch((1, 1, 1)), G3, rng)), FcArch((1, 2, 1)))

    def test_embedded_is_teacher_equivalent_on_hypercube(self, rng):
        dom = InputDomain.hypercube(3)
        for seed in range(10):
            t = sample_teacher(FcArch((3, 1, 1)), G3, seed, "reject-constant", dom)
            h = TeacherSpec(embed_teacher_fc(t, FcArch((3, 4, 1)), _random_params(FcArch((3, 4, 1)), G3, rng)))
            assert is_teacher_equivalent(h, t, dom).verdict == "equivalent"

    def test_negated_head_refuted(self):
        dom = InputDomain.hypercube(3)
        arch = FcArch((3, 2, 1))
        for seed in range(10):
            t = sample_teacher(arch, G3, seed, "reject-constant", dom)
            vals = t.params.values.copy()
            vals[-3:] *= -1  # head W2 and b2
            neg = TeacherSpec(QuantParams(arch, G3, vals))
            check = is_teacher_equivalent(neg, t, dom)
            assert check.verdict == "not-equivalent" and check.refuted


class TestData:
    def test_csv_roundtrip(self, tmp_path):
        t = sample_teacher(FcArch((2, 2, 1)), G3, 1)
        S = generate_dataset(InputDomain.gaussian(2), t, 7, 5)
        S.to_csv(tmp_path / "s.csv")
        back = LabeledSet.from_csv(tmp_path / "s.csv")
        np.testing.assert_array_equal(back.X, S.X)
        np.testing.assert_array_equal(back.y, S.y)
        assert (tmp_path / "s.csv").read_text().splitlines()[0] == "x_1,x_2,y"

    def test_exhaustive(self):
        t = sample_teacher(FcArch((3, 1, 1)), G3, 2)
        S = generate_dataset(InputDomain.hypercube(3), t, 8, None, exhaustive=True)
        assert len(S) == 8
        assert empirical_error(t, S) == 0.0

    def test_labels_validated(self):
        with pytest.raises(ValueError):
            LabeledSet(np.zeros((2, 1)), [1, 0])

    def test_empty_error(self):
        t = sample_teacher(FcArch((1, 1, 1)), G3, 0)
        with pytest.raises(ValueError):
            empirical_error(t, LabeledSet(np.zeros((0, 1)), []))

    def test_population_error_exact_vs_mc(self):
        dom = InputDomain.hypercube(3)
        t = sample_teacher(FcArch((3, 1, 1)), G3, 3, "reject-constant", dom)
        h = sample_teacher(FcArch((3, 2, 1)), G3, 8)
        ex = population_error(h, t, dom, exact=True)
        mc = population_error(h, t, dom, mc_samples=20_000, rng=0)
        assert ex.mode == "exact" and mc.mode == "monte-carlo"
        assert mc.ci_low <= ex.estimate <= mc.ci_high

    def test_gaussian_half_width(self):
        dom = InputDomain.gaussian(2)
        t = TeacherSpec(QuantParams(FcArch((2, 1, 1)), G3, [1, 0, 0, -1, 0]))
        h = TeacherSpec(QuantParams(FcArch((2, 1, 1)), G3, [0, 1, 0, -1, 0]))
        # labels are +1 on x_1 <= 0 and on x_2 <= 0; they disagree on half the mass
        est = population_error(h, t, dom, mc_samples=100_000, rng=1)
        assert est.half_width <= 0.005
        assert est.ci_low <= 0.5 <= est.ci_high
