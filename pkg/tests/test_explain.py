import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arssvep.errors import EstimationError, ParameterError, ShapeError, SizeError
from arssvep.explain import (Attribution, Explainer, aggregate_importance, class_label,
                             exact_shapley, exact_shapley_all, kernel_shap, kernel_shap_all,
                             shapley_kernel_weight, stratified_indices, write_importance_csv)


def permutation_shapley(explainer, instance):
    """Average marginal contribution over every feature ordering (tiny M only)."""
    M = explainer.n_features
    phi = np.zeros(M)
    for order in itertools.permutations(range(M)):
        mask = np.zeros(M, dtype=bool)
        prev = explainer.coalition_values(instance, mask[None])[0, explainer.target]
        for j in order:
            mask[j] = True
            cur = explainer.coalition_values(instance, mask[None])[0, explainer.target]
            phi[j] += cur - prev
            prev = cur
    return phi / math.factorial(M)


def linear(beta):
    return lambda x: x @ beta


def nonlinear_model(x):
    z = x[:, 0] * x[:, 1] - x[:, 2] * x[:, 3] ** 2 + np.sin(x[:, 4]) + 0.5 * x[:, 5:].sum(axis=1)
    p = 1 / (1 + np.exp(-z))
    return np.stack([1 - p, p], axis=1)


class TestExplainer:
    def test_expected_value_and_outputs(self):
        bg = np.random.default_rng(0).standard_normal((7, 10))
        ex = Explainer(nonlinear_model, bg, target=1)
        assert ex.n_outputs == 2
        np.testing.assert_allclose(ex.expected_value, nonlinear_model(bg).mean(axis=0))

    def test_coalition_values_extremes(self):
        rng = np.random.default_rng(1)
        bg, x = rng.standard_normal((5, 10)), rng.standard_normal(10)
        ex = Explainer(nonlinear_model, bg)
        v = ex.coalition_values(x, np.array([[False] * 10, [True] * 10]))
        np.testing.assert_allclose(v[0], ex.expected_value)
        np.testing.assert_allclose(v[1], nonlinear_model(x[None])[0])

    def test_rejects_non_probabilities(self):
        with pytest.raises(ParameterError):
            Explainer(lambda x: x[:, :2], np.ones((3, 4)))

    def test_rejects_empty_background(self):
        with pytest.raises(ShapeError):
            Explainer(nonlinear_model, np.zeros((0, 10)))

    def test_feature_names(self):
        ex = Explainer(nonlinear_model, np.zeros((2, 10)))
        assert ex.feature_names[:2] == ("x0", "x1")
        ex80 = Explainer(lambda x: np.full((len(x), 4), 0.25), np.zeros((2, 80)))
        assert ex80.feature_names[79] == "PO6_min"

    def test_sequence_inputs_mask_columns(self):
        rng = np.random.default_rng(2)
        bg = rng.standard_normal((4, 6, 80))
        x = rng.standard_normal((6, 80))
        seen = []

        def model(batch):
            seen.append(batch)
            return np.full((len(batch), 4), 0.25)

        ex = Explainer(model, bg)
        mask = np.zeros(80, dtype=bool)
        mask[3] = True
        ex.coalition_values(x, mask[None])
        batch = seen[-1]
        np.testing.assert_array_equal(batch[:, :, 3], np.broadcast_to(x[:, 3], (4, 6)))
        np.testing.assert_array_equal(batch[:, :, 4], bg[:, :, 4])


class TestExactShapley:
    def test_matches_permutation_definition(self):
        rng = np.random.default_rng(3)
        bg, x = rng.standard_normal((6, 5)), rng.standard_normal(5)
        model = lambda b: nonlinear_model(np.concatenate([b, np.zeros((len(b), 5))], axis=1))
        ex = Explainer(model, bg, target=1)
        attr = exact_shapley(ex, x)
        np.testing.assert_allclose(attr.phi, permutation_shapley(ex, x), atol=1e-12)
        assert attr.estimator == "exact" and attr.n_samples == 32
        assert attr.additivity_error() < 1e-12

    def test_null_player(self):
        rng = np.random.default_rng(4)
        beta = rng.standard_normal(8)
        beta[[2, 5]] = 0.0
        ex = Explainer(linear(beta), rng.standard_normal((5, 8)), check_probabilities=False)
        attr = exact_shapley(ex, rng.standard_normal(8))
        assert np.all(np.abs(attr.phi[[2, 5]]) < 1e-10)

    def test_symmetry(self):
        bg = np.random.default_rng(5).standard_normal((4, 6))
        bg[:, 1] = bg[:, 0]
        x = np.array([1.5, 1.5, 0.3, -0.2, 0.7, 0.1])
        model = lambda b: np.tanh(b[:, 0] + b[:, 1]) * b[:, 2] + b[:, 3] * b[:, 4]
        ex = Explainer(model, bg, check_probabilities=False)
        phi = exact_shapley(ex, x).phi
        assert abs(phi[0] - phi[1]) < 1e-10

    def test_linear_closed_form(self):
        rng = np.random.default_rng(6)
        beta, b, x = rng.standard_normal((3, 12))
        ex = Explainer(linear(beta), b[None], check_probabilities=False)
        attr = exact_shapley(ex, x)
        np.testing.assert_allclose(attr.phi, beta * (x - b), atol=1e-12)
        assert attr.phi0 == pytest.approx(beta @ b)

    def test_size_limit(self):
        ex = Explainer(linear(np.ones(16)), np.zeros((1, 16)), check_probabilities=False)
        with pytest.raises(SizeError, match="kernel_shap"):
            exact_shapley(ex, np.ones(16))

    def test_active_subset(self):
        rng = np.random.default_rng(7)
        beta, b, x = rng.standard_normal((3, 40))
        ex = Explainer(linear(beta), b[None], check_probabilities=False)
        active = [3, 17, 29]
        attr = exact_shapley(ex, x, active)
        expected = np.zeros(40)
        expected[active] = (beta * (x - b))[active]
        np.testing.assert_allclose(attr.phi, expected, atol=1e-12)
        assert attr.additivity_error() < 1e-12

    def test_all_outputs(self):
        rng = np.random.default_rng(8)
        ex = Explainer(nonlinear_model, rng.standard_normal((3, 10)))
        attrs = exact_shapley_all(ex, rng.standard_normal(10))
        assert [a.target for a in attrs] == [0, 1]
        # the two class probabilities sum to one, so attributions cancel
        np.testing.assert_allclose(attrs[0].phi, -attrs[1].phi, atol=1e-12)


class TestKernelShap:
    def test_kernel_weight(self):
        assert shapley_kernel_weight(4, 1) == pytest.approx(3 / (4 * 1 * 3))
        np.testing.assert_allclose(shapley_kernel_weight(10, [1, 9]), [1 / 10, 1 / 10])

    def test_full_enumeration_matches_exact(self):
        rng = np.random.default_rng(9)
        beta, b, x = rng.standard_normal((3, 10))
        ex = Explainer(linear(beta), b[None], check_probabilities=False)
        kern = kernel_shap(ex, x, n_samples=2 ** 10)
        np.testing.assert_allclose(kern.phi, exact_shapley(ex, x).phi, atol=1e-6)
        np.testing.assert_allclose(kern.phi, beta * (x - b), atol=1e-6)
        assert kern.additivity_error() < 1e-10

    def test_full_enumeration_nonlinear(self):
        rng = np.random.default_rng(10)
        ex = Explainer(nonlinear_model, rng.standard_normal((8, 10)), target=1)
        x = rng.standard_normal(10)
        np.testing.assert_allclose(kernel_shap(ex, x, 1024).phi, exact_shapley(ex, x).phi,
                                   atol=1e-10)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1), n=st.sampled_from([40, 64, 100, 300]))
    def test_sampled_additivity_exact(self, seed, n):
        rng = np.random.default_rng(seed)
        ex = Explainer(nonlinear_model, rng.standard_normal((4, 10)), target=1)
        attr = kernel_shap(ex, rng.standard_normal(10), n_samples=n, seed=seed)
        assert attr.additivity_error() < 1e-10

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1))
    def test_minimum_budget_is_exact_or_refuses(self, seed):
        rng = np.random.default_rng(seed)
        ex = Explainer(nonlinear_model, rng.standard_normal((4, 10)), target=1)
        try:
            attr = kernel_shap(ex, rng.standard_normal(10), n_samples=22, seed=seed)
        except EstimationError:
            return
        assert attr.additivity_error() < 1e-10

    def test_outer_sizes_enumerated(self):
        from arssvep.explain import _coalitions
        bits, w = _coalitions(80, 4096, np.random.default_rng(0))
        assert len(bits) == 4094
        sizes = bits.sum(axis=1)
        singles = bits[sizes == 1]
        assert len(singles) == 80 and np.all(singles.sum(axis=0) == 1)
        np.testing.assert_allclose(w[sizes == 1], shapley_kernel_weight(80, 1))
        # sampled rows carry the kernel mass left after the enumerated levels
        total = sum(79 / (s * (80 - s)) for s in range(1, 80))
        assert w.sum() == pytest.approx(total)

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(11)
        ex = Explainer(nonlinear_model, rng.standard_normal((4, 10)), target=1)
        x = rng.standard_normal(10)
        a, b, c = (kernel_shap(ex, x, 100, s) for s in (3, 3, 4))
        np.testing.assert_array_equal(a.phi, b.phi)
        assert not np.array_equal(a.phi, c.phi)

    def test_error_shrinks_with_budget(self):
        errors = []
        for n in (64, 128, 256, 512, 1024):
            per_seed = []
            for seed in range(20):
                rng = np.random.default_rng(1000 + seed)
                ex = Explainer(nonlinear_model, rng.standard_normal((5, 10)), target=1)
                x = rng.standard_normal(10)
                exact = exact_shapley(ex, x).phi
                per_seed.append(np.mean(np.abs(kernel_shap(ex, x, n, seed).phi - exact)))
            errors.append(np.mean(per_seed))
        assert all(b < a for a, b in zip(errors, errors[1:]))

    def test_budget_too_small(self):
        ex = Explainer(nonlinear_model, np.zeros((1, 10)))
        with pytest.raises(SizeError):
            kernel_shap(ex, np.ones(10), n_samples=21)

    def test_rank_deficient_design(self, monkeypatch):
        import arssvep.explain as explain_mod
        ex = Explainer(nonlinear_model, np.zeros((1, 10)))

        def one_pair(M, n, rng):
            z = np.zeros((2, M), dtype=bool)
            z[0, 0] = True
            z[1] = ~z[0]
            return z, np.ones(2)

        monkeypatch.setattr(explain_mod, "_coalitions", one_pair)
        with pytest.raises(EstimationError, match="increase n_samples"):
            kernel_shap(ex, np.ones(10), n_samples=22)

    def test_single_active_feature(self):
        rng = np.random.default_rng(12)
        beta, b, x = rng.standard_normal((3, 6))
        ex = Explainer(linear(beta), b[None], check_probabilities=False)
        attr = kernel_shap(ex, x, 4, active_features=[2])
        assert attr.phi[2] == pytest.approx(beta[2] * (x[2] - b[2]))
        assert np.count_nonzero(attr.phi) == 1


class TestAttribution:
    def test_additivity_enforced(self):
        with pytest.raises(EstimationError):
            Attribution(np.array([0.1, 0.2]), 0.5, 0.9, 0, "exact", 4, np.zeros(2))

    def test_unknown_estimator(self):
        with pytest.raises(ParameterError):
            Attribution(np.array([0.1]), 0.5, 0.6, 0, "lime", 4, np.zeros(1))

    def test_ranking_by_magnitude(self):
        a = Attribution(np.array([0.1, -0.4, 0.2, 0.0]), 0.0, -0.1, 0, "exact", 1, np.zeros(4))
        assert a.ranking() == [1, 2, 0, 3]


def _attr(phi, target, names):
    phi = np.asarray(phi, dtype=float)
    return Attribution(phi, 0.0, float(phi.sum()), target, "exact", 1, np.zeros(len(phi)), names)


class TestAggregate:
    NAMES = ("a", "b", "c")

    def test_single_attribution(self):
        table = aggregate_importance([_attr([0.1, -0.5, 0.3], 2, self.NAMES)])
        assert table.top(3, 2) == ["b", "c", "a"]
        assert table.top(3) == ["b", "c", "a"]
        np.testing.assert_allclose(table.values(2), [0.1, 0.5, 0.3])

    def test_mean_abs_and_class_balance(self):
        attrs = [_attr([1.0, 0.0, 0.0], 0, self.NAMES), _attr([-3.0, 0.0, 0.0], 0, self.NAMES),
                 _attr([0.0, 0.0, 4.0], 1, self.NAMES)]
        table = aggregate_importance(attrs)
        np.testing.assert_allclose(table.per_class[0], [2.0, 0.0, 0.0])
        np.testing.assert_allclose(table.overall, [1.0, 0.0, 2.0])
        assert table.counts == {0: 2, 1: 1}

    def test_constant_feature_ranks_last(self):
        rng = np.random.default_rng(13)
        bg = rng.standard_normal((5, 4))
        bg[:, 2] = 0.7
        model = lambda b: np.tanh(b @ np.array([1.0, -2.0, 3.0, 0.5]))
        ex = Explainer(model, bg, check_probabilities=False, feature_names=list("wxyz"))
        attrs = []
        for _ in range(3):
            x = rng.standard_normal(4)
            x[2] = 0.7
            attrs.append(exact_shapley(ex, x))
        table = aggregate_importance(attrs)
        assert table.values()[2] == 0.0
        assert table.ranking()[-1] == ("y", 0.0)

    def test_empty(self):
        with pytest.raises(ParameterError):
            aggregate_importance([])

    def test_csv(self, tmp_path):
        table = aggregate_importance([_attr([0.1, -0.5, 0.3], 2, self.NAMES)])
        write_importance_csv(tmp_path / "s.csv", table, 2)
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "feature,class,mean_abs_shap,rank"
        assert lines[1] == "b,Active,0.5,1"
        write_importance_csv(tmp_path / "o.csv", table)
        assert (tmp_path / "o.csv").read_text().splitlines()[3] == "a,overall,0.1,3"

    def test_class_labels(self):
        assert [class_label(c) for c in range(4)] == ["Start", "Stop", "Active", "Passive"]


class TestStratified:
    def test_balanced(self):
        labels = np.repeat([0, 1, 2, 3], [30, 5, 30, 30])
        idx = stratified_indices(labels, 20, seed=0)
        assert len(idx) == 20 and len(set(idx)) == 20
        np.testing.assert_array_equal(np.bincount(labels[idx], minlength=4), [5, 5, 5, 5])

    def test_small_pool(self):
        labels = np.repeat([0, 1, 2, 3], [30, 2, 30, 30])
        counts = np.bincount(labels[stratified_indices(labels, 20, seed=1)], minlength=4)
        assert counts[1] == 2 and counts.sum() == 20

    def test_deterministic(self):
        labels = np.arange(40) % 4
        np.testing.assert_array_equal(stratified_indices(labels, 9, 5), stratified_indices(labels, 9, 5))
        assert len(stratified_indices(labels, 100, 0)) == 40


@pytest.fixture(scope="module")
def surrogate():
    """Briefly trained MACNN-BiLSTM on synthetic feature sequences."""
    from arssvep.features import log_power, sequence_tensor
    from arssvep.nn import MACNNBiLSTM, TrainConfig, train
    from arssvep.signals import (SessionMeta, SynthConfig, bandpass_filter,
                                 extract_analysis_segment, generate_synthetic_session,
                                 slice_windows)
    eps = extract_analysis_segment(bandpass_filter(generate_synthetic_session(
        SynthConfig(snr_db=-6.0, seed=21), SessionMeta(trials_per_class=3))))
    windows = slice_windows(eps, 1.5, 0.2)
    x = log_power(sequence_tensor(windows.data))
    model = MACNNBiLSTM(seed=0)
    model.fit_normalizer(x)
    train(model, x, windows.labels, cfg=TrainConfig(lr=0.001, epochs=10, seed=0))
    return model, x, windows.labels


class TestNetworkSurrogate:
    def test_top5_stable_across_seeds(self, surrogate):
        model, x, y = surrogate
        bg = x[stratified_indices(y, 8, 0)]
        instances = stratified_indices(y, 4, 1)
        tops = {0: [], 1: []}
        per_seed = {0: [], 1: []}
        for i in instances:
            ex = Explainer(model.predict_proba, bg, int(model.predict(x[i:i + 1])[0]))
            for seed in (0, 1):
                attr = kernel_shap(ex, x[i], 4096, seed)
                assert attr.additivity_error() < 1e-10
                tops[seed].append(set(attr.ranking()[:5]))
                per_seed[seed].append(np.abs(attr.phi))
        overlaps = [len(a & b) for a, b in zip(tops[0], tops[1])]
        assert sum(o >= 3 for o in overlaps) > len(overlaps) / 2
        mean_top = [set(np.argsort(-np.mean(per_seed[s], axis=0))[:5]) for s in (0, 1)]
        assert len(mean_top[0] & mean_top[1]) >= 3

    def test_all_classes_share_coalitions(self, surrogate):
        model, x, y = surrogate
        ex = Explainer(model.predict_proba, x[:3])
        attrs = kernel_shap_all(ex, x[5], 200, seed=2, instance_id=5)
        assert [a.target for a in attrs] == [0, 1, 2, 3]
        assert all(a.instance_id == 5 for a in attrs)
        np.testing.assert_allclose(sum(a.phi for a in attrs), 0.0, atol=1e-10)
        table = aggregate_importance(attrs)
        assert len(table.ranking(0)) == 80
