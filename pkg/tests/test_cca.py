import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from arssvep.cca import (ReferenceBank, argmax_frequency, build_references,
                         canonical_correlation, cca_classify, cca_scores)
from arssvep.errors import DegenerateInputError, ParameterError, ShapeError
from arssvep.signals import (SessionMeta, Stimulus, SynthConfig, bandpass_filter,
                             extract_analysis_segment, generate_synthetic_session, slice_windows)


def brute_force_rho(X, Y, n_grid=2000):
    """Correlation of projections maximised over unit directions on an angle grid (2-D only)."""
    theta = np.arange(n_grid) * np.pi / n_grid
    dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    a = dirs @ (X - X.mean(axis=1, keepdims=True))
    b = dirs @ (Y - Y.mean(axis=1, keepdims=True))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b /= np.linalg.norm(b, axis=1, keepdims=True)
    return np.abs(a @ b.T).max()


def _corr(u, v):
    u = u - u.mean()
    v = v - v.mean()
    return float(u @ v / np.sqrt((u @ u) * (v @ v)))


class TestReferences:
    def test_layout(self):
        bank = build_references([6.0], 2, 1000.0, 1000)
        y = bank[6.0]
        t = np.arange(1000) / 1000.0
        assert y.shape == (4, 1000)
        np.testing.assert_allclose(y[0], np.sin(2 * np.pi * 6 * t), atol=1e-12)
        np.testing.assert_allclose(y[3], np.cos(2 * np.pi * 12 * t), atol=1e-12)

    def test_default_bank_has_every_stimulus(self):
        bank = build_references()
        assert bank.frequencies == (6.0, 8.0, 10.0, 12.0)
        assert all(bank[f].shape == (4, 1000) for f in bank.frequencies)

    def test_highest_line_inside_band(self):
        bank = build_references([12.0], 2)
        assert 12.0 * bank.n_harmonics == 24.0
        assert 24.0 < 25.0 < bank.sampling_rate / 2

    def test_harmonic_above_nyquist(self):
        with pytest.raises(ParameterError):
            build_references([12.0], 50, 1000.0, 1000)

    def test_rows_are_single_spectral_lines(self):
        for f, y in build_references().references.items():
            power = np.abs(np.fft.rfft(y, axis=1)) ** 2
            assert np.all(power.max(axis=1) / power.sum(axis=1) > 0.999)


class TestCanonicalCorrelation:
    @pytest.mark.parametrize("seed", range(10))
    def test_brute_force_oracle(self, seed):
        rng = np.random.default_rng(seed)
        X, Y = rng.standard_normal((2, 2, 50))
        Y = Y + 0.5 * X[::-1]
        assert abs(canonical_correlation(X, Y).rho - brute_force_rho(X, Y)) < 1e-4

    @pytest.mark.parametrize("seed", range(5))
    def test_invertible_map_saturates(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((3, 400))
        P = rng.standard_normal((3, 3)) + 3 * np.eye(3)
        assert canonical_correlation(X, P @ X).rho >= 1 - 1e-9

    def test_null_distribution(self):
        rhos = []
        for seed in range(100):
            rng = np.random.default_rng(seed)
            X, Y = rng.standard_normal((2, 2, 5000))
            rhos.append(canonical_correlation(X, Y).rho)
        assert np.percentile(rhos, 95) < 0.1

    def test_weights_reproduce_rho(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((4, 300))
        Y = build_references([10.0], 2, 1000.0, 300)[10.0] + 0.3 * rng.standard_normal((4, 300))
        res = canonical_correlation(X + 0.5 * Y[[0, 1, 2, 3]], Y)
        assert res.wx.shape == (4,) and res.wy.shape == (4,)
        assert abs(_corr(res.wx @ X + 0.5 * res.wx @ Y, res.wy @ Y) - res.rho) < 1e-6

    def test_symmetry(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((3, 200))
        Y = rng.standard_normal((4, 200)) + 0.2 * X[[0, 1, 2, 0]]
        assert abs(canonical_correlation(X, Y).rho - canonical_correlation(Y, X).rho) < 1e-9

    def test_reproducible(self):
        rng = np.random.default_rng(1)
        X, Y = rng.standard_normal((2, 3, 100))
        a, b = canonical_correlation(X, Y), canonical_correlation(X, Y)
        assert a.rho == b.rho
        np.testing.assert_array_equal(a.wx, b.wx)

    def test_more_noise_lowers_rho(self):
        t = np.arange(500) / 1000.0
        bank = build_references([10.0], 2, 1000.0, 500)
        clean = np.outer([1.0, 0.8, 0.6], np.sin(2 * np.pi * 10 * t))
        means = []
        for sigma in (0.5, 1.0, 2.0, 4.0):
            means.append(np.mean([canonical_correlation(
                clean + sigma * np.random.default_rng(s).standard_normal(clean.shape),
                bank[10.0]).rho for s in range(50)]))
        assert all(a >= b for a, b in zip(means, means[1:]))

    def test_degenerate_row_identified(self):
        X = np.random.default_rng(0).standard_normal((3, 100))
        X[1] = 4.0
        with pytest.raises(DegenerateInputError) as err:
            canonical_correlation(X, build_references([6.0], 1, 1000.0, 100)[6.0])
        assert err.value.row == ("X", 1)

    def test_shape_errors(self):
        with pytest.raises(ShapeError):
            canonical_correlation(np.ones((2, 10)), np.ones((2, 11)))
        rng = np.random.default_rng(0)
        with pytest.raises(ShapeError):
            canonical_correlation(rng.standard_normal((3, 7)), rng.standard_normal((4, 7)))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1), c=st.floats(1e-3, 1e3),
           channel=st.integers(0, 2))
    def test_scale_invariance(self, seed, c, channel):
        rng = np.random.default_rng(seed)
        bank = build_references(n_samples=200)
        X = rng.standard_normal((3, 200)) + bank[8.0][:3]
        base = cca_scores(X, bank)
        scaled = X.copy()
        scaled[channel] *= c
        for Z in (c * X, scaled):
            s = cca_scores(Z, bank)
            assert argmax_frequency(s) == argmax_frequency(base)
            assert max(abs(s[f] - base[f]) for f in s) < 1e-9

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1))
    def test_rho_in_unit_interval(self, seed):
        rng = np.random.default_rng(seed)
        X, Y = rng.standard_normal((2, 2, 30))
        assert 0.0 <= canonical_correlation(X, Y).rho <= 1.0 + 1e-9


class TestClassify:
    def test_noiseless_active(self):
        t = np.arange(1000) / 1000.0
        window = np.outer([1.0, 0.7, 0.5],
                          np.sin(2 * np.pi * 10 * t + 0.3) + 0.5 * np.sin(2 * np.pi * 20 * t))
        window = window + 1e-3 * np.random.default_rng(0).standard_normal(window.shape)
        cls, scores = cca_classify(window, build_references())
        assert cls is Stimulus.ACTIVE
        assert scores[10.0] > 0.99
        assert set(scores) == {6.0, 8.0, 10.0, 12.0}

    def test_tie_goes_to_lowest_frequency(self):
        assert argmax_frequency({12.0: 0.5, 8.0: 0.7, 6.0: 0.7}) == 6.0
        ref = build_references([8.0], 2, 1000.0, 500)[8.0]
        bank = ReferenceBank((6.0, 8.0), 2, 1000.0, 500, {6.0: ref, 8.0: ref})
        window = np.random.default_rng(0).standard_normal((2, 500))
        cls, scores = cca_classify(window, bank)
        assert scores[6.0] == scores[8.0]
        assert cls is Stimulus.START

    def test_window_length_mismatch(self):
        with pytest.raises(ShapeError):
            cca_classify(np.ones((2, 999)), build_references())

    def test_zero_db_beats_chance(self):
        eps = extract_analysis_segment(bandpass_filter(generate_synthetic_session(
            SynthConfig(snr_db=0.0, seed=6), SessionMeta(trials_per_class=4))))
        windows = slice_windows(eps, 1.5, 0.2)
        assert windows.n_trials >= 200
        bank = build_references(n_samples=windows.n_samples)
        correct = sum(int(cca_classify(x, bank)[0]) == y
                      for x, y in zip(windows.data, windows.labels))
        p = stats.binomtest(correct, windows.n_trials, 0.25, alternative="greater").pvalue
        assert p < 0.01
