"""Analysis scores and the softmax label prior."""

import numpy as np
import pytest
from scipy import special as spsp

from convlabel import ModelParams, Signal, analyze, prior_field, prior_for
from convlabel.prior import convolve_full


class TestConvolveFull:
    def test_matches_numpy_single_channel(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(1, 20))
        k = rng.normal(size=(1, 5))
        expected = np.convolve(x[0], k[0], mode="full")
        assert np.allclose(convolve_full(x, k), expected, atol=1e-12)

    def test_sums_over_channels(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(3, 15))
        k = rng.normal(size=(3, 4))
        expected = sum(np.convolve(x[f], k[f], mode="full") for f in range(3))
        assert np.allclose(convolve_full(x, k), expected, atol=1e-12)

    def test_batched_kernels(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2, 10))
        ks = rng.normal(size=(4, 2, 3))
        out = convolve_full(x, ks)
        assert out.shape == (4, 12)
        for i in range(4):
            assert np.allclose(out[i], convolve_full(x, ks[i]), atol=1e-12)

    def test_fft_path_agrees_with_direct(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 300))
        ks = rng.normal(size=(3, 2, 17))
        direct = convolve_full(x, ks, crossover=1 << 62)
        fft = convolve_full(x, ks, crossover=1)
        assert np.allclose(direct, fft, atol=1e-10)


class TestAnalyze:
    def test_scores_are_convolution_plus_bias(self):
        rng = np.random.default_rng(4)
        signal = Signal(rng.normal(size=(2, 12)), ident="a")
        words = rng.normal(size=(3, 2, 5))
        biases = rng.normal(size=3)
        field = analyze(signal, ModelParams(words, biases))
        assert field.scores.shape == (16, 3)
        assert field.offset == 2
        for c in range(3):
            expected = sum(
                np.convolve(signal.samples[f], words[c, f], mode="full")
                for f in range(2)
            ) + biases[c]
            assert np.allclose(field.scores[:, c], expected, atol=1e-12)

    def test_channel_mismatch_raises(self):
        signal = Signal(np.zeros((2, 8)))
        params = ModelParams(np.zeros((2, 3, 5)), np.zeros(2))
        with pytest.raises(ValueError, match="channels"):
            analyze(signal, params)


class TestPriorField:
    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(5)
        signal = Signal(rng.normal(size=(1, 30)))
        params = ModelParams(rng.normal(size=(4, 1, 7)), rng.normal(size=4))
        field = prior_for(signal, params)
        assert field.probs.shape == (36, 4)
        assert np.allclose(field.probs.sum(axis=1), 1.0, atol=1e-12)
        assert (field.probs >= 0).all()

    def test_matches_scipy_softmax(self):
        rng = np.random.default_rng(6)
        signal = Signal(rng.normal(size=(1, 10)))
        params = ModelParams(rng.normal(size=(3, 1, 3)), rng.normal(size=3))
        field = analyze(signal, params)
        probs = prior_field(field).probs
        assert np.allclose(probs, spsp.softmax(field.scores, axis=1), atol=1e-14)

    def test_huge_scores_do_not_overflow(self):
        # scale far beyond exp range; the row max is subtracted first
        signal = Signal(np.ones((1, 6)))
        params = ModelParams(1e4 * np.ones((2, 1, 3)), np.array([0.0, 1e4]))
        probs = prior_for(signal, params).probs
        assert np.isfinite(probs).all()
        assert np.allclose(probs.sum(axis=1), 1.0)

    def test_offset_indexes_signal_time_zero(self):
        signal = Signal(np.zeros((1, 9)))
        params = ModelParams(np.zeros((2, 1, 5)), np.zeros(2))
        field = prior_for(signal, params)
        assert field.offset == params.delta == 2
        assert field.num_instants == 13
        assert field.num_classes == 1
