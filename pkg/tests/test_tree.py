"""Tree backend: divide-and-conquer tables vs the chain and brute force."""

import math

import numpy as np
import pytest

from convlabel import (
    EvidenceImpossibleError,
    chain_joint,
    chain_posterior_with_evidence,
    count_axis_convolve,
    tree_forward,
    tree_joint,
    tree_label_set_likelihood,
    tree_label_set_log_likelihood,
    tree_posterior,
    tree_posterior_with_evidence,
)
from oracle import enumerate_inference, random_instance

WORKED = np.array([[0.5, 0.5], [0.75, 0.25]])


class TestWorkedExample:
    def test_evidence(self):
        assert tree_label_set_likelihood(WORKED, {1}, 1) == pytest.approx(0.5, rel=1e-12)
        assert tree_label_set_likelihood(WORKED, {1}, 2) == pytest.approx(0.625, rel=1e-12)

    def test_posterior(self):
        post, logev = tree_posterior_with_evidence(WORKED, {1}, 1)
        assert logev == pytest.approx(math.log(0.5), rel=1e-12)
        assert np.allclose(post, [[0.25, 0.75], [0.75, 0.25]], atol=1e-12)

    def test_joint(self):
        joint = tree_joint(WORKED, {1}, 1)
        assert np.allclose(joint, [[0.125, 0.375], [0.375, 0.125]], atol=1e-12)


class TestOracleEquivalence:
    def test_random_instances(self):
        rng = np.random.default_rng(21)
        for _ in range(60):
            probs, label_set, cap = random_instance(rng)
            ref = enumerate_inference(probs, label_set, cap)
            post, logev = tree_posterior_with_evidence(probs, label_set, cap)
            assert np.exp(logev) == pytest.approx(ref["evidence"], rel=1e-12)
            assert np.allclose(post, ref["posterior"], atol=1e-12)
            assert np.allclose(tree_joint(probs, label_set, cap), ref["joint"], atol=1e-12)


class TestChainAgreement:
    def test_moderate_sizes(self):
        rng = np.random.default_rng(22)
        for T, size, ratio in ((137, 1, 0.1), (260, 2, 0.2), (511, 3, 0.5)):
            probs = rng.uniform(size=(T, size + 1)) + 1e-3
            probs /= probs.sum(axis=1, keepdims=True)
            label_set = set(range(1, size + 1))
            cap = max(size, int(round(ratio * T)))
            post_c, logev_c = chain_posterior_with_evidence(probs, label_set, cap)
            post_t, logev_t = tree_posterior_with_evidence(probs, label_set, cap)
            assert logev_t == pytest.approx(logev_c, rel=1e-11)
            assert np.allclose(post_t, post_c, atol=1e-11)

    def test_joint_agreement(self):
        rng = np.random.default_rng(23)
        probs = rng.uniform(size=(40, 3)) + 1e-3
        probs /= probs.sum(axis=1, keepdims=True)
        a = chain_joint(probs, {1, 2}, 9)
        b = tree_joint(probs, {1, 2}, 9)
        assert np.allclose(a, b, atol=1e-13)

    def test_tight_cap_tilt_regime(self):
        # cap equal to the set size forces the count tilt to bind hard
        rng = np.random.default_rng(24)
        probs = rng.uniform(size=(400, 3)) + 1e-3
        probs /= probs.sum(axis=1, keepdims=True)
        logev_c = chain_posterior_with_evidence(probs, {1, 2}, 2)[1]
        logev_t = tree_posterior_with_evidence(probs, {1, 2}, 2)[1]
        assert logev_t == pytest.approx(logev_c, rel=1e-10)


class TestCountAxisConvolve:
    def test_direct_and_fft_paths_agree(self):
        rng = np.random.default_rng(25)
        a = rng.uniform(size=(4, 30))
        b = rng.uniform(size=(4, 45))
        direct = count_axis_convolve(a, b, cap=60, crossover=1 << 40)
        fft = count_axis_convolve(a, b, cap=60, crossover=1)
        assert direct.shape == fft.shape
        assert np.allclose(direct, fft, rtol=1e-10, atol=1e-12)

    def test_truncates_at_cap(self):
        a = np.ones((1, 5))
        b = np.ones((1, 5))
        out = count_axis_convolve(a, b, cap=3, crossover=1 << 40)
        expected = np.convolve(np.ones(5), np.ones(5))[:4]
        assert out.shape == (1, 4)
        assert np.allclose(out[0], expected)


class TestStructure:
    def test_forward_levels(self):
        rng = np.random.default_rng(26)
        probs = rng.uniform(size=(9, 2)) + 1e-3
        probs /= probs.sum(axis=1, keepdims=True)
        forward = tree_forward(probs, {1}, 3)
        # 9 instants pad to 16 leaves; root level (index 0) has one node
        assert forward.num_real_leaves == 9
        assert forward.tables[-1].shape[0] == 16
        assert forward.tables[0].shape[0] == 1
        assert forward.root.ndim == 2
        assert forward.num_levels == 5

    def test_cap_below_set_size_raises(self):
        with pytest.raises(EvidenceImpossibleError):
            tree_posterior_with_evidence(WORKED, {1}, 0)

    def test_cap_clamped_to_instants(self):
        a = tree_posterior(WORKED, {1}, 2)
        b = tree_posterior(WORKED, {1}, 77)
        assert np.array_equal(a, b)

    def test_log_likelihood_matches_posterior_evidence(self):
        rng = np.random.default_rng(27)
        probs, label_set, cap = random_instance(rng)
        direct = tree_label_set_log_likelihood(probs, label_set, cap)
        _, logev = tree_posterior_with_evidence(probs, label_set, cap)
        assert direct == pytest.approx(logev, rel=1e-12)
