"""Prediction rules: instance argmax, union and MAP label sets, signal scores."""

import itertools

import numpy as np
import pytest

from convlabel import (
    DatasetError,
    ModelParams,
    Signal,
    field_signal_scores,
    predict_instances,
    predict_map,
    predict_record,
    predict_union,
    prior_for,
    signal_score,
    signal_scores,
)


def brute_map(field_probs, cap, num_classes):
    """Independent enumeration over all label sequences, same tie rules."""
    T = field_probs.shape[0]
    totals = np.zeros(1 << num_classes)
    for seq in itertools.product(range(num_classes + 1), repeat=T):
        nonzero = [c for c in seq if c]
        if len(nonzero) > cap:
            continue
        mask = 0
        for c in set(nonzero):
            mask |= 1 << (c - 1)
        totals[mask] += float(np.prod([field_probs[t, c] for t, c in enumerate(seq)]))
    best_key, best = None, []
    for mask in range(1 << num_classes):
        members = tuple(b + 1 for b in range(num_classes) if mask >> b & 1)
        key = (-totals[mask], len(members), members)
        if best_key is None or key < best_key:
            best_key, best = key, list(members)
    return best


class TestPredictMap:
    def test_matches_sequence_enumeration(self):
        rng = np.random.default_rng(31)
        for _ in range(5):
            signal = Signal(rng.normal(size=(1, 3)), ident="m")
            params = ModelParams(
                rng.normal(size=(3, 1, 3)), rng.normal(size=3)
            )
            cap = int(rng.integers(1, 4))
            field = prior_for(signal, params)
            expected = brute_map(field.probs, cap, 2)
            assert predict_map(signal, params, cap) == expected

    def test_symmetric_tie_prefers_smallest_class(self):
        # zero words and equal biases make classes 1 and 2 exactly symmetric
        signal = Signal(np.zeros((1, 4)))
        params = ModelParams(np.zeros((3, 1, 3)), np.zeros(3))
        assert predict_map(signal, params, cap=1) == [1]

    def test_cap_zero_returns_empty(self):
        signal = Signal(np.zeros((1, 4)))
        params = ModelParams(np.zeros((2, 1, 3)), np.zeros(2))
        assert predict_map(signal, params, cap=0) == []

    def test_negative_cap_raises(self):
        signal = Signal(np.zeros((1, 4)))
        params = ModelParams(np.zeros((2, 1, 3)), np.zeros(2))
        with pytest.raises(DatasetError, match="negative"):
            predict_map(signal, params, cap=-1)

    def test_too_many_classes_refused(self):
        signal = Signal(np.zeros((1, 4)))
        params = ModelParams(np.zeros((18, 1, 3)), np.zeros(18))
        with pytest.raises(DatasetError, match="refused"):
            predict_map(signal, params, cap=1)


class TestInstancePrediction:
    def test_union_collects_winning_classes(self):
        signal = Signal(np.zeros((1, 5)))
        params = ModelParams(np.zeros((3, 1, 3)), np.array([0.0, 10.0, -10.0]))
        labels, field = predict_instances(signal, params)
        assert (labels == 1).all()
        assert field.probs.shape == (7, 3)
        assert predict_union(signal, params) == [1]

    def test_argmax_tie_goes_to_background(self):
        signal = Signal(np.zeros((1, 5)))
        params = ModelParams(np.zeros((3, 1, 3)), np.zeros(3))
        labels, _ = predict_instances(signal, params)
        assert (labels == 0).all()
        assert predict_union(signal, params) == []


class TestSignalScores:
    def test_hand_case(self):
        # two instants at 0.5: miss prob 0.25, fire prob 0.75
        from convlabel.types import PriorField

        field = PriorField(np.array([[0.5, 0.5], [0.5, 0.5]]), offset=0)
        assert field_signal_scores(field)[0] == pytest.approx(0.75, rel=1e-12)

    def test_certain_instant_gives_one(self):
        from convlabel.types import PriorField

        field = PriorField(np.array([[0.0, 1.0], [1.0, 0.0]]), offset=0)
        assert field_signal_scores(field)[0] == 1.0

    def test_matches_direct_product(self):
        rng = np.random.default_rng(32)
        probs = rng.uniform(size=(20, 4))
        probs /= probs.sum(axis=1, keepdims=True)
        from convlabel.types import PriorField

        got = field_signal_scores(PriorField(probs, offset=0))
        want = 1.0 - np.prod(1.0 - probs[:, 1:], axis=0)
        assert np.allclose(got, want, rtol=1e-12)

    def test_signal_score_bounds(self):
        signal = Signal(np.zeros((1, 5)))
        params = ModelParams(np.zeros((3, 1, 3)), np.zeros(3))
        scores = signal_scores(signal, params)
        assert scores.shape == (2,)
        assert signal_score(signal, params, 1) == pytest.approx(scores[0])
        with pytest.raises(DatasetError):
            signal_score(signal, params, 0)
        with pytest.raises(DatasetError):
            signal_score(signal, params, 3)


class TestPredictRecord:
    def test_record_shape(self):
        rng = np.random.default_rng(33)
        signal = Signal(rng.normal(size=(1, 6)), ident="rec")
        params = ModelParams(rng.normal(size=(3, 1, 3)), np.zeros(3))
        record = predict_record(signal, params, cap=2)
        assert record["id"] == "rec"
        assert len(record["instance_labels"]) == 8
        assert isinstance(record["union"], list)
        assert isinstance(record["map"], list)
        assert len(record["scores"]) == 2

    def test_map_omitted_without_cap(self):
        signal = Signal(np.zeros((1, 4)))
        params = ModelParams(np.zeros((2, 1, 3)), np.zeros(2))
        assert predict_record(signal, params)["map"] is None
