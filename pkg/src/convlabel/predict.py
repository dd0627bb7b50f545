"""Instance-level and signal-level prediction for unseen signals.

Instance prediction is the per-instant argmax of the label prior.  Signal
label sets come from either the union rule (collect the nonzero argmax
classes) or the MAP rule (argmax of the label-set posterior over all 2^C
subsets, computed from one shared forward pass).  The per-class signal
score is the probability that at least one instant carries the class.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .chain import chain_all_set_log_weights
from .prior import prior_for
from .types import DatasetError, ModelParams, PriorField, Signal

# 2^C subsets are enumerated; refuse beyond this many classes.
MAX_MAP_CLASSES = 16


def predict_instances(
    signal: Signal, params: ModelParams
) -> tuple[np.ndarray, PriorField]:
    """Argmax class per instant (ties to the smallest id) plus the prior field."""
    field = prior_for(signal, params)
    return np.argmax(field.probs, axis=1), field


def predict_union(signal: Signal, params: ModelParams) -> list[int]:
    """All event classes that win the argmax somewhere, ascending."""
    labels, _ = predict_instances(signal, params)
    return sorted(int(c) for c in set(labels.tolist()) if c != 0)


def _map_from_log_weights(log_weights: np.ndarray, num_classes: int) -> list[int]:
    best_mask = 0
    best_key = None
    for mask in range(log_weights.shape[0]):
        members = tuple(b + 1 for b in range(num_classes) if mask >> b & 1)
        # Highest weight wins; exact ties prefer fewer classes, then the
        # lexicographically smallest class tuple.
        key = (-log_weights[mask], len(members), members)
        if best_key is None or key < best_key:
            best_key = key
            best_mask = mask
    return [b + 1 for b in range(num_classes) if best_mask >> b & 1]


def predict_map(
    signal: Signal,
    params: ModelParams,
    cap: int,
    max_classes: int = MAX_MAP_CLASSES,
) -> list[int]:
    """Label set maximizing the joint probability of (set, cap satisfied)."""
    C = params.num_classes
    if C > max_classes:
        raise DatasetError(
            f"MAP enumeration over 2^{C} label sets refused (limit {max_classes} "
            "classes)"
        )
    if cap < 0:
        raise DatasetError(f"cap {cap} is negative")
    if cap == 0:
        return []
    field = prior_for(signal, params)
    return _map_from_log_weights(chain_all_set_log_weights(field, cap), C)


def field_signal_scores(field: PriorField) -> np.ndarray:
    """Per-class probability that at least one instant carries the class.

    Entry c-1 is 1 - prod_t (1 - P_t(c)), accumulated in log space.
    """
    probs = np.clip(field.probs[:, 1:], 0.0, 1.0)
    with np.errstate(divide="ignore"):
        log_misses = np.log1p(-probs).sum(axis=0)
    return -np.expm1(log_misses)


def signal_scores(signal: Signal, params: ModelParams) -> np.ndarray:
    """:func:`field_signal_scores` of the signal's prior field."""
    return field_signal_scores(prior_for(signal, params))


def signal_score(signal: Signal, params: ModelParams, c: int) -> float:
    """Single-class convenience over :func:`signal_scores`."""
    if not 1 <= c <= params.num_classes:
        raise DatasetError(f"class {c} outside 1..{params.num_classes}")
    return float(signal_scores(signal, params)[c - 1])


def predict_record(
    signal: Signal, params: ModelParams, cap: Optional[int] = None
) -> dict:
    """One prediction output record; the MAP entry needs a cap."""
    labels, _ = predict_instances(signal, params)
    union = sorted(int(c) for c in set(labels.tolist()) if c != 0)
    record = {
        "id": signal.ident,
        "instance_labels": [int(v) for v in labels],
        "union": union,
        "map": predict_map(signal, params, cap) if cap is not None else None,
        "scores": [float(s) for s in signal_scores(signal, params)],
    }
    return record
