"""Detection AUC and label-ranking metrics for weakly labeled signals.

AUC is the Mann-Whitney statistic with midrank tie handling.  The label
set metrics (hamming loss, rank loss, average precision, one error,
coverage) follow the standard multi-instance multi-label definitions over
a per-signal, per-class score matrix.
"""

from __future__ import annotations

import warnings
from typing import Sequence

import numpy as np
from scipy import stats as spst


class DegenerateClassWarning(UserWarning):
    """A class with only positives or only negatives was skipped."""


def auc(scores: Sequence[float], truths: Sequence[bool]) -> float:
    """Probability that a random positive outscores a random negative.

    Ties count one half.  Requires at least one positive and one negative.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truths = np.asarray(truths, dtype=bool)
    if scores.shape != truths.shape or scores.ndim != 1:
        raise ValueError("scores and truths must be 1-D and of equal length")
    n_pos = int(truths.sum())
    n_neg = truths.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined without both positives and negatives")
    ranks = spst.rankdata(scores)
    u = float(ranks[truths].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def per_class_auc(
    score_columns: Sequence[np.ndarray], truth_columns: Sequence[np.ndarray]
) -> tuple[list[float], float]:
    """AUC per class plus the mean over non-degenerate classes.

    Degenerate classes (no positives or no negatives) yield NaN, emit a
    :class:`DegenerateClassWarning`, and are left out of the mean.
    """
    values = []
    for c, (scores, truths) in enumerate(zip(score_columns, truth_columns), start=1):
        try:
            values.append(auc(scores, truths))
        except ValueError:
            warnings.warn(
                f"class {c}: no positives or no negatives, AUC skipped",
                DegenerateClassWarning,
                stacklevel=2,
            )
            values.append(float("nan"))
    valid = [v for v in values if v == v]
    mean = float(np.mean(valid)) if valid else float("nan")
    return values, mean


def _ranks_desc(row: np.ndarray) -> np.ndarray:
    """1-based rank of every class, best score first; ties to smaller ids."""
    order = np.lexsort((np.arange(row.size), -row))
    ranks = np.empty(row.size, dtype=np.int64)
    ranks[order] = np.arange(1, row.size + 1)
    return ranks


def miml_metrics(
    score_matrix: np.ndarray,
    label_sets: Sequence[set],
    threshold: float = 0.5,
) -> dict:
    """The five label-set metrics over (signals, classes) scores.

    Hamming loss thresholds every cell at ``threshold`` and counts
    disagreements over all signals.  The rank-based metrics skip signals
    whose label set is empty or contains every class (no pair of a relevant
    and an irrelevant label exists); rank loss counts strictly mis-ordered
    pairs, so ties penalize nothing.
    """
    scores = np.asarray(score_matrix, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] != len(label_sets):
        raise ValueError("score_matrix must be (signals, classes)")
    n, C = scores.shape
    member = np.zeros((n, C), dtype=bool)
    for i, labels in enumerate(label_sets):
        for c in labels:
            if not 1 <= c <= C:
                raise ValueError(f"label {c} outside 1..{C}")
            member[i, c - 1] = True

    hamming = float(((scores >= threshold) != member).mean())

    rank_losses = []
    avg_precisions = []
    one_errors = []
    coverages = []
    for i in range(n):
        rel = member[i]
        n_rel = int(rel.sum())
        if n_rel == 0 or n_rel == C:
            continue
        row = scores[i]
        mis = sum(
            1
            for r in np.flatnonzero(rel)
            for s in np.flatnonzero(~rel)
            if row[r] < row[s]
        )
        rank_losses.append(mis / (n_rel * (C - n_rel)))
        ranks = _ranks_desc(row)
        rel_ranks = np.sort(ranks[rel])
        avg_precisions.append(
            float(np.mean([(k + 1) / r for k, r in enumerate(rel_ranks)]))
        )
        one_errors.append(0.0 if rel[int(np.argmax(row))] else 1.0)
        coverages.append(float(rel_ranks[-1] - 1))

    def mean_or_nan(vals):
        return float(np.mean(vals)) if vals else float("nan")

    return {
        "hamming_loss": hamming,
        "rank_loss": mean_or_nan(rank_losses),
        "average_precision": mean_or_nan(avg_precisions),
        "one_error": mean_or_nan(one_errors),
        "coverage": mean_or_nan(coverages),
    }
