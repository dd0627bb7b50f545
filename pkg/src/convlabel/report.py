"""Evaluation reports: per-class detection quality plus set-level metrics.

Instance-level detection treats the per-instant class probability as a test
score against the latent per-sample labels, pooling instants of all signals
before computing each class's AUC.  The instant axis of a prior field is
longer than the signal by one window minus one; only the slice aligned with
the signal's own samples enters the instance-level pool.  Signal-level
detection scores each class by the probability that it fires anywhere in
the field (full range, including the overhang), and the same score matrix
feeds the five set-level metrics.
"""

from __future__ import annotations

import csv
import io as _io
import math
from typing import Mapping, Optional, Sequence

import numpy as np

from .metrics import miml_metrics, per_class_auc
from .predict import field_signal_scores
from .prior import prior_for
from .types import DatasetError, ModelParams, WeakExample

AGGREGATE_LABEL = "mean"


def _clean(value) -> Optional[float]:
    # NaN is not valid JSON; report missing values as null.
    value = float(value)
    return None if math.isnan(value) else value


def evaluate(
    examples: Sequence[WeakExample],
    params: ModelParams,
    truth: Optional[Mapping[str, np.ndarray]] = None,
    score_rows: Optional[Mapping[str, Sequence[float]]] = None,
) -> dict:
    """Build the full evaluation report for a dataset under a model.

    ``truth`` maps signal id to per-sample labels and enables the
    instance-level AUCs.  ``score_rows`` maps signal id to a per-class
    score row (as emitted by prediction); when absent the scores are
    recomputed from the model.
    """
    if not examples:
        raise DatasetError("evaluation needs at least one signal")
    C = params.num_classes
    fields = [prior_for(ex.signal, params) for ex in examples]

    if score_rows is None:
        score_matrix = np.stack([field_signal_scores(f) for f in fields])
    else:
        rows = []
        for ex in examples:
            if ex.signal.ident not in score_rows:
                raise DatasetError(
                    f"signal {ex.signal.ident!r} has no prediction record"
                )
            row = np.asarray(score_rows[ex.signal.ident], dtype=np.float64)
            if row.shape != (C,):
                raise DatasetError(
                    f"signal {ex.signal.ident!r}: expected {C} scores, got "
                    f"{row.shape}"
                )
            rows.append(row)
        score_matrix = np.stack(rows)

    label_sets = [ex.label_set for ex in examples]
    signal_cols = [score_matrix[:, c - 1] for c in range(1, C + 1)]
    signal_truths = [
        np.array([c in ls for ls in label_sets]) for c in range(1, C + 1)
    ]
    signal_vals, signal_mean = per_class_auc(signal_cols, signal_truths)

    inst_vals = np.full(C, np.nan)
    inst_mean = float("nan")
    if truth is not None:
        pooled = []
        pooled_y = []
        for ex, field in zip(examples, fields):
            ident = ex.signal.ident
            if ident not in truth:
                raise DatasetError(f"signal {ident!r} has no truth record")
            y = np.asarray(truth[ident], dtype=np.int64)
            T = ex.signal.length
            if y.shape != (T,):
                raise DatasetError(
                    f"signal {ident!r}: truth length {y.shape} does not match "
                    f"the signal length {T}"
                )
            start = field.offset
            pooled.append(field.probs[start : start + T])
            pooled_y.append(y)
        probs = np.concatenate(pooled, axis=0)
        y_all = np.concatenate(pooled_y)
        inst_cols = [probs[:, c] for c in range(1, C + 1)]
        inst_truths = [y_all == c for c in range(1, C + 1)]
        inst_vals, inst_mean = per_class_auc(inst_cols, inst_truths)

    set_metrics = miml_metrics(score_matrix, label_sets)
    per_class = [
        {
            "class": c,
            "instance_auc": _clean(inst_vals[c - 1]),
            "signal_auc": _clean(signal_vals[c - 1]),
        }
        for c in range(1, C + 1)
    ]
    return {
        "num_signals": len(examples),
        "num_classes": C,
        "per_class": per_class,
        "aggregate": {
            "instance_auc": _clean(inst_mean),
            "signal_auc": _clean(signal_mean),
            **{name: _clean(v) for name, v in sorted(set_metrics.items())},
        },
    }


def report_csv(report: dict) -> str:
    """Class table as CSV text: one row per class plus the aggregate row."""
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["class", "instance_auc", "signal_auc"])

    def cell(value):
        return "" if value is None else repr(float(value))

    for row in report["per_class"]:
        writer.writerow(
            [row["class"], cell(row["instance_auc"]), cell(row["signal_auc"])]
        )
    agg = report["aggregate"]
    writer.writerow(
        [AGGREGATE_LABEL, cell(agg["instance_auc"]), cell(agg["signal_auc"])]
    )
    return buf.getvalue()
