"""EM training of the instance labeler from signal-level label sets.

The E-step computes, per signal, the exact posterior over instance labels
given the observed label set and the cardinality cap.  The M-step improves
(not maximizes) the EM auxiliary objective by gradient ascent with an
adaptive step: a candidate step is accepted only if the auxiliary objective
does not decrease, the step is halved until that holds and grown 1.5x after
every acceptance.  Ascent of the auxiliary objective implies ascent of the
regularized incomplete log-likelihood, which is recorded at every
iteration.

Signals are processed in dataset order; over threads, per-signal results
are combined with a fixed pairwise reduction, so traces are bit-identical
for any worker count.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special as spsp

from .backends import BACKENDS, posterior_with_evidence
from .prior import analyze, prior_for
from .types import (
    DatasetError,
    EvidenceImpossibleError,
    ModelParams,
    WeakExample,
    validate_labels_against_model,
)

# Step-size halvings per M-step before the update is skipped entirely.
MAX_BACKOFF = 60


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """Knobs of :func:`em_fit`.

    ``tolerance`` stops early when the relative change of the regularized
    incomplete log-likelihood falls below it (0 disables).  ``threads``
    sizes the per-signal worker pool; results are identical for any value.
    """

    learning_rate: float = 1e-3
    l2_lambda: float = 0.0
    max_iters: int = 100
    backend: str = "auto"
    m_steps_per_e: int = 1
    seed: int = 0
    tolerance: float = 0.0
    threads: int = 1

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise DatasetError("learning_rate must be positive")
        if self.l2_lambda < 0:
            raise DatasetError("l2_lambda must be non-negative")
        if self.max_iters < 0:
            raise DatasetError("max_iters must be non-negative")
        if self.backend not in BACKENDS + ("auto",):
            raise DatasetError(f"unknown backend {self.backend!r}")
        if self.m_steps_per_e < 1:
            raise DatasetError("m_steps_per_e must be positive")
        if self.tolerance < 0:
            raise DatasetError("tolerance must be non-negative")
        if self.threads < 1:
            raise DatasetError("threads must be positive")


@dataclasses.dataclass
class EMState:
    """Fit result: final parameters plus the per-iteration traces.

    ``log_likelihood_trace[i]`` is the regularized incomplete log-likelihood
    of the parameters entering iteration i; the last entry scores the final
    parameters, so the list has one more entry than iterations run.
    """

    params: ModelParams
    iteration: int
    log_likelihood_trace: list[float]
    q_trace: list[float]


def _pairwise_sum(items: Sequence):
    """Sum in a fixed pairwise order, independent of how items were produced."""
    items = list(items)
    if not items:
        return 0.0
    while len(items) > 1:
        merged = [items[i] + items[i + 1] for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            merged.append(items[-1])
        items = merged
    return items[0]


def _map_signals(fn: Callable, dataset: Sequence[WeakExample], threads: int) -> list:
    if threads <= 1 or len(dataset) <= 1:
        return [fn(ex) for ex in dataset]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, dataset))


def init_params(
    num_classes: int, num_channels: int, window_len: int, seed: int
) -> ModelParams:
    """Small uniform random words, zero biases."""
    rng = np.random.default_rng(seed)
    eps = 0.01 / math.sqrt(num_channels * window_len)
    words = rng.uniform(-eps, eps, size=(num_classes + 1, num_channels, window_len))
    return ModelParams(words, np.zeros(num_classes + 1))


def infer_num_classes(dataset: Sequence[WeakExample]) -> int:
    """Largest label id in the dataset."""
    top = 0
    for ex in dataset:
        if ex.label_set:
            top = max(top, max(ex.label_set))
    return top


def _window_codes(samples: np.ndarray, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Distinct bit-packed codes of all width-wide windows, with counts."""
    num_channels, length = samples.shape
    windows = np.lib.stride_tricks.sliding_window_view(
        samples.astype(np.uint64), width, axis=1
    )
    powers = (1 << np.arange(num_channels * width, dtype=np.uint64)).reshape(
        num_channels, width
    )
    codes = (windows * powers[:, None, :]).sum(axis=(0, 2))
    return np.unique(codes, return_counts=True)


def init_pattern_contrast(
    dataset: Sequence[WeakExample],
    num_classes: Optional[int] = None,
    window_len: int = 5,
    amplitude: float = 1.0,
) -> ModelParams:
    """Words seeded from label-contrastive window patterns of binary signals.

    For every class and every pattern width up to ``window_len``, counts
    exact sub-window bit patterns separately over the signals whose label
    set contains the class and over the rest, and ranks each pattern by
    the two-proportion z statistic of its occurrence rates.  Ranking by z
    makes scores comparable across widths, so the width is selected by
    the data as well.  The winning pattern becomes the class word: +A for
    one cells and -A for zero cells, written time-reversed into the
    leading columns so that for widths up to (window_len-1)//2 + 1 the
    word responds at the instant where the pattern starts, with the bias
    set so a perfect match scores +A/2 and any one-cell miss -A/2.  The
    background word and bias stay zero.

    This is a coarse data-driven starting point, not a fit: amplitudes,
    widths beyond the scan, and the background model are all left to
    :func:`em_fit`.
    """
    if not dataset:
        raise DatasetError("dataset is empty")
    if num_classes is None:
        num_classes = infer_num_classes(dataset)
    if num_classes < 1:
        raise DatasetError(
            "cannot infer the class count from an all-empty dataset; "
            "pass num_classes"
        )
    if amplitude <= 0:
        raise DatasetError("amplitude must be positive")
    num_channels = dataset[0].signal.num_channels
    for ex in dataset:
        values = np.unique(ex.signal.samples)
        if not np.isin(values, (0.0, 1.0)).all():
            raise DatasetError(
                f"signal {ex.signal.ident!r} is not binary; "
                "pattern-contrast init requires 0/1 signals"
            )
    widths = [
        u
        for u in range(1, window_len + 1)
        if num_channels * u <= 60 and all(ex.signal.length >= u for ex in dataset)
    ]
    if not widths:
        raise DatasetError("no feasible pattern width to scan")

    # count tables shared by all classes: per width, per signal
    per_signal: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {
        u: [_window_codes(ex.signal.samples, u) for ex in dataset] for u in widths
    }

    words = np.zeros((num_classes + 1, num_channels, window_len))
    biases = np.zeros(num_classes + 1)
    for cls in range(1, num_classes + 1):
        member = [cls in ex.label_set for ex in dataset]
        if not any(member) or all(member):
            raise DatasetError(
                f"class {cls} needs both member and non-member signals"
            )
        best: Optional[tuple[float, int, int]] = None
        for u in widths:
            pos: dict[int, int] = {}
            neg: dict[int, int] = {}
            windows_pos = windows_neg = 0
            for inside, (codes, counts) in zip(member, per_signal[u]):
                table = pos if inside else neg
                for code, count in zip(codes.tolist(), counts.tolist()):
                    table[code] = table.get(code, 0) + count
                total = int(counts.sum())
                if inside:
                    windows_pos += total
                else:
                    windows_neg += total
            grand = windows_pos + windows_neg
            for code in set(pos) | set(neg):
                k_pos, k_neg = pos.get(code, 0), neg.get(code, 0)
                pooled = (k_pos + k_neg) / grand
                if pooled in (0.0, 1.0):
                    continue
                spread = math.sqrt(
                    pooled * (1.0 - pooled) * (1.0 / windows_pos + 1.0 / windows_neg)
                )
                z = (k_pos / windows_pos - k_neg / windows_neg) / spread
                key = (z, -u, -code)
                if best is None or key > best:
                    best = key
        assert best is not None
        _, neg_u, neg_code = best
        u, code = -neg_u, -neg_code
        bits = np.zeros((num_channels, u))
        for f in range(num_channels):
            for j in range(u):
                bits[f, j] = (code >> (f * u + j)) & 1
        signed = amplitude * (2.0 * bits - 1.0)
        for j in range(u):
            words[cls, :, (u - 1) - j] = signed[:, j]
        biases[cls] = amplitude * (0.5 - float(bits.sum()))
    return ModelParams(words, biases)


def align_detector_timing(
    params: ModelParams,
    dataset: Sequence[WeakExample],
    threshold: float = 0.5,
    symmetry_radius: int = 9,
) -> tuple[ModelParams, np.ndarray]:
    """Cancel each class's arbitrary firing offset for pulse-like templates.

    Convolutive training pins a detector's timing only up to a shift inside
    the analysis window: displacing a word's columns moves all its firing
    instants by the same amount at almost no likelihood cost, so the offset
    a run commits to is an accident of the dynamics.  When the underlying
    templates are even-symmetric pulses the natural event time is the pulse
    center, and the committed offset can be read off the data: average the
    raw signal windows around the strongest firings of each class on the
    signals whose label set contains it, locate the center of even symmetry
    of that average, and shift the word so future firings land there.

    Firings are instants whose class probability exceeds ``threshold``,
    picked greedily with a one-window exclusion zone; windows clipped by the
    signal edge are skipped.  The symmetry score of a candidate center sums
    products of sample pairs mirrored around it up to ``symmetry_radius``
    offsets, which keeps narrow pulses from being outvoted by accumulated
    noise.  A class with no firings keeps its word unchanged.

    Returns the shifted parameters and the per-class firing offsets that
    were cancelled (entry 0, the background, is always 0).  Biases carry
    over unchanged; a short :func:`em_fit` polish afterwards lets them and
    the columns vacated by the shift re-settle.
    """
    if not dataset:
        raise DatasetError("dataset is empty")
    words = params.words
    num_classes = words.shape[0] - 1
    window_len = words.shape[2]
    half = (window_len - 1) // 2
    fields = {
        id(ex): prior_for(ex.signal, params) for ex in dataset
    }

    offsets = np.zeros(num_classes + 1, dtype=int)
    for cls in range(1, num_classes + 1):
        average = np.zeros((words.shape[1], 2 * half + 1))
        weight = 0.0
        for ex in dataset:
            if cls not in ex.label_set:
                continue
            field = fields[id(ex)]
            length = ex.signal.length
            probs = field.probs[field.offset:field.offset + length, cls].copy()
            samples = ex.signal.samples
            while True:
                t = int(probs.argmax())
                if probs[t] < threshold:
                    break
                lo, hi = t - half, t + half + 1
                if lo >= 0 and hi <= length:
                    average += probs[t] * samples[:, lo:hi]
                    weight += probs[t]
                probs[max(0, t - window_len):t + window_len] = 0.0
        if weight == 0.0:
            continue
        average /= weight
        score = np.full(2 * half + 1, -np.inf)
        for center in range(2 * half + 1):
            reach = min(center, 2 * half - center, symmetry_radius)
            if reach < 2:
                continue
            arm = np.arange(0, reach + 1)
            score[center] = (
                average[:, center + arm] * average[:, center - arm]
            ).sum()
        offsets[cls] = half - int(score.argmax())

    shifted = words.copy()
    for cls in range(1, num_classes + 1):
        move = -int(offsets[cls])
        if move:
            fresh = np.zeros_like(words[cls])
            src_lo = max(0, -move)
            src_hi = window_len - max(0, move)
            fresh[:, src_lo + move:src_hi + move] = words[cls][:, src_lo:src_hi]
            shifted[cls] = fresh
    return ModelParams(shifted, params.biases.copy()), offsets


def auxiliary_q(
    params: ModelParams,
    dataset: Sequence[WeakExample],
    posteriors: Sequence[np.ndarray],
    l2_lambda: float = 0.0,
    threads: int = 1,
) -> float:
    """EM auxiliary objective at ``params`` for posteriors from the anchor.

    Sum over signals and instants of the posterior-weighted class scores
    minus the log partition function, minus the L2 penalty on the words.
    """
    by_index = list(zip(dataset, posteriors))

    def one(pair):
        ex, post = pair
        scores = analyze(ex.signal, params).scores
        return float((post * scores).sum() - spsp.logsumexp(scores, axis=1).sum())

    total = _pairwise_sum(_map_signals(one, by_index, threads))
    return total - 0.5 * l2_lambda * float((params.words**2).sum())


def gradients(
    params: ModelParams,
    dataset: Sequence[WeakExample],
    posteriors: Sequence[np.ndarray],
    l2_lambda: float = 0.0,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of :func:`auxiliary_q` in ``params``: (words, biases).

    The per-word gradient is the valid-mode correlation of the residual
    (posterior minus current prior) with the signal; the bias gradient is
    the residual summed over instants.  Only words are regularized.
    """
    by_index = list(zip(dataset, posteriors))

    def one(pair):
        ex, post = pair
        resid = post - prior_for(ex.signal, params).probs
        gw = np.empty_like(params.words)
        for c in range(resid.shape[1]):
            for f in range(ex.signal.num_channels):
                # valid-mode correlation: gw[c,f,i] = sum_u resid[u,c] x[f,u-i]
                gw[c, f] = np.correlate(resid[:, c], ex.signal.samples[f], "valid")
        return gw, resid.sum(axis=0)

    parts = _map_signals(one, by_index, threads)
    grad_words = _pairwise_sum([p[0] for p in parts]) - l2_lambda * params.words
    grad_biases = _pairwise_sum([p[1] for p in parts])
    return grad_words, grad_biases


def _posterior_one(params: ModelParams, ex: WeakExample, backend: str):
    field = prior_for(ex.signal, params)
    try:
        return posterior_with_evidence(
            field, sorted(ex.label_set), ex.require_cap, backend
        )
    except EvidenceImpossibleError as exc:
        raise EvidenceImpossibleError(f"signal {ex.signal.ident!r}: {exc}") from exc


def e_step(
    params: ModelParams,
    dataset: Sequence[WeakExample],
    backend: str = "auto",
    threads: int = 1,
) -> tuple[list[np.ndarray], list[float]]:
    """Posterior and log evidence per signal."""
    results = _map_signals(lambda ex: _posterior_one(params, ex, backend), dataset, threads)
    return [r[0] for r in results], [r[1] for r in results]


def incomplete_log_likelihood(
    params: ModelParams,
    dataset: Sequence[WeakExample],
    backend: str = "auto",
    threads: int = 1,
) -> float:
    """Sum over signals of the log probability of the observed label set."""
    from .backends import label_set_log_likelihood

    def one(ex):
        field = prior_for(ex.signal, params)
        value = label_set_log_likelihood(
            field, sorted(ex.label_set), ex.require_cap, backend
        )
        if value == -math.inf:
            raise EvidenceImpossibleError(
                f"signal {ex.signal.ident!r}: label set has zero probability"
            )
        return value

    return float(_pairwise_sum(_map_signals(one, dataset, threads)))


def _validate_dataset(dataset: Sequence[WeakExample], params: ModelParams) -> None:
    if not dataset:
        raise DatasetError("dataset is empty")
    for ex in dataset:
        ex.require_cap
        validate_labels_against_model(ex, params.num_classes)
        if ex.signal.num_channels != params.num_channels:
            raise DatasetError(
                f"signal {ex.signal.ident!r} has {ex.signal.num_channels} "
                f"channels, model expects {params.num_channels}"
            )


def em_fit(
    dataset: Sequence[WeakExample],
    config: TrainConfig,
    init: Optional[ModelParams] = None,
    num_classes: Optional[int] = None,
    window_len: int = 5,
) -> EMState:
    """Fit words and biases by generalized EM.

    ``init`` overrides the seeded random initialization; ``num_classes``
    defaults to the largest label id present; ``window_len`` applies only
    when ``init`` is None.
    """
    if not dataset:
        raise DatasetError("dataset is empty")
    if init is None:
        classes = num_classes if num_classes is not None else infer_num_classes(dataset)
        if classes < 1:
            raise DatasetError(
                "cannot infer the class count from an all-empty dataset; "
                "pass num_classes"
            )
        params = init_params(
            classes, dataset[0].signal.num_channels, window_len, config.seed
        )
    else:
        params = init.copy()
    _validate_dataset(dataset, params)

    lam = config.l2_lambda
    gamma = config.learning_rate
    trace: list[float] = []
    q_trace: list[float] = []

    def regularized_ll(p: ModelParams, logevs: Sequence[float]) -> float:
        return float(_pairwise_sum(logevs)) - 0.5 * lam * float((p.words**2).sum())

    for it in range(config.max_iters + 1):
        posts, logevs = e_step(params, dataset, config.backend, config.threads)
        trace.append(regularized_ll(params, logevs))
        if it == config.max_iters:
            break
        if (
            config.tolerance > 0
            and it > 0
            and abs(trace[-1] - trace[-2]) < config.tolerance * max(1.0, abs(trace[-2]))
        ):
            break
        for _ in range(config.m_steps_per_e):
            q_anchor = auxiliary_q(params, dataset, posts, lam, config.threads)
            grad_words, grad_biases = gradients(params, dataset, posts, lam, config.threads)
            if not (
                np.all(np.isfinite(grad_words)) and np.all(np.isfinite(grad_biases))
            ):
                raise RuntimeError(f"non-finite gradient at iteration {it}")
            accepted_q = q_anchor
            for _ in range(MAX_BACKOFF):
                candidate = ModelParams(
                    params.words + gamma * grad_words,
                    params.biases + gamma * grad_biases,
                )
                q_candidate = auxiliary_q(candidate, dataset, posts, lam, config.threads)
                if q_candidate >= q_anchor:
                    params = candidate
                    gamma *= 1.5
                    accepted_q = q_candidate
                    break
                gamma /= 2.0
            q_trace.append(accepted_q)
    return EMState(
        params=params,
        iteration=len(trace) - 1,
        log_likelihood_trace=trace,
        q_trace=q_trace,
    )
