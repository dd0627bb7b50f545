"""Exact instance-label posteriors by pairwise merging on a balanced binary
tree over instants.

Each node summarizes the labelings of its span of instants as a table over
(label subset, nonzero count) states.  Two sibling tables merge by unioning
subsets and adding counts, which is a convolution along the count axis for
every admissible pair of subsets.  Long count axes use FFT convolution, short
ones a direct shifted-add loop; both paths agree to float precision.

The instant axis is padded with neutral "always background, count 0" leaves
up to the next power of two.  Count axes are truncated to
min(cap, span of the node): counts never decrease under merging, so the
dropped mass can never re-enter any quantity read out here.

When the cap sits far below the expected number of nonzero labels, every
surviving count is a large-deviation event and the stored tables decay over
hundreds of orders of magnitude along the count axis.  FFT convolution has
absolute (not relative) rounding error, which would swamp exactly the tail
kept by the truncation.  To keep the FFT path usable there, the count axis
is exponentially tilted: nonzero-label mass is damped by exp(tilt) per count
so the tilted distribution concentrates at the cap, and the tilt is undone
in the readouts (it cancels identically in the leaf posteriors and turns
into a log-sum-exp shift in the evidence).  The tilt changes nothing in
exact arithmetic and keeps the entries that dominate every readout within
float precision of the per-table maximum.

Level j holds 2^j nodes; level 0 is the root, the deepest level the leaves.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Iterable, Optional, Union

import numpy as np
from scipy import signal as sps

from .tilt import solve_count_tilt
from .types import EvidenceImpossibleError, PriorField, effective_cap

# Direct count-axis convolution up to this output length, FFT beyond.
COUNT_FFT_CROSSOVER = 64


def _probs_of(prior: Union[PriorField, np.ndarray]) -> np.ndarray:
    probs = prior.probs if isinstance(prior, PriorField) else np.asarray(prior)
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] < 1:
        raise ValueError("prior must be a 2-D (instants, classes+1) array")
    return probs


def _label_list(label_set: Iterable[int], num_cols: int) -> list[int]:
    labels = sorted(set(int(c) for c in label_set))
    if labels and (labels[0] < 1 or labels[-1] >= num_cols):
        raise ValueError(f"label set {labels} incompatible with {num_cols - 1} classes")
    return labels


@dataclasses.dataclass
class TreeMessages:
    """Per-level message tables.

    ``tables[j]`` has shape (2^j nodes, subsets, count width of level j);
    ``log_scales[j]`` carries one accumulated log scale per node.  Level 0 is
    the root; the last level holds one leaf per (padded) instant.  ``tilt``
    is the exponential count reweighting applied to the stored entries:
    true weight = stored * exp(log_scale - tilt * count).  Backward tables
    carry the opposite exponent of the forward pass that produced them, so
    the same decode rule applies to both.
    """

    tables: list[np.ndarray]
    log_scales: list[np.ndarray]
    num_real_leaves: int
    label_list: list[int]
    cap: int
    tilt: float = 0.0

    @property
    def num_levels(self) -> int:
        return len(self.tables)

    @property
    def root(self) -> np.ndarray:
        return self.tables[0][0]


def _conv_last(a: np.ndarray, b: np.ndarray, crossover: int) -> np.ndarray:
    """Full convolution along the last axis of two stacks of count vectors."""
    n_out = a.shape[-1] + b.shape[-1] - 1
    if n_out > crossover:
        out = sps.fftconvolve(a, b, mode="full", axes=-1)
        np.maximum(out, 0.0, out=out)  # FFT round-off can dip below zero
        return out
    short, long_ = (a, b) if a.shape[-1] <= b.shape[-1] else (b, a)
    out = np.zeros(a.shape[:-1] + (n_out,))
    for i in range(short.shape[-1]):
        out[..., i : i + long_.shape[-1]] += short[..., i : i + 1] * long_
    return out


def _corr_last(a: np.ndarray, b: np.ndarray, crossover: int) -> np.ndarray:
    """Correlation along the last axis: out[..., l] = sum_e a[..., l+e] b[..., e]."""
    if a.shape[-1] + b.shape[-1] - 1 > crossover:
        out = sps.fftconvolve(a, b[..., ::-1], mode="full", axes=-1)
        np.maximum(out, 0.0, out=out)
        return out[..., b.shape[-1] - 1 :]
    out = np.zeros(a.shape)
    for e in range(b.shape[-1]):
        width = a.shape[-1] - e
        if width <= 0:
            break
        out[..., :width] += a[..., e:] * b[..., e : e + 1]
    return out


def count_axis_convolve(
    left: np.ndarray,
    right: np.ndarray,
    cap: int,
    crossover: int = COUNT_FFT_CROSSOVER,
) -> np.ndarray:
    """Merge two sibling tables: union subsets, convolve count vectors.

    ``left`` and ``right`` have shape (..., subsets, counts); the output count
    axis is truncated at ``cap``.  For every subset pair (A, B) the count
    vectors convolve and accumulate into the union subset A | B.
    """
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    squeeze = left.ndim == 2
    if squeeze:
        left, right = left[np.newaxis], right[np.newaxis]
    subsets = left.shape[-2]
    full = left.shape[-1] + right.shape[-1] - 1
    width = min(full, cap + 1)
    out = np.zeros(left.shape[:-2] + (subsets, width))
    for ma in range(subsets):
        for mb in range(subsets):
            seg = _conv_last(left[..., ma, :], right[..., mb, :], crossover)
            seg = seg[..., :width]
            out[..., ma | mb, : seg.shape[-1]] += seg
    return out[0] if squeeze else out


def _merge_scatter_backward(
    parent: np.ndarray, sibling: np.ndarray, width: int, crossover: int
) -> np.ndarray:
    """Backward split: out[..., m, l] = sum_{me, e} parent[..., m|me, l+e] sibling[..., me, e]."""
    subsets = parent.shape[-2]
    out = np.zeros(parent.shape[:-2] + (subsets, width))
    for m in range(subsets):
        for me in range(subsets):
            seg = _corr_last(parent[..., m | me, :], sibling[..., me, :], crossover)
            seg = seg[..., :width]
            out[..., m, : seg.shape[-1]] += seg
    return out


def _num_levels(instants: int) -> int:
    # Depth of the padded tree: smallest L with 2^L >= instants.
    return (instants - 1).bit_length()


def _leaf_tables(
    probs: np.ndarray, labels: list[int], cap: int, tilt: float
) -> tuple[np.ndarray, np.ndarray]:
    T = probs.shape[0]
    L = _num_levels(T)
    n_leaves = 1 << L
    S = 1 << len(labels)
    K = min(cap, 1) + 1
    leaves = np.zeros((n_leaves, S, K))
    leaves[:T, 0, 0] = probs[:, 0]
    if cap >= 1:
        damp = math.exp(tilt)
        for b, c in enumerate(labels):
            leaves[:T, 1 << b, 1] = probs[:, c] * damp
    leaves[T:, 0, 0] = 1.0  # padding: always background, zero count
    scales = np.zeros(n_leaves)
    mx = leaves.reshape(n_leaves, -1).max(axis=1)
    pos = mx > 0.0
    leaves[pos] /= mx[pos, np.newaxis, np.newaxis]
    scales[pos] = np.log(mx[pos])
    return leaves, scales


def tree_forward(
    prior: Union[PriorField, np.ndarray],
    label_set: Iterable[int],
    cap: int,
    crossover: int = COUNT_FFT_CROSSOVER,
) -> TreeMessages:
    """Bottom-up merge of leaf tables; the root summarizes the whole signal."""
    probs = _probs_of(prior)
    labels = _label_list(label_set, probs.shape[1])
    cap = effective_cap(cap, probs.shape[0])
    L = _num_levels(probs.shape[0])
    tilt = solve_count_tilt(probs, labels, cap)
    leaves, leaf_scales = _leaf_tables(probs, labels, cap, tilt)
    tables = [leaves]
    scales = [leaf_scales]
    for j in range(L, 0, -1):
        child = tables[0]
        child_scales = scales[0]
        span = 1 << (L - j + 1)  # instants under a node of level j-1
        merged = count_axis_convolve(child[0::2], child[1::2], min(cap, span), crossover)
        node_scale = child_scales[0::2] + child_scales[1::2]
        n = merged.shape[0]
        mx = merged.reshape(n, -1).max(axis=1)
        pos = mx > 0.0
        merged[pos] /= mx[pos, np.newaxis, np.newaxis]
        node_scale = node_scale + np.where(pos, np.log(np.where(pos, mx, 1.0)), 0.0)
        tables.insert(0, merged)
        scales.insert(0, node_scale)
    return TreeMessages(
        tables=tables,
        log_scales=scales,
        num_real_leaves=probs.shape[0],
        label_list=labels,
        cap=cap,
        tilt=tilt,
    )


def tree_backward(
    prior: Union[PriorField, np.ndarray],
    label_set: Iterable[int],
    cap: int,
    forward: Optional[TreeMessages] = None,
    crossover: int = COUNT_FFT_CROSSOVER,
) -> TreeMessages:
    """Top-down completion tables; the leaf level drives the posteriors.

    Entry (m, l) at a node is proportional to the probability that the rest
    of the signal completes the observed label set within the cap, given that
    the node's span contributed subset m with count l.
    """
    probs = _probs_of(prior)
    labels = _label_list(label_set, probs.shape[1])
    cap = effective_cap(cap, probs.shape[0])
    if forward is None:
        forward = tree_forward(probs, labels, cap, crossover)
    S = 1 << len(labels)
    L = forward.num_levels - 1
    width0 = forward.tables[0].shape[-1]
    root = np.zeros((1, S, width0))
    # Observed set reached, any count within the cap; carries the inverse
    # tilt exp(-tilt*count), stored relative to its maximum at count = cap.
    counts = np.arange(width0)
    root[0, S - 1, :] = np.exp(forward.tilt * (cap - counts))
    tables = [root]
    scales = [np.zeros(1) - forward.tilt * cap]
    for j in range(1, L + 1):
        parent = tables[-1]
        parent_scales = scales[-1]
        alpha = forward.tables[j]
        alpha_scales = forward.log_scales[j]
        width = alpha.shape[-1]
        beta_left = _merge_scatter_backward(parent, alpha[1::2], width, crossover)
        beta_right = _merge_scatter_backward(parent, alpha[0::2], width, crossover)
        beta = np.empty((alpha.shape[0], S, width))
        beta[0::2] = beta_left
        beta[1::2] = beta_right
        node_scale = np.empty(alpha.shape[0])
        node_scale[0::2] = parent_scales + alpha_scales[1::2]
        node_scale[1::2] = parent_scales + alpha_scales[0::2]
        mx = beta.reshape(beta.shape[0], -1).max(axis=1)
        pos = mx > 0.0
        beta[pos] /= mx[pos, np.newaxis, np.newaxis]
        node_scale = node_scale + np.where(pos, np.log(np.where(pos, mx, 1.0)), 0.0)
        tables.append(beta)
        scales.append(node_scale)
    return TreeMessages(
        tables=tables,
        log_scales=scales,
        num_real_leaves=probs.shape[0],
        label_list=labels,
        cap=cap,
        tilt=-forward.tilt,
    )


def _root_log_evidence(forward: TreeMessages) -> float:
    """Log total mass of the observed set at the root, tilt undone."""
    row = forward.root[-1]
    if not np.any(row > 0.0):
        return -math.inf
    with np.errstate(divide="ignore"):
        logs = np.log(row) - forward.tilt * np.arange(row.shape[0])
    peak = float(logs.max())
    total = float(np.exp(logs - peak).sum())
    return float(forward.log_scales[0][0]) + peak + math.log(total)


def tree_label_set_log_likelihood(
    prior: Union[PriorField, np.ndarray], label_set: Iterable[int], cap: int
) -> float:
    """Log probability that the labeling matches the observed set within the cap."""
    probs = _probs_of(prior)
    labels = _label_list(label_set, probs.shape[1])
    cap = effective_cap(cap, probs.shape[0])
    if cap < len(labels):
        return -math.inf
    return _root_log_evidence(tree_forward(probs, labels, cap))


def tree_label_set_likelihood(
    prior: Union[PriorField, np.ndarray], label_set: Iterable[int], cap: int
) -> float:
    """Probability of the observed label set; may underflow for long signals."""
    return math.exp(tree_label_set_log_likelihood(prior, label_set, cap))


def tree_joint(
    prior: Union[PriorField, np.ndarray], label_set: Iterable[int], cap: int
) -> np.ndarray:
    """Joint probability of (instance label, observed set, cap satisfied).

    Output shape (instants, classes+1); entry (u, c) is the probability that
    instant u carries class c while the whole labeling matches the observed
    set within the cap.  Intended for small problems; values underflow for
    very long signals.
    """
    probs = _probs_of(prior)
    labels = _label_list(label_set, probs.shape[1])
    cap = effective_cap(cap, probs.shape[0])
    fwd = tree_forward(probs, labels, cap)
    bwd = tree_backward(probs, labels, cap, forward=fwd)
    T = probs.shape[0]
    beta_leaf = bwd.tables[-1][:T]
    scales = np.exp(bwd.log_scales[-1][:T])
    joint = np.zeros_like(probs)
    joint[:, 0] = beta_leaf[:, 0, 0] * probs[:, 0] * scales
    if cap >= 1:
        damp = math.exp(fwd.tilt)
        for b, c in enumerate(labels):
            joint[:, c] = beta_leaf[:, 1 << b, 1] * probs[:, c] * damp * scales
    return joint


def tree_posterior_with_evidence(
    prior: Union[PriorField, np.ndarray], label_set: Iterable[int], cap: int
) -> tuple[np.ndarray, float]:
    """Posterior over instance labels plus the log evidence of the label set."""
    probs = _probs_of(prior)
    labels = _label_list(label_set, probs.shape[1])
    cap = effective_cap(cap, probs.shape[0])
    if cap < len(labels):
        raise EvidenceImpossibleError(
            f"cap {cap} is below the label-set size {len(labels)}"
        )
    fwd = tree_forward(probs, labels, cap)
    log_evidence = _root_log_evidence(fwd)
    if log_evidence == -math.inf:
        raise EvidenceImpossibleError(
            f"label set {labels} has zero probability under the given prior"
        )
    bwd = tree_backward(probs, labels, cap, forward=fwd)
    T = probs.shape[0]
    beta_leaf = bwd.tables[-1][:T]
    # The tilt cancels here: beta carries exp(-tilt*count), the leaf factor
    # for a nonzero class carries exp(+tilt), and background adds no count.
    post = np.zeros_like(probs)
    post[:, 0] = beta_leaf[:, 0, 0] * probs[:, 0]
    if cap >= 1:
        damp = math.exp(fwd.tilt)
        for b, c in enumerate(labels):
            post[:, c] = beta_leaf[:, 1 << b, 1] * probs[:, c] * damp
    sums = post.sum(axis=1, keepdims=True)
    np.divide(post, sums, out=post, where=sums > 0.0)
    if not np.isfinite(post).all() or not (sums > 0.0).all():
        raise RuntimeError(
            "posterior rows lost all mass to underflow; the prior is in an "
            "extreme regime"
        )
    return post, log_evidence


def tree_posterior(
    prior: Union[PriorField, np.ndarray], label_set: Iterable[int], cap: int
) -> np.ndarray:
    """Posterior probability of each class at each instant, rows summing to 1."""
    post, _ = tree_posterior_with_evidence(prior, label_set, cap)
    return post
