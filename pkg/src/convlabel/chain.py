"""Exact instance-label posteriors by forward-backward sweeps over a
(label subset, nonzero count) chain.

The labeling of a prefix of instants is summarized by the pair (set of event
classes used so far, number of nonzero labels so far).  Only subsets of the
signal's label set are tracked: once a class outside the set appears, the
full labeling can never match the observed set, so that mass is dropped.
Counts are tracked up to the cardinality cap because counts never decrease.
Both prunings are exact for every quantity read out here.

Forward tables are ragged: at instant u (0-based) the count axis holds
0..min(cap, u+1).  Every table is rescaled to max entry 1 with the log of the
scale accumulated, so arbitrarily long signals stay inside float range.

Per-table rescaling is not enough when the cap sits far below the expected
nonzero count: forward mass then piles up at the cap while backward mass
piles up at count 0, and their product underflows even though every readout
is well behaved.  The nonzero-label probabilities are therefore damped by
exp(tilt) with tilt solving expected-count = cap, which recentres both
sweeps on the counts that dominate the readouts.  The tilt cancels inside
every normalized posterior row and is undone by log-sum-exp in the
evidence, so results are unchanged; with a slack cap the tilt is 0 and the
recursions run exactly as written above.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence, Union

import numba
import numpy as np
from scipy import special as spsp

from .tilt import solve_count_tilt
from .types import EvidenceImpossibleError, MessageTable, PriorField, effective_cap


def _probs_of(prior: Union[PriorField, np.ndarray]) -> np.ndarray:
    probs = prior.probs if isinstance(prior, PriorField) else np.asarray(prior)
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] < 1:
        raise ValueError("prior must be a 2-D (instants, classes+1) array")
    return probs


def _class_cols(label_set: Iterable[int], num_cols: int) -> np.ndarray:
    labels = sorted(set(int(c) for c in label_set))
    if labels and (labels[0] < 1 or labels[-1] >= num_cols):
        raise ValueError(f"label set {labels} incompatible with {num_cols - 1} classes")
    return np.asarray(labels, dtype=np.int64)


def _tilted_probs(
    probs: np.ndarray, cols: np.ndarray, cap: int
) -> tuple[np.ndarray, float]:
    """Damp the tracked class columns by exp(tilt); identity when tilt is 0."""
    tilt = solve_count_tilt(probs, cols, cap)
    if tilt == 0.0:
        return probs, 0.0
    tilted = probs.copy()
    tilted[:, cols] *= math.exp(tilt)
    return tilted, tilt


def _decode_log_total(row: np.ndarray, log_scale: float, tilt: float) -> float:
    """Log of the un-tilted sum of one subset's count vector."""
    if not np.any(row > 0.0):
        return -math.inf
    with np.errstate(divide="ignore"):
        logs = np.log(row) - tilt * np.arange(row.shape[0])
    peak = float(logs.max())
    return log_scale + peak + math.log(float(np.exp(logs - peak).sum()))


@numba.njit(cache=True, nogil=True)
def _forward_flat(probs, class_cols, cap):
    # Ragged forward tables: table u spans offsets[u]:offsets[u+1], row-major
    # (subset mask, count), count width min(cap, u+1)+1.
    T = probs.shape[0]
    k = class_cols.shape[0]
    S = 1 << k
    offsets = np.zeros(T + 1, np.int64)
    for u in range(T):
        offsets[u + 1] = offsets[u] + S * (min(cap, u + 1) + 1)
    flat = np.zeros(offsets[T], np.float64)
    log_scales = np.zeros(T, np.float64)

    # First instant: background keeps (empty, 0); class b opens ({b}, 1).
    K0 = min(cap, 1) + 1
    flat[0] = probs[0, 0]
    if cap >= 1:
        for b in range(k):
            flat[(1 << b) * K0 + 1] = probs[0, class_cols[b]]
    mx = 0.0
    for i in range(offsets[1]):
        if flat[i] > mx:
            mx = flat[i]
    if mx > 0.0:
        for i in range(offsets[1]):
            flat[i] /= mx
        log_scales[0] = math.log(mx)

    for u in range(1, T):
        Kp = min(cap, u) + 1
        K = min(cap, u + 1) + 1
        base_p = offsets[u - 1]
        base = offsets[u]
        p0 = probs[u, 0]
        mx = 0.0
        for m in range(S):
            rp = base_p + m * Kp
            r = base + m * K
            for l in range(K):
                v = 0.0
                if l < Kp:
                    v = p0 * flat[rp + l]
                if l >= 1:
                    # Both predecessors sit at count l-1: the count always
                    # steps when a nonzero label is drawn, whether or not the
                    # class is new to the subset.
                    lm = l - 1
                    mm = m
                    b = 0
                    while mm != 0:
                        if mm & 1:
                            pc = probs[u, class_cols[b]]
                            v += pc * (
                                flat[rp + lm]
                                + flat[base_p + (m ^ (1 << b)) * Kp + lm]
                            )
                        mm >>= 1
                        b += 1
                flat[r + l] = v
                if v > mx:
                    mx = v
        log_scales[u] = log_scales[u - 1]
        if mx > 0.0:
            # divide, not multiply by the reciprocal: 1/mx overflows for
            # subnormal mx while the division stays exact
            for i in range(base, offsets[u + 1]):
                flat[i] /= mx
            log_scales[u] += math.log(mx)
    return flat, offsets, log_scales


@numba.njit(cache=True, nogil=True)
def _beta_step(beta_in, beta_out, prow, class_cols, cap):
    # One marginalization step: beta over states after instant u-1 from beta
    # after instant u, absorbing the class probabilities of instant u.
    S = beta_in.shape[0]
    k = class_cols.shape[0]
    p0 = prow[0]
    mx = 0.0
    for m in range(S):
        for l in range(cap + 1):
            v = p0 * beta_in[m, l]
            if l < cap:
                for b in range(k):
                    v += prow[class_cols[b]] * beta_in[m | (1 << b), l + 1]
            beta_out[m, l] = v
            if v > mx:
                mx = v
    return mx


@numba.njit(cache=True, nogil=True)
def _posterior_sweep(probs, class_cols, cap, flat, offsets, tilt):
    # Streaming backward pass over tilted tables; emits the normalized
    # posterior row at every instant.  Table scales and the tilt both cancel
    # inside each row, so neither is tracked.
    T = probs.shape[0]
    C1 = probs.shape[1]
    k = class_cols.shape[0]
    S = 1 << k
    post = np.zeros((T, C1))
    beta = np.zeros((S, cap + 1))
    beta_next = np.zeros((S, cap + 1))
    for l in range(cap + 1):
        # Observed set reached, count within cap; carries the inverse tilt.
        beta[S - 1, l] = math.exp(tilt * (cap - l))
    for u in range(T - 1, -1, -1):
        row_sum = 0.0
        if u == 0:
            v = probs[0, 0] * beta[0, 0]
            post[0, 0] = v
            row_sum = v
            if cap >= 1:
                for b in range(k):
                    c = class_cols[b]
                    v = probs[0, c] * beta[1 << b, 1]
                    post[0, c] = v
                    row_sum += v
        else:
            Kp = min(cap, u) + 1
            base_p = offsets[u - 1]
            v0 = 0.0
            for m in range(S):
                rp = base_p + m * Kp
                for l in range(min(Kp, cap + 1)):
                    v0 += beta[m, l] * flat[rp + l]
            v0 *= probs[u, 0]
            post[u, 0] = v0
            row_sum = v0
            for b in range(k):
                bit = 1 << b
                c = class_cols[b]
                vb = 0.0
                for m in range(S):
                    rp = base_p + m * Kp
                    for l in range(min(Kp, cap)):
                        vb += beta[m | bit, l + 1] * flat[rp + l]
                vb *= probs[u, c]
                post[u, c] = vb
                row_sum += vb
        if row_sum > 0.0:
            # divide, not multiply by the reciprocal: 1/row_sum overflows
            # for subnormal sums while the division stays exact
            for c in range(C1):
                post[u, c] /= row_sum
        if u > 0:
            mx = _beta_step(beta, beta_next, probs[u], class_cols, cap)
            if mx > 0.0:
                for m in range(S):
                    for l in range(cap + 1):
                        beta_next[m, l] /= mx
            tmp = beta
            beta = beta_next
            beta_next = tmp
    return post


def chain_forward(
    prior: Union[PriorField, np.ndarray], label_set: Iterable[int], cap: int
) -> list[MessageTable]:
    """Forward tables over (subset mask, count) states, one per instant.

    Table u has count axis 0..min(cap, u+1); entries are rescaled to max 1
    with the cumulative log scale attached and decode per ``MessageTable``
    (the tilt is nonzero only when the cap binds).
    """
    probs = _probs_of(prior)
    cols = _class_cols(label_set, probs.shape[1])
    cap = effective_cap(cap, probs.shape[0])
    tprobs, tilt = _tilted_probs(probs, cols, cap)
    flat, offsets, log_scales = _forward_flat(tprobs, cols, cap)
    S = 1 << len(cols)
    tables = []
    for u in range(probs.shape[0]):
        K = (offsets[u + 1] - offsets[u]) // S
        entries = flat[offsets[u] : offsets[u + 1]].reshape(S, K).copy()
        tables.append(
            MessageTable(entries=entries, log_scale=float(log_scales[u]), tilt=tilt)
        )
    return tables


def chain_backward(
    prior: Union[PriorField, np.ndarray], label_set: Iterable[int], cap: int
) -> list[MessageTable]:
    """Backward tables, one per instant, in time order.

    Entry (m, l) of table u is proportional to the probability that the
    remaining instants complete the observed label set within the cap, given
    the state (m, l) after instant u.
    """
    probs = _probs_of(prior)
    cols = _class_cols(label_set, probs.shape[1])
    cap = effective_cap(cap, probs.shape[0])
    tprobs, tilt = _tilted_probs(probs, cols, cap)
    T = probs.shape[0]
    S = 1 << len(cols)
    beta = np.zeros((S, cap + 1))
    # Observed set reached, count within cap; the stored entries carry the
    # inverse tilt, largest (1) at count = cap.
    beta[S - 1, :] = np.exp(tilt * (cap - np.arange(cap + 1)))
    log_scale = -tilt * cap
    tables: list[MessageTable] = [
        MessageTable(entries=beta.copy(), log_scale=log_scale, tilt=-tilt)
    ]
    for u in range(T - 1, 0, -1):
        beta_next = np.zeros_like(beta)
        mx = _beta_step(beta, beta_next, tprobs[u], cols, np.int64(cap))
        if mx > 0.0:
            beta_next /= mx
            log_scale += math.log(mx)
        beta = beta_next
        tables.append(MessageTable(entries=beta.copy(), log_scale=log_scale, tilt=-tilt))
    tables.reverse()
    return tables


def chain_label_set_log_likelihood(
    prior: Union[PriorField, np.ndarray], label_set: Iterable[int], cap: int
) -> float:
    """Log probability that the labeling matches the observed set within the cap."""
    probs = _probs_of(prior)
    cols = _class_cols(label_set, probs.shape[1])
    cap = effective_cap(cap, probs.shape[0])
    if cap < len(cols):
        return -math.inf
    tprobs, tilt = _tilted_probs(probs, cols, cap)
    flat, offsets, log_scales = _forward_flat(tprobs, cols, cap)
    S = 1 << len(cols)
    last = flat[offsets[-2] :].reshape(S, -1)
    return _decode_log_total(last[S - 1], float(log_scales[-1]), tilt)


def chain_label_set_likelihood(
    prior: Union[PriorField, np.ndarray], label_set: Iterable[int], cap: int
) -> float:
    """Probability that the labeling matches the observed set within the cap.

    May underflow to 0 for very long signals; use the log variant there.
    """
    return math.exp(chain_label_set_log_likelihood(prior, label_set, cap))


def chain_all_set_log_weights(
    prior: Union[PriorField, np.ndarray], cap: int
) -> np.ndarray:
    """Log likelihood of every candidate label set from one forward pass.

    Entry m is the log of the joint probability that the labeling uses
    exactly the classes of mask m (bit b for class b+1) within the cap,
    -inf where that is impossible.  One shared forward pass serves all 2^C
    subsets, so comparisons across subsets are exact.
    """
    probs = _probs_of(prior)
    num_classes = probs.shape[1] - 1
    cols = _class_cols(range(1, num_classes + 1), probs.shape[1])
    cap = effective_cap(cap, probs.shape[0])
    tprobs, tilt = _tilted_probs(probs, cols, cap)
    flat, offsets, log_scales = _forward_flat(tprobs, cols, cap)
    S = 1 << num_classes
    last = flat[offsets[-2] :].reshape(S, -1)
    with np.errstate(divide="ignore"):
        logs = np.log(last) - tilt * np.arange(last.shape[1])
    return spsp.logsumexp(logs, axis=1) + float(log_scales[-1])


def chain_joint(
    prior: Union[PriorField, np.ndarray], label_set: Iterable[int], cap: int
) -> np.ndarray:
    """Joint probability of (instance label, observed set, cap satisfied).

    Output shape (instants, classes+1); entry (u, c) is the probability that
    instant u carries class c while the whole labeling matches the observed
    set within the cap.  Columns outside the set and background are zero.
    Intended for small problems; values underflow for very long signals.
    """
    probs = _probs_of(prior)
    cols = _class_cols(label_set, probs.shape[1])
    cap = effective_cap(cap, probs.shape[0])
    alphas = chain_forward(probs, cols, cap)
    betas = chain_backward(probs, cols, cap)
    # Alpha carries exp(-tilt*l), beta exp(+tilt*l): entrywise products are
    # tilt-free except for the one count step a nonzero label adds, which the
    # damped class probability restores.
    tprobs, _ = _tilted_probs(probs, cols, cap)
    T = probs.shape[0]
    joint = np.zeros_like(probs)
    for u in range(T):
        beta = betas[u]
        if u == 0:
            scale = math.exp(beta.log_scale)
            joint[0, 0] = tprobs[0, 0] * beta.entries[0, 0] * scale
            if cap >= 1:
                for b, c in enumerate(cols):
                    joint[0, c] = tprobs[0, c] * beta.entries[1 << b, 1] * scale
            continue
        alpha = alphas[u - 1]
        Kp = alpha.count_dim
        scale = math.exp(alpha.log_scale + beta.log_scale)
        top0 = min(Kp, cap + 1)
        joint[u, 0] = tprobs[u, 0] * scale * float(
            (beta.entries[:, :top0] * alpha.entries[:, :top0]).sum()
        )
        top = min(Kp, cap)
        for b, c in enumerate(cols):
            bit = 1 << b
            acc = float(
                (beta.entries[np.arange(len(alpha.entries)) | bit, 1 : top + 1]
                 * alpha.entries[:, :top]).sum()
            )
            joint[u, c] = tprobs[u, c] * scale * acc
    return joint


def chain_posterior_with_evidence(
    prior: Union[PriorField, np.ndarray], label_set: Iterable[int], cap: int
) -> tuple[np.ndarray, float]:
    """Posterior over instance labels plus the log evidence of the label set."""
    probs = _probs_of(prior)
    cols = _class_cols(label_set, probs.shape[1])
    cap = effective_cap(cap, probs.shape[0])
    if cap < len(cols):
        raise EvidenceImpossibleError(
            f"cap {cap} is below the label-set size {len(cols)}"
        )
    tprobs, tilt = _tilted_probs(probs, cols, cap)
    flat, offsets, log_scales = _forward_flat(tprobs, cols, cap)
    S = 1 << len(cols)
    log_evidence = _decode_log_total(
        flat[offsets[-2] :].reshape(S, -1)[S - 1], float(log_scales[-1]), tilt
    )
    if log_evidence == -math.inf or not math.isfinite(log_scales[-1]):
        raise EvidenceImpossibleError(
            f"label set {sorted(int(c) for c in cols)} has zero probability "
            "under the given prior"
        )
    post = _posterior_sweep(tprobs, cols, np.int64(cap), flat, offsets, tilt)
    if not np.isfinite(post).all() or not (post.sum(axis=1) > 0.5).all():
        raise RuntimeError(
            "posterior rows lost all mass to underflow; the prior is in an "
            "extreme regime"
        )
    return post, log_evidence


def chain_posterior(
    prior: Union[PriorField, np.ndarray], label_set: Iterable[int], cap: int
) -> np.ndarray:
    """Posterior probability of each class at each instant, rows summing to 1."""
    post, _ = chain_posterior_with_evidence(prior, label_set, cap)
    return post
