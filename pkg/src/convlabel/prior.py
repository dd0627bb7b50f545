"""Analysis scores and the per-instant label prior.

The score of class c at instant t is the full convolution of the signal with
word c (summed over channels) plus the class bias; the prior is the row-wise
softmax of the scores.  Small problems convolve directly, large ones go
through FFT convolution; both paths agree to float precision.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy import signal as sps

from .types import ModelParams, PriorField, Signal

# Direct convolution up to this many multiply-adds per class, FFT beyond.
FFT_CROSSOVER = 1 << 16


@dataclasses.dataclass
class AnalysisField:
    """Raw class scores per instant, shape (instants, C+1); bias included."""

    scores: np.ndarray
    offset: int = 0

    @property
    def num_instants(self) -> int:
        return self.scores.shape[0]


def convolve_full(samples: np.ndarray, kernel: np.ndarray, crossover: int = FFT_CROSSOVER) -> np.ndarray:
    """Full convolution along the last axis, summed over the channel axis.

    ``samples`` is (channels, length), ``kernel`` is (channels, width) or
    (k, channels, width) for a batch of kernels.  Output length is
    length + width - 1.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    kernel = np.asarray(kernel, dtype=np.float64)
    batched = kernel.ndim == 3
    kernels = kernel if batched else kernel[np.newaxis]
    length = samples.shape[1]
    width = kernels.shape[2]
    if length * width > crossover:
        out = sps.fftconvolve(samples[np.newaxis], kernels, mode="full", axes=2).sum(axis=1)
    else:
        out = np.zeros((kernels.shape[0], length + width - 1))
        for k in range(kernels.shape[0]):
            for f in range(samples.shape[0]):
                out[k] += np.convolve(samples[f], kernels[k, f], mode="full")
    return out if batched else out[0]


def analyze(signal: Signal, params: ModelParams, crossover: int = FFT_CROSSOVER) -> AnalysisField:
    """Score every class at every instant where the window meets the signal."""
    if signal.num_channels != params.num_channels:
        raise ValueError(
            f"signal {signal.ident!r} has {signal.num_channels} channels, "
            f"model expects {params.num_channels}"
        )
    scores = convolve_full(signal.samples, params.words, crossover)
    scores = scores.T + params.biases[np.newaxis, :]
    return AnalysisField(scores=scores, offset=params.delta)


def prior_field(analysis: AnalysisField) -> PriorField:
    """Row-wise softmax of the analysis scores, computed in log space.

    The row max is subtracted before exponentiation, so saturated scores
    cannot overflow and every row sums to 1 exactly up to rounding.
    """
    scores = analysis.scores
    shifted = scores - scores.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    return PriorField(probs=probs, offset=analysis.offset)


def prior_for(signal: Signal, params: ModelParams, crossover: int = FFT_CROSSOVER) -> PriorField:
    """Convenience composition of :func:`analyze` and :func:`prior_field`."""
    return prior_field(analyze(signal, params, crossover))
