"""Core containers: signals, weakly labeled examples, model parameters,
and the subset/count state bookkeeping shared by the inference backends.

Conventions used throughout the package:

* a signal is a real matrix of shape (channels, length);
* class 0 is the background ("no event") class, event classes are 1..C;
* a word is a convolution kernel of shape (channels, window_len) plus a bias;
* the labeler scores every instant t where the window overlaps the signal,
  t = -delta .. length-1+(window_len-1-delta) with delta = (window_len-1)//2,
  which gives length + window_len - 1 instants in total.
"""

from __future__ import annotations

import dataclasses
from typing import Iterable, Optional

import numpy as np


class DatasetError(ValueError):
    """A dataset, model, or configuration value failed validation."""


class EvidenceImpossibleError(ValueError):
    """The observed label set has probability zero under the current model."""


@dataclasses.dataclass(frozen=True)
class Signal:
    """A fixed-length multichannel sequence.

    1-D input is promoted to a single channel.  Samples must be finite.
    """

    samples: np.ndarray
    ident: str = ""

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[np.newaxis, :]
        if arr.ndim != 2 or arr.size == 0:
            raise DatasetError(f"signal {self.ident!r}: expected a non-empty 1-D or 2-D array")
        if not np.all(np.isfinite(arr)):
            raise DatasetError(f"signal {self.ident!r}: samples must be finite")
        object.__setattr__(self, "samples", arr)

    @property
    def num_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[1]


@dataclasses.dataclass(frozen=True)
class WeakExample:
    """A signal with its signal-level label set and cardinality cap.

    ``label_set`` holds the event classes known to occur somewhere in the
    signal; ``cap`` bounds how many instants may carry a nonzero label.
    ``cap`` may be None in freshly generated or loaded data (the cap is a
    modeling choice, not a property of the signal) but must be set before
    training or prediction.  A cap below the label-set size leaves no
    consistent labeling, so it is rejected here rather than surfacing later
    as zero evidence.
    """

    signal: Signal
    label_set: frozenset[int]
    cap: Optional[int] = None

    def __post_init__(self) -> None:
        labels = frozenset(int(c) for c in self.label_set)
        if any(c < 1 for c in labels):
            raise DatasetError(
                f"signal {self.signal.ident!r}: label set {sorted(labels)} "
                "contains non-positive class ids"
            )
        object.__setattr__(self, "label_set", labels)
        if self.cap is None:
            return
        cap = int(self.cap)
        if cap < 0:
            raise DatasetError(f"signal {self.signal.ident!r}: cap {cap} is negative")
        if cap < len(labels):
            raise DatasetError(
                f"signal {self.signal.ident!r}: cap {cap} is below the "
                f"label-set size {len(labels)}"
            )
        object.__setattr__(self, "cap", cap)

    @property
    def require_cap(self) -> int:
        """The cap, or a diagnostic if none was ever supplied."""
        if self.cap is None:
            raise DatasetError(
                f"signal {self.signal.ident!r}: no cardinality cap set "
                "(supply one per record or a global default)"
            )
        return self.cap


@dataclasses.dataclass
class ModelParams:
    """Analysis words and biases for classes 0..C.

    ``words`` has shape (C+1, channels, window_len); ``biases`` has shape
    (C+1,).  Class 0 is the background class.
    """

    words: np.ndarray
    biases: np.ndarray

    def __post_init__(self) -> None:
        self.words = np.asarray(self.words, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.words.ndim != 3:
            raise DatasetError("words must have shape (classes+1, channels, window_len)")
        if self.biases.shape != (self.words.shape[0],):
            raise DatasetError("biases must have one entry per class including background")
        if self.window_len < 1:
            raise DatasetError("window_len must be at least 1")
        if not (np.all(np.isfinite(self.words)) and np.all(np.isfinite(self.biases))):
            raise DatasetError("model parameters must be finite")

    @property
    def num_classes(self) -> int:
        """Number of event classes C (background excluded)."""
        return self.words.shape[0] - 1

    @property
    def num_channels(self) -> int:
        return self.words.shape[1]

    @property
    def window_len(self) -> int:
        return self.words.shape[2]

    @property
    def delta(self) -> int:
        """Forward reach of the window; equals (window_len-1)/2 for odd windows."""
        return (self.window_len - 1) // 2

    def copy(self) -> "ModelParams":
        return ModelParams(self.words.copy(), self.biases.copy())


@dataclasses.dataclass(frozen=True)
class LabelState:
    """A (label subset, nonzero count) state of the accumulated labeling."""

    members: frozenset[int]
    count: int


@dataclasses.dataclass
class MessageTable:
    """Dense weights over (subset mask, count) states with a shared log scale.

    ``entries[m, l]`` is the stored weight of the state whose subset mask is
    ``m`` (bit b set means the b-th smallest label of the label set is
    present) and whose nonzero count is ``l``.  True weights are
    ``entries * exp(log_scale - tilt * l)``; tables are rescaled so the
    largest stored entry is 1, which keeps long products inside float range,
    and ``tilt`` records any exponential count reweighting applied while the
    table was built (0 unless the cardinality cap binds).
    """

    entries: np.ndarray
    log_scale: float = 0.0
    tilt: float = 0.0

    @property
    def num_subsets(self) -> int:
        return self.entries.shape[0]

    @property
    def count_dim(self) -> int:
        return self.entries.shape[1]


@dataclasses.dataclass
class PriorField:
    """Per-instant class probabilities, shape (instants, C+1); rows sum to 1.

    ``offset`` is the row index of signal time 0, i.e. row u scores signal
    time u - offset.
    """

    probs: np.ndarray
    offset: int = 0

    @property
    def num_instants(self) -> int:
        return self.probs.shape[0]

    @property
    def num_classes(self) -> int:
        return self.probs.shape[1] - 1


def num_instants(length: int, window_len: int) -> int:
    """Number of scored instants for a signal of the given length."""
    return length + window_len - 1


def window_extract(samples: np.ndarray, t: int, window_len: int) -> np.ndarray:
    """Windowed slice of ``samples`` feeding the labeler at instant ``t``.

    Channels are stacked row-major; within a channel the samples run
    time-reversed from t+delta down to t-(window_len-1-delta), zero-filled
    outside the signal support.  A dot product of this vector with a
    flattened word therefore equals the full convolution of signal and word
    evaluated at t.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    channels, length = samples.shape
    delta = (window_len - 1) // 2
    out = np.zeros((channels, window_len))
    for i in range(window_len):
        src = t + delta - i
        if 0 <= src < length:
            out[:, i] = samples[:, src]
    return out.ravel()


def subset_mask(members: Iterable[int], label_list: list[int]) -> int:
    """Bitmask of ``members`` under the ascending-id bit order of ``label_list``."""
    mask = 0
    for c in members:
        mask |= 1 << label_list.index(c)
    return mask


def mask_members(mask: int, label_list: list[int]) -> frozenset[int]:
    """Inverse of :func:`subset_mask`."""
    return frozenset(c for b, c in enumerate(label_list) if mask >> b & 1)


def state_enumerate(label_set: Iterable[int], cap: int) -> list[LabelState]:
    """All (subset, count) states, subsets in ascending-mask order, counts inner.

    The mask order places bit b at the b-th smallest label, so for
    label_set={1} and cap=1 the order is (set(),0), (set(),1), ({1},0), ({1},1).
    """
    labels = sorted(set(int(c) for c in label_set))
    states = []
    for mask in range(1 << len(labels)):
        members = mask_members(mask, labels)
        for count in range(cap + 1):
            states.append(LabelState(members, count))
    return states


def effective_cap(cap: int, instants: int) -> int:
    """Cap clamped to the number of instants; larger counts are unreachable."""
    return min(int(cap), int(instants))


def validate_labels_against_model(
    example: WeakExample, num_classes: int, ident: Optional[str] = None
) -> None:
    """Reject label ids outside 1..num_classes with the offending signal named."""
    ident = ident if ident is not None else example.signal.ident
    bad = [c for c in sorted(example.label_set) if c > num_classes]
    if bad:
        raise DatasetError(
            f"signal {ident!r}: labels {bad} exceed the model's class count {num_classes}"
        )
