"""Reproducible synthetic datasets: windowed-cosine 1-D signals and
discriminative 2-D binary patterns.

The 1-D generator plants scaled copies of nine cosine-times-Gaussian
templates at random positions and adds white noise calibrated to a target
signal-to-noise ratio.  The 2-D generator draws random bit matrices and
derives instance labels by exact matching against the corpus's three most
frequent 3x3 sub-windows.  Both emit the latent per-sample labels alongside
the weakly labeled examples, and both are deterministic in the seed: every
signal consumes its own numbered child of the seed sequence, so results do
not depend on generation order.
"""

from __future__ import annotations

import dataclasses
import math
from collections import Counter
from typing import Optional

import numpy as np

from .types import DatasetError, Signal, WeakExample

TEMPLATE_HALF_WIDTH = 20
TEMPLATE_WIDTHS = (1.0, 2.0, 3.0)
TEMPLATE_FREQS = (0.1, 0.2, 0.3)
NUM_TEMPLATE_CLASSES = len(TEMPLATE_WIDTHS) * len(TEMPLATE_FREQS)

BINARY_NUM_SIGNALS = 200
BINARY_CHANNELS = 3
BINARY_LENGTH = 200
BINARY_WINDOW = 3
BINARY_NUM_CLASSES = 3


def gabor_template(a: float, f: float) -> np.ndarray:
    """Cosine of frequency ``f`` under a Gaussian envelope of width ``a``.

    Evaluated on the 41 integer offsets -20..20.
    """
    if a <= 0:
        raise DatasetError("envelope width must be positive")
    t = np.arange(-TEMPLATE_HALF_WIDTH, TEMPLATE_HALF_WIDTH + 1, dtype=np.float64)
    return np.cos(2.0 * math.pi * f * t) * np.exp(-(t**2) / (2.0 * a**2))


def class_template(c: int) -> np.ndarray:
    """Template of class c in 1..9: width varies slowest, frequency fastest."""
    if not 1 <= c <= NUM_TEMPLATE_CLASSES:
        raise DatasetError(f"class {c} outside 1..{NUM_TEMPLATE_CLASSES}")
    a = TEMPLATE_WIDTHS[(c - 1) // len(TEMPLATE_FREQS)]
    f = TEMPLATE_FREQS[(c - 1) % len(TEMPLATE_FREQS)]
    return gabor_template(a, f)


@dataclasses.dataclass(frozen=True)
class GenConfig:
    """Recipe for one batch of 1-D template-superposition signals.

    ``mixture`` gives the fractions of signals whose label set has size
    1, 2, 3, and 0, realized as exact counts.  ``snr_db`` may be infinite
    to disable noise.
    """

    num_signals: int
    length: int = 200
    snr_db: float = 20.0
    seed: int = 0
    mixture: tuple[float, float, float, float] = (0.5, 0.2, 0.2, 0.1)

    def __post_init__(self) -> None:
        if self.num_signals < 1:
            raise DatasetError("num_signals must be positive")
        if self.length < 1:
            raise DatasetError("length must be positive")
        if abs(sum(self.mixture) - 1.0) > 1e-9 or any(p < 0 for p in self.mixture):
            raise DatasetError("mixture must be non-negative and sum to 1")


def _exact_counts(fractions: tuple[float, ...], total: int) -> list[int]:
    # Largest-remainder apportionment; earlier categories win remainder ties.
    raw = [p * total for p in fractions]
    counts = [int(math.floor(r)) for r in raw]
    leftover = total - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (counts[i] - raw[i], i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def _size_assignments(config: GenConfig, rng: np.random.Generator) -> np.ndarray:
    sizes = (1, 2, 3, 0)
    counts = _exact_counts(config.mixture, config.num_signals)
    assigned = np.repeat(sizes, counts)
    return rng.permutation(assigned)


def gen_gabor_dataset(
    config: GenConfig,
) -> tuple[list[WeakExample], list[tuple[str, np.ndarray]]]:
    """Signals, weak label sets, and latent per-sample labels.

    Per signal: draw the label set (uniform classes until the target size),
    the number of events (|Y| or |Y|+1 for small sets, up to 10 for larger),
    distinct event positions, a class from the label set and an amplitude
    in [1, 2) per event; superpose the scaled templates (clipped at the
    edges); finally add white noise with variance E / (length * 10^(snr/10))
    where E is the mean clean-signal energy of the whole batch.
    """
    root = np.random.SeedSequence(config.seed)
    children = root.spawn(config.num_signals + 1)
    sizes = _size_assignments(config, np.random.default_rng(children[0]))

    T = config.length
    cleans = np.zeros((config.num_signals, T))
    truths = np.zeros((config.num_signals, T), dtype=np.int64)
    label_sets: list[frozenset[int]] = []
    rngs = [np.random.default_rng(child) for child in children[1:]]
    for n, (size, rng) in enumerate(zip(sizes, rngs)):
        labels: set[int] = set()
        while len(labels) < size:
            labels.add(int(rng.integers(1, NUM_TEMPLATE_CLASSES + 1)))
        label_sets.append(frozenset(labels))
        if not labels:
            continue
        if size <= 2:
            num_events = size + int(rng.integers(0, 2))
        else:
            num_events = int(rng.integers(size, 11))
        positions = rng.choice(T, size=num_events, replace=False)
        ordered = np.asarray(sorted(labels))
        classes = ordered[rng.integers(0, len(ordered), size=num_events)]
        amplitudes = rng.uniform(1.0, 2.0, size=num_events)
        for pos, cls, amp in zip(positions, classes, amplitudes):
            truths[n, pos] = cls
            template = class_template(int(cls))
            lo = max(0, pos - TEMPLATE_HALF_WIDTH)
            hi = min(T, pos + TEMPLATE_HALF_WIDTH + 1)
            tpl_lo = lo - (pos - TEMPLATE_HALF_WIDTH)
            cleans[n, lo:hi] += amp * template[tpl_lo : tpl_lo + (hi - lo)]

    mean_energy = float((cleans**2).sum(axis=1).mean())
    examples = []
    truth_items = []
    width = len(str(config.num_signals - 1))
    for n, rng in enumerate(rngs):
        samples = cleans[n]
        if not math.isinf(config.snr_db):
            sigma = math.sqrt(mean_energy / (T * 10.0 ** (config.snr_db / 10.0)))
            samples = samples + rng.normal(0.0, sigma, size=T)
        ident = f"gabor-{n:0{width}d}"
        examples.append(
            WeakExample(
                signal=Signal(samples.copy(), ident=ident),
                label_set=label_sets[n],
            )
        )
        truth_items.append((ident, truths[n].copy()))
    return examples, truth_items


def _window_key(window: np.ndarray) -> tuple[int, ...]:
    return tuple(int(v) for v in window.ravel())


def gen_binary_dataset(
    seed: int, num_signals: int = BINARY_NUM_SIGNALS
) -> tuple[list[WeakExample], list[tuple[str, np.ndarray]], list[np.ndarray]]:
    """Random bit matrices labeled by their own most frequent sub-windows.

    Draws ``num_signals`` binary signals of shape 3 x 200, pools every 3x3
    sub-window across the corpus, and keeps the three most frequent patterns
    as class templates (frequency ties break toward the lexicographically
    smallest row-major bit pattern).  The instance label at position t is
    the class whose template exactly matches the window starting at t, else
    0; the final window positions that no window starts at stay 0.  Signal
    label sets are the unions of the nonzero instance labels.
    """
    root = np.random.SeedSequence(seed)
    rngs = [np.random.default_rng(child) for child in root.spawn(num_signals)]
    signals = np.stack(
        [rng.integers(0, 2, size=(BINARY_CHANNELS, BINARY_LENGTH)) for rng in rngs]
    )

    counts: Counter = Counter()
    for n in range(num_signals):
        for t in range(BINARY_LENGTH - BINARY_WINDOW + 1):
            counts[_window_key(signals[n, :, t : t + BINARY_WINDOW])] += 1
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    templates = [
        np.asarray(key, dtype=np.int64).reshape(BINARY_CHANNELS, BINARY_WINDOW)
        for key, _ in ranked[:BINARY_NUM_CLASSES]
    ]
    by_key = {_window_key(tpl): c + 1 for c, tpl in enumerate(templates)}

    examples = []
    truth_items = []
    width = len(str(num_signals - 1))
    for n in range(num_signals):
        y = np.zeros(BINARY_LENGTH, dtype=np.int64)
        for t in range(BINARY_LENGTH - BINARY_WINDOW + 1):
            y[t] = by_key.get(_window_key(signals[n, :, t : t + BINARY_WINDOW]), 0)
        ident = f"binary-{n:0{width}d}"
        examples.append(
            WeakExample(
                signal=Signal(signals[n].astype(np.float64), ident=ident),
                label_set=frozenset(int(c) for c in np.unique(y) if c != 0),
            )
        )
        truth_items.append((ident, y))
    return examples, truth_items, templates


def split_dataset(
    examples: list,
    truth_items: Optional[list],
    train_fraction: float,
    seed: int,
) -> tuple[list, list]:
    """Deterministic shuffled split into (train, test) index lists."""
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError("train_fraction must be strictly between 0 and 1")
    rng = np.random.default_rng(np.random.SeedSequence((seed, len(examples))))
    order = rng.permutation(len(examples))
    cut = int(round(train_fraction * len(examples)))
    return sorted(order[:cut].tolist()), sorted(order[cut:].tolist())
