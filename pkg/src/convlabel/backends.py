"""Uniform entry points over the two interchangeable inference backends.

The chain sweep costs O(instants * cap) per subset and almost no overhead;
the tree merge costs O(instants * log-factors) but pays per-level setup.
"auto" picks the chain for small products of instants and cap, the tree for
large ones.
"""

from __future__ import annotations

from typing import Iterable, Union

import numpy as np

from . import chain, tree
from .types import PriorField, effective_cap

BACKENDS = ("chain", "tree")

# instants * cap above which "auto" switches to the tree backend
AUTO_THRESHOLD = 100_000


def select_backend(backend: str, instants: int, cap: int) -> str:
    """Resolve 'auto' against the workload size; pass real names through."""
    if backend == "auto":
        return "tree" if instants * effective_cap(cap, instants) > AUTO_THRESHOLD else "chain"
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected chain, tree, or auto")
    return backend


def posterior_with_evidence(
    prior: Union[PriorField, np.ndarray],
    label_set: Iterable[int],
    cap: int,
    backend: str = "auto",
) -> tuple[np.ndarray, float]:
    """Instance-label posterior and log evidence via the selected backend."""
    probs = prior.probs if isinstance(prior, PriorField) else np.asarray(prior)
    name = select_backend(backend, probs.shape[0], cap)
    if name == "chain":
        return chain.chain_posterior_with_evidence(prior, label_set, cap)
    return tree.tree_posterior_with_evidence(prior, label_set, cap)


def posterior(
    prior: Union[PriorField, np.ndarray],
    label_set: Iterable[int],
    cap: int,
    backend: str = "auto",
) -> np.ndarray:
    return posterior_with_evidence(prior, label_set, cap, backend)[0]


def label_set_log_likelihood(
    prior: Union[PriorField, np.ndarray],
    label_set: Iterable[int],
    cap: int,
    backend: str = "auto",
) -> float:
    probs = prior.probs if isinstance(prior, PriorField) else np.asarray(prior)
    name = select_backend(backend, probs.shape[0], cap)
    if name == "chain":
        return chain.chain_label_set_log_likelihood(prior, label_set, cap)
    return tree.tree_label_set_log_likelihood(prior, label_set, cap)
