"""File formats: datasets, models, truth sidecars, predictions, traces,
and run manifests.

Everything is JSON or JSON Lines.  Floats serialize through Python's
shortest round-trip repr, so saving and reloading is bit-exact and two runs
with the same inputs produce byte-identical files.

Dataset record: {"id", "F", "T", "signal" (row-major F x T), "labels",
"cap" (optional)}.  Model file: {"C", "F", "Tw", "w" (one flattened
channels*window vector per class 0..C), "b"}.  Truth sidecar record:
{"id", "y" (per-sample instance labels)}.  Prediction record: {"id",
"instance_labels", "union", "map", "scores"}.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .types import DatasetError, ModelParams, Signal, WeakExample

PathLike = Union[str, Path]


def _dump_json(path: PathLike, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _load_json(path: PathLike, what: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{what} file {path}: invalid JSON ({exc})") from exc


def _iter_jsonl(path: PathLike, what: str):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(
                    f"{what} file {path}, line {lineno}: invalid JSON ({exc})"
                ) from exc


def _dump_jsonl(path: PathLike, rows: Iterable[Mapping]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(", ", ": ")))
            fh.write("\n")


def save_json(path: PathLike, obj) -> None:
    """Pretty-printed JSON with a trailing newline (byte-stable)."""
    _dump_json(path, obj)


def load_json(path: PathLike, what: str = "JSON"):
    return _load_json(path, what)


def save_dataset(path: PathLike, examples: Iterable[WeakExample]) -> None:
    """Write examples as JSON Lines; the cap field is emitted only if set."""

    def rows():
        for ex in examples:
            sig = ex.signal
            row = {
                "id": sig.ident,
                "F": sig.num_channels,
                "T": sig.length,
                "signal": sig.samples.tolist(),
                "labels": sorted(ex.label_set),
            }
            if ex.cap is not None:
                row["cap"] = ex.cap
            yield row

    _dump_jsonl(path, rows())


def load_dataset(
    path: PathLike, default_cap: Optional[int] = None
) -> list[WeakExample]:
    """Read a JSON Lines dataset; records without a cap receive ``default_cap``.

    Validation failures (shape mismatches, caps below the label-set size)
    raise :class:`DatasetError` naming the offending record.
    """
    examples = []
    for lineno, row in _iter_jsonl(path, "dataset"):
        try:
            ident = str(row["id"])
            channels, length = int(row["F"]), int(row["T"])
            samples = np.asarray(row["signal"], dtype=np.float64)
            labels = frozenset(int(c) for c in row["labels"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(
                f"dataset file {path}, line {lineno}: malformed record ({exc})"
            ) from exc
        if samples.ndim == 1:
            samples = samples[np.newaxis, :]
        if samples.shape != (channels, length):
            raise DatasetError(
                f"signal {ident!r}: declared shape ({channels}, {length}) does "
                f"not match the stored samples {samples.shape}"
            )
        cap = row.get("cap", default_cap)
        examples.append(
            WeakExample(
                signal=Signal(samples, ident=ident),
                label_set=labels,
                cap=None if cap is None else int(cap),
            )
        )
    return examples


def save_model(path: PathLike, params: ModelParams) -> None:
    obj = {
        "C": params.num_classes,
        "F": params.num_channels,
        "Tw": params.window_len,
        "w": [word.ravel().tolist() for word in params.words],
        "b": params.biases.tolist(),
    }
    _dump_json(path, obj)


def load_model(path: PathLike) -> ModelParams:
    obj = _load_json(path, "model")
    try:
        C, F, Tw = int(obj["C"]), int(obj["F"]), int(obj["Tw"])
        words = np.asarray(obj["w"], dtype=np.float64)
        biases = np.asarray(obj["b"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"model file {path}: malformed ({exc})") from exc
    if words.shape != (C + 1, F * Tw):
        raise DatasetError(
            f"model file {path}: expected {C + 1} words of length {F * Tw}, "
            f"got shape {words.shape}"
        )
    if biases.shape != (C + 1,):
        raise DatasetError(f"model file {path}: expected {C + 1} biases")
    return ModelParams(words.reshape(C + 1, F, Tw), biases)


def save_truth(path: PathLike, items: Iterable[tuple[str, Sequence[int]]]) -> None:
    """Write per-signal instance labels: one {"id", "y"} record per signal."""
    _dump_jsonl(
        path,
        ({"id": ident, "y": [int(v) for v in y]} for ident, y in items),
    )


def load_truth(path: PathLike) -> dict[str, np.ndarray]:
    truth = {}
    for lineno, row in _iter_jsonl(path, "truth"):
        try:
            truth[str(row["id"])] = np.asarray(row["y"], dtype=np.int64)
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(
                f"truth file {path}, line {lineno}: malformed record ({exc})"
            ) from exc
    return truth


def save_templates(path: PathLike, templates: Sequence[np.ndarray]) -> None:
    _dump_json(path, {"templates": [np.asarray(t).tolist() for t in templates]})


def load_templates(path: PathLike) -> list[np.ndarray]:
    obj = _load_json(path, "templates")
    return [np.asarray(t) for t in obj["templates"]]


def save_predictions(path: PathLike, records: Iterable[Mapping]) -> None:
    _dump_jsonl(path, records)


def load_predictions(path: PathLike) -> list[dict]:
    return [row for _, row in _iter_jsonl(path, "predictions")]


def save_trace(path: PathLike, iteration: int, loglik_trace: Sequence[float]) -> None:
    _dump_json(
        path, {"iteration": int(iteration), "loglik_trace": list(loglik_trace)}
    )


def load_trace(path: PathLike) -> tuple[int, list[float]]:
    obj = _load_json(path, "trace")
    return int(obj["iteration"]), [float(v) for v in obj["loglik_trace"]]


def write_manifest(
    path: PathLike,
    subcommand: str,
    config: Mapping,
    seed: Optional[int],
    inputs: Sequence[str],
    outputs: Sequence[str],
    wall_time_s: float,
) -> None:
    """Record what a run did next to its outputs.

    ``wall_time_s`` legitimately differs between otherwise identical runs;
    compare manifests modulo that field.
    """
    from . import __version__

    _dump_json(
        path,
        {
            "subcommand": subcommand,
            "config": dict(sorted(config.items())),
            "seed": seed,
            "inputs": list(inputs),
            "outputs": list(outputs),
            "version": __version__,
            "wall_time_s": wall_time_s,
        },
    )


def load_manifest(path: PathLike) -> dict:
    return _load_json(path, "manifest")
