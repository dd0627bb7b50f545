"""Runtime measurement of the posterior computation over a parameter grid.

Each grid cell draws a random prior field (excluded from the timing), runs
one discarded warm-up posterior, then reports the median over the timed
repetitions.  Cells run strictly sequentially so measurements do not
disturb each other.  A least-squares log-log fit extracts empirical
scaling exponents from the resulting table.
"""

from __future__ import annotations

import dataclasses
import statistics
import time
from typing import Iterable, Optional, Sequence

import numpy as np

from .backends import BACKENDS
from .chain import chain_posterior_with_evidence
from .tree import tree_posterior_with_evidence

CSV_HEADER = "backend,instants,set_size,ratio,median_seconds"


@dataclasses.dataclass(frozen=True)
class BenchGrid:
    """Sweep axes: signal lengths, label-set sizes, cap/length ratios."""

    instants: tuple[int, ...] = (50, 100, 200, 500, 1000)
    set_sizes: tuple[int, ...] = (2,)
    ratios: tuple[float, ...] = (0.2,)
    repetitions: int = 3
    backends: tuple[str, ...] = BACKENDS

    def __post_init__(self) -> None:
        if self.repetitions < 3:
            raise ValueError("repetitions must be at least 3")
        bad = [b for b in self.backends if b not in BACKENDS]
        if bad:
            raise ValueError(f"unknown backends {bad}")

    def cells(self) -> list[tuple[str, int, int, float]]:
        return [
            (backend, instants, size, ratio)
            for backend in self.backends
            for instants in self.instants
            for size in self.set_sizes
            for ratio in self.ratios
        ]


QUICK_GRID = BenchGrid()
FULL_GRID = BenchGrid(
    instants=(50, 100, 200, 500, 1000, 2000, 5000, 10000),
    ratios=(0.1, 0.2, 0.5, 1.0),
)


def _cell_prior(instants: int, set_size: int, seed: int, index: int) -> np.ndarray:
    """Strictly positive random prior rows for one cell, seeded per cell."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, index)))
    probs = rng.uniform(0.0, 1.0, size=(instants, set_size + 1)) + 1e-6
    probs /= probs.sum(axis=1, keepdims=True)
    return probs


def bench_posterior(grid: BenchGrid, seed: int = 0) -> list[dict]:
    """Median posterior runtime per grid cell.

    Returns one dict per cell: backend, instants, set_size, ratio,
    median_seconds.  The label set is {1..set_size} and the cap is
    max(set_size, round(ratio * instants)).
    """
    fns = {
        "chain": chain_posterior_with_evidence,
        "tree": tree_posterior_with_evidence,
    }
    rows = []
    for index, (backend, instants, size, ratio) in enumerate(grid.cells()):
        probs = _cell_prior(instants, size, seed, index)
        label_set = list(range(1, size + 1))
        cap = max(size, round(ratio * instants))
        fn = fns[backend]
        fn(probs, label_set, cap)  # warm-up, discarded
        times = []
        for _ in range(grid.repetitions):
            start = time.perf_counter()
            fn(probs, label_set, cap)
            times.append(time.perf_counter() - start)
        rows.append(
            {
                "backend": backend,
                "instants": instants,
                "set_size": size,
                "ratio": ratio,
                "median_seconds": statistics.median(times),
            }
        )
    return rows


def write_bench_csv(path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(
                f"{row['backend']},{row['instants']},{row['set_size']},"
                f"{row['ratio']},{row['median_seconds']}\n"
            )


def read_bench_csv(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected benchmark CSV header: {header!r}")
        for line in fh:
            backend, instants, size, ratio, seconds = line.strip().split(",")
            rows.append(
                {
                    "backend": backend,
                    "instants": int(instants),
                    "set_size": int(size),
                    "ratio": float(ratio),
                    "median_seconds": float(seconds),
                }
            )
    return rows


def panel_data(rows: Sequence[dict]) -> dict:
    """Reshape benchmark rows into per-axis series for plotting tools.

    One panel per swept axis (instants, ratio, set_size), each holding one
    (x, y) series per backend with the other axes fixed to their smallest
    benchmarked values.
    """
    rows = list(rows)
    panels = []
    axes = ("instants", "ratio", "set_size")
    for axis in axes:
        values = sorted({row[axis] for row in rows})
        if len(values) < 2:
            continue
        others = [a for a in axes if a != axis]
        fixed = {a: min(row[a] for row in rows) for a in others}
        series = []
        for backend in sorted({row["backend"] for row in rows}):
            picked = sorted(
                (
                    row
                    for row in rows
                    if row["backend"] == backend
                    and all(row[a] == fixed[a] for a in others)
                ),
                key=lambda row: row[axis],
            )
            if picked:
                series.append(
                    {
                        "backend": backend,
                        "x": [row[axis] for row in picked],
                        "y": [row["median_seconds"] for row in picked],
                    }
                )
        if series:
            panels.append({"axis": axis, "fixed": fixed, "series": series})
    return {"panels": panels}


def fit_scaling(
    rows: Sequence[dict],
    backend: str,
    axis: str = "instants",
    where: Optional[dict] = None,
) -> tuple[float, float]:
    """Log-log least-squares slope and R^2 of runtime against one axis.

    ``where`` fixes the remaining axes, e.g. {"ratio": 0.2, "set_size": 2}.
    Requires at least 4 distinct points on the axis.
    """
    where = dict(where or {})
    where["backend"] = backend
    picked = [
        row
        for row in rows
        if all(row[key] == value for key, value in where.items())
    ]
    xs = np.array([row[axis] for row in picked], dtype=np.float64)
    ys = np.array([row["median_seconds"] for row in picked], dtype=np.float64)
    if len(set(xs.tolist())) < 4:
        raise ValueError(
            f"need at least 4 distinct {axis} values for {backend}, "
            f"have {sorted(set(xs.tolist()))}"
        )
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    fitted = slope * lx + intercept
    ss_res = float(((ly - fitted) ** 2).sum())
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r_squared)
