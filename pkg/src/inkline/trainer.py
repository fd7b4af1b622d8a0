"""Machinery shared by the two training loops.

Per-line losses are backpropagated independently and merged in manifest
order, so results do not depend on how many workers computed them; worker
threads only ever parallelize the compute, never the reduction.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .autodiff import Tensor


def line_grads(loss: Tensor, scale: float, trainable: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Gradients of scale * loss for the named trainable parameters."""
    raw = loss.backward_collect(seed=scale)
    return {name: raw[id(t)] for name, t in trainable.items() if id(t) in raw}


def merge_grads(total: dict[str, np.ndarray], part: dict[str, np.ndarray]) -> None:
    for name, g in part.items():
        if name in total:
            total[name] += g
        else:
            total[name] = g.copy()


def clip_grads(grads: dict[str, np.ndarray], max_norm: float) -> None:
    """Global-norm clip in place; a max_norm of 0 disables clipping."""
    if max_norm <= 0:
        return
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if total > max_norm:
        factor = max_norm / total
        for g in grads.values():
            g *= factor


def run_ordered(tasks, workers: int) -> list:
    """Evaluate zero-argument callables, results in task order."""
    if workers <= 1 or len(tasks) <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda task: task(), tasks))


class MetricsLog:
    """Append-only TSV with a fixed column set."""

    def __init__(self, path, columns: tuple[str, ...]):
        self.path = Path(path)
        self.columns = columns

    def append(self, **row) -> None:
        cells = [self._format(row[c]) for c in self.columns]
        new = not self.path.exists() or self.path.stat().st_size == 0
        with open(self.path, "a", encoding="utf-8") as out:
            if new:
                out.write("\t".join(self.columns) + "\n")
            out.write("\t".join(cells) + "\n")

    @staticmethod
    def _format(value) -> str:
        if isinstance(value, float):
            return repr(value)
        return str(value)
