"""Adam and the two learning-rate schedules.

Both schedules are continuous piecewise-linear functions of the update
counter. Breakpoint values are part of the training contract, so the
arithmetic here is written to hit them exactly, not just approximately.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .exceptions import NumericalError, ValidationError


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-6
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> None:
    """One bias-corrected Adam update, in place.

    Parameters without an entry in ``grads`` are left untouched (their
    moments are zero by construction, so skipping them equals a zero-grad
    update). All gradients are checked before anything mutates, so a
    non-finite gradient aborts the whole step cleanly.
    """
    if lr < 0:
        raise ValidationError(f"learning rate must be nonnegative, got {lr}")
    for name, g in grads.items():
        if name not in params:
            raise ValidationError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ValidationError(
                f"gradient shape {g.shape} does not match parameter {name!r} "
                f"shape {params[name].shape}"
            )
        if not np.isfinite(g).all():
            raise NumericalError(f"non-finite gradient for parameter {name!r}")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, g in grads.items():
        p = params[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class PretrainSchedule:
    """Linear warmup to the peak over the first warmup fraction, then linear
    decay to zero at the final update."""

    total_updates: int
    peak_lr: float = 5e-4
    warmup_fraction: float = 0.08
    current_update: int = 0


@dataclass
class TriStageSchedule:
    """Warmup, hold at peak, then linear decay to final_factor * peak."""

    total_updates: int
    peak_lr: float = 5e-4
    warmup_fraction: float = 0.10
    hold_fraction: float = 0.40
    final_factor: float = 0.05
    freeze_epochs: int = 200
    current_update: int = 0


def lr_at(schedule, update: int) -> float:
    """Scheduled learning rate at an update counter.

    Breakpoints are rounded to whole updates so that the contract values
    (peak at warmup end, final factor at the last update) come out exact in
    floating point, via convex-combination arithmetic on each segment.
    """
    total = schedule.total_updates
    if not 0 <= update <= total:
        raise ValidationError(f"update {update} outside schedule range [0, {total}]")
    peak = schedule.peak_lr
    warm = round(schedule.warmup_fraction * total)
    if isinstance(schedule, PretrainSchedule):
        if update <= warm:
            return peak * (update / warm) if warm > 0 else peak
        return peak * ((total - update) / (total - warm))
    hold_end = round((schedule.warmup_fraction + schedule.hold_fraction) * total)
    if update <= warm:
        return peak * (update / warm) if warm > 0 else peak
    if update <= hold_end:
        return peak
    final = schedule.final_factor * peak
    frac = (update - hold_end) / (total - hold_end)
    return final * frac + peak * (1.0 - frac)
