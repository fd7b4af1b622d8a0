"""Span masking over feature-sequence time steps.

Spans have fixed length, never overlap, never touch the sequence ends
illegally, and keep a minimum gap between each other. Sampling is greedy:
walk a uniform random permutation of start positions, accept what fits,
stop once target coverage is reached.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import FeatureSeq
from .exceptions import ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MaskPlan:
    spans: tuple[tuple[int, int], ...]
    masked_steps: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        steps = sorted(s for start, length in self.spans for s in range(start, start + length))
        object.__setattr__(self, "masked_steps", tuple(steps))

    def __len__(self) -> int:
        return len(self.masked_steps)


def sample_plan(
    t_steps: int, p: float, length: int = 12, gap: int = 8, rng: np.random.Generator | None = None
) -> MaskPlan:
    """Sample a mask plan covering about ``p`` of ``t_steps``.

    Candidate starts are visited in uniform random order; a candidate is
    accepted iff its span fits inside the sequence and sits at least ``gap``
    steps away from every accepted span. Sampling stops as soon as coverage
    reaches p * t_steps, so overshoot is bounded by one span. Sequences
    shorter than ``length`` get an empty plan.
    """
    if t_steps < 1:
        raise ValidationError(f"sequence length must be positive, got {t_steps}")
    if not 0.0 < p <= 1.0:
        raise ValidationError(f"coverage fraction must be in (0, 1], got {p}")
    if length < 1:
        raise ValidationError(f"span length must be positive, got {length}")
    if gap < 0:
        raise ValidationError(f"span gap must be non-negative, got {gap}")
    if rng is None:
        rng = np.random.default_rng()
    if t_steps < length:
        log.debug("sequence of %d steps is shorter than span length %d; empty plan", t_steps, length)
        return MaskPlan(())

    target = p * t_steps
    accepted: list[int] = []
    covered = 0
    for start in rng.permutation(t_steps - length + 1):
        if covered >= target:
            break
        # gap holds iff start distance to every accepted span is >= length + gap
        if all(abs(int(start) - a) >= length + gap for a in accepted):
            accepted.append(int(start))
            covered += length
    # If the permutation ran out first, the jammed configuration stands.
    return MaskPlan(tuple((a, length) for a in sorted(accepted)))


def apply_mask(features: FeatureSeq, plan: MaskPlan, mask_embedding: Tensor) -> FeatureSeq:
    """Replace masked rows with the (learned) mask embedding.

    The caller keeps the original features: they are the contrastive targets.
    """
    t_steps = features.values.shape[0]
    if plan.spans and plan.masked_steps[-1] >= t_steps:
        raise ValidationError(
            f"mask plan reaches step {plan.masked_steps[-1]} but sequence has {t_steps}"
        )
    if not plan.spans:
        return FeatureSeq(features.source_id, features.values)
    index = np.asarray(plan.masked_steps, dtype=np.intp)
    masked = ad.row_substitute(features.values, index, mask_embedding)
    return FeatureSeq(features.source_id, masked)
