"""CTC negative log-likelihood over the blank-augmented label lattice.

Forward algorithm in log space; the gradient comes from the alpha-beta
posterior (softmax of logits minus state-occupancy marginals), computed
lazily in the node's backward function.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .exceptions import ValidationError

log = logging.getLogger(__name__)

NEG_INF = -np.inf


@dataclass(frozen=True)
class CtcInstance:
    logits: Tensor  # (T, |V|)
    label: tuple[int, ...]


def min_frames(label: tuple[int, ...]) -> int:
    """Shortest frame count that can emit the label (repeats need a blank)."""
    repeats = sum(1 for a, b in zip(label, label[1:]) if a == b)
    return len(label) + repeats


def ctc_nll(logits: Tensor, label, blank: int = 0) -> Tensor:
    """Scalar graph node: -log p(label | logits).

    Infeasible labels (too long for the frame count) yield +inf with a
    warning and no gradient path, so callers can skip them cleanly.
    """
    label = tuple(int(x) for x in label)
    t_frames, n_vocab = logits.shape
    if len(label) < 1:
        raise ValidationError("CTC label must be non-empty")
    if any(not 0 <= x < n_vocab for x in label):
        raise ValidationError(f"label index outside vocabulary of size {n_vocab}")
    if blank in label:
        raise ValidationError("label must not contain the blank index")
    if t_frames < min_frames(label):
        log.warning(
            "label of length %d needs at least %d frames but logits have %d; "
            "loss is +inf", len(label), min_frames(label), t_frames,
        )
        return Tensor(np.asarray(np.inf, dtype=logits.dtype))

    # blank-augmented state sequence: blank, l1, blank, l2, ..., blank
    n_states = 2 * len(label) + 1
    symbols = np.full(n_states, blank, dtype=np.intp)
    symbols[1::2] = label
    # a state may be entered from two back iff it is a label state whose
    # predecessor label state holds a different symbol
    can_skip = np.zeros(n_states, dtype=bool)
    can_skip[3::2] = symbols[3::2] != symbols[1:-2:2]

    x = logits.data
    lse = np.logaddexp.reduce(x, axis=1, keepdims=True)
    logp = x - lse  # (T, V)
    emit = logp[:, symbols]  # (T, S)

    alpha = np.full((t_frames, n_states), NEG_INF, dtype=x.dtype)
    alpha[0, 0] = emit[0, 0]
    if n_states > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, t_frames):
        prev = alpha[t - 1]
        stay = prev
        step = np.concatenate(([NEG_INF], prev[:-1]))
        skip = np.concatenate(([NEG_INF, NEG_INF], prev[:-2]))
        skip = np.where(can_skip, skip, NEG_INF)
        alpha[t] = emit[t] + np.logaddexp(np.logaddexp(stay, step), skip)

    tail = alpha[-1, -1]
    if n_states > 1:
        tail = np.logaddexp(tail, alpha[-1, -2])
    loss_value = -tail

    def vjp(g):
        beta = np.full((t_frames, n_states), NEG_INF, dtype=x.dtype)
        beta[-1, -1] = 0.0
        if n_states > 1:
            beta[-1, -2] = 0.0
        for t in range(t_frames - 2, -1, -1):
            nxt = beta[t + 1] + emit[t + 1]
            stay = nxt
            step = np.concatenate((nxt[1:], [NEG_INF]))
            skip = np.concatenate((nxt[2:], [NEG_INF, NEG_INF]))
            skip_ok = np.concatenate((can_skip[2:], [False, False]))
            skip = np.where(skip_ok, skip, NEG_INF)
            beta[t] = np.logaddexp(np.logaddexp(stay, step), skip)

        # state occupancy -> per-symbol marginal gamma
        occupancy = np.exp(alpha + beta + loss_value)
        gamma = np.zeros_like(x)
        np.add.at(gamma, (slice(None), symbols), occupancy)
        soft = np.exp(logp)
        return ((soft - gamma) * g,)

    return Tensor(np.asarray(loss_value), (logits,), vjp)


def ctc_loss(instance: CtcInstance, blank: int = 0) -> float:
    return float(ctc_nll(instance.logits, instance.label, blank).item())
