"""Self-supervised contrastive pre-training.

A masked position must pick its own conv encoding out of a lineup of
distractor encodings drawn from the same line. Scores are cosine
similarities between projected context and projected conv features; the loss
is softmax cross-entropy with the true target always included.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import seeding
from .autodiff import Tensor
from .checkpoint import Checkpoint, save_checkpoint
from .corpus import LineImage, Manifest, load_line, ratio_filter
from .encoder import (
    ContextSeq,
    EncoderConfig,
    FeatureSeq,
    context_forward,
    conv_forward,
    feature_steps,
    init_params,
)
from .exceptions import ValidationError
from .layers import cosine_pairs
from .masking import MaskPlan, apply_mask, sample_plan
from .optim import AdamState, PretrainSchedule, adam_step, lr_at
from .trainer import MetricsLog, clip_grads, line_grads, merge_grads, run_ordered

log = logging.getLogger(__name__)


@dataclass
class ContrastiveBatchResult:
    loss: Tensor  # scalar graph node, mean over masked positions
    per_position_losses: list[float]
    n_masked: int
    n_foils_used: int
    accuracy: float  # fraction of positions where the true target scored highest


def score(params: dict[str, Tensor], c: np.ndarray, h: np.ndarray) -> float:
    """Cosine similarity of one context/target pair in the projected space.

    Zero-norm projections score 0 (logged by the cosine layer).
    """
    u = params["proj_ctx.w"].data @ np.asarray(c)
    v = params["proj_feat.w"].data @ np.asarray(h)
    return float(cosine_pairs(Tensor(u[None]), Tensor(v[None])).data[0])


def contrastive_loss(
    context_masked: ContextSeq,
    targets: FeatureSeq,
    plan: MaskPlan,
    params: dict[str, Tensor],
    rng: np.random.Generator,
    n_foils: int = 100,
    temperature: float = 1.0,
) -> ContrastiveBatchResult:
    """Mean contrastive loss over the masked positions of one line.

    For each masked step t the candidate set is the true encoding h_t plus
    min(n_foils, T-1) distinct other steps of the same line. Gradients flow
    into the targets as well as the context; nothing is detached.
    """
    if context_masked.source_id != targets.source_id:
        raise ValidationError(
            f"context from {context_masked.source_id!r} but targets from "
            f"{targets.source_id!r}; candidates must come from the same line"
        )
    t_steps = targets.values.shape[0]
    if context_masked.values.shape[0] != t_steps:
        raise ValidationError("context and target sequences have different lengths")
    if len(plan) == 0:
        raise ValidationError("empty mask plan; skip this line instead")

    masked = np.asarray(plan.masked_steps, dtype=np.intp)
    n_masked = masked.size
    k = min(n_foils, t_steps - 1)
    if k == 0:
        log.warning(
            "line %r has a single time step; no foils available, loss is 0",
            targets.source_id,
        )

    # candidate index matrix, true target in column 0
    cand = np.empty((n_masked, k + 1), dtype=np.intp)
    cand[:, 0] = masked
    for row, t in enumerate(masked):
        pool = rng.permutation(t_steps - 1)[:k]
        cand[row, 1:] = pool + (pool >= t)

    proj_c = ad.matmul(context_masked.values, ad.transpose(params["proj_ctx.w"]))
    proj_h = ad.matmul(targets.values, ad.transpose(params["proj_feat.w"]))
    u = ad.take_rows(proj_c, np.repeat(masked, k + 1))
    v = ad.take_rows(proj_h, cand.ravel())
    scores = ad.reshape(cosine_pairs(u, v), (n_masked, k + 1))
    if temperature != 1.0:
        scores = ad.mul(scores, 1.0 / temperature)
    losses = ad.sub(ad.logsumexp(scores, axis=1), scores[:, 0])
    loss = ad.mean(losses)
    accuracy = float((scores.data.argmax(axis=1) == 0).mean())
    return ContrastiveBatchResult(
        loss=loss,
        per_position_losses=[float(x) for x in losses.data],
        n_masked=int(n_masked),
        n_foils_used=int(k),
        accuracy=accuracy,
    )


def load_split_lines(manifest: Manifest, cfg, tag: str) -> list[LineImage]:
    """Load, scale, binarize and ratio-filter the lines of one split."""
    entries = manifest.split(tag).entries
    if not entries:
        raise ValidationError(f"manifest has no {tag} entries")
    lines = []
    dropped = 0
    for e in entries:
        img = load_line(e.image_path, cfg.height)
        if ratio_filter(img, cfg.ratio_lo, cfg.ratio_hi):
            lines.append(img)
        else:
            dropped += 1
    if dropped:
        log.info("ratio filter dropped %d of %d %s lines", dropped, len(entries), tag)
    if not lines:
        raise ValidationError(
            f"every {tag} line fell outside the width/height ratio band "
            f"[{cfg.ratio_lo}, {cfg.ratio_hi}]"
        )
    return lines


def _line_task(params, enc_cfg, cfg, line: LineImage, epoch: int, line_idx: int, scale: float, trainable):
    def run():
        feats = conv_forward(params, enc_cfg, line.pixels, line.source_id)
        plan = sample_plan(
            feats.values.shape[0],
            cfg.mask_coverage,
            cfg.mask_len,
            cfg.mask_gap,
            seeding.derive(cfg.seed, seeding.MASK, epoch, line_idx),
        )
        masked = apply_mask(feats, plan, params["mask.embed"])
        ctx = context_forward(params, enc_cfg, masked)
        result = contrastive_loss(
            ctx,
            feats,
            plan,
            params,
            seeding.derive(cfg.seed, seeding.FOILS, epoch, line_idx),
            n_foils=cfg.n_foils,
            temperature=cfg.temperature,
        )
        grads = line_grads(result.loss, scale, trainable)
        return grads, result

    return run


def run_pretrain(
    manifest: Manifest,
    cfg,
    out_dir,
    resume: Checkpoint | None = None,
    stop_after_epoch: int | None = None,
) -> Path:
    """Run the contrastive pre-training loop; returns the final checkpoint path.

    All randomness is derived from (seed, stream, epoch, line index), so a
    resumed run replays the exact remaining schedule of the uninterrupted one.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    enc_cfg = cfg.encoder_config()
    lines = load_split_lines(manifest, cfg, "pretrain")

    usable = [i for i, ln in enumerate(lines)
              if feature_steps(enc_cfg, ln.width_px) >= cfg.mask_len]
    n_short = len(lines) - len(usable)
    if not usable:
        raise ValidationError(
            f"all {len(lines)} pretraining lines produce fewer than mask_len="
            f"{cfg.mask_len} time steps; provide wider images or lower mask_len"
        )

    updates_per_epoch = (len(usable) + cfg.batch_size - 1) // cfg.batch_size
    total_updates = updates_per_epoch * cfg.pretrain_epochs

    if resume is not None:
        params = resume.tensors()
        adam = resume.adam
        cursor = dict(resume.cursor)
    else:
        params = init_params(enc_cfg, cfg.seed)
        adam = AdamState(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        cursor = {"epoch": 0, "batch": 0, "update": 0}

    schedule = PretrainSchedule(
        total_updates, cfg.pretrain_lr, cfg.pretrain_warmup,
        current_update=cursor["update"],
    )
    trainable = params
    metrics = MetricsLog(
        out / "pretrain_metrics.tsv",
        ("update", "lr", "loss", "contrastive_accuracy", "skipped_lines"),
    )
    final_path = out / "pretrain.bin"

    def save(path, cur_epoch, cur_batch):
        save_checkpoint(
            path, "pretrain", params, adam,
            {"epoch": cur_epoch, "batch": cur_batch, "update": schedule.current_update},
            cfg.snapshot(), None, cfg.seed, {"init": "scratch"},
        )

    for epoch in range(cursor["epoch"], cfg.pretrain_epochs):
        order = seeding.derive(cfg.seed, seeding.ORDER, epoch).permutation(len(usable))
        shuffled = [usable[j] for j in order]
        batches = [shuffled[b : b + cfg.batch_size]
                   for b in range(0, len(shuffled), cfg.batch_size)]
        start_batch = cursor["batch"] if epoch == cursor["epoch"] else 0
        epoch_losses: list[float] = []
        correct = 0.0
        positions = 0
        for b_idx in range(start_batch, len(batches)):
            batch = batches[b_idx]
            scale = 1.0 / len(batch)
            tasks = [
                _line_task(params, enc_cfg, cfg, lines[i], epoch, i, scale, trainable)
                for i in batch
            ]
            grads: dict[str, np.ndarray] = {}
            for part, result in run_ordered(tasks, cfg.workers):
                merge_grads(grads, part)
                epoch_losses.append(result.loss.item())
                correct += result.accuracy * result.n_masked
                positions += result.n_masked
            clip_grads(grads, cfg.grad_clip)
            lr = lr_at(schedule, schedule.current_update)
            adam_step(params, grads, adam, lr)
            schedule.current_update += 1
            if schedule.current_update % cfg.checkpoint_every == 0:
                save(out / f"pretrain_u{schedule.current_update:08d}.bin", epoch, b_idx + 1)
        metrics.append(
            update=schedule.current_update,
            lr=lr_at(schedule, schedule.current_update),
            loss=float(np.mean(epoch_losses)) if epoch_losses else float("nan"),
            contrastive_accuracy=correct / positions if positions else float("nan"),
            skipped_lines=n_short,
        )
        cursor = {"epoch": epoch + 1, "batch": 0, "update": schedule.current_update}
        if stop_after_epoch is not None and epoch >= stop_after_epoch:
            break
    save(final_path, cursor["epoch"], 0)
    return final_path
