"""Supervised fine-tuning with CTC, the tri-stage schedule, and the
parameter-freeze regime.

Starting from a pretrained checkpoint, the first freeze_epochs dataset
passes update only the vocabulary projection, after which the recurrent
stack joins in; the conv extractor stays frozen for the whole run. Starting
from scratch there is nothing worth protecting, so everything trains from
epoch 0. Frozen stages let us cache the frozen prefix of the forward pass
per line, which is what makes hundreds of epochs on tens of lines cheap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import seeding
from .autodiff import Tensor
from .checkpoint import Checkpoint, save_checkpoint, shape_diff
from .corpus import Manifest, Vocabulary, load_line, load_transcript, ratio_filter
from .ctc import ctc_nll, min_frames
from .decode_eval import edit_distance, greedy_decode
from .encoder import (
    ContextSeq,
    FeatureSeq,
    context_forward,
    conv_forward,
    feature_steps,
    init_head,
    init_params,
    vocab_logits,
)
from .exceptions import ValidationError
from .optim import AdamState, TriStageSchedule, adam_step, lr_at
from .trainer import MetricsLog, clip_grads, line_grads, merge_grads, run_ordered

log = logging.getLogger(__name__)


@dataclass
class _Line:
    image_pixels: np.ndarray
    source_id: str
    text: str
    label: tuple[int, ...]
    t_steps: int


def _load_lines(manifest: Manifest, cfg, vocab: Vocabulary, enc_cfg, tag: str) -> list[_Line]:
    entries = manifest.split(tag).entries
    if not entries:
        raise ValidationError(f"manifest has no {tag} entries")
    lines = []
    dropped = 0
    for e in entries:
        if e.transcript_path is None:
            raise ValidationError(f"{e.image_path}: {tag} entries need transcripts")
        img = load_line(e.image_path, cfg.height)
        if not ratio_filter(img, cfg.ratio_lo, cfg.ratio_hi):
            dropped += 1
            continue
        text = load_transcript(e.transcript_path)
        label = tuple(vocab.encode(text))
        lines.append(
            _Line(img.pixels, img.source_id, text, label,
                  feature_steps(enc_cfg, img.width_px))
        )
    if dropped:
        log.info("ratio filter dropped %d of %d %s lines", dropped, len(entries), tag)
    if not lines:
        raise ValidationError(f"every {tag} line fell outside the ratio band")
    return lines


def _init_from_checkpoint(pretrained: Checkpoint, enc_cfg, cfg) -> dict[str, Tensor]:
    template = init_params(enc_cfg, cfg.seed)
    expected = {name: t.shape for name, t in template.items()}
    diff = shape_diff(expected, pretrained.params)
    if diff:
        raise ValidationError(f"checkpoint does not match the configured encoder: {diff}")
    return pretrained.tensors()


class _Caches:
    """Frozen-prefix caches, filled lazily, keyed by line index."""

    def __init__(self):
        self.features: dict[int, np.ndarray] = {}
        self.context: dict[int, np.ndarray] = {}

    def feats(self, params, enc_cfg, line: _Line, idx: int) -> np.ndarray:
        if idx not in self.features:
            seq = conv_forward(params, enc_cfg, line.image_pixels, line.source_id)
            self.features[idx] = seq.values.data
        return self.features[idx]

    def ctx(self, params, enc_cfg, line: _Line, idx: int) -> np.ndarray:
        if idx not in self.context:
            feats = FeatureSeq(line.source_id, Tensor(self.feats(params, enc_cfg, line, idx)))
            self.context[idx] = context_forward(params, enc_cfg, feats).values.data
        return self.context[idx]


def _line_logits(params, enc_cfg, line: _Line, idx: int, vocab_size: int,
                 regime: str, caches: _Caches) -> Tensor:
    """Forward pass to logits under the current freeze regime.

    regime 'head': conv and recurrent stack frozen, context cached.
    regime 'recurrent': conv frozen, features cached, recurrent stack live.
    regime 'all': nothing frozen, full forward pass.
    """
    if regime == "head":
        ctx = ContextSeq(line.source_id, Tensor(caches.ctx(params, enc_cfg, line, idx)))
    elif regime == "recurrent":
        feats = FeatureSeq(line.source_id, Tensor(caches.feats(params, enc_cfg, line, idx)))
        ctx = context_forward(params, enc_cfg, feats)
    else:
        feats = conv_forward(params, enc_cfg, line.image_pixels, line.source_id)
        ctx = context_forward(params, enc_cfg, feats)
    return vocab_logits(params, ctx, vocab_size)


def finetune_run(
    manifest: Manifest,
    pretrained: Checkpoint | None,
    vocab: Vocabulary,
    cfg,
    out_dir,
    resume: Checkpoint | None = None,
    stop_after_epoch: int | None = None,
) -> Path:
    """Fine-tune on the labeled split; returns the final checkpoint path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    enc_cfg = cfg.encoder_config()
    lines = _load_lines(manifest, cfg, vocab, enc_cfg, "finetune")

    usable = []
    for i, line in enumerate(lines):
        if line.t_steps < min_frames(line.label):
            log.warning(
                "%s: transcript needs %d frames but the image yields %d; line skipped",
                line.source_id, min_frames(line.label), line.t_steps,
            )
        else:
            usable.append(i)
    if not usable:
        raise ValidationError("no fine-tuning line can fit its transcript; images too narrow")
    n_skipped = len(lines) - len(usable)

    from_pretrained = pretrained is not None
    if resume is not None:
        params = resume.tensors()
        adam = resume.adam
        cursor = dict(resume.cursor)
        from_pretrained = resume.metadata.get("init") == "pretrained"
    else:
        if from_pretrained:
            params = _init_from_checkpoint(pretrained, enc_cfg, cfg)
        else:
            params = init_params(enc_cfg, cfg.seed)
        params.update(init_head(enc_cfg, len(vocab), cfg.seed))
        adam = AdamState(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        cursor = {"epoch": 0, "batch": 0, "update": 0}

    updates_per_epoch = (len(usable) + cfg.batch_size - 1) // cfg.batch_size
    total_updates = updates_per_epoch * cfg.max_epochs
    schedule = TriStageSchedule(
        total_updates, cfg.finetune_lr, cfg.finetune_warmup, cfg.finetune_hold,
        cfg.finetune_final, cfg.freeze_epochs, current_update=cursor["update"],
    )

    head_names = [n for n in params if n.startswith("head.")]
    recurrent_names = [n for n in params if n.startswith("lstm")]

    def regime_at(epoch: int) -> str:
        if not from_pretrained:
            return "all"
        return "head" if epoch < cfg.freeze_epochs else "recurrent"

    def trainable_at(epoch: int) -> dict[str, Tensor]:
        regime = regime_at(epoch)
        if regime == "all":
            return params
        names = list(head_names)
        if regime == "recurrent":
            names += recurrent_names
        return {n: params[n] for n in names}

    caches = _Caches()
    probe = usable[: min(cfg.probe_lines, len(usable))]
    metrics = MetricsLog(out / "finetune_metrics.tsv", ("epoch", "lr", "ctc_loss", "train_cer"))
    final_path = out / "finetune.bin"
    init_kind = "pretrained" if from_pretrained else "scratch"

    def save(path, cur_epoch, cur_batch):
        save_checkpoint(
            path, "finetune", params, adam,
            {"epoch": cur_epoch, "batch": cur_batch, "update": schedule.current_update},
            cfg.snapshot(), list(vocab.symbols), cfg.seed, {"init": init_kind},
        )

    def probe_cer(regime: str) -> float:
        edits = 0
        ref_len = 0
        for i in probe:
            line = lines[i]
            logits = _line_logits(params, enc_cfg, line, i, len(vocab), regime, caches)
            hyp = greedy_decode(logits.data, vocab).symbols
            edits += edit_distance(hyp, line.text)
            ref_len += len(line.text)
        return edits / ref_len

    last_cer = float("nan")
    for epoch in range(cursor["epoch"], cfg.max_epochs):
        regime = regime_at(epoch)
        trainable = trainable_at(epoch)
        order = seeding.derive(cfg.seed, seeding.ORDER, epoch).permutation(len(usable))
        shuffled = [usable[j] for j in order]
        batches = [shuffled[b : b + cfg.batch_size]
                   for b in range(0, len(shuffled), cfg.batch_size)]
        start_batch = cursor["batch"] if epoch == cursor["epoch"] else 0
        epoch_losses: list[float] = []
        for b_idx in range(start_batch, len(batches)):
            batch = batches[b_idx]
            scale = 1.0 / len(batch)

            def make_task(i):
                def run():
                    line = lines[i]
                    logits = _line_logits(params, enc_cfg, line, i, len(vocab), regime, caches)
                    loss = ctc_nll(logits, line.label, vocab.blank_index)
                    grads = line_grads(loss, scale, trainable)
                    return grads, loss.item()

                return run

            tasks = [make_task(i) for i in batch]
            grads: dict[str, np.ndarray] = {}
            for part, loss_value in run_ordered(tasks, cfg.workers):
                merge_grads(grads, part)
                epoch_losses.append(loss_value)
            clip_grads(grads, cfg.grad_clip)
            lr = lr_at(schedule, schedule.current_update)
            adam_step(params, grads, adam, lr)
            schedule.current_update += 1
            if schedule.current_update % cfg.checkpoint_every == 0:
                save(out / f"finetune_u{schedule.current_update:08d}.bin", epoch, b_idx + 1)
        if epoch % cfg.probe_every == 0:
            last_cer = probe_cer(regime)
        metrics.append(
            epoch=epoch,
            lr=lr_at(schedule, schedule.current_update),
            ctc_loss=float(np.mean(epoch_losses)) if epoch_losses else float("nan"),
            train_cer=last_cer,
        )
        cursor = {"epoch": epoch + 1, "batch": 0, "update": schedule.current_update}
        if stop_after_epoch is not None and epoch >= stop_after_epoch:
            break
    save(final_path, cursor["epoch"], 0)
    if n_skipped:
        log.info("%d line(s) were skipped as infeasible for CTC", n_skipped)
    return final_path
