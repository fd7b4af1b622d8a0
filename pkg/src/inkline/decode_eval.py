"""Greedy CTC decoding and character-error-rate reporting."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .corpus import Manifest, Vocabulary, load_line, load_transcript
from .encoder import encode, vocab_logits
from .exceptions import ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Decoding:
    symbols: str
    frame_argmax: tuple[int, ...]


@dataclass(frozen=True)
class LineResult:
    source_id: str
    edit_distance: int
    ref_len: int
    cer: float


@dataclass(frozen=True)
class CerReport:
    per_line: tuple[LineResult, ...]

    @property
    def total_edits(self) -> int:
        return sum(r.edit_distance for r in self.per_line)

    @property
    def total_ref_len(self) -> int:
        return sum(r.ref_len for r in self.per_line)

    @property
    def aggregate(self) -> float:
        """Micro-average: total edits over total reference length."""
        return self.total_edits / self.total_ref_len

    def summary(self) -> str:
        return (
            f"aggregate CER {self.aggregate * 100:.1f}% "
            f"({self.total_edits} edits / {self.total_ref_len} reference characters, "
            f"{len(self.per_line)} lines)"
        )


def greedy_decode(logits, vocab: Vocabulary) -> Decoding:
    """Per-frame argmax, collapse repeats, delete blanks.

    Ties go to the lowest vocabulary index. No language model, no beam.
    """
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    if data.ndim != 2 or data.shape[1] != len(vocab):
        raise ValidationError(
            f"logits of shape {data.shape} do not match a vocabulary of {len(vocab)} symbols"
        )
    if not np.isfinite(data).all():
        raise ValidationError("logits contain non-finite values")
    frames = data.argmax(axis=1)
    kept = []
    prev = None
    for idx in frames:
        if idx != prev:
            kept.append(int(idx))
        prev = idx
    blank = vocab.blank_index
    return Decoding(
        symbols=vocab.decode(i for i in kept if i != blank),
        frame_argmax=tuple(int(i) for i in frames),
    )


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance, unit costs, codepoint granularity."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def cer(hypothesis: str, reference: str) -> float:
    if len(reference) < 1:
        raise ValidationError("CER is undefined for an empty reference")
    return edit_distance(hypothesis, reference) / len(reference)


def evaluate(
    manifest: Manifest,
    params: dict[str, Tensor],
    enc_cfg,
    vocab: Vocabulary,
    split: str = "test",
) -> CerReport:
    """Transcribe every line of a labeled split and score it.

    Lines are processed in manifest order; the report is deterministic for a
    fixed checkpoint and manifest.
    """
    entries = manifest.split(split).entries
    if not entries:
        raise ValidationError(f"manifest has no {split} entries")
    head = params.get("head.w")
    if head is None:
        raise ValidationError("checkpoint has no vocabulary projection; fine-tune first")
    if head.shape[0] != len(vocab):
        raise ValidationError(
            f"checkpoint vocabulary projection has {head.shape[0]} symbols "
            f"but the vocabulary has {len(vocab)}"
        )
    results = []
    for entry in entries:
        if entry.transcript_path is None:
            raise ValidationError(f"{entry.image_path}: evaluation entries need transcripts")
        image = load_line(entry.image_path, enc_cfg.height)
        reference = load_transcript(entry.transcript_path)
        ctx = encode(params, enc_cfg, image.pixels, image.source_id)
        logits = vocab_logits(params, ctx, len(vocab))
        hyp = greedy_decode(logits, vocab).symbols
        dist = edit_distance(hyp, reference)
        results.append(
            LineResult(image.source_id, dist, len(reference), dist / len(reference))
        )
    return CerReport(tuple(results))


def write_report(report: CerReport, path) -> None:
    rows = ["source_id\tedit_distance\tref_len\tcer"]
    for r in report.per_line:
        rows.append(f"{r.source_id}\t{r.edit_distance}\t{r.ref_len}\t{r.cer!r}")
    rows.append(f"AGGREGATE\t{report.total_edits}\t{report.total_ref_len}\t{report.aggregate!r}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")
