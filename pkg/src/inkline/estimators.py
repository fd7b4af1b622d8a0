"""Estimator wrappers with the scikit-learn fit/transform/predict surface.

These adapt the file-driven training loops to in-memory workflows: X is a
list of line-image paths, y a list of transcripts. Heavy knobs stay in the
constructor so grid search and cloning behave as sklearn expects.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .checkpoint import load_checkpoint
from .config import RunConfig, config_from_snapshot, validate_config
from .corpus import Manifest, ManifestEntry, Vocabulary, build_vocab, load_line
from .decode_eval import edit_distance, greedy_decode
from .encoder import encode, vocab_logits
from .exceptions import ValidationError
from .finetune import finetune_run
from .pretrain import run_pretrain
from .validation import as_image_paths, as_texts


def _entries(paths, transcripts, tag: str) -> Manifest:
    entries = []
    for i, p in enumerate(paths):
        txt = transcripts[i] if transcripts else None
        entries.append(ManifestEntry(Path(p).resolve(), txt, tag))
    return Manifest(tuple(entries))


class _ConfiguredEstimator(BaseEstimator):
    def _run_config(self) -> RunConfig:
        cfg = RunConfig()
        for key, value in self.get_params().items():
            if hasattr(cfg, key) and key != "workdir":
                setattr(cfg, key, tuple(value) if isinstance(value, list) else value)
        validate_config(cfg)
        return cfg

    def _workdir(self) -> Path:
        if self.workdir is not None:
            path = Path(self.workdir)
            path.mkdir(parents=True, exist_ok=True)
            return path
        self._tmpdir = tempfile.TemporaryDirectory(prefix="inkline-")
        return Path(self._tmpdir.name)


class ContrastivePretrainer(TransformerMixin, _ConfiguredEstimator):
    """Self-supervised encoder pre-training as a transformer.

    fit() trains the encoder on unlabeled line images; transform() maps
    images to their contextual representation matrices.
    """

    def __init__(self, height=96, channels=(64, 128, 256), hidden=512, lstm_layers=3,
                 d_s=256, mask_len=12, mask_gap=8, mask_coverage=0.5, n_foils=100,
                 pretrain_lr=5e-4, pretrain_epochs=10, batch_size=8, ratio_lo=6.0,
                 ratio_hi=23.0, seed=0, workers=1, workdir=None):
        self.height = height
        self.channels = channels
        self.hidden = hidden
        self.lstm_layers = lstm_layers
        self.d_s = d_s
        self.mask_len = mask_len
        self.mask_gap = mask_gap
        self.mask_coverage = mask_coverage
        self.n_foils = n_foils
        self.pretrain_lr = pretrain_lr
        self.pretrain_epochs = pretrain_epochs
        self.batch_size = batch_size
        self.ratio_lo = ratio_lo
        self.ratio_hi = ratio_hi
        self.seed = seed
        self.workers = workers
        self.workdir = workdir

    def fit(self, X, y=None):
        paths = as_image_paths(X)
        cfg = self._run_config()
        manifest = _entries(paths, None, "pretrain")
        self.checkpoint_path_ = run_pretrain(manifest, cfg, self._workdir() / "pretrain")
        ckpt = load_checkpoint(self.checkpoint_path_)
        self.params_ = ckpt.tensors()
        self.encoder_config_ = config_from_snapshot(ckpt.config).encoder_config()
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        out = []
        for p in as_image_paths(X):
            image = load_line(p, self.encoder_config_.height)
            ctx = encode(self.params_, self.encoder_config_, image.pixels, image.source_id)
            out.append(ctx.values.data.copy())
        return out


class LineTranscriber(_ConfiguredEstimator):
    """CTC fine-tuned transcriber: fit on (images, transcripts), predict text.

    ``init`` selects the starting point: "scratch" or the path to a
    pre-training checkpoint (e.g. ContrastivePretrainer.checkpoint_path_).
    """

    def __init__(self, init="scratch", height=96, channels=(64, 128, 256), hidden=512,
                 lstm_layers=3, d_s=256, finetune_lr=5e-4, max_epochs=700, freeze_epochs=200,
                 batch_size=8, ratio_lo=6.0, ratio_hi=23.0, probe_every=1,
                 seed=0, workers=1, workdir=None):
        self.init = init
        self.height = height
        self.channels = channels
        self.hidden = hidden
        self.lstm_layers = lstm_layers
        self.d_s = d_s
        self.finetune_lr = finetune_lr
        self.max_epochs = max_epochs
        self.freeze_epochs = freeze_epochs
        self.batch_size = batch_size
        self.ratio_lo = ratio_lo
        self.ratio_hi = ratio_hi
        self.probe_every = probe_every
        self.seed = seed
        self.workers = workers
        self.workdir = workdir

    def fit(self, X, y=None):
        paths = as_image_paths(X)
        texts = as_texts(y, len(paths))
        cfg = self._run_config()
        work = self._workdir()
        txt_dir = work / "transcripts"
        txt_dir.mkdir(parents=True, exist_ok=True)
        entries = []
        for i, (p, t) in enumerate(zip(paths, texts)):
            txt_path = txt_dir / f"line_{i:05d}.txt"
            txt_path.write_text(t + "\n", encoding="utf-8")
            entries.append(ManifestEntry(Path(p).resolve(), txt_path, "finetune"))
        manifest = Manifest(tuple(entries))
        vocab = build_vocab(texts)
        pretrained = None if self.init == "scratch" else load_checkpoint(self.init)
        self.checkpoint_path_ = finetune_run(
            manifest, pretrained, vocab, cfg, work / "finetune"
        )
        ckpt = load_checkpoint(self.checkpoint_path_)
        self.params_ = ckpt.tensors()
        self.vocab_ = Vocabulary(tuple(ckpt.vocab))
        self.encoder_config_ = config_from_snapshot(ckpt.config).encoder_config()
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        out = []
        for p in as_image_paths(X):
            image = load_line(p, self.encoder_config_.height)
            ctx = encode(self.params_, self.encoder_config_, image.pixels, image.source_id)
            logits = vocab_logits(self.params_, ctx, len(self.vocab_))
            out.append(greedy_decode(logits, self.vocab_).symbols)
        return out

    def score(self, X, y):
        """1 - aggregate CER, so that higher is better."""
        paths = as_image_paths(X)
        texts = as_texts(y, len(paths))
        hyps = self.predict(paths)
        edits = 0
        total = 0
        for hyp, ref in zip(hyps, texts):
            edits += edit_distance(hyp, ref)
            total += len(ref)
        return 1.0 - edits / total
