"""Run configuration: every training hyperparameter, flat key=value on disk.

Defaults are the published recipe. Anything not named in the file keeps its
default and is echoed to the log so an experiment record is always complete.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields
from pathlib import Path

from .encoder import EncoderConfig, _column_heights
from .exceptions import DataError, ValidationError

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    # geometry
    height: int = 96
    ratio_lo: float = 6.0
    ratio_hi: float = 23.0
    # encoder
    channels: tuple[int, ...] = (64, 128, 256)
    hidden: int = 512
    lstm_layers: int = 3
    d_s: int = 256
    gn_eps: float = 1e-6
    leaky_slope: float = 0.01
    # masking and contrastive objective
    mask_len: int = 12
    mask_gap: int = 8
    mask_coverage: float = 0.5
    n_foils: int = 100
    temperature: float = 1.0
    # optimization
    batch_size: int = 8
    pretrain_lr: float = 5e-4
    pretrain_warmup: float = 0.08
    pretrain_epochs: int = 10
    finetune_lr: float = 5e-4
    finetune_warmup: float = 0.10
    finetune_hold: float = 0.40
    finetune_final: float = 0.05
    freeze_epochs: int = 200
    max_epochs: int = 700
    adam_beta1: float = 0.9
    adam_beta2: float = 0.98
    adam_eps: float = 1e-6
    grad_clip: float = 0.0
    # orchestration
    checkpoint_every: int = 1000
    probe_every: int = 1
    probe_lines: int = 8
    seed: int = 0
    workers: int = 1

    def encoder_config(self) -> EncoderConfig:
        if len(self.channels) != 3:
            raise ValidationError(f"channels needs 3 entries, got {self.channels}")
        return EncoderConfig(
            height=self.height,
            channels=tuple(self.channels),
            hidden=self.hidden,
            lstm_layers=self.lstm_layers,
            d_s=self.d_s,
            gn_eps=self.gn_eps,
            leaky_slope=self.leaky_slope,
        )

    def snapshot(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


def validate_config(cfg: RunConfig) -> None:
    def require(ok: bool, msg: str) -> None:
        if not ok:
            raise ValidationError(f"invalid config: {msg}")

    require(cfg.height >= 1, f"height must be positive, got {cfg.height}")
    _column_heights(cfg.height)  # raises if the conv stack collapses
    require(0 < cfg.ratio_lo <= cfg.ratio_hi, "need 0 < ratio_lo <= ratio_hi")
    require(len(cfg.channels) == 3 and all(c >= 1 for c in cfg.channels),
            f"channels must be 3 positive values, got {cfg.channels}")
    require(cfg.hidden >= 1, "hidden must be positive")
    require(cfg.lstm_layers >= 1, "lstm_layers must be positive")
    require(cfg.d_s >= 1, "d_s must be positive")
    require(cfg.gn_eps > 0, "gn_eps must be positive")
    require(cfg.mask_len >= 1, "mask_len must be positive")
    require(cfg.mask_gap >= 0, "mask_gap must be nonnegative")
    require(0 < cfg.mask_coverage <= 1, "mask_coverage must be in (0, 1]")
    require(cfg.n_foils >= 1, "n_foils must be positive")
    require(cfg.temperature > 0, "temperature must be positive")
    require(cfg.batch_size >= 1, "batch_size must be positive")
    require(cfg.pretrain_lr >= 0 and cfg.finetune_lr >= 0, "learning rates must be nonnegative")
    require(0 < cfg.pretrain_warmup < 1, "pretrain_warmup must be in (0, 1)")
    require(0 < cfg.finetune_warmup < 1, "finetune_warmup must be in (0, 1)")
    require(0 < cfg.finetune_hold < 1, "finetune_hold must be in (0, 1)")
    require(cfg.finetune_warmup + cfg.finetune_hold < 1,
            "finetune warmup + hold must leave room for decay")
    require(0 < cfg.finetune_final <= 1, "finetune_final must be in (0, 1]")
    require(cfg.freeze_epochs >= 0, "freeze_epochs must be nonnegative")
    require(cfg.pretrain_epochs >= 1 and cfg.max_epochs >= 1, "epoch counts must be positive")
    require(0 < cfg.adam_beta1 < 1 and 0 < cfg.adam_beta2 < 1, "adam betas must be in (0, 1)")
    require(cfg.adam_eps > 0, "adam_eps must be positive")
    require(cfg.grad_clip >= 0, "grad_clip must be nonnegative (0 disables)")
    require(cfg.checkpoint_every >= 1, "checkpoint_every must be positive")
    require(cfg.probe_every >= 1, "probe_every must be positive")
    require(cfg.probe_lines >= 1, "probe_lines must be positive")
    require(cfg.workers >= 1, "workers must be positive")


def _convert(name: str, kind, raw: str):
    if kind == "tuple[int, ...]":
        try:
            return tuple(int(x) for x in raw.split(","))
        except ValueError:
            raise ValidationError(f"config key {name!r}: expected comma-separated integers") from None
    caster = {"int": int, "float": float}.get(kind)
    if caster is None:
        raise ValidationError(f"config key {name!r} has unsupported type {kind}")
    try:
        return caster(raw)
    except ValueError:
        raise ValidationError(f"config key {name!r}: cannot parse {raw!r} as {kind}") from None


def config_from_snapshot(snapshot: dict) -> RunConfig:
    """Rebuild a RunConfig from a checkpoint's stored snapshot."""
    known = {f.name for f in fields(RunConfig)}
    kwargs = {}
    for key, value in snapshot.items():
        if key not in known:
            log.warning("ignoring unknown config key %r from checkpoint", key)
            continue
        kwargs[key] = tuple(value) if isinstance(value, list) else value
    cfg = RunConfig(**kwargs)
    validate_config(cfg)
    return cfg


def parse_config(path) -> RunConfig:
    """Read key=value lines; unknown keys are an error, missing keys default."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    field_types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for ln, row in enumerate(raw.splitlines(), start=1):
        row = row.strip()
        if not row or row.startswith("#"):
            continue
        if "=" not in row:
            raise ValidationError(f"{path}:{ln}: expected key=value, got {row!r}")
        key, _, val = row.partition("=")
        key = key.strip()
        if key not in field_types:
            raise ValidationError(f"unknown config key: {key!r}")
        values[key] = _convert(key, field_types[key], val.strip())
    cfg = RunConfig(**values)
    validate_config(cfg)
    for f in fields(RunConfig):
        origin = "file" if f.name in values else "default"
        log.info("config: %s = %r (%s)", f.name, getattr(cfg, f.name), origin)
    return cfg
