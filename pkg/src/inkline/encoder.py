"""Line-image encoder: a short convolutional stack feeding a bidirectional
recurrent stack.

The conv stack runs unpadded, so image height must be tall enough to survive
every kernel and the width floor is a hard error, not a silent clamp. Widths
map to time steps through the same arithmetic everywhere; ``feature_steps`` is
the single authority on that mapping.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from . import layers, seeding
from .autodiff import Tensor
from .exceptions import NumericalError, ValidationError

# (kernel, stride) per stage, in order: conv, conv, pool, conv, pool
_STAGES = (
    ((4, 2), (4, 2)),
    ((4, 2), (1, 1)),
    ((4, 2), (1, 2)),
    ((3, 3), (1, 1)),
    ((4, 2), (1, 2)),
)


def _shrink(size: int, kernel: int, stride: int) -> int:
    if size < kernel:
        return 0
    return (size - kernel) // stride + 1


@lru_cache(maxsize=None)
def _column_heights(height: int) -> tuple[int, ...]:
    out = []
    h = height
    for (kh, _), (sh, _) in _STAGES:
        h = _shrink(h, kh, sh)
        if h < 1:
            raise ValidationError(
                f"image height {height} is too small for the conv stack"
            )
        out.append(h)
    return tuple(out)


@lru_cache(maxsize=None)
def min_width(height: int) -> int:
    _column_heights(height)
    for w in range(1, 4097):
        t = w
        for (_, kw), (_, sw) in _STAGES:
            t = _shrink(t, kw, sw)
        if t >= 1:
            return w
    raise ValidationError("conv stack never produces output; check kernels")


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture hyperparameters; the defaults are the full-size model."""

    height: int = 96
    channels: tuple[int, int, int] = (64, 128, 256)
    hidden: int = 512
    lstm_layers: int = 3
    d_s: int = 256
    gn_eps: float = 1e-6
    leaky_slope: float = 0.01

    @property
    def feature_height(self) -> int:
        return _column_heights(self.height)[-1]

    @property
    def d_h(self) -> int:
        return self.feature_height * self.channels[2]

    @property
    def d_c(self) -> int:
        return 2 * self.hidden


def feature_steps(cfg: EncoderConfig, width: int) -> int:
    """Number of time steps produced for an image of the given width."""
    floor = min_width(cfg.height)
    if width < floor:
        raise ValidationError(
            f"image width {width} is below the minimum supported width {floor}"
        )
    t = width
    for (_, kw), (_, sw) in _STAGES:
        t = _shrink(t, kw, sw)
    return t


@dataclass
class FeatureSeq:
    """Per-step conv features for one line, (T, d_h)."""

    source_id: str
    values: Tensor

    def detached(self) -> "FeatureSeq":
        return FeatureSeq(self.source_id, self.values.detach())


@dataclass
class ContextSeq:
    """Per-step bidirectional context for one line, (T, d_c)."""

    source_id: str
    values: Tensor

    def detached(self) -> "ContextSeq":
        return ContextSeq(self.source_id, self.values.detach())


def _uniform(rng, shape, fan_in: int, dtype) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype))


def init_params(cfg: EncoderConfig, seed: int, dtype=np.float32) -> dict[str, Tensor]:
    """Create all encoder parameters in a fixed, documented order.

    The order matters: it pins the mapping from seed to initial weights, which
    the reproducibility guarantees lean on.
    """
    rng = seeding.derive(seed, seeding.PARAMS)
    c1, c2, c3 = cfg.channels
    p: dict[str, Tensor] = {}

    for name, cout, cin, (kh, kw) in (
        ("conv1", c1, 1, (4, 2)),
        ("conv2", c2, c1, (4, 2)),
        ("conv3", c3, c2, (3, 3)),
    ):
        fan = cin * kh * kw
        p[f"{name}.w"] = _uniform(rng, (cout, cin, kh, kw), fan, dtype)
        p[f"{name}.b"] = Tensor(np.zeros(cout, dtype=dtype))
        p[f"{name}.gamma"] = Tensor(np.ones(cout, dtype=dtype))
        p[f"{name}.beta"] = Tensor(np.zeros(cout, dtype=dtype))

    h = cfg.hidden
    for layer in range(1, cfg.lstm_layers + 1):
        d_in = cfg.d_h if layer == 1 else cfg.d_c
        for direction in ("fwd", "bwd"):
            stem = f"lstm{layer}.{direction}"
            p[f"{stem}.w_in"] = _uniform(rng, (4 * h, d_in), d_in, dtype)
            p[f"{stem}.w_rec"] = _uniform(rng, (4 * h, h), h, dtype)
            p[f"{stem}.bias"] = Tensor(np.zeros(4 * h, dtype=dtype))

    p["proj_ctx.w"] = _uniform(rng, (cfg.d_s, cfg.d_c), cfg.d_c, dtype)
    p["proj_feat.w"] = _uniform(rng, (cfg.d_s, cfg.d_h), cfg.d_h, dtype)
    p["mask.embed"] = Tensor(rng.normal(0.0, 0.1, size=cfg.d_h).astype(dtype))
    return p


def init_head(cfg: EncoderConfig, vocab_size: int, seed: int, dtype=np.float32) -> dict[str, Tensor]:
    """Vocabulary projection, created separately because pretraining has none."""
    rng = seeding.derive(seed, seeding.PARAMS, 1)
    return {
        "head.w": _uniform(rng, (vocab_size, cfg.d_c), cfg.d_c, dtype),
        "head.b": Tensor(np.zeros(vocab_size, dtype=dtype)),
    }


def _check_finite(t: Tensor, what: str, source_id: str) -> None:
    if not np.isfinite(t.data).all():
        raise NumericalError(f"non-finite {what} while encoding {source_id!r}")


def conv_forward(
    params: dict[str, Tensor], cfg: EncoderConfig, image: np.ndarray, source_id: str
) -> FeatureSeq:
    """Run the conv stack on one (H, W) image and flatten columns to (T, d_h)."""
    if image.ndim != 2:
        raise ValidationError(f"expected a 2-D line image, got shape {image.shape}")
    if image.shape[0] != cfg.height:
        raise ValidationError(
            f"image height {image.shape[0]} does not match configured height {cfg.height}"
        )
    feature_steps(cfg, image.shape[1])

    dtype = params["conv1.w"].dtype
    h = Tensor(np.ascontiguousarray(image, dtype=dtype)[None])
    for name, stride in (("conv1", (4, 2)), ("conv2", (1, 1))):
        h = layers.conv2d(h, params[f"{name}.w"], params[f"{name}.b"], stride)
        h = ad.leaky_relu(h, cfg.leaky_slope)
        h = layers.group_norm(h, params[f"{name}.gamma"], params[f"{name}.beta"], cfg.gn_eps)
    h = layers.maxpool2d(h, (4, 2), (1, 2))
    h = layers.conv2d(h, params["conv3.w"], params["conv3.b"], (1, 1))
    h = ad.leaky_relu(h, cfg.leaky_slope)
    h = layers.group_norm(h, params["conv3.gamma"], params["conv3.beta"], cfg.gn_eps)
    h = layers.maxpool2d(h, (4, 2), (1, 2))

    # (C, Hf, T) -> (T, Hf * C)
    t_steps = h.shape[2]
    h = ad.reshape(ad.permute(h, (2, 1, 0)), (t_steps, cfg.d_h))
    _check_finite(h, "conv features", source_id)
    return FeatureSeq(source_id, h)


def context_forward(
    params: dict[str, Tensor], cfg: EncoderConfig, feats: FeatureSeq
) -> ContextSeq:
    """Run the bidirectional recurrent stack over one feature sequence."""
    seq = feats.values
    for layer in range(1, cfg.lstm_layers + 1):
        fwd = layers.lstm_pass(
            seq,
            params[f"lstm{layer}.fwd.w_in"],
            params[f"lstm{layer}.fwd.w_rec"],
            params[f"lstm{layer}.fwd.bias"],
        )
        bwd = ad.flip_rows(
            layers.lstm_pass(
                ad.flip_rows(seq),
                params[f"lstm{layer}.bwd.w_in"],
                params[f"lstm{layer}.bwd.w_rec"],
                params[f"lstm{layer}.bwd.bias"],
            )
        )
        seq = ad.concat([fwd, bwd], axis=1)
    _check_finite(seq, "context", feats.source_id)
    return ContextSeq(feats.source_id, seq)


def encode(
    params: dict[str, Tensor], cfg: EncoderConfig, image: np.ndarray, source_id: str
) -> ContextSeq:
    return context_forward(params, cfg, conv_forward(params, cfg, image, source_id))


def vocab_logits(
    params: dict[str, Tensor], ctx: ContextSeq, vocab_size: int
) -> Tensor:
    """Per-step vocabulary logits (T, V) from the context sequence."""
    w = params["head.w"]
    if w.shape[0] != vocab_size:
        raise ValidationError(
            f"vocabulary projection expects {w.shape[0]} symbols, got {vocab_size}"
        )
    return ad.add(ad.matmul(ctx.values, ad.transpose(w)), params["head.b"])
