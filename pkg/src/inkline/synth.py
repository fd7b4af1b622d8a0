"""Synthetic text-line corpus generator.

Glyphs are procedural stroke drawings, so no font assets are needed: each
(style, character) pair gets a deterministic polyline skeleton, styles vary
the geometry (shear, stroke weight, width), and lines are stamped left to
right onto a light page with optional degradation noise. Determinism is
absolute for a fixed seed: every random choice flows from counter-derived
generators, never from shared mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import seeding
from .corpus import Manifest, ManifestEntry, read_manifest, write_manifest
from .exceptions import DataError, ValidationError

INK, PAGE = 30, 220
HEIGHT = 96
_MIN_WIDTH, _MAX_WIDTH = 576, 2208  # keeps width/height inside the 6-23 ratio band

# second-level stream tags under seeding.SYNTH
_GLYPH, _LEXICON, _LINE = 1, 2, 3

STYLES = {
    # name: (box width, stroke width, shear)
    "upright": (14, 3, 0.0),
    "slant": (14, 3, 0.30),
    "heavy": (15, 5, 0.0),
    "narrow": (9, 2, 0.0),
}

DEFAULT_ALPHABET = "abcdefghijklmnopqrstuvwxyz'.-"


@dataclass(frozen=True)
class SynthConfig:
    styles: tuple[str, ...] = ("upright", "slant")
    alphabet: str = DEFAULT_ALPHABET
    use_space: bool = True
    pretrain_lines: int = 0
    finetune_lines: int = 0
    test_lines: int = 0
    noise: float = 0.02
    ink_jitter: int = 1
    seed: int = 7
    min_chars: int = 24
    max_chars: int = 48
    lexicon_size: int = 60


_BOOL = {"true": True, "false": False, "1": True, "0": False}


def parse_synth_config(path) -> SynthConfig:
    """Read a flat key=value file into a SynthConfig."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read synth config {path}: {exc}") from exc
    values = {}
    for ln, row in enumerate(raw.splitlines(), start=1):
        row = row.strip()
        if not row or row.startswith("#"):
            continue
        if "=" not in row:
            raise ValidationError(f"{path}:{ln}: expected key=value, got {row!r}")
        key, _, val = row.partition("=")
        values[key.strip()] = val.strip()
    kwargs = {}
    for key, val in values.items():
        if key == "styles":
            kwargs[key] = tuple(s.strip() for s in val.split(",") if s.strip())
        elif key == "alphabet":
            kwargs[key] = val
        elif key == "use_space":
            if val.lower() not in _BOOL:
                raise ValidationError(f"use_space must be true/false, got {val!r}")
            kwargs[key] = _BOOL[val.lower()]
        elif key in ("pretrain_lines", "finetune_lines", "test_lines", "ink_jitter",
                     "seed", "min_chars", "max_chars", "lexicon_size"):
            kwargs[key] = int(val)
        elif key == "noise":
            kwargs[key] = float(val)
        else:
            raise ValidationError(f"unknown synth config key: {key!r}")
    cfg = SynthConfig(**kwargs)
    validate_synth_config(cfg)
    return cfg


def validate_synth_config(cfg: SynthConfig) -> None:
    if not cfg.styles:
        raise ValidationError("at least one style is required")
    unknown = [s for s in cfg.styles if s not in STYLES]
    if unknown:
        raise ValidationError(
            f"unknown style(s) {unknown}; available: {sorted(STYLES)}"
        )
    if not cfg.alphabet:
        raise ValidationError("alphabet must be non-empty")
    if " " in cfg.alphabet:
        raise ValidationError("put spaces in via use_space, not the alphabet string")
    if len(set(cfg.alphabet)) != len(cfg.alphabet):
        raise ValidationError("alphabet characters must be distinct")
    if not 0.0 <= cfg.noise < 0.5:
        raise ValidationError(f"noise must be in [0, 0.5), got {cfg.noise}")
    if cfg.min_chars < 1 or cfg.max_chars < cfg.min_chars:
        raise ValidationError("need 1 <= min_chars <= max_chars")
    if cfg.lexicon_size < 1:
        raise ValidationError("lexicon_size must be positive")


@dataclass(frozen=True)
class _Glyph:
    strokes: tuple[tuple[tuple[int, int], ...], ...]
    width: int
    stroke_width: int


def _glyph_spec(seed: int, style: str, char: str) -> _Glyph:
    """Deterministic stroke skeleton for one (style, character) pair."""
    box_w, stroke_w, shear = STYLES[style]
    style_idx = sorted(STYLES).index(style)
    rng = seeding.derive(seed, seeding.SYNTH, _GLYPH, style_idx, ord(char))
    top, bottom = 28, 74
    n_strokes = int(rng.integers(2, 4))
    strokes = []
    for _ in range(n_strokes):
        n_pts = int(rng.integers(2, 5))
        pts = []
        for _ in range(n_pts):
            x = int(rng.integers(1, box_w - 1))
            y = int(rng.integers(top, bottom + 1))
            pts.append((x, y))
        if shear:
            pts = [(x + int(round(shear * (bottom - y))), y) for x, y in pts]
        strokes.append(tuple(pts))
    extra = int(round(shear * (bottom - top)))
    return _Glyph(tuple(strokes), box_w + extra, stroke_w)


def _build_lexicon(cfg: SynthConfig) -> list[str]:
    rng = seeding.derive(cfg.seed, seeding.SYNTH, _LEXICON)
    words = []
    seen = set()
    while len(words) < cfg.lexicon_size:
        length = int(rng.integers(2, 9))
        word = "".join(rng.choice(list(cfg.alphabet), size=length))
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def _sample_text(cfg: SynthConfig, lexicon: list[str], rng: np.random.Generator) -> str:
    # Zipf-ish word frequencies give the corpus repeated, learnable context
    ranks = np.arange(1, len(lexicon) + 1, dtype=np.float64)
    weights = 1.0 / ranks
    weights /= weights.sum()
    target = int(rng.integers(cfg.min_chars, cfg.max_chars + 1))
    sep = " " if cfg.use_space else ""
    words = []
    total = 0
    for _ in range(1000):
        w = lexicon[int(rng.choice(len(lexicon), p=weights))]
        added = len(w) + (len(sep) if words else 0)
        if words and total + added > cfg.max_chars:
            if total >= cfg.min_chars:
                break
            continue
        words.append(w)
        total += added
        if total >= target:
            break
    return sep.join(words)


def render_line(
    cfg: SynthConfig, text: str, style: str, rng: np.random.Generator
) -> np.ndarray:
    """Render one text line as an (HEIGHT, W) uint8 grayscale array."""
    glyphs = {ch: _glyph_spec(cfg.seed, style, ch) for ch in set(text) if ch != " "}
    advances = []
    for ch in text:
        advances.append(10 if ch == " " else glyphs[ch].width + 4)
    width = max(_MIN_WIDTH, 24 + sum(advances))
    if width > _MAX_WIDTH:
        raise ValidationError(f"rendered line would be {width} px wide; shorten max_chars")
    img = Image.new("L", (width, HEIGHT), color=PAGE)
    draw = ImageDraw.Draw(img)
    x = 12
    for ch, adv in zip(text, advances):
        if ch != " ":
            glyph = glyphs[ch]
            jitter = int(rng.integers(-cfg.ink_jitter, cfg.ink_jitter + 1)) if cfg.ink_jitter else 0
            stroke = max(1, glyph.stroke_width + jitter)
            for pts in glyph.strokes:
                shifted = [(x + px, py) for px, py in pts]
                if len(shifted) == 1:
                    draw.point(shifted, fill=INK)
                else:
                    draw.line(shifted, fill=INK, width=stroke, joint="curve")
        x += adv
    arr = np.asarray(img, dtype=np.uint8).copy()
    if cfg.noise > 0.0:
        u = rng.random(arr.shape)
        arr[u < cfg.noise / 2] = 0
        arr[(u >= cfg.noise / 2) & (u < cfg.noise)] = 255
    return arr


def synth_corpus(cfg: SynthConfig, out_dir) -> Manifest:
    """Generate images + transcripts + manifest under ``out_dir``."""
    validate_synth_config(cfg)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from exc
    lexicon = _build_lexicon(cfg)
    entries = []
    splits = (
        ("pretrain", cfg.pretrain_lines, False),
        ("finetune", cfg.finetune_lines, True),
        ("test", cfg.test_lines, True),
    )
    for split_idx, (tag, count, keep_text) in enumerate(splits):
        if count == 0:
            continue
        (out / tag).mkdir(exist_ok=True)
        for i in range(count):
            rng = seeding.derive(cfg.seed, seeding.SYNTH, _LINE, split_idx, i)
            text = _sample_text(cfg, lexicon, rng)
            style = cfg.styles[int(rng.integers(len(cfg.styles)))]
            arr = render_line(cfg, text, style, rng)
            rel_img = Path(tag) / f"line_{i:05d}.png"
            Image.fromarray(arr, mode="L").save(out / rel_img)
            rel_txt = None
            if keep_text:
                rel_txt = Path(tag) / f"line_{i:05d}.txt"
                (out / rel_txt).write_text(text + "\n", encoding="utf-8")
            entries.append(ManifestEntry(rel_img, rel_txt, tag))
    write_manifest(Manifest(tuple(entries)), out / "manifest.tsv")
    # reread so callers get entries resolved against out_dir, not the cwd
    return read_manifest(out / "manifest.tsv")
