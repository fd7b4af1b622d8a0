"""Corpus ingestion: line images, transcripts, vocabularies, manifests.

Images arrive as 8-bit grayscale rasters of arbitrary height, leave as
binary height-96 matrices. Transcripts are NFD-normalized at load so every
downstream consumer sees one canonical form.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .exceptions import DataError, ValidationError

LINE_HEIGHT = 96
BLANK = ""


@dataclass(frozen=True)
class LineImage:
    pixels: np.ndarray  # (height, width) uint8 in {0, 1}; 1 is ink
    source_id: str

    @property
    def width_px(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height_px(self) -> int:
        return int(self.pixels.shape[0])


@dataclass(frozen=True)
class TranscribedLine:
    image: LineImage
    text: str


@dataclass(frozen=True)
class Vocabulary:
    """Ordered symbol inventory; index 0 is the reserved blank."""

    symbols: tuple[str, ...]

    def __post_init__(self):
        if not self.symbols or self.symbols[0] != BLANK:
            raise ValidationError("vocabulary must reserve index 0 for the blank")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValidationError("vocabulary symbols must be distinct")

    @property
    def blank_index(self) -> int:
        return 0

    def __len__(self) -> int:
        return len(self.symbols)

    def encode(self, text: str) -> list[int]:
        out = []
        for ch in text:
            try:
                out.append(self.symbols.index(ch))
            except ValueError:
                raise ValidationError(
                    f"character {ch!r} (U+{ord(ch):04X}) is not in the vocabulary"
                ) from None
        return out

    def decode(self, indices) -> str:
        return "".join(self.symbols[i] for i in indices)


@dataclass(frozen=True)
class ManifestEntry:
    image_path: Path
    transcript_path: Path | None
    split_tag: str


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...]

    def split(self, tag: str) -> "Manifest":
        return Manifest(tuple(e for e in self.entries if e.split_tag == tag))

    def __len__(self) -> int:
        return len(self.entries)


def otsu_threshold(values: np.ndarray) -> int:
    """Global Otsu threshold by exhaustive 256-level search.

    Returns the smallest level maximizing between-class variance. Pixels at
    or below the threshold are the ink class.
    """
    hist = np.bincount(values.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    levels = np.arange(256, dtype=np.float64)
    w0 = np.cumsum(hist)
    mu0 = np.cumsum(hist * levels)
    mu_total = mu0[-1]
    w1 = total - w0
    # between-class variance; undefined (one empty class) counts as 0
    with np.errstate(invalid="ignore", divide="ignore"):
        var = np.where(
            (w0 > 0) & (w1 > 0),
            (mu_total * w0 - mu0 * total) ** 2 / (w0 * w1) / (total * total),
            0.0,
        )
    return int(var.argmax())


def binarize(gray: np.ndarray) -> np.ndarray:
    t = otsu_threshold(gray)
    return (gray <= t).astype(np.uint8)


def load_line(path, target_height: int = LINE_HEIGHT) -> LineImage:
    """Load a grayscale raster, scale to the target height, binarize.

    Scaling is bilinear and aspect-preserving; binarization is global Otsu
    with the darker class as ink. Already-conforming binary images pass
    through pixel-identically.
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            gray = img.convert("L")
            w, h = gray.size
            if h != target_height:
                new_w = round(w * target_height / h)
                if new_w < 1:
                    raise DataError(f"{path}: image scales to zero width")
                gray = gray.resize((new_w, target_height), Image.BILINEAR)
            arr = np.asarray(gray, dtype=np.uint8)
    except (OSError, Image.DecompressionBombError) as exc:
        raise DataError(f"cannot read line image {path}: {exc}") from exc
    if arr.shape[1] < 2:
        raise DataError(f"{path}: line image is too narrow ({arr.shape[1]} px)")
    return LineImage(binarize(arr), source_id=str(path))


def load_transcript(path) -> str:
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read transcript {path}: {exc}") from exc
    text = unicodedata.normalize("NFD", raw.rstrip("\n"))
    if not text:
        raise ValidationError(f"transcript {path} is empty")
    return text


def ratio_filter(image: LineImage, lo: float = 6.0, hi: float = 23.0) -> bool:
    """Keep a line iff width/height lies in [lo, hi], bounds inclusive."""
    ratio = image.width_px / image.height_px
    return lo <= ratio <= hi


def build_vocab(lines) -> Vocabulary:
    """Sorted distinct codepoints of all transcripts, blank prepended."""
    texts = [line.text if isinstance(line, TranscribedLine) else line for line in lines]
    if not texts:
        raise ValidationError("cannot build a vocabulary from an empty corpus")
    chars = sorted(set("".join(texts)))
    return Vocabulary((BLANK, *chars))


def read_manifest(path) -> Manifest:
    """Parse a TSV manifest; image/transcript paths resolve relative to it."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    base = path.parent
    entries = []
    for ln, row in enumerate(raw.splitlines(), start=1):
        if not row.strip():
            continue
        parts = row.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{ln}: expected 3 tab-separated columns, got {len(parts)}")
        img, txt, tag = parts
        if tag not in ("pretrain", "finetune", "test"):
            raise DataError(f"{path}:{ln}: unknown split tag {tag!r}")
        if tag in ("finetune", "test") and not txt:
            raise ValidationError(f"{path}:{ln}: {tag} entries require a transcript")
        entries.append(
            ManifestEntry(base / img, base / txt if txt else None, tag)
        )
    if not entries:
        raise ValidationError(f"manifest {path} has no entries")
    return Manifest(tuple(entries))


def write_manifest(manifest: Manifest, path) -> None:
    path = Path(path)
    base = path.parent
    rows = []
    for e in manifest.entries:
        img = e.image_path.relative_to(base) if e.image_path.is_absolute() else e.image_path
        txt = ""
        if e.transcript_path is not None:
            txt = str(
                e.transcript_path.relative_to(base)
                if e.transcript_path.is_absolute()
                else e.transcript_path
            )
        rows.append(f"{img}\t{txt}\t{e.split_tag}")
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def load_transcribed(entry: ManifestEntry, target_height: int = LINE_HEIGHT) -> TranscribedLine:
    if entry.transcript_path is None:
        raise ValidationError(f"{entry.image_path}: entry has no transcript")
    return TranscribedLine(
        load_line(entry.image_path, target_height), load_transcript(entry.transcript_path)
    )
