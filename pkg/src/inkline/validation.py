"""Input validation helpers for the estimator API."""

from __future__ import annotations

import unicodedata
from pathlib import Path

from .exceptions import ValidationError


def as_image_paths(X) -> list[Path]:
    """Coerce X to a non-empty list of existing image paths."""
    if isinstance(X, (str, Path)):
        X = [X]
    paths = [Path(p) for p in X]
    if not paths:
        raise ValidationError("X must contain at least one line image path")
    missing = [str(p) for p in paths if not p.is_file()]
    if missing:
        raise ValidationError(f"line image(s) not found: {', '.join(missing[:5])}")
    return paths


def as_texts(y, n: int) -> list[str]:
    """Coerce y to n NFD-normalized non-empty transcripts."""
    if y is None:
        raise ValidationError("y (transcripts) is required for fitting")
    texts = [unicodedata.normalize("NFD", str(t)) for t in y]
    if len(texts) != n:
        raise ValidationError(f"got {n} images but {len(texts)} transcripts")
    empty = [i for i, t in enumerate(texts) if not t]
    if empty:
        raise ValidationError(f"transcript(s) at position(s) {empty[:5]} are empty")
    return texts
