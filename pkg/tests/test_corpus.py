"""Image loading, binarization, vocabulary, and manifest handling."""

import unicodedata

import numpy as np
import pytest
from PIL import Image

from inkline.corpus import (
    BLANK,
    LineImage,
    Manifest,
    ManifestEntry,
    TranscribedLine,
    Vocabulary,
    binarize,
    build_vocab,
    load_line,
    load_transcript,
    otsu_threshold,
    ratio_filter,
    read_manifest,
    write_manifest,
)
from inkline.exceptions import DataError, ValidationError


def otsu_oracle(values: np.ndarray) -> int:
    """Literal definition: maximize w0*w1*(mu0-mu1)^2 over all 256 levels."""
    vals = values.ravel().astype(np.float64)
    best_t, best_var = 0, -1.0
    for t in range(256):
        lo = vals[vals <= t]
        hi = vals[vals > t]
        if lo.size == 0 or hi.size == 0:
            var = 0.0
        else:
            w0 = lo.size / vals.size
            var = w0 * (1 - w0) * (lo.mean() - hi.mean()) ** 2
        if var > best_var:
            best_var, best_t = var, t
    return best_t


def save_gray(path, arr: np.ndarray) -> None:
    Image.fromarray(arr.astype(np.uint8), mode="L").save(path)


class TestOtsu:
    def test_matches_definition_on_random_inputs(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            shape = (int(rng.integers(1, 20)), int(rng.integers(1, 20)))
            arr = rng.integers(0, 256, size=shape).astype(np.uint8)
            assert otsu_threshold(arr) == otsu_oracle(arr)

    def test_matches_definition_on_bimodal_inputs(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            dark = rng.integers(0, 80, size=200)
            light = rng.integers(150, 256, size=800)
            arr = np.concatenate([dark, light]).astype(np.uint8)
            assert otsu_threshold(arr) == otsu_oracle(arr)

    def test_two_level_page(self):
        # Ink at 30, page at 220: threshold lands between the modes and the
        # darker class comes out as ink.
        arr = np.full((10, 40), 220, dtype=np.uint8)
        arr[:, :8] = 30
        t = otsu_threshold(arr)
        assert 30 <= t < 220
        ink = binarize(arr)
        assert np.all(ink[:, :8] == 1)
        assert np.all(ink[:, 8:] == 0)

    def test_blank_page_has_no_ink(self):
        arr = np.full((5, 5), 255, dtype=np.uint8)
        assert np.all(binarize(arr) == 0)

    def test_binarize_is_idempotent_on_binary_input(self):
        rng = np.random.default_rng(2)
        pix = (rng.random((30, 30)) < 0.2).astype(np.uint8)
        gray = ((1 - pix) * 255).astype(np.uint8)
        once = binarize(gray)
        assert np.array_equal(once, pix)
        again = binarize(((1 - once) * 255).astype(np.uint8))
        assert np.array_equal(again, once)


class TestLoadLine:
    def test_height_is_normalized(self, tmp_path):
        arr = np.full((192, 100), 255, dtype=np.uint8)
        arr[80:110, 20:60] = 0
        p = tmp_path / "tall.png"
        save_gray(p, arr)
        line = load_line(p)
        assert line.height_px == 96
        assert line.width_px == 50
        assert set(np.unique(line.pixels)) <= {0, 1}

    def test_conforming_image_passes_through(self, tmp_path):
        rng = np.random.default_rng(3)
        pix = (rng.random((96, 300)) < 0.15).astype(np.uint8)
        p = tmp_path / "line.png"
        save_gray(p, (1 - pix) * 255)
        line = load_line(p)
        assert np.array_equal(line.pixels, pix)
        # Round trip: save what was loaded, load again, bit-identical.
        q = tmp_path / "again.png"
        save_gray(q, (1 - line.pixels) * 255)
        assert np.array_equal(load_line(q).pixels, line.pixels)

    def test_unreadable_file_raises_data_error(self, tmp_path):
        p = tmp_path / "junk.png"
        p.write_bytes(b"not a png")
        with pytest.raises(DataError, match="cannot read line image"):
            load_line(p)

    def test_missing_file_raises_data_error(self, tmp_path):
        with pytest.raises(DataError):
            load_line(tmp_path / "absent.png")

    def test_sliver_image_rejected(self, tmp_path):
        p = tmp_path / "sliver.png"
        save_gray(p, np.zeros((2000, 1), dtype=np.uint8))
        with pytest.raises(DataError):
            load_line(p)


class TestRatioFilter:
    def make(self, width: int, height: int = 96) -> LineImage:
        return LineImage(np.zeros((height, width), dtype=np.uint8), "x")

    def test_bounds_are_inclusive(self):
        assert ratio_filter(self.make(576)) is True  # ratio exactly 6
        assert ratio_filter(self.make(2208)) is True  # ratio exactly 23
        assert ratio_filter(self.make(575)) is False
        assert ratio_filter(self.make(2209)) is False

    def test_typical_cases(self):
        assert ratio_filter(self.make(960)) is True  # ratio 10
        assert ratio_filter(self.make(96)) is False  # ratio 1


class TestVocabulary:
    def test_blank_reserved_at_zero(self):
        v = Vocabulary((BLANK, "a", "b"))
        assert v.blank_index == 0
        assert len(v) == 3
        with pytest.raises(ValidationError, match="index 0"):
            Vocabulary(("a", BLANK))
        with pytest.raises(ValidationError, match="distinct"):
            Vocabulary((BLANK, "a", "a"))

    def test_encode_decode_round_trip(self):
        v = Vocabulary((BLANK, "a", "b", "c"))
        assert v.encode("cab") == [3, 1, 2]
        assert v.decode([3, 1, 2]) == "cab"

    def test_unknown_character_named_in_error(self):
        v = Vocabulary((BLANK, "a"))
        with pytest.raises(ValidationError, match=r"U\+0051"):
            v.encode("Q")

    def test_build_vocab_sorted_and_order_free(self):
        a = build_vocab(["ba", "ab"])
        b = build_vocab(["ab", "ba"])
        assert a.symbols == b.symbols == (BLANK, "a", "b")

    def test_build_vocab_accepts_transcribed_lines(self):
        img = LineImage(np.zeros((96, 600), dtype=np.uint8), "x")
        v = build_vocab([TranscribedLine(img, "hi"), "ho"])
        assert v.symbols == (BLANK, "h", "i", "o")

    def test_decomposed_text_splits_combining_marks(self):
        text = unicodedata.normalize("NFD", "café")
        v = build_vocab([text])
        assert "́" in v.symbols  # combining acute is its own symbol
        assert "é" not in v.symbols

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValidationError, match="empty"):
            build_vocab([])


class TestTranscripts:
    def test_nfd_and_newline_handling(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("café\n", encoding="utf-8")
        text = load_transcript(p)
        assert text == "café"

    def test_trailing_newline_only_stripped(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("a b \n", encoding="utf-8")
        assert load_transcript(p) == "a b "

    def test_empty_transcript_rejected(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="empty"):
            load_transcript(p)


class TestManifest:
    def write_corpus(self, root):
        for name in ("a.png", "b.png"):
            save_gray(root / name, np.full((96, 600), 255, dtype=np.uint8))
        (root / "b.txt").write_text("text\n", encoding="utf-8")

    def test_round_trip(self, tmp_path):
        self.write_corpus(tmp_path)
        manifest = Manifest(
            (
                ManifestEntry(tmp_path / "a.png", None, "pretrain"),
                ManifestEntry(tmp_path / "b.png", tmp_path / "b.txt", "finetune"),
            )
        )
        path = tmp_path / "manifest.tsv"
        write_manifest(manifest, path)
        back = read_manifest(path)
        assert len(back) == 2
        assert back.entries[0].transcript_path is None
        assert back.entries[0].split_tag == "pretrain"
        assert back.entries[1].image_path == tmp_path / "b.png"
        assert back.entries[1].transcript_path == tmp_path / "b.txt"

    def test_split_selects_by_tag(self):
        m = Manifest(
            (
                ManifestEntry(None, None, "pretrain"),
                ManifestEntry(None, None, "test"),
                ManifestEntry(None, None, "pretrain"),
            )
        )
        assert len(m.split("pretrain")) == 2
        assert len(m.split("finetune")) == 0

    def test_unknown_tag_rejected(self, tmp_path):
        p = tmp_path / "m.tsv"
        p.write_text("a.png\t\tvalidation\n", encoding="utf-8")
        with pytest.raises(DataError, match="unknown split tag"):
            read_manifest(p)

    def test_wrong_column_count_rejected(self, tmp_path):
        p = tmp_path / "m.tsv"
        p.write_text("a.png\tpretrain\n", encoding="utf-8")
        with pytest.raises(DataError, match="3 tab-separated columns"):
            read_manifest(p)

    def test_labelled_split_requires_transcript(self, tmp_path):
        p = tmp_path / "m.tsv"
        p.write_text("a.png\t\tfinetune\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="require a transcript"):
            read_manifest(p)

    def test_empty_manifest_rejected(self, tmp_path):
        p = tmp_path / "m.tsv"
        p.write_text("\n\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="no entries"):
            read_manifest(p)

    def test_paths_resolve_relative_to_manifest(self, tmp_path):
        sub = tmp_path / "data"
        sub.mkdir()
        p = sub / "m.tsv"
        p.write_text("imgs/a.png\t\tpretrain\n", encoding="utf-8")
        m = read_manifest(p)
        assert m.entries[0].image_path == sub / "imgs" / "a.png"
