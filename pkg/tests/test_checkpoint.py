"""Binary checkpoint format: round trips, corruption handling, diffs."""

import struct

import numpy as np
import pytest

from inkline.autodiff import Tensor
from inkline.checkpoint import load_checkpoint, save_checkpoint, shape_diff
from inkline.exceptions import DataError
from inkline.optim import AdamState


def sample_state(seed=0):
    rng = np.random.default_rng(seed)
    params = {
        "conv1.w": Tensor(rng.normal(size=(3, 1, 4, 2)).astype(np.float32)),
        "head.b": Tensor(rng.normal(size=5).astype(np.float32)),
    }
    adam = AdamState(step=17)
    for name, p in params.items():
        adam.m[name] = rng.normal(size=p.shape).astype(np.float32)
        adam.v[name] = np.abs(rng.normal(size=p.shape)).astype(np.float32)
    return params, adam


def save(path, params, adam, **over):
    kw = dict(
        kind="finetune",
        params=params,
        adam=adam,
        cursor={"epoch": 3, "batch": 1, "update": 41},
        config={"height": 96, "channels": [3]},
        vocab=["", "a", "b"],
        seed=9,
        metadata={"init": "pretrained"},
    )
    kw.update(over)
    save_checkpoint(path, **kw)


class TestRoundTrip:
    def test_everything_comes_back(self, tmp_path):
        params, adam = sample_state()
        p = tmp_path / "c.bin"
        save(p, params, adam)
        ck = load_checkpoint(p)
        assert ck.kind == "finetune"
        assert ck.cursor == {"epoch": 3, "batch": 1, "update": 41}
        assert ck.config["channels"] == [3]
        assert ck.vocab == ["", "a", "b"]
        assert ck.seed == 9
        assert ck.metadata == {"init": "pretrained"}
        assert ck.adam.step == 17
        for name in params:
            assert np.array_equal(ck.params[name], params[name].data)
            assert np.array_equal(ck.adam.m[name], adam.m[name])
            assert np.array_equal(ck.adam.v[name], adam.v[name])

    def test_save_is_byte_deterministic(self, tmp_path):
        params, adam = sample_state()
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        save(a, params, adam)
        save(b, params, adam)
        assert a.read_bytes() == b.read_bytes()

    def test_reload_and_resave_identical(self, tmp_path):
        params, adam = sample_state()
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        save(a, params, adam)
        ck = load_checkpoint(a)
        save(b, ck.tensors(), ck.adam, cursor=ck.cursor, config=ck.config,
             vocab=ck.vocab, seed=ck.seed, metadata=ck.metadata, kind=ck.kind)
        assert a.read_bytes() == b.read_bytes()

    def test_float32_payload_bit_exact(self, tmp_path):
        # Values chosen to round differently in any wider/narrower format.
        params = {"w": Tensor(np.array([1e-38, 3.1415927, -0.1], dtype=np.float32))}
        p = tmp_path / "c.bin"
        save(p, params, AdamState())
        back = load_checkpoint(p).params["w"]
        assert back.tobytes() == params["w"].data.tobytes()

    def test_no_vocab_round_trips_as_none(self, tmp_path):
        params, adam = sample_state()
        p = tmp_path / "c.bin"
        save(p, params, adam, vocab=None, kind="pretrain")
        assert load_checkpoint(p).vocab is None


class TestCorruption:
    def test_bad_magic(self, tmp_path):
        p = tmp_path / "c.bin"
        p.write_bytes(b"NOTACKPT" + b"\x00" * 64)
        with pytest.raises(DataError, match="bad magic"):
            load_checkpoint(p)

    def test_unknown_version(self, tmp_path):
        params, adam = sample_state()
        p = tmp_path / "c.bin"
        save(p, params, adam)
        raw = bytearray(p.read_bytes())
        raw[8:12] = struct.pack("<I", 999)
        p.write_bytes(bytes(raw))
        with pytest.raises(DataError, match="version 999"):
            load_checkpoint(p)

    def test_truncation_anywhere_is_caught(self, tmp_path):
        params, adam = sample_state()
        p = tmp_path / "c.bin"
        save(p, params, adam)
        raw = p.read_bytes()
        for cut in (4, 11, 20, len(raw) // 2, len(raw) - 3):
            q = tmp_path / f"cut{cut}.bin"
            q.write_bytes(raw[:cut])
            with pytest.raises(DataError, match="truncated"):
                load_checkpoint(q)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="cannot read checkpoint"):
            load_checkpoint(tmp_path / "absent.bin")


class TestShapeDiff:
    def test_empty_for_matching(self):
        found = {"a": np.zeros((2, 3))}
        assert shape_diff({"a": (2, 3)}, found) == ""

    def test_reports_all_three_kinds(self):
        expected = {"a": (2, 3), "b": (4,)}
        found = {"a": np.zeros((9, 9)), "c": np.zeros(1)}
        diff = shape_diff(expected, found)
        assert "a: expected (2, 3), found (9, 9)" in diff
        assert "missing b (4,)" in diff
        assert "unexpected c (1,)" in diff
