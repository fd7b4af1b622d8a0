"""Binary checkpoint format.

Layout: 8-byte magic, u32 format version, u64-length-prefixed JSON header
(config snapshot, vocabulary, schedule cursor, optimizer scalars, seed,
metadata), then a u32 record count followed by length-prefixed records of
name / shape / row-major float32 payload. Everything is little-endian.
Parameter payloads are stored as raw float32 bytes, so save -> load -> save
is bit-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .exceptions import DataError
from .optim import AdamState

MAGIC = b"INKCKPT\x00"
VERSION = 1


@dataclass
class Checkpoint:
    kind: str  # "pretrain" or "finetune"
    params: dict[str, np.ndarray]
    adam: AdamState
    cursor: dict
    config: dict
    vocab: list[str] | None
    seed: int
    metadata: dict

    def tensors(self, dtype=np.float32) -> dict[str, Tensor]:
        return {k: Tensor(v.astype(dtype, copy=True)) for k, v in self.params.items()}


def _write_record(out, name: str, arr: np.ndarray) -> None:
    data = np.ascontiguousarray(arr, dtype="<f4")
    enc = name.encode("utf-8")
    out.write(struct.pack("<I", len(enc)))
    out.write(enc)
    out.write(struct.pack("<I", data.ndim))
    out.write(struct.pack(f"<{data.ndim}I", *data.shape))
    payload = data.tobytes()
    out.write(struct.pack("<Q", len(payload)))
    out.write(payload)


def save_checkpoint(
    path,
    kind: str,
    params: dict[str, Tensor],
    adam: AdamState,
    cursor: dict,
    config: dict,
    vocab: list[str] | None,
    seed: int,
    metadata: dict | None = None,
) -> None:
    path = Path(path)
    header = {
        "kind": kind,
        "config": config,
        "vocab": vocab,
        "cursor": cursor,
        "adam": {"beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps, "step": adam.step},
        "seed": int(seed),
        "metadata": metadata or {},
    }
    records: list[tuple[str, np.ndarray]] = []
    for name in params:
        records.append((name, params[name].data))
    for name, m in adam.m.items():
        records.append((f"adam.m.{name}", m))
    for name, v in adam.v.items():
        records.append((f"adam.v.{name}", v))

    blob = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        with open(tmp, "wb") as out:
            out.write(MAGIC)
            out.write(struct.pack("<I", VERSION))
            out.write(struct.pack("<Q", len(blob)))
            out.write(blob)
            out.write(struct.pack("<I", len(records)))
            for name, arr in records:
                _write_record(out, name, arr)
        tmp.replace(path)
    except OSError as exc:
        raise DataError(f"cannot write checkpoint {path}: {exc}") from exc


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise DataError(f"truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        f = open(path, "rb")
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    with f:
        if _read_exact(f, 8, "magic") != MAGIC:
            raise DataError(f"{path} is not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
        if version != VERSION:
            raise DataError(
                f"{path}: unsupported checkpoint version {version} (expected {VERSION})"
            )
        (hlen,) = struct.unpack("<Q", _read_exact(f, 8, "header length"))
        try:
            header = json.loads(_read_exact(f, hlen, "header"))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: corrupt checkpoint header: {exc}") from exc
        (count,) = struct.unpack("<I", _read_exact(f, 4, "record count"))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", _read_exact(f, 4, "name length"))
            name = _read_exact(f, nlen, "name").decode("utf-8")
            (ndim,) = struct.unpack("<I", _read_exact(f, 4, "ndim"))
            shape = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim, "shape"))
            (plen,) = struct.unpack("<Q", _read_exact(f, 8, "payload length"))
            arr = np.frombuffer(_read_exact(f, plen, f"payload of {name}"), dtype="<f4")
            if arr.size != int(np.prod(shape, dtype=np.int64)):
                raise DataError(f"{path}: payload size mismatch for record {name!r}")
            arrays[name] = arr.reshape(shape).copy()

    adam_meta = header.get("adam", {})
    adam = AdamState(
        beta1=adam_meta.get("beta1", 0.9),
        beta2=adam_meta.get("beta2", 0.98),
        eps=adam_meta.get("eps", 1e-6),
        step=adam_meta.get("step", 0),
    )
    params = {}
    for name, arr in arrays.items():
        if name.startswith("adam.m."):
            adam.m[name[len("adam.m.") :]] = arr
        elif name.startswith("adam.v."):
            adam.v[name[len("adam.v.") :]] = arr
        else:
            params[name] = arr
    return Checkpoint(
        kind=header.get("kind", "pretrain"),
        params=params,
        adam=adam,
        cursor=header.get("cursor", {}),
        config=header.get("config", {}),
        vocab=header.get("vocab"),
        seed=header.get("seed", 0),
        metadata=header.get("metadata", {}),
    )


def shape_diff(expected: dict[str, tuple], found: dict[str, np.ndarray]) -> str:
    """Human-readable diff of parameter names/shapes, empty when compatible."""
    lines = []
    for name, shape in expected.items():
        if name not in found:
            lines.append(f"missing {name} {tuple(shape)}")
        elif tuple(found[name].shape) != tuple(shape):
            lines.append(f"{name}: expected {tuple(shape)}, found {tuple(found[name].shape)}")
    for name in found:
        if name not in expected:
            lines.append(f"unexpected {name} {tuple(found[name].shape)}")
    return "; ".join(lines)
