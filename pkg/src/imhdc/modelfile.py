"""Versioned model files: item memory plus associative memory.

Layout::

    b"IMHDC\\x00MF"            8-byte magic
    u16 version                little-endian
    u32 header length          little-endian
    header                     UTF-8 JSON, sorted keys
    vectors                    Hypervector.to_bytes() records, in header order

The header lists how many vectors each section holds. A model's content
hash is the git blob SHA-1 of the full file bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable

import numpy as np

from imhdc.assocmem import AssociativeMemoryModel
from imhdc.encoder import EncoderConfig
from imhdc.errors import ModelMismatchError
from imhdc.hdvec import Hypervector
from imhdc.itemmem import ContinuousItemMemory, EmgItemMemory, ItemMemory

MAGIC = b"IMHDC\x00MF"
VERSION = 1
_PREFIX = struct.Struct("<8sHI")


@dataclass(frozen=True, eq=False)
class TrainedModel:
    task: str
    encoder: EncoderConfig
    memory: ItemMemory | EmgItemMemory
    am: AssociativeMemoryModel
    stats: dict

    @property
    def dim(self) -> int:
        return self.am.dim

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TrainedModel):
            return NotImplemented
        return (self.task == other.task and self.encoder == other.encoder
                and self.memory == other.memory and self.am == other.am and self.stats == other.stats)


def _symbols_to_json(symbols) -> list:
    return [s if isinstance(s, (str, int)) else str(s) for s in symbols]


def _label_to_json(label: Hashable):
    if isinstance(label, (str, int)) and not isinstance(label, bool):
        return label
    raise ModelMismatchError(f"label {label!r} is not serializable (str or int required)")


def to_bytes(model: TrainedModel) -> bytes:
    mem = model.memory
    sections: list[tuple[str, list[Hypervector]]] = []
    header: dict = {
        "task": model.task,
        "dim": model.dim,
        "encoder": {"n": model.encoder.n, "kind": model.encoder.kind,
                    "permutation_mode": model.encoder.permutation_mode},
        "labels": [_label_to_json(lab) for lab in model.am.labels],
        "with_complements": model.am.with_complements,
        "stats": model.stats,
    }
    if isinstance(mem, EmgItemMemory):
        header["memory"] = {"kind": "emg", "seed": mem.channels.seed,
                            "symbols": _symbols_to_json(mem.channels.symbols), "levels_seed": mem.levels.seed}
        sections += [("channels", list(mem.channels.vectors)), ("levels", list(mem.levels.vectors)),
                     ("tie", [mem.tie])]
    else:
        header["memory"] = {"kind": "symbols", "seed": mem.seed, "symbols": _symbols_to_json(mem.symbols)}
        sections.append(("items", list(mem.vectors)))
    sections.append(("prototypes", list(model.am.prototypes)))
    header["sections"] = [[name, len(vs)] for name, vs in sections]
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(v.to_bytes() for _, vs in sections for v in vs)
    return _PREFIX.pack(MAGIC, VERSION, len(head)) + head + body


def from_bytes(data: bytes) -> TrainedModel:
    if len(data) < _PREFIX.size:
        raise ModelMismatchError("model file is truncated")
    magic, version, head_len = _PREFIX.unpack_from(data, 0)
    if magic != MAGIC:
        raise ModelMismatchError("not a model file (bad magic header)")
    if version != VERSION:
        raise ModelMismatchError(f"unsupported model file version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(data[start : start + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelMismatchError(f"corrupt model header: {exc}") from exc
    dim = header["dim"]
    size = Hypervector.serialized_size(dim)
    offset = start + head_len
    sections: dict[str, list[Hypervector]] = {}
    for name, count in header["sections"]:
        vs = []
        for _ in range(count):
            chunk = data[offset : offset + size]
            if len(chunk) != size:
                raise ModelMismatchError("model file is truncated")
            v = Hypervector.from_bytes(chunk)
            if v.dim != dim:
                raise ModelMismatchError("vector dimension disagrees with header")
            vs.append(v)
            offset += size
        sections[name] = vs
    if offset != len(data):
        raise ModelMismatchError("trailing bytes after model payload")

    mem_h = header["memory"]

    def stack(vs):
        return np.stack([v.words for v in vs])

    if mem_h["kind"] == "emg":
        memory = EmgItemMemory(
            channels=ItemMemory(tuple(mem_h["symbols"]), stack(sections["channels"]), dim, mem_h["seed"]),
            levels=ContinuousItemMemory(stack(sections["levels"]), dim, mem_h["levels_seed"]),
            tie=sections["tie"][0],
        )
    else:
        memory = ItemMemory(tuple(mem_h["symbols"]), stack(sections["items"]), dim, mem_h["seed"])
    enc = header["encoder"]
    am = AssociativeMemoryModel(labels=tuple(header["labels"]), prototypes=tuple(sections["prototypes"]),
                                with_complements=header["with_complements"])
    return TrainedModel(task=header["task"], encoder=EncoderConfig(enc["n"], enc["kind"], enc["permutation_mode"]),
                        memory=memory, am=am, stats=header["stats"])


def save(model: TrainedModel, path) -> str:
    """Write the model; returns its content hash."""
    data = to_bytes(model)
    Path(path).write_bytes(data)
    return content_hash(data)


def load(path) -> TrainedModel:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        raise FileNotFoundError(f"model file not found: {path}") from None
    return from_bytes(data)


def content_hash(data: bytes) -> str:
    """Git blob SHA-1 of ``data``."""
    return hashlib.sha1(b"blob %d\x00" % len(data) + data).hexdigest()
