"""Versioned binary model archives.

Layout (all integers little-endian)::

    magic      8 bytes  b"GATSMARC"
    version    uint32
    then two sections, "header" (UTF-8 JSON) and "params" (float64 LE), each as
    length uint64 | sha256 32 bytes | payload

The header lists every tensor's name, shape and offset into the params block.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .model import GATSM, ModelConfig
from .preprocessing import Preprocessor

MAGIC = b"GATSMARC"
FORMAT_VERSION = 1


class ArchiveError(ValueError):
    pass


class VersionError(ArchiveError):
    pass


class ChecksumError(ArchiveError):
    pass


class TruncatedArchiveError(ArchiveError):
    pass


def _section(payload: bytes) -> bytes:
    return struct.pack("<Q", len(payload)) + hashlib.sha256(payload).digest() + payload


def to_bytes(model: GATSM, train_config: dict | None = None, extra: dict | None = None) -> bytes:
    state = model.state_dict()
    index, blobs, offset = [], [], 0
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype="<f8")
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.size
    header = {
        "format_version": FORMAT_VERSION,
        "task": model.task,
        "n_classes": model.n_classes,
        "n_features": model.n_features,
        "feature_names": model.feature_names,
        "seed": model.seed,
        "model_config": model.config.to_dict(),
        "variant_flags": {"use_pe": model.config.use_pe, "use_mha": model.config.use_mha},
        "preprocessor": None if model.preprocessor is None else model.preprocessor.to_dict(),
        "train_config": train_config,
        "extra": extra or {},
        "tensors": index,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    return (MAGIC + struct.pack("<I", FORMAT_VERSION) + _section(head)
            + _section(b"".join(blobs)))


def save(model: GATSM, path, train_config: dict | None = None, extra: dict | None = None):
    Path(path).write_bytes(to_bytes(model, train_config, extra))


def _read_section(buf: bytes, pos: int, what: str):
    if len(buf) < pos + 40:
        raise TruncatedArchiveError(f"{what} section header is truncated")
    (length,) = struct.unpack_from("<Q", buf, pos)
    digest = buf[pos + 8:pos + 40]
    payload = buf[pos + 40:pos + 40 + length]
    if len(payload) != length:
        raise TruncatedArchiveError(f"{what} section is truncated")
    if hashlib.sha256(payload).digest() != digest:
        raise ChecksumError(f"{what} section checksum mismatch")
    return payload, pos + 40 + length


def read_header(buf: bytes) -> tuple[dict, bytes]:
    if len(buf) < 12 or buf[:8] != MAGIC:
        raise ArchiveError("not a model archive (bad magic)")
    (version,) = struct.unpack_from("<I", buf, 8)
    if version != FORMAT_VERSION:
        raise VersionError(f"archive format version {version} is not supported "
                           f"(expected {FORMAT_VERSION})")
    head, pos = _read_section(buf, 12, "header")
    params, pos = _read_section(buf, pos, "params")
    if pos != len(buf):
        raise ArchiveError("trailing bytes after the params section")
    return json.loads(head.decode("utf-8")), params


def from_bytes(buf: bytes) -> tuple[GATSM, dict]:
    header, params = read_header(buf)
    flat = np.frombuffer(params, dtype="<f8")
    state = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        start = entry["offset"]
        if start + count > flat.size:
            raise TruncatedArchiveError(f"tensor {entry['name']} runs past the params block")
        state[entry["name"]] = flat[start:start + count].reshape(entry["shape"]).astype(np.float64)
    model = GATSM(header["n_features"], header["task"], header["n_classes"],
                  ModelConfig.from_dict(header["model_config"]), header["seed"])
    model.load_state_dict(state)
    model.feature_names = header["feature_names"]
    if header["preprocessor"] is not None:
        model.preprocessor = Preprocessor.from_dict(header["preprocessor"])
    return model, header


def load(path) -> GATSM:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    return from_bytes(path.read_bytes())[0]


def load_with_header(path) -> tuple[GATSM, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    return from_bytes(path.read_bytes())
