"""Single-file container for named float32 tensors plus a metadata record.

Layout:

    8 bytes   magic b"IHARMW01"
    4 bytes   little-endian uint32: length of the JSON index
    N bytes   JSON index {"meta": {...}, "tensors": [{"name", "shape",
              "offset", "nbytes", "crc32"}, ...]}
    ...       raw little-endian float32 tensor data, C-order, at the
              offsets given in the index (relative to the data section)

Round trips are bit-exact; per-tensor CRC32 catches corruption and names
the offending parameter.
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["WeightArchive", "ArchiveError", "config_hash"]

MAGIC = b"IHARMW01"


class ArchiveError(ValueError):
    """Raised for malformed, corrupt, or mismatched archive files."""


def config_hash(config: dict) -> str:
    """Stable hash of a JSON-serializable config mapping."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


@dataclass
class WeightArchive:
    """Named float32 tensors with stage/step metadata."""

    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def put(self, name: str, tensor: np.ndarray) -> None:
        self.tensors[name] = np.ascontiguousarray(tensor, dtype=np.float32)

    def get(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def save(self, path: str | Path) -> None:
        index = []
        blobs = []
        offset = 0
        for name in sorted(self.tensors):
            arr = np.ascontiguousarray(self.tensors[name], dtype=np.float32)
            raw = arr.astype("<f4", copy=False).tobytes()
            index.append(
                {
                    "name": name,
                    "shape": list(arr.shape),
                    "offset": offset,
                    "nbytes": len(raw),
                    "crc32": zlib.crc32(raw),
                }
            )
            blobs.append(raw)
            offset += len(raw)
        header = json.dumps({"meta": self.meta, "tensors": index}, sort_keys=True).encode()
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", len(header)))
            f.write(header)
            for raw in blobs:
                f.write(raw)

    @classmethod
    def load(cls, path: str | Path) -> "WeightArchive":
        data = Path(path).read_bytes()
        if len(data) < len(MAGIC) + 4 or data[: len(MAGIC)] != MAGIC:
            raise ArchiveError(f"{path}: not a weight archive")
        header_len = struct.unpack("<I", data[len(MAGIC) : len(MAGIC) + 4])[0]
        header_start = len(MAGIC) + 4
        try:
            header = json.loads(data[header_start : header_start + header_len])
        except json.JSONDecodeError as exc:
            raise ArchiveError(f"{path}: corrupt index: {exc}") from exc
        body = data[header_start + header_len :]
        archive = cls(meta=header.get("meta", {}))
        for entry in header["tensors"]:
            raw = body[entry["offset"] : entry["offset"] + entry["nbytes"]]
            if len(raw) != entry["nbytes"] or zlib.crc32(raw) != entry["crc32"]:
                raise ArchiveError(f"{path}: corrupt tensor {entry['name']!r}")
            arr = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"])
            archive.tensors[entry["name"]] = arr.astype(np.float32, copy=True)
        return archive
