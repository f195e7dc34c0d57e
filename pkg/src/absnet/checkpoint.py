"""Binary checkpoint files.

Layout::

    b"ABSNET01"                      8-byte magic
    uint32 little-endian             length of the JSON header in bytes
    JSON header (utf-8)              arch, activation, tensors [{name, shape, dtype}], metadata
    raw little-endian float32 data   tensors concatenated in header order
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import models
from .nn import Network

MAGIC = b"ABSNET01"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<f4")


class CheckpointError(IOError):
    """Corrupt, truncated or foreign checkpoint file."""


@dataclass
class Checkpoint:
    arch: str
    activation: str | None
    tensors: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)


def save_checkpoint(net: Network, path, metadata: dict | None = None) -> Path:
    path = Path(path)
    params = net.parameters()
    header = {
        "format_version": FORMAT_VERSION,
        "arch": net.name,
        "activation": net.activation,
        "tensors": [{"name": k, "shape": list(v.shape), "dtype": _DTYPE.str} for k, v in params.items()],
        "metadata": metadata or {},
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(head)))
        f.write(head)
        for v in params.values():
            f.write(np.ascontiguousarray(v, dtype=_DTYPE).tobytes())
    os.replace(tmp, path)
    return path


def read_checkpoint(path) -> Checkpoint:
    blob = Path(path).read_bytes()
    if len(blob) < 12 or blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: not an absnet checkpoint (bad magic)")
    (hlen,) = struct.unpack("<I", blob[8:12])
    if 12 + hlen > len(blob):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {header.get('format_version')}")

    tensors, offset = {}, 12 + hlen
    for spec in header["tensors"]:
        shape = tuple(spec["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * _DTYPE.itemsize
        if offset + nbytes > len(blob):
            raise CheckpointError(f"{path}: truncated payload at tensor {spec['name']}")
        tensors[spec["name"]] = np.frombuffer(blob, _DTYPE, count=nbytes // 4, offset=offset).reshape(shape).astype(np.float32)
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes after payload")
    return Checkpoint(header["arch"], header.get("activation"), tensors, header.get("metadata", {}))


def load_checkpoint(path, net: Network | None = None) -> Network:
    """Load parameters into ``net``, or into a freshly built copy of the stored architecture.

    Raises :class:`absnet.nn.ShapeError` when the stored tensors do not fit ``net``.
    """
    ckpt = read_checkpoint(path)
    if net is None:
        net = models.build(ckpt.arch, ckpt.activation or "abs")
    net.load_state_dict(ckpt.tensors)
    return net
