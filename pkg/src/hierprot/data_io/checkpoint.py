"""Binary key→tensor checkpoints and embedding matrices.

Checkpoint layout (all integers little-endian)::

    magic     8 bytes  b"HPCKPT\\0\\0"
    version   u32      1 or 2
    [v2]      u32 length + UTF-8 JSON metadata
    count     u32
    entries   count × (u16 name length, name, u8 ndim, ndim × u64 dims, float64 data)
    crc32     u32      over every preceding byte

Embedding files: magic b"HPEMB\\0\\0\\0", u32 version (1), u64 rows, u64 cols,
then row-major float32 data. CSV (one row per line, comma separated) is
accepted as a fallback.
"""

import io
import json
import struct
import zlib

import numpy as np

from ..errors import CorruptFile, VersionMismatch

CKPT_MAGIC = b"HPCKPT\0\0"
CKPT_VERSION = 2
SUPPORTED_CKPT_VERSIONS = (1, 2)
EMB_MAGIC = b"HPEMB\0\0\0"
EMB_VERSION = 1


def dumps_checkpoint(tensors, metadata=None, version=CKPT_VERSION):
    if version not in SUPPORTED_CKPT_VERSIONS:
        raise VersionMismatch(f"cannot write checkpoint version {version}")
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC)
    buf.write(struct.pack("<I", version))
    if version >= 2:
        meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
        buf.write(struct.pack("<I", len(meta)))
        buf.write(meta)
    buf.write(struct.pack("<I", len(tensors)))
    for name, value in tensors.items():
        arr = np.array(value, dtype="<f8", order="C")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<HB", len(raw), arr.ndim))
        buf.write(raw)
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data):
        self.data, self.pos = data, 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CorruptFile("checkpoint truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads_checkpoint(data):
    """Parse checkpoint bytes into ``(tensors, metadata)``."""
    if len(data) < len(CKPT_MAGIC) + 8:
        raise CorruptFile("checkpoint truncated")
    if data[:8] != CKPT_MAGIC:
        raise CorruptFile("bad checkpoint magic")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    r = _Reader(body)
    r.take(8)
    (version,) = r.unpack("<I")
    if version not in SUPPORTED_CKPT_VERSIONS:
        raise VersionMismatch(f"checkpoint version {version} unsupported")
    if zlib.crc32(body) != crc:
        raise CorruptFile("checkpoint checksum mismatch")
    metadata = {}
    if version >= 2:
        (n,) = r.unpack("<I")
        try:
            metadata = json.loads(r.take(n).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise CorruptFile("bad checkpoint metadata") from None
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        name_len, ndim = r.unpack("<HB")
        name = r.take(name_len).decode("utf-8", errors="strict")
        shape = r.unpack(f"<{ndim}Q")
        size = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(r.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(body):
        raise CorruptFile("trailing bytes in checkpoint")
    return tensors, metadata


def save_checkpoint(path, tensors, metadata=None, version=CKPT_VERSION):
    with open(path, "wb") as fh:
        fh.write(dumps_checkpoint(tensors, metadata, version))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return loads_checkpoint(fh.read())


def dumps_embeddings(matrix):
    arr = np.ascontiguousarray(matrix, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("embeddings must be a 2-D matrix")
    return EMB_MAGIC + struct.pack("<IQQ", EMB_VERSION, *arr.shape) + arr.tobytes()


def loads_embeddings(data):
    if data[:8] != EMB_MAGIC:
        raise CorruptFile("bad embedding magic")
    if len(data) < 28:
        raise CorruptFile("embedding header truncated")
    version, n, d = struct.unpack("<IQQ", data[8:28])
    if version != EMB_VERSION:
        raise VersionMismatch(f"embedding version {version} unsupported")
    payload = data[28:]
    if len(payload) != 4 * n * d:
        raise CorruptFile(f"expected {4 * n * d} payload bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype="<f4").reshape(n, d).astype(np.float64)


def save_embeddings(path, matrix):
    with open(path, "wb") as fh:
        fh.write(dumps_embeddings(matrix))


def load_embeddings(path):
    """Binary embedding file, or CSV when the magic is absent."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] == EMB_MAGIC:
        return loads_embeddings(data)
    try:
        rows = [[float(x) for x in line.split(",")]
                for line in data.decode("utf-8").splitlines() if line.strip()]
    except (UnicodeDecodeError, ValueError) as exc:
        raise CorruptFile(f"unreadable embedding CSV: {exc}") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise CorruptFile("embedding CSV rows must be nonempty and equal length")
    return np.array(rows, dtype=np.float64)
