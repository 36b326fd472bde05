"""Reader and writer for the XT5 tensor container.

Layout::

    bytes 0-3     magic 58 54 35 00 ("XT5\\0")
    bytes 4-7     little-endian u32 header length L
    bytes 8..8+L  UTF-8 JSON array of entries
    data section  little-endian float32 payloads, each starting on a
                  64-byte boundary relative to the data section start

A tensor entry is ``{"name", "shape", "dtype": "f32", "offset"}``. An entry
without a ``dtype`` key and carrying a ``"meta"`` object is metadata only.
"""

import json
import os
import struct
import tempfile

import numpy as np

from .errors import FormatError

MAGIC = b"XT5\x00"
ALIGN = 64


def _align(n):
    return (n + ALIGN - 1) // ALIGN * ALIGN


def to_bytes(tensors, meta=None):
    """Serialize a name -> array mapping (plus optional metadata) to bytes.

    Tensors are written in sorted-name order so identical inputs always
    produce identical bytes.
    """
    entries = []
    chunks = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        start = _align(offset)
        if start > offset:
            chunks.append(b"\x00" * (start - offset))
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "f32", "offset": start})
        raw = arr.tobytes()
        chunks.append(raw)
        offset = start + len(raw)
    if meta is not None:
        entries.append({"name": "meta", "meta": meta})
    header = json.dumps(entries, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(header)) + header + b"".join(chunks)


def from_bytes(buf):
    """Parse container bytes into ``(tensors, meta)``."""
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise FormatError("not an XT5 container (bad magic)")
    (hlen,) = struct.unpack("<I", buf[4:8])
    if 8 + hlen > len(buf):
        raise FormatError("truncated XT5 header")
    try:
        entries = json.loads(buf[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable XT5 header: {exc}") from exc
    if not isinstance(entries, list):
        raise FormatError("XT5 header must be a JSON array")
    data = memoryview(buf)[8 + hlen:]
    tensors = {}
    meta = None
    for e in entries:
        if "dtype" not in e:
            if e.get("name") == "meta" and "meta" in e:
                meta = e["meta"]
                continue
            raise FormatError(f"XT5 entry without dtype: {e}")
        if e["dtype"] != "f32":
            raise FormatError(f"unsupported dtype {e['dtype']!r} for tensor {e.get('name')!r}")
        shape = tuple(int(s) for s in e["shape"])
        off = int(e["offset"])
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        if off % ALIGN or off + nbytes > len(data):
            raise FormatError(f"tensor {e['name']!r} is misaligned or truncated")
        if e["name"] in tensors:
            raise FormatError(f"duplicate tensor name {e['name']!r}")
        arr = np.frombuffer(data[off:off + nbytes], dtype="<f4").reshape(shape)
        tensors[e["name"]] = arr.astype(np.float32)
    return tensors, meta


def atomic_write(path, payload):
    """Write bytes to ``path`` through a temp file and rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(path, tensors, meta=None):
    atomic_write(path, to_bytes(tensors, meta))


def load(path):
    with open(path, "rb") as f:
        return from_bytes(f.read())
