"""Weight store, seeded initialisation and the ``.lmdw`` binary format.

Layout (all little-endian)::

    b"LMDW"  u32 version=1  u32 entry_count
    per entry:
        u16 name_len, name (utf-8), u8 role, u8 rank, u32 dims[rank],
        f32 payload[prod(dims)]
"""
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, FormatError
from .graph import expected_tensors

MAGIC = b"LMDW"
VERSION = 1
ROLES = ("weight", "bias", "gamma", "beta", "mean", "var")
ROLE_CODES = {name: code for code, name in enumerate(ROLES)}

_LE_F32 = np.dtype("<f4")


@dataclass(frozen=True)
class WeightEntry:
    layer: str
    role: str
    data: np.ndarray


class WeightStore:
    """Ordered, read-only collection of named parameter tensors."""

    def __init__(self, entries):
        self.entries = tuple(
            WeightEntry(e.layer, e.role, np.array(e.data, dtype=np.float32)) for e in entries
        )
        self._index = {}
        for e in self.entries:
            if e.role not in ROLE_CODES:
                raise ContractError(f"{e.layer}: unknown role {e.role!r}")
            key = (e.layer, e.role)
            if key in self._index:
                raise ContractError(f"duplicate tensor {e.layer}/{e.role}")
            e.data.setflags(write=False)
            self._index[key] = e.data

    def get(self, layer, role):
        try:
            return self._index[layer, role]
        except KeyError:
            raise ContractError(f"layer {layer}: missing {role} tensor") from None

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        if not isinstance(other, WeightStore):
            return NotImplemented
        return len(self) == len(other) and all(
            a.layer == b.layer and a.role == b.role and a.data.shape == b.data.shape
            and a.data.tobytes() == b.data.tobytes()
            for a, b in zip(self.entries, other.entries)
        )


def random_init(net, seed):
    """Fan-in uniform conv weights; zero biases; identity batch-norm statistics."""
    rng = np.random.default_rng(seed)
    fills = {"bias": 0.0, "gamma": 1.0, "beta": 0.0, "mean": 0.0, "var": 1.0}
    entries = []
    for layer, role, shape in expected_tensors(net):
        if role == "weight":
            bound = math.sqrt(6.0 / (9 * shape[1]))
            data = rng.uniform(-bound, bound, size=shape).astype(np.float32)
        else:
            data = np.full(shape, fills[role], dtype=np.float32)
        entries.append(WeightEntry(layer, role, data))
    return WeightStore(entries)


def check_store(store, net):
    """Raise ContractError unless ``store`` holds exactly the tensors ``net`` needs."""
    want = expected_tensors(net)
    have = [(e.layer, e.role) for e in store.entries]
    for layer, role, shape in want:
        data = store.get(layer, role)
        if tuple(data.shape) != tuple(shape):
            raise ContractError(
                f"layer {layer}: {role} has shape {tuple(data.shape)}, expected {tuple(shape)}"
            )
    if have != [(layer, role) for layer, role, _ in want]:
        extra = sorted(set(have) - {(layer, role) for layer, role, _ in want})
        if extra:
            raise ContractError(f"unexpected tensor {extra[0][0]}/{extra[0][1]}")
        raise ContractError("tensor order does not match the network layer order")


def encode(store):
    parts = [MAGIC, struct.pack("<II", VERSION, len(store))]
    for e in store.entries:
        name = e.layer.encode("utf-8")
        shape = e.data.shape
        parts.append(struct.pack("<H", len(name)))
        parts.append(name)
        parts.append(struct.pack(f"<BB{len(shape)}I", ROLE_CODES[e.role], len(shape), *shape))
        parts.append(np.ascontiguousarray(e.data, dtype=_LE_F32).tobytes())
    return b"".join(parts)


def encoded_size(net):
    """Exact byte size of a saved store for ``net``."""
    size = len(MAGIC) + 8
    for layer, _, shape in expected_tensors(net):
        size += 2 + len(layer.encode("utf-8")) + 2 + 4 * len(shape) + 4 * math.prod(shape)
    return size


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated file: {what} needs {n} bytes at offset {self.pos}")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode(buf):
    r = _Reader(buf)
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise FormatError("bad magic: not an .lmdw weight file")
    r.pos = 4
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise FormatError(f"version mismatch: file has version {version}, expected {VERSION}")
    (count,) = r.unpack("<I", "entry count")
    entries = []
    for k in range(count):
        (name_len,) = r.unpack("<H", f"entry {k} name length")
        try:
            name = r.take(name_len, f"entry {k} name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"entry {k}: name is not valid utf-8") from exc
        role_code, rank = r.unpack("<BB", f"entry {k} header")
        if role_code >= len(ROLES):
            raise FormatError(f"entry {k} ({name}): unknown role code {role_code}")
        shape = r.unpack(f"<{rank}I", f"entry {k} dims")
        n = math.prod(shape)
        payload = r.take(4 * n, f"entry {k} ({name}) payload")
        data = np.frombuffer(payload, dtype=_LE_F32).astype(np.float32).reshape(shape)
        entries.append(WeightEntry(name, ROLES[role_code], data))
    if r.pos != len(buf):
        raise FormatError(f"trailing garbage: {len(buf) - r.pos} bytes after last entry")
    return WeightStore(entries)


def save(store, path):
    with open(path, "wb") as fh:
        fh.write(encode(store))


def load(path, net=None):
    with open(path, "rb") as fh:
        store = decode(fh.read())
    if net is not None:
        check_store(store, net)
    return store
