"""Named parameter store and the binary parameter container format.

The container serves both full models and standalone adapter weight files:
a little-endian versioned header {format_version, entry_count} followed by
one record per entry {name, dtype, shape, row-major float64 payload}.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError
from .tensor import Tensor

MAGIC = b"APQP"
FORMAT_VERSION = 1
_DTYPE_F64 = 0


class ParamStore:
    """Ordered map from hierarchical name to Tensor, plus a trainable mask.

    Names are unique and stable across save/load; `trainable_mask` is the
    subset of names that optimizer steps may mutate.
    """

    def __init__(self):
        self._entries: dict[str, Tensor] = {}
        self.trainable_mask: set[str] = set()

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._entries:
            raise ContractError(f"duplicate parameter name: {name!r}")
        self._entries[name] = tensor
        return tensor

    def replace(self, name: str, tensor: Tensor) -> None:
        """Swap the tensor behind an existing name, keeping store order."""
        if name not in self._entries:
            raise ContractError(f"cannot replace unknown parameter: {name!r}")
        if self._entries[name].data.shape != tensor.data.shape:
            raise ContractError(
                f"replace shape mismatch for {name!r}: "
                f"{self._entries[name].data.shape} vs {tensor.data.shape}"
            )
        self._entries[name] = tensor

    def remove(self, name: str) -> None:
        if name not in self._entries:
            raise ContractError(f"cannot remove unknown parameter: {name!r}")
        del self._entries[name]
        self.trainable_mask.discard(name)

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._entries[name]
        except KeyError:
            raise ContractError(f"unknown parameter: {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries.keys())

    def items(self):
        return self._entries.items()

    def names_with_prefix(self, *prefixes: str) -> list[str]:
        return [n for n in self._entries if n.startswith(prefixes)]

    def set_trainable(self, names) -> None:
        names = set(names)
        unknown = names - set(self._entries)
        if unknown:
            raise ContractError(f"trainable mask names not in store: {sorted(unknown)}")
        self.trainable_mask = names
        for name, tensor in self._entries.items():
            tensor.requires_grad = name in names

    def zero_grad(self) -> None:
        for tensor in self._entries.values():
            tensor.grad = None

    def validate_finite(self) -> None:
        for name, tensor in self._entries.items():
            tensor.validate_finite(name)

    def total_size(self, names=None) -> int:
        names = self.names() if names is None else names
        return sum(self._entries[n].data.size for n in names)


def _encode_entry(name: str, data: np.ndarray) -> bytes:
    name_bytes = name.encode("utf-8")
    # asarray, not ascontiguousarray: the latter promotes 0-d to 1-d.
    arr = np.asarray(data, dtype="<f8")
    parts = [struct.pack("<H", len(name_bytes)), name_bytes,
             struct.pack("<BB", _DTYPE_F64, arr.ndim)]
    parts.extend(struct.pack("<I", extent) for extent in arr.shape)
    parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def entry_hash(name: str, data: np.ndarray) -> str:
    """SHA-256 of an entry's serialized bytes; the freeze-check currency."""
    return hashlib.sha256(_encode_entry(name, data)).hexdigest()


def hash_entries(store: ParamStore, names) -> dict[str, str]:
    return {n: entry_hash(n, store[n].data) for n in names}


def save_params(path, entries) -> None:
    """Write a parameter container; `entries` is a ParamStore or name->Tensor map."""
    items = list(entries.items())
    blob = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(items))]
    for name, tensor in items:
        data = tensor.data if isinstance(tensor, Tensor) else np.asarray(tensor)
        blob.append(_encode_entry(name, data))
    Path(path).write_bytes(b"".join(blob))


def load_params(path) -> dict[str, np.ndarray]:
    """Read a parameter container back into an ordered name->array map."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise DataError(f"{path}: not a parameter container (bad magic)")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported container version {version}")
    pos = 12
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos:pos + name_len].decode("utf-8")
        pos += name_len
        dtype_code, ndim = struct.unpack_from("<BB", raw, pos)
        pos += 2
        if dtype_code != _DTYPE_F64:
            raise DataError(f"{path}: unsupported dtype code {dtype_code} for {name!r}")
        shape = struct.unpack_from(f"<{ndim}I", raw, pos) if ndim else ()
        pos += 4 * ndim
        n_bytes = 8 * int(np.prod(shape)) if shape else 8
        arr = np.frombuffer(raw[pos:pos + n_bytes], dtype="<f8").reshape(shape)
        pos += n_bytes
        if name in out:
            raise DataError(f"{path}: duplicate entry {name!r}")
        out[name] = arr.astype(np.float64)
    if pos != len(raw):
        raise DataError(f"{path}: trailing bytes after {count} entries")
    return out


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
