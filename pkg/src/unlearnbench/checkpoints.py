"""Binary serialization of models and update logs.

Both file kinds share the same header: magic ``UNLB``, format version
(u16), layer count (u16), then one u32 per layer size. All integers and
floats are little-endian. A checkpoint continues with the flat parameter
vector as f32. An update-log file continues with a sequence of records,
each ``epoch u32, batch u32, index count u32, indices u32 each, delta
f32[|params|]``, appended as training progresses so the file never has to
be memory-resident (a full MNIST-scale log is several GB).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np

from .errors import DataFormatError
from .nn import Architecture, ModelParameters, UpdateLog, UpdateRecord

MAGIC = b"UNLB"
FORMAT_VERSION = 1

_F32 = np.dtype("<f4")
_U32 = np.dtype("<u4")


def _write_header(f: BinaryIO, arch: Architecture) -> None:
    f.write(MAGIC)
    f.write(struct.pack("<HH", FORMAT_VERSION, len(arch.layer_sizes)))
    f.write(struct.pack(f"<{len(arch.layer_sizes)}I", *arch.layer_sizes))


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise DataFormatError(f"truncated file: expected {n} bytes for {what}")
    return buf


def _read_header(f: BinaryIO) -> Architecture:
    magic = _read_exact(f, 4, "magic")
    if magic != MAGIC:
        raise DataFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, layer_count = struct.unpack("<HH", _read_exact(f, 4, "version/layer count"))
    if version != FORMAT_VERSION:
        raise DataFormatError(f"unsupported format version {version}")
    sizes = struct.unpack(f"<{layer_count}I", _read_exact(f, 4 * layer_count, "layer sizes"))
    return Architecture(sizes)


def save_checkpoint(path: str | Path, model: ModelParameters) -> None:
    with open(path, "wb") as f:
        _write_header(f, model.arch)
        f.write(model.params.astype(_F32, copy=False).tobytes())


def load_checkpoint(path: str | Path) -> ModelParameters:
    with open(path, "rb") as f:
        arch = _read_header(f)
        raw = _read_exact(f, 4 * arch.param_count, "parameters")
        if f.read(1):
            raise DataFormatError("trailing bytes after parameter vector")
    params = np.frombuffer(raw, dtype=_F32).copy()
    return ModelParameters(arch, params)


class UpdateLogWriter:
    """Streams update records to disk; usable as an ``update_sink``."""

    def __init__(self, path: str | Path, arch: Architecture):
        self.path = Path(path)
        self.param_count = arch.param_count
        self._f = open(self.path, "wb")
        _write_header(self._f, arch)

    def append(self, epoch: int, batch: int, sample_indices: np.ndarray, delta: np.ndarray) -> None:
        if delta.size != self.param_count:
            raise ValueError(f"delta has length {delta.size}, expected {self.param_count}")
        indices = np.asarray(sample_indices, dtype=_U32)
        self._f.write(struct.pack("<III", epoch, batch, indices.size))
        self._f.write(indices.tobytes())
        self._f.write(delta.astype(_F32, copy=False).tobytes())

    def close(self) -> None:
        self._f.close()

    def __enter__(self) -> "UpdateLogWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def save_update_log(path: str | Path, arch: Architecture, log: UpdateLog) -> None:
    with UpdateLogWriter(path, arch) as w:
        for rec in log.records():
            w.append(rec.epoch, rec.batch, rec.sample_indices, rec.delta)


@dataclass
class StoredUpdateRecord:
    """Record metadata held in memory; the delta is read from disk on access."""

    epoch: int
    batch: int
    sample_indices: np.ndarray
    consumed: bool
    _log: "StoredUpdateLog"
    _offset: int

    @property
    def delta(self) -> np.ndarray:
        return self._log._read_delta(self._offset)


class StoredUpdateLog:
    """Read-side view of an update-log file.

    Scans the record layout once at open time; deltas stay on disk and are
    loaded one at a time, so arbitrarily long logs can be consumed in
    constant memory. Consumed flags live in memory only.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._f = open(self.path, "rb")
        self.arch = _read_header(self._f)
        self._delta_bytes = 4 * self.arch.param_count
        self._records: list[StoredUpdateRecord] = []
        while True:
            head = self._f.read(12)
            if not head:
                break
            if len(head) != 12:
                raise DataFormatError("truncated update-log record header")
            epoch, batch, count = struct.unpack("<III", head)
            indices = np.frombuffer(_read_exact(self._f, 4 * count, "sample indices"), dtype=_U32)
            offset = self._f.tell()
            self._f.seek(self._delta_bytes, 1)
            if self._f.tell() != offset + self._delta_bytes:
                raise DataFormatError("truncated update-log delta")
            self._records.append(StoredUpdateRecord(epoch, batch, indices, False, self, offset))
        end = self._f.seek(0, 2)
        if self._records and end != self._records[-1]._offset + self._delta_bytes:
            raise DataFormatError("truncated update-log delta")

    def _read_delta(self, offset: int) -> np.ndarray:
        self._f.seek(offset)
        return np.frombuffer(_read_exact(self._f, self._delta_bytes, "delta"), dtype=_F32)

    def __len__(self) -> int:
        return len(self._records)

    def records(self) -> Iterator[StoredUpdateRecord]:
        return iter(self._records)

    def reset_consumed(self) -> None:
        for rec in self._records:
            rec.consumed = False

    def close(self) -> None:
        self._f.close()

    def __enter__(self) -> "StoredUpdateLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def load_update_log(path: str | Path) -> tuple[Architecture, UpdateLog]:
    """Fully materialize an update-log file (small logs only)."""
    with StoredUpdateLog(path) as stored:
        log = UpdateLog(
            [
                UpdateRecord(r.epoch, r.batch, r.sample_indices.copy(), r.delta.copy())
                for r in stored.records()
            ]
        )
        return stored.arch, log
