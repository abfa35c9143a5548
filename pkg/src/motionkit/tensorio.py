"""Bit-exact tensor container I/O and validation.

Every tensor (attention matrices, motion fields, feature grids, masks)
enters and leaves the toolkit through one small binary container format:

    bytes 0-3    ASCII magic ``MAFT``
    bytes 4-7    format version (1), unsigned 32-bit little-endian
    bytes 8-15   header length L, unsigned 64-bit little-endian
    bytes 16..   UTF-8 JSON array of {"name","dtype","shape","offset","nbytes"}
    remainder    raw row-major little-endian payloads, each starting at an
                 offset (relative to the end of the header) that is a
                 multiple of 64, zero padding in between

Payloads are float32 or uint8 only. Files are written atomically
(temp file + rename) and reading back a written container yields
byte-identical payloads in the original record order.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"MAFT"
VERSION = 1
ALIGNMENT = 64

# dtype name -> (numpy little-endian dtype, item size)
_DTYPES = {"float32": np.dtype("<f4"), "uint8": np.dtype("u1")}


class TensorIOError(Exception):
    """Base class for all container/record failures."""


class ContainerFormatError(TensorIOError):
    """The byte stream is not a well-formed container."""


class BadMagicError(ContainerFormatError):
    pass


class UnsupportedVersionError(ContainerFormatError):
    pass


class TruncatedFileError(ContainerFormatError):
    pass


class HeaderError(ContainerFormatError):
    """Malformed or internally inconsistent header."""


class RecordError(TensorIOError):
    """A record violates its invariants (dtype, finiteness, duplicate name)."""


class AttentionValidationError(TensorIOError):
    """An attention record fails validation against its grid shape."""


@dataclass(frozen=True)
class GridShape:
    """Latent grid dimensions: frame count and spatial extent."""

    f: int
    h: int
    w: int

    def __post_init__(self):
        for name in ("f", "h", "w"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.tokens > 0xFFFFFFFF:
            raise ValueError(f"token count {self.tokens} exceeds uint32 range")

    @property
    def pixels(self) -> int:
        return self.h * self.w

    @property
    def tokens(self) -> int:
        return self.f * self.h * self.w


@dataclass
class TensorRecord:
    """A named tensor payload. dtype is restricted to float32 / uint8."""

    name: str
    data: np.ndarray = field(repr=False)

    def validate(self):
        if not isinstance(self.name, str) or not self.name:
            raise RecordError(f"record name must be a non-empty string, got {self.name!r}")
        dtype_name = self.dtype
        if dtype_name not in _DTYPES:
            raise RecordError(f"record {self.name!r}: unsupported dtype {self.data.dtype}")
        if self.data.ndim < 1 or any(d < 1 for d in self.data.shape):
            raise RecordError(f"record {self.name!r}: shape {self.data.shape} has non-positive dims")
        if dtype_name == "float32" and not np.isfinite(self.data).all():
            raise RecordError(f"record {self.name!r}: non-finite float values")

    @property
    def dtype(self) -> str:
        kind = self.data.dtype
        if kind == np.float32:
            return "float32"
        if kind == np.uint8:
            return "uint8"
        return str(kind)

    def payload(self) -> bytes:
        return np.ascontiguousarray(self.data, dtype=_DTYPES[self.dtype]).tobytes()


def float_record(name: str, values) -> TensorRecord:
    return TensorRecord(name, np.asarray(values, dtype=np.float32))


def byte_record(name: str, values) -> TensorRecord:
    return TensorRecord(name, np.asarray(values, dtype=np.uint8))


def _align(n: int) -> int:
    return (n + ALIGNMENT - 1) // ALIGNMENT * ALIGNMENT


def write_container(path, records: list[TensorRecord]):
    """Write records to ``path`` atomically. Rejects invalid records up front."""
    seen = set()
    payloads = []
    entries = []
    offset = 0
    for rec in records:
        rec.validate()
        if rec.name in seen:
            raise RecordError(f"duplicate record name {rec.name!r}")
        seen.add(rec.name)
        blob = rec.payload()
        entries.append(
            {
                "name": rec.name,
                "dtype": rec.dtype,
                "shape": [int(d) for d in rec.data.shape],
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        payloads.append((offset, blob))
        offset = _align(offset + len(blob))

    header = json.dumps(entries, separators=(",", ":")).encode("utf-8")
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".maft-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(VERSION.to_bytes(4, "little"))
            fh.write(len(header).to_bytes(8, "little"))
            fh.write(header)
            cursor = 0
            for off, blob in payloads:
                if off > cursor:
                    fh.write(b"\x00" * (off - cursor))
                fh.write(blob)
                cursor = off + len(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_container(path) -> list[TensorRecord]:
    """Read and fully validate a container; returns records in written order."""
    with open(path, "rb") as fh:
        raw = fh.read()
    return parse_container(raw)


def parse_container(raw: bytes) -> list[TensorRecord]:
    if raw[:4] != MAGIC:
        raise BadMagicError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < 16:
        raise TruncatedFileError("file ends inside the fixed header")
    version = int.from_bytes(raw[4:8], "little")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported container version {version}")
    header_len = int.from_bytes(raw[8:16], "little")
    if len(raw) < 16 + header_len:
        raise TruncatedFileError("file ends inside the JSON header")
    try:
        entries = json.loads(raw[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError(f"header is not valid JSON: {exc}") from exc
    if not isinstance(entries, list):
        raise HeaderError("header must be a JSON array")

    base = 16 + header_len
    records = []
    names = set()
    extent = 0
    for entry in entries:
        if not isinstance(entry, dict):
            raise HeaderError("header entries must be objects")
        try:
            name = entry["name"]
            dtype = entry["dtype"]
            shape = entry["shape"]
            offset = entry["offset"]
            nbytes = entry["nbytes"]
        except KeyError as exc:
            raise HeaderError(f"header entry missing field {exc}") from exc
        if dtype not in _DTYPES:
            raise HeaderError(f"record {name!r}: unknown dtype {dtype!r}")
        if (
            not isinstance(shape, list)
            or not shape
            or not all(isinstance(d, int) and d >= 1 for d in shape)
        ):
            raise HeaderError(f"record {name!r}: bad shape {shape!r}")
        if not isinstance(offset, int) or offset < 0 or offset % ALIGNMENT != 0:
            raise HeaderError(f"record {name!r}: offset {offset!r} not 64-byte aligned")
        expected = math.prod(shape) * _DTYPES[dtype].itemsize
        if nbytes != expected:
            raise HeaderError(
                f"record {name!r}: nbytes {nbytes} does not match shape {shape} ({expected})"
            )
        if base + offset + nbytes > len(raw):
            raise TruncatedFileError(f"record {name!r}: payload extends past end of file")
        if name in names:
            raise RecordError(f"duplicate record name {name!r}")
        names.add(name)
        blob = raw[base + offset : base + offset + nbytes]
        data = np.frombuffer(blob, dtype=_DTYPES[dtype]).reshape(shape).copy()
        rec = TensorRecord(name, data)
        rec.validate()
        records.append(rec)
        extent = max(extent, offset + nbytes)
    tail = raw[base + extent :]
    if len(tail) >= ALIGNMENT or tail.strip(b"\x00"):
        raise HeaderError("trailing bytes after the last payload")
    return records


def records_by_name(records: list[TensorRecord]) -> dict[str, TensorRecord]:
    return {rec.name: rec for rec in records}


def require_record(records: list[TensorRecord], name: str) -> TensorRecord:
    for rec in records:
        if rec.name == name:
            return rec
    raise RecordError(f"required record {name!r} is missing")


def validate_attention(record: TensorRecord, shape: GridShape):
    """Check an attention record: square over f*h*w tokens, nonnegative,
    finite, every row strictly positive. Row sums need not equal 1 (text-token
    mass is removed upstream), but an all-zero row has no usable matches."""
    if record.dtype != "float32":
        raise AttentionValidationError(f"attention must be float32, got {record.dtype}")
    n = shape.tokens
    if record.data.shape != (n, n):
        raise AttentionValidationError(
            f"attention shape {record.data.shape} does not match ({n}, {n}) for grid {shape}"
        )
    a = record.data
    if not np.isfinite(a).all():
        raise AttentionValidationError("attention contains non-finite entries")
    if (a < 0).any():
        raise AttentionValidationError("attention contains negative entries")
    row_sums = a.sum(axis=1)
    if (row_sums <= 0).any():
        bad = int(np.argmax(row_sums <= 0))
        raise AttentionValidationError(f"attention row {bad} sums to zero")


# Canonical record names shared across modules and the CLI.

META_SHAPE = "meta_shape"
ATTENTION = "attention"
FLOW_GT = "flow_gt"
MOTION_ALIGNED = "motion_aligned"
MOTION_FINAL = "motion_final"
FEATURES_REF = "features_ref"
FEATURES_TGT = "features_tgt"
MASK_REF = "mask_ref"
MASK_TGT = "mask_tgt"
CORRESPONDENCE = "correspondence"
CORRESPONDENCE_METHOD = "correspondence_method"
ATTENTION_LOGITS = "attention_logits"


def pair_name(i: int, j: int) -> str:
    return f"motion_pair/{i}_{j}"


def parse_pair_name(name: str):
    """Return (i, j) for a ``motion_pair/<i>_<j>`` record name, else None."""
    if not name.startswith("motion_pair/"):
        return None
    body = name[len("motion_pair/") :]
    parts = body.split("_")
    if len(parts) != 2:
        return None
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        return None


def sweep_name(t: int, b: int) -> str:
    return f"sweep/{t}_{b}"


def parse_sweep_name(name: str):
    if not name.startswith("sweep/"):
        return None
    parts = name[len("sweep/") :].split("_")
    if len(parts) != 2:
        return None
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        return None


def meta_shape_record(shape: GridShape) -> TensorRecord:
    return float_record(META_SHAPE, [shape.f, shape.h, shape.w])


def parse_meta_shape(record: TensorRecord) -> GridShape:
    values = record.data.reshape(-1)
    if values.shape != (3,):
        raise RecordError(f"meta_shape must hold exactly 3 values, got shape {record.data.shape}")
    dims = []
    for v in values:
        if float(v) != int(v) or int(v) < 1:
            raise RecordError(f"meta_shape entries must be positive integers, got {values}")
        dims.append(int(v))
    return GridShape(*dims)
