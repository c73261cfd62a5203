"""Capture a kernel launch — definition, problem size, and full argument
payloads — into a self-contained file so tuning can replay it offline.

Container layout (all integers little-endian)::

    bytes 0..5    magic "KLCAP1"
    bytes 6..9    format version (u32)
    bytes 10..17  metadata length in bytes (u64)
    ...           canonical-JSON metadata block (sorted keys, UTF-8)
    ...           zero padding to the next 64-byte boundary
    ...           raw buffer payloads, each starting 64-byte aligned

Buffer offsets recorded in the metadata are relative to the payload base
(the first 64-byte boundary at or after the metadata block), which keeps the
writer single-pass. Payload integrity is guarded by CRC-32 (polynomial
0xEDB88320, i.e. plain ``zlib.crc32``).
"""

from __future__ import annotations

import json
import os
import struct
import threading
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from .kerneldef import KernelDefinition, ProblemSize
from .util import atomic_write_bytes, canonical_dumps

MAGIC = b"KLCAP1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<6sIQ")
_ALIGN = 64
_MAX_METADATA = 64 * 1024

CAPTURE_ENV = "KERNEL_LAUNCHER_CAPTURE"
CAPTURE_DIR_ENV = "KERNEL_LAUNCHER_CAPTURE_DIR"

ELEMENT_SIZES = {
    "f32": 4,
    "f64": 8,
    "i8": 1,
    "i16": 2,
    "i32": 4,
    "i64": 8,
    "u8": 1,
    "u16": 2,
    "u32": 4,
    "u64": 8,
}

_INTEGRAL_TYPES = {"i8", "i16", "i32", "i64", "u8", "u16", "u32", "u64"}


class CaptureFormatError(Exception):
    pass


@dataclass(frozen=True)
class ScalarArg:
    """A scalar kernel argument at its position in the launch signature."""

    position: int
    dtype: str
    value: int | float

    def __post_init__(self) -> None:
        if self.dtype not in ELEMENT_SIZES:
            raise CaptureFormatError(f"unknown scalar dtype '{self.dtype}'")


@dataclass(frozen=True)
class BufferArg:
    """A device-buffer argument; ``data`` holds the pre-launch contents."""

    position: int
    role: str  # "input" | "output"
    element_type: str
    data: bytes

    def __post_init__(self) -> None:
        if self.role not in ("input", "output"):
            raise CaptureFormatError(f"buffer role must be input/output, got '{self.role}'")
        size = ELEMENT_SIZES.get(self.element_type)
        if size is None:
            raise CaptureFormatError(f"unknown element type '{self.element_type}'")
        if len(self.data) % size != 0:
            raise CaptureFormatError(
                f"payload length {len(self.data)} is not a multiple of "
                f"{self.element_type} size {size}"
            )

    @property
    def element_count(self) -> int:
        return len(self.data) // ELEMENT_SIZES[self.element_type]


@dataclass
class Capture:
    """Everything needed to replay one kernel launch."""

    definition: KernelDefinition
    problem: ProblemSize
    scalars: list[ScalarArg] = field(default_factory=list)
    buffers: list[BufferArg] = field(default_factory=list)
    application: str = ""
    timestamp: str = ""

    def scalar_env(self) -> dict[str, int]:
        """argN bindings for expression evaluation (integral scalars only)."""
        return {
            f"arg{s.position}": int(s.value)
            for s in self.scalars
            if s.dtype in _INTEGRAL_TYPES
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Capture):
            return NotImplemented
        return (
            self.definition.to_json_obj(embed_source=True)
            == other.definition.to_json_obj(embed_source=True)
            and self.problem == other.problem
            and self.scalars == other.scalars
            and self.buffers == other.buffers
            and self.application == other.application
            and self.timestamp == other.timestamp
        )


def scalar_env_from_args(args: Sequence["ScalarArg | BufferArg"]) -> dict[str, int]:
    """argN bindings from a launch argument list (integral scalars only)."""
    return {
        f"arg{a.position}": int(a.value)
        for a in args
        if isinstance(a, ScalarArg) and a.dtype in _INTEGRAL_TYPES
    }


def capture_from_args(
    definition: KernelDefinition,
    args: Sequence[ScalarArg | BufferArg],
    application: str = "",
    timestamp: str = "",
) -> Capture:
    """Build a Capture from a launch argument list, deriving the problem size."""
    scalars = [a for a in args if isinstance(a, ScalarArg)]
    buffers = [a for a in args if isinstance(a, BufferArg)]
    problem = definition.derive_problem_size(scalar_env_from_args(args))
    return Capture(
        definition=definition,
        problem=problem,
        scalars=scalars,
        buffers=buffers,
        application=application,
        timestamp=timestamp,
    )


# ---------------------------------------------------------------------------
# Capture policy (env-var driven)


@dataclass(frozen=True)
class CapturePolicy:
    """Which kernels to capture and where to write the files."""

    names: frozenset[str] = frozenset()
    directory: str = "."

    @classmethod
    def from_env(cls, environ: Mapping[str, str] | None = None) -> "CapturePolicy":
        env = os.environ if environ is None else environ
        raw = env.get(CAPTURE_ENV, "")
        names = frozenset(n.strip() for n in raw.split(",") if n.strip())
        return cls(names=names, directory=env.get(CAPTURE_DIR_ENV, "."))


def should_capture(policy: CapturePolicy, kernel_name: str) -> bool:
    """Exact, case-sensitive name match against the policy set."""
    return kernel_name in policy.names


class CaptureSession:
    """Tracks which (kernel, problem size) pairs were already captured so a
    matching launch is captured once, not on every call."""

    def __init__(self, policy: CapturePolicy) -> None:
        self.policy = policy
        self._seen: set[tuple[str, ProblemSize]] = set()
        self._lock = threading.Lock()

    def maybe_capture(
        self,
        definition: KernelDefinition,
        args: Sequence[ScalarArg | BufferArg],
        *,
        application: str = "",
        timestamp: str = "",
    ) -> Path | None:
        """Write a capture file if the policy matches and this (kernel,
        problem size) has not been captured yet. Returns the path or None."""
        if not should_capture(self.policy, definition.name):
            return None
        cap = capture_from_args(definition, args, application, timestamp)
        key = (definition.name, cap.problem)
        with self._lock:
            if key in self._seen:
                return None
            self._seen.add(key)
        stem = f"{definition.name}_{'x'.join(str(c) for c in cap.problem)}"
        path = Path(self.policy.directory) / f"{stem}.klcap"
        write_capture(cap, path)
        return path


# ---------------------------------------------------------------------------
# Container I/O


def _align_up(n: int) -> int:
    return (n + _ALIGN - 1) // _ALIGN * _ALIGN


def _metadata_obj(cap: Capture) -> dict:
    offset = 0
    buffers = []
    for b in cap.buffers:
        offset = _align_up(offset)
        buffers.append(
            {
                "position": b.position,
                "role": b.role,
                "element_type": b.element_type,
                "element_count": b.element_count,
                "byte_length": len(b.data),
                "crc32": zlib.crc32(b.data) & 0xFFFFFFFF,
                "offset": offset,
            }
        )
        offset += len(b.data)
    return {
        "format_version": FORMAT_VERSION,
        "application": cap.application,
        "timestamp": cap.timestamp,
        "definition": cap.definition.to_json_obj(embed_source=True),
        "problem": list(cap.problem),
        "scalars": [
            {"position": s.position, "dtype": s.dtype, "value": s.value}
            for s in cap.scalars
        ],
        "buffers": buffers,
    }


def serialize_capture(cap: Capture) -> bytes:
    meta = canonical_dumps(_metadata_obj(cap)).encode("utf-8")
    if len(meta) >= _MAX_METADATA:
        raise CaptureFormatError(
            f"metadata block is {len(meta)} bytes; the format caps it at 64 KiB"
        )
    out = bytearray(_HEADER.pack(MAGIC, FORMAT_VERSION, len(meta)))
    out += meta
    payload_base = _align_up(len(out))
    out += b"\0" * (payload_base - len(out))
    offset = 0
    for b in cap.buffers:
        aligned = _align_up(offset)
        out += b"\0" * (aligned - offset)
        out += b.data
        offset = aligned + len(b.data)
    return bytes(out)


def write_capture(cap: Capture, path: str | Path) -> None:
    atomic_write_bytes(path, serialize_capture(cap))


def _read_metadata(path: str | Path) -> tuple[dict, int]:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise CaptureFormatError(f"{path}: truncated header")
        magic, version, meta_len = _HEADER.unpack(header)
        if magic != MAGIC:
            raise CaptureFormatError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise CaptureFormatError(f"{path}: unsupported format version {version}")
        meta = fh.read(meta_len)
        if len(meta) < meta_len:
            raise CaptureFormatError(f"{path}: truncated metadata block")
    try:
        return json.loads(meta.decode("utf-8")), meta_len
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CaptureFormatError(f"{path}: corrupt metadata: {e}") from e


def read_capture_info(path: str | Path) -> dict:
    """Parse only the metadata block (cheap: no payloads, no checksums)."""
    return _read_metadata(path)[0]


def read_capture(path: str | Path) -> Capture:
    info, meta_len = _read_metadata(path)
    payload_base = _align_up(_HEADER.size + meta_len)
    buffers = []
    with open(path, "rb") as fh:
        for b in info["buffers"]:
            fh.seek(payload_base + b["offset"])
            data = fh.read(b["byte_length"])
            if len(data) < b["byte_length"]:
                raise CaptureFormatError(f"{path}: truncated payload")
            crc = zlib.crc32(data) & 0xFFFFFFFF
            if crc != b["crc32"]:
                raise CaptureFormatError(
                    f"{path}: checksum mismatch on buffer at position "
                    f"{b['position']} (stored {b['crc32']:#010x}, computed {crc:#010x})"
                )
            buffers.append(
                BufferArg(
                    position=b["position"],
                    role=b["role"],
                    element_type=b["element_type"],
                    data=data,
                )
            )
    return Capture(
        definition=KernelDefinition.from_json_obj(info["definition"]),
        problem=tuple(info["problem"]),
        scalars=[
            ScalarArg(position=s["position"], dtype=s["dtype"], value=s["value"])
            for s in info["scalars"]
        ],
        buffers=buffers,
        application=info["application"],
        timestamp=info["timestamp"],
    )


def with_timestamp(cap: Capture, timestamp: str) -> Capture:
    return replace(cap, timestamp=timestamp)
