"""Per-kernel wisdom files and the runtime selection cascade.

A wisdom file stores the best-known configuration per (device, problem size)
with provenance. On disk it is newline-delimited canonical JSON: the first
line is a header object, every further line one record, sorted keys, no extra
whitespace, so a read-write round trip is byte-identical.
"""

from __future__ import annotations

import json
import math
import platform
import socket
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .backend import DeviceIdent
from .kerneldef import ProblemSize
from .space import Configuration
from .util import atomic_write_text, canonical_dumps

FORMAT_VERSION = 1
WISDOM_ENV = "KERNEL_LAUNCHER_WISDOM"

MATCH_EXACT = "exact"
MATCH_SAME_DEVICE = "same_device_nearest"
MATCH_SAME_ARCH = "same_arch_nearest"
MATCH_ANY = "any_nearest"
MATCH_DEFAULT = "default"


class WisdomError(Exception):
    pass


def _today() -> str:
    import datetime

    return datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class Provenance:
    date: str = field(default_factory=_today)
    hostname: str = field(default_factory=socket.gethostname)
    versions: dict = field(default_factory=lambda: {"python": platform.python_version()})
    device_properties: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {
            "date": self.date,
            "hostname": self.hostname,
            "versions": dict(self.versions),
            "device_properties": dict(self.device_properties),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Provenance":
        return cls(
            date=obj.get("date", ""),
            hostname=obj.get("hostname", ""),
            versions=obj.get("versions", {}),
            device_properties=obj.get("device_properties", {}),
        )


@dataclass
class WisdomRecord:
    device: DeviceIdent
    problem: ProblemSize
    config: Configuration
    objective_seconds: float
    provenance: Provenance = field(default_factory=Provenance)

    def __post_init__(self) -> None:
        if self.objective_seconds <= 0:
            raise WisdomError("objective must be positive")
        self.problem = tuple(self.problem)

    def to_json_obj(self) -> dict:
        return {
            "device": self.device.to_json_obj(),
            "problem": list(self.problem),
            "config": dict(self.config),
            "objective_seconds": self.objective_seconds,
            "provenance": self.provenance.to_json_obj(),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "WisdomRecord":
        return cls(
            device=DeviceIdent.from_json_obj(obj["device"]),
            problem=tuple(obj["problem"]),
            config=obj["config"],
            objective_seconds=obj["objective_seconds"],
            provenance=Provenance.from_json_obj(obj.get("provenance", {})),
        )


@dataclass
class WisdomFile:
    kernel_key: str
    objective_name: str = "time"
    records: list[WisdomRecord] = field(default_factory=list)

    @classmethod
    def load(cls, path: str | Path) -> "WisdomFile":
        with open(path, encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
        if not lines:
            raise WisdomError(f"{path}: empty wisdom file (missing header)")
        header = json.loads(lines[0])
        if header.get("format_version") != FORMAT_VERSION:
            raise WisdomError(f"{path}: unsupported format version")
        out = cls(kernel_key=header["kernel_key"], objective_name=header.get("objective", "time"))
        for ln in lines[1:]:
            out.records.append(WisdomRecord.from_json_obj(json.loads(ln)))
        return out

    def save(self, path: str | Path) -> None:
        lines = [
            canonical_dumps(
                {
                    "format_version": FORMAT_VERSION,
                    "kernel_key": self.kernel_key,
                    "objective": self.objective_name,
                }
            )
        ]
        lines.extend(canonical_dumps(r.to_json_obj()) for r in self.records)
        atomic_write_text(path, "\n".join(lines) + "\n")


def wisdom_path(directory: str | Path, kernel_key: str) -> Path:
    return Path(directory) / f"{kernel_key}.wisdom"


def load_or_create(directory: str | Path, kernel_key: str) -> WisdomFile:
    path = wisdom_path(directory, kernel_key)
    if path.exists():
        return WisdomFile.load(path)
    return WisdomFile(kernel_key=kernel_key)


# ---------------------------------------------------------------------------
# Appending tuning results


def append_result(wisdom_file: WisdomFile, session, provenance: Provenance | None = None) -> WisdomFile:
    """Fold a tuning session's best into the file, keeping the lower objective
    when a record for the same (device name, problem size) already exists.
    The surviving result keeps the provenance of the run that produced it."""
    if session.best is None:
        raise WisdomError("session has no successful evaluations to record")
    if session.kernel_key != wisdom_file.kernel_key:
        raise WisdomError(
            f"kernel key mismatch: file has '{wisdom_file.kernel_key}', "
            f"session has '{session.kernel_key}'"
        )
    if session.device is None or session.problem is None:
        raise WisdomError("session lacks device/problem identity")
    config, objective = session.best
    incoming = WisdomRecord(
        device=session.device,
        problem=session.problem,
        config=config,
        objective_seconds=objective,
        provenance=provenance or Provenance(device_properties=dict(session.device.attributes)),
    )
    for i, existing in enumerate(wisdom_file.records):
        if existing.device.name == incoming.device.name and existing.problem == incoming.problem:
            if incoming.objective_seconds < existing.objective_seconds:
                wisdom_file.records[i] = incoming
            return wisdom_file
    wisdom_file.records.append(incoming)
    return wisdom_file


def merge_wisdom(files: Iterable[WisdomFile]) -> WisdomFile:
    """Keep-best merge of several wisdom files for the same kernel."""
    files = list(files)
    if not files:
        raise WisdomError("nothing to merge")
    keys = {f.kernel_key for f in files}
    if len(keys) != 1:
        raise WisdomError(f"cannot merge wisdom for different kernels: {sorted(keys)}")
    out = WisdomFile(kernel_key=files[0].kernel_key, objective_name=files[0].objective_name)
    for f in files:
        for r in f.records:
            for i, existing in enumerate(out.records):
                if existing.device.name == r.device.name and existing.problem == r.problem:
                    if r.objective_seconds < existing.objective_seconds:
                        out.records[i] = r
                    break
            else:
                out.records.append(r)
    return out


# ---------------------------------------------------------------------------
# Selection


@dataclass(frozen=True)
class SelectionResult:
    config: Configuration
    match_kind: str
    record: WisdomRecord | None = None


def _distance(a: Sequence[int], b: Sequence[int]) -> float:
    # Dimension-mismatched problem sizes are compared padded to 3 components
    # with 1s; same-dimension candidates are always preferred first anyway.
    pa = tuple(a) + (1,) * (3 - len(a))
    pb = tuple(b) + (1,) * (3 - len(b))
    return math.dist(pa, pb)


def _nearest(records: list[tuple[int, WisdomRecord]], problem: ProblemSize) -> WisdomRecord:
    same_dim = [(i, r) for i, r in records if len(r.problem) == len(problem)]
    pool = same_dim if same_dim else records
    return min(
        pool,
        key=lambda ir: (_distance(ir[1].problem, problem), ir[1].objective_seconds, ir[0]),
    )[1]


def select(
    wisdom_file: WisdomFile | None,
    device: DeviceIdent,
    problem: ProblemSize,
    default: Configuration,
) -> SelectionResult:
    """The five-step runtime selection cascade.

    1. exact (device name and problem size both match)
    2. nearest problem size among same-device records (Euclidean distance)
    3. nearest problem size among same-architecture records
    4. nearest problem size over all records
    5. the default configuration

    Ties break toward the lower objective, then file order. Always returns.
    """
    problem = tuple(problem)
    records = list(enumerate(wisdom_file.records)) if wisdom_file else []

    exact = [(i, r) for i, r in records if r.device.name == device.name and r.problem == problem]
    if exact:
        chosen = min(exact, key=lambda ir: (ir[1].objective_seconds, ir[0]))[1]
        return SelectionResult(dict(chosen.config), MATCH_EXACT, chosen)

    same_device = [(i, r) for i, r in records if r.device.name == device.name]
    if same_device:
        chosen = _nearest(same_device, problem)
        return SelectionResult(dict(chosen.config), MATCH_SAME_DEVICE, chosen)

    same_arch = [(i, r) for i, r in records if r.device.architecture == device.architecture]
    if same_arch:
        chosen = _nearest(same_arch, problem)
        return SelectionResult(dict(chosen.config), MATCH_SAME_ARCH, chosen)

    if records:
        chosen = _nearest(records, problem)
        return SelectionResult(dict(chosen.config), MATCH_ANY, chosen)

    return SelectionResult(dict(default), MATCH_DEFAULT, None)
