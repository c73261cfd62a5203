"""Runtime kernel object: select via wisdom, compile once per (device,
problem size), reuse the compiled instance on later launches, and keep
per-stage overhead counters."""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .backend import (
    CompileError,
    CompilerInterface,
    DeviceIdent,
    ExecutableHandle,
)
from .capture import (
    BufferArg,
    CapturePolicy,
    CaptureSession,
    ScalarArg,
    scalar_env_from_args,
)
from .kerneldef import KernelDefinition, ProblemSize
from .space import Configuration
from .util import canonical_dumps
from .wisdom import MATCH_DEFAULT, WISDOM_ENV, WisdomFile, select, wisdom_path

STAGE_WISDOM = "wisdom_read"
STAGE_COMPILE = "compile"
STAGE_LOAD = "module_load"
STAGE_LAUNCH = "launch"


@dataclass
class LaunchReport:
    match_kind: str
    stage_timings: dict[str, float]
    cache_hit: bool
    configuration: Configuration
    problem: ProblemSize
    device: str
    used_default_fallback: bool = False

    def to_json_obj(self) -> dict:
        return {
            "match_kind": self.match_kind,
            "stage_timings": dict(self.stage_timings),
            "cache_hit": self.cache_hit,
            "configuration": dict(self.configuration),
            "problem": list(self.problem),
            "device": self.device,
            "used_default_fallback": self.used_default_fallback,
        }


@dataclass
class _CacheEntry:
    handle: ExecutableHandle
    config: Configuration
    match_kind: str
    used_default_fallback: bool


@dataclass
class OverheadReport:
    """Per-stage mean seconds, split into first launches (cache misses) and
    subsequent launches (cache hits)."""

    first: dict[str, float]
    subsequent: dict[str, float]
    first_count: int
    subsequent_count: int


class WisdomKernel:
    """A launchable kernel whose configuration comes from wisdom files.

    Thread-safe: concurrent first launches for the same (device, problem
    size) key perform selection and compilation exactly once (single-flight);
    other callers block until the compiled instance is cached.
    """

    def __init__(
        self,
        definition: KernelDefinition,
        compiler: CompilerInterface,
        wisdom_dir: str | Path | None = None,
        capture_policy: CapturePolicy | None = None,
        log_path: str | Path | None = None,
        application: str = "",
    ) -> None:
        self.definition = definition
        self.compiler = compiler
        if wisdom_dir is None:
            wisdom_dir = os.environ.get(WISDOM_ENV, ".")
        self.wisdom_dir = Path(wisdom_dir)
        self.log_path = Path(log_path) if log_path else None
        self.application = application
        self._capture = CaptureSession(
            capture_policy if capture_policy is not None else CapturePolicy.from_env()
        )
        self._cache: dict[tuple[str, ProblemSize], _CacheEntry] = {}
        self._key_locks: dict[tuple[str, ProblemSize], threading.Lock] = {}
        self._meta_lock = threading.Lock()
        self.reports: list[LaunchReport] = []
        self._reports_lock = threading.Lock()

    # -- wiring --------------------------------------------------------------

    def _key_lock(self, key: tuple[str, ProblemSize]) -> threading.Lock:
        with self._meta_lock:
            return self._key_locks.setdefault(key, threading.Lock())

    def _load_wisdom(self) -> WisdomFile | None:
        path = wisdom_path(self.wisdom_dir, self.definition.kernel_key())
        if not path.exists():
            return None
        return WisdomFile.load(path)

    def _resolve_and_compile(
        self,
        device: DeviceIdent,
        problem: ProblemSize,
        scalar_env: dict[str, int],
        stages: dict[str, float],
    ) -> _CacheEntry:
        t0 = time.perf_counter()
        wisdom_file = self._load_wisdom()
        default, _ = self.definition.space.default_config()
        selection = select(wisdom_file, device, problem, default)
        stages[STAGE_WISDOM] = time.perf_counter() - t0

        config, match_kind, fallback = selection.config, selection.match_kind, False
        t0 = time.perf_counter()
        try:
            request = self.definition.render_compile_request(config, problem, scalar_env)
            handle = self.compiler.compile(request, device)
        except CompileError:
            # One retry with the default configuration before giving up.
            if match_kind == MATCH_DEFAULT:
                raise
            config, match_kind, fallback = dict(default), MATCH_DEFAULT, True
            request = self.definition.render_compile_request(config, problem, scalar_env)
            handle = self.compiler.compile(request, device)
        stages[STAGE_COMPILE] = time.perf_counter() - t0

        t0 = time.perf_counter()
        handle.load()
        stages[STAGE_LOAD] = time.perf_counter() - t0
        return _CacheEntry(handle, config, match_kind, fallback)

    # -- public API -----------------------------------------------------------

    def launch(
        self, device: DeviceIdent, args: Sequence[ScalarArg | BufferArg]
    ) -> LaunchReport:
        """Launch with the best-known configuration for (device, problem size).

        Selection and compilation happen only on the first launch per key;
        a configuration that fails to compile is retried once with the
        default configuration.
        """
        scalar_env = scalar_env_from_args(args)
        problem = self.definition.derive_problem_size(scalar_env)
        self._capture.maybe_capture(self.definition, args, application=self.application)

        key = (device.name, problem)
        stages: dict[str, float] = {}
        entry = self._cache.get(key)
        cache_hit = entry is not None
        if entry is None:
            with self._key_lock(key):
                entry = self._cache.get(key)
                if entry is not None:
                    cache_hit = True
                else:
                    entry = self._resolve_and_compile(device, problem, scalar_env, stages)
                    self._cache[key] = entry

        geometry = self.definition.derive_geometry(entry.config, problem, scalar_env)
        t0 = time.perf_counter()
        entry.handle.launch(geometry, args)
        stages[STAGE_LAUNCH] = time.perf_counter() - t0

        report = LaunchReport(
            match_kind=entry.match_kind,
            stage_timings=stages,
            cache_hit=cache_hit,
            configuration=dict(entry.config),
            problem=problem,
            device=device.name,
            used_default_fallback=entry.used_default_fallback,
        )
        with self._reports_lock:
            self.reports.append(report)
        if self.log_path is not None:
            with self._reports_lock:
                with open(self.log_path, "a", encoding="utf-8") as fh:
                    fh.write(canonical_dumps(report.to_json_obj()) + "\n")
        return report

    def overhead_report(self) -> OverheadReport:
        """Aggregate per-stage means for first vs. subsequent launches."""
        with self._reports_lock:
            reports = list(self.reports)
        if not reports:
            raise RuntimeError("no launches recorded")
        first = [r for r in reports if not r.cache_hit]
        subsequent = [r for r in reports if r.cache_hit]

        def means(group: list[LaunchReport]) -> dict[str, float]:
            sums: dict[str, float] = {}
            counts: dict[str, int] = {}
            for r in group:
                for stage, seconds in r.stage_timings.items():
                    sums[stage] = sums.get(stage, 0.0) + seconds
                    counts[stage] = counts.get(stage, 0) + 1
            return {stage: sums[stage] / counts[stage] for stage in sums}

        return OverheadReport(
            first=means(first),
            subsequent=means(subsequent),
            first_count=len(first),
            subsequent_count=len(subsequent),
        )
