"""Pluggable executor and compiler interfaces, plus a deterministic simulated
executor so the whole system is testable without hardware.

The simulated landscape is a seeded positive-definite quadratic form over the
normalized-index encoding of a configuration. Its global optimum is
independently computable by enumeration, its conditioning is seed-controlled,
and cross terms make it non-separable, so per-parameter greedy search cannot
trivially crack it.
"""

from __future__ import annotations

import abc
import math
import os
import statistics
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from . import expr as xp
from .kerneldef import CompileRequest, LaunchGeometry
from .rng import SplitMix64, derived_seed
from .space import ConfigSpace, Configuration

STATUS_OK = "ok"
STATUS_COMPILE_FAILED = "compile_failed"
STATUS_LAUNCH_FAILED = "launch_failed"
STATUS_INVALID_CONFIG = "invalid_config"


class CompileError(Exception):
    """Compilation failed; ``diagnostics`` carries the compiler output."""

    def __init__(self, diagnostics: str) -> None:
        super().__init__(diagnostics)
        self.diagnostics = diagnostics


class LaunchError(Exception):
    pass


@dataclass(frozen=True)
class DeviceIdent:
    name: str
    architecture: str
    attributes: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.name or not self.architecture:
            raise ValueError("device name and architecture must be non-empty")

    def to_json_obj(self) -> dict:
        return {
            "name": self.name,
            "architecture": self.architecture,
            "attributes": dict(self.attributes),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "DeviceIdent":
        return cls(obj["name"], obj["architecture"], obj.get("attributes", {}))


@dataclass(frozen=True)
class Measurement:
    status: str
    objective: float | None = None  # kernel time in seconds, present iff ok
    stage_timings: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.status == STATUS_OK and not (self.objective and self.objective > 0):
            raise ValueError("ok measurements require a positive objective")


# ---------------------------------------------------------------------------
# Simulated cost model


def _min_eigenvalue(matrix: list[list[float]]) -> float:
    """Smallest eigenvalue of a symmetric matrix via cyclic Jacobi rotations.

    Pure Python on purpose: IEEE-754 double arithmetic keeps the simulated
    landscape bit-identical across platforms, which a LAPACK call would not
    guarantee. Matrices here are tiny (one row per tunable parameter).
    """
    n = len(matrix)
    if n == 1:
        return matrix[0][0]
    a = [row[:] for row in matrix]
    for _ in range(100):
        off = math.sqrt(sum(a[i][j] * a[i][j] for i in range(n) for j in range(i + 1, n)))
        if off < 1e-13:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p][q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q][q] - a[p][p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp, akq = a[k][p], a[k][q]
                    a[k][p] = c * akp - s * akq
                    a[k][q] = s * akp + c * akq
                for k in range(n):
                    apk, aqk = a[p][k], a[q][k]
                    a[p][k] = c * apk - s * aqk
                    a[q][k] = s * apk + c * aqk
    return min(a[i][i] for i in range(n))


class SimCostModel:
    """Seeded quadratic landscape over a configuration space.

    cost(x) = 1 + (x - mu)^T A (x - mu) where x is the normalized-index
    encoding, mu_k ~ U[0, 1], A is symmetric with diagonal in [0.5, 2] and
    off-diagonal in [-0.3, 0.3], shifted by (|min eigenvalue| + 0.1) * I to be
    positive definite. All draws come from one splitmix64 stream seeded by
    ``seed``: first mu (parameter order), then the diagonal, then the upper
    triangle row by row.
    """

    def __init__(
        self,
        seed: int,
        space: ConfigSpace,
        noise_sigma: float = 0.0,
        failure_restriction: xp.Expr | str | None = None,
    ) -> None:
        self.seed = seed
        self.space = space
        self.noise_sigma = noise_sigma
        if isinstance(failure_restriction, str):
            failure_restriction = xp.parse(failure_restriction)
        self.failure_restriction = failure_restriction

        k = len(space.params)
        rng = SplitMix64(seed)
        self.mu = [rng.next_float() for _ in range(k)]
        a = [[0.0] * k for _ in range(k)]
        for i in range(k):
            a[i][i] = 0.5 + 1.5 * rng.next_float()
        for i in range(k):
            for j in range(i + 1, k):
                v = -0.3 + 0.6 * rng.next_float()
                a[i][j] = v
                a[j][i] = v
        shift = abs(_min_eigenvalue(a)) + 0.1
        for i in range(k):
            a[i][i] += shift
        self.a = a

    def fails(self, config: Configuration) -> bool:
        if self.failure_restriction is None:
            return False
        return xp.evaluate_bool(self.failure_restriction, config)

    def noiseless_cost(self, config: Configuration) -> float:
        x = self.space.normalized_encoding(config)
        d = [xi - mi for xi, mi in zip(x, self.mu)]
        a = self.a
        total = 0.0
        for i, di in enumerate(d):
            row = a[i]
            acc = 0.0
            for j, dj in enumerate(d):
                acc += row[j] * dj
            total += di * acc
        return 1.0 + total

    def to_json_obj(self) -> dict:
        return {
            "backend": "sim",
            "seed": self.seed,
            "noise_sigma": self.noise_sigma,
            "failure_restriction": (
                xp.to_text(self.failure_restriction)
                if self.failure_restriction is not None
                else None
            ),
            "space_fingerprint": self.space.fingerprint(),
        }


def sim_cost(
    model: SimCostModel,
    config: Configuration,
    noise_rng: SplitMix64 | None = None,
) -> Measurement:
    """One simulated measurement of ``config`` under ``model``."""
    if model.fails(config):
        return Measurement(STATUS_INVALID_CONFIG)
    cost = model.noiseless_cost(config)
    if model.noise_sigma > 0.0:
        rng = noise_rng if noise_rng is not None else SplitMix64(derived_seed(model.seed, 1))
        # Floor the factor so a freak draw cannot produce a non-positive time.
        cost *= max(1.0 + rng.next_gauss() * model.noise_sigma, 0.01)
    return Measurement(STATUS_OK, objective=cost, stage_timings={"launch": cost})


# ---------------------------------------------------------------------------
# Executor interface


class Executor(abc.ABC):
    """The only path by which tuning and dispatch reach anything measurable."""

    #: whether concurrent measure() calls are allowed
    reentrant: bool = False

    @abc.abstractmethod
    def measure(self, config: Configuration) -> Measurement:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"backend": type(self).__name__}


class SimulatedExecutor(Executor):
    """Deterministic executor over a SimCostModel.

    ``repetitions`` launches are simulated per measurement and the median
    taken, mirroring how a benchmark harness would smooth timing noise.
    """

    reentrant = True

    def __init__(self, model: SimCostModel, repetitions: int = 7) -> None:
        if repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        self.model = model
        self.repetitions = repetitions
        self._noise_rng = SplitMix64(derived_seed(model.seed, 1))

    def measure(self, config: Configuration) -> Measurement:
        if self.model.fails(config):
            return Measurement(STATUS_INVALID_CONFIG)
        if self.model.noise_sigma <= 0.0:
            return sim_cost(self.model, config)
        reps = [
            sim_cost(self.model, config, self._noise_rng).objective
            for _ in range(self.repetitions)
        ]
        objective = statistics.median(reps)
        return Measurement(STATUS_OK, objective=objective, stage_timings={"launch": objective})

    def describe(self) -> dict:
        d = self.model.to_json_obj()
        d["repetitions"] = self.repetitions
        return d


# ---------------------------------------------------------------------------
# Compiler interface


class ExecutableHandle(abc.ABC):
    @abc.abstractmethod
    def load(self) -> None:
        """Load the compiled artifact (the module-load stage)."""

    @abc.abstractmethod
    def launch(self, geometry: LaunchGeometry, args: Sequence[object]) -> float:
        """Run the kernel; returns the kernel time in seconds."""


class CompilerInterface(abc.ABC):
    @abc.abstractmethod
    def compile(self, request: CompileRequest, device: DeviceIdent) -> ExecutableHandle:
        """Compile ``request`` for ``device`` or raise CompileError."""


class MockExecutable(ExecutableHandle):
    def __init__(self, request: CompileRequest, device: DeviceIdent,
                 load_delay: float, launch_seconds: float) -> None:
        self.request = request
        self.device = device
        self.load_delay = load_delay
        self.launch_seconds = launch_seconds
        self.launches: list[tuple[LaunchGeometry, tuple]] = []

    def load(self) -> None:
        if self.load_delay > 0:
            time.sleep(self.load_delay)

    def launch(self, geometry: LaunchGeometry, args: Sequence[object]) -> float:
        if self.launch_seconds > 0:
            time.sleep(self.launch_seconds)
        self.launches.append((geometry, tuple(args)))
        return max(self.launch_seconds, 1e-9)


class MockCompiler(CompilerInterface):
    """Records every request; optional per-stage sleeps emulate real cost."""

    def __init__(
        self,
        compile_delay: float = 0.0,
        load_delay: float = 0.0,
        launch_seconds: float = 0.0,
        fail_when: Callable[[CompileRequest], bool] | None = None,
    ) -> None:
        self.compile_delay = compile_delay
        self.load_delay = load_delay
        self.launch_seconds = launch_seconds
        self.fail_when = fail_when
        self.invocations = 0
        self.requests: list[CompileRequest] = []

    def compile(self, request: CompileRequest, device: DeviceIdent) -> MockExecutable:
        self.invocations += 1
        self.requests.append(request)
        if self.compile_delay > 0:
            time.sleep(self.compile_delay)
        if self.fail_when is not None and self.fail_when(request):
            raise CompileError(f"mock compiler rejected entry '{request.entry}'")
        return MockExecutable(request, device, self.load_delay, self.launch_seconds)


def _substitute_template(
    template: Sequence[str],
    source_path: str,
    output_path: str,
    flag_args: Sequence[str],
) -> list[str]:
    """Expand {SOURCE}/{OUTPUT}/{FLAGS} placeholders, each used at most once.
    {FLAGS} must be a standalone token; it splices the flag list in place."""
    counts = {"{SOURCE}": 0, "{OUTPUT}": 0, "{FLAGS}": 0}
    for token in template:
        for key in counts:
            counts[key] += token.count(key)
    for key, n in counts.items():
        if n > 1:
            raise ValueError(f"template uses {key} {n} times; at most once allowed")
    argv: list[str] = []
    for token in template:
        if token == "{FLAGS}":
            argv.extend(flag_args)
            continue
        if "{FLAGS}" in token:
            raise ValueError("{FLAGS} must be a standalone template token")
        argv.append(token.replace("{SOURCE}", source_path).replace("{OUTPUT}", output_path))
    return argv


class SubprocessExecutable(ExecutableHandle):
    def __init__(self, output_path: str, run_template: Sequence[str] | None) -> None:
        self.output_path = output_path
        self.run_template = list(run_template) if run_template else None

    def load(self) -> None:
        if not os.path.exists(self.output_path):
            raise LaunchError(f"compiled artifact missing: {self.output_path}")

    def launch(self, geometry: LaunchGeometry, args: Sequence[object]) -> float:
        if not self.run_template:
            raise LaunchError("no run command template configured")
        argv = [t.replace("{EXE}", self.output_path) for t in self.run_template]
        proc = subprocess.run(argv, capture_output=True, text=True)
        if proc.returncode != 0:
            raise LaunchError(f"run command failed: {proc.stderr.strip() or proc.stdout.strip()}")
        try:
            return float(proc.stdout.strip().split()[0])
        except (IndexError, ValueError):
            raise LaunchError(
                f"run command printed no leading time value: {proc.stdout!r}"
            ) from None


class SubprocessCompiler(CompilerInterface):
    """Drives a user-configured compiler command.

    The template is an argv list; ``{SOURCE}`` and ``{OUTPUT}`` are replaced
    with temp-file paths and a standalone ``{FLAGS}`` token splices compiler
    flags plus ``-D`` defines.
    """

    def __init__(
        self,
        compile_template: Sequence[str],
        run_template: Sequence[str] | None = None,
        source_suffix: str = ".cu",
        workdir: str | None = None,
    ) -> None:
        if not compile_template:
            raise ValueError("compile template must be non-empty")
        self.compile_template = list(compile_template)
        self.run_template = list(run_template) if run_template else None
        self.source_suffix = source_suffix
        self.workdir = workdir

    def compile(self, request: CompileRequest, device: DeviceIdent) -> SubprocessExecutable:
        tmpdir = tempfile.mkdtemp(prefix="kltune-", dir=self.workdir)
        source_path = str(Path(tmpdir) / f"kernel{self.source_suffix}")
        output_path = str(Path(tmpdir) / "kernel.out")
        Path(source_path).write_text(request.source, encoding="utf-8")
        flag_args = list(request.flags)
        for d in request.defines:
            flag_args.extend(d.split(" ", 1))  # "-D name=value" -> ["-D", "name=value"]
        argv = _substitute_template(self.compile_template, source_path, output_path, flag_args)
        try:
            proc = subprocess.run(argv, capture_output=True, text=True)
        except OSError as e:
            raise CompileError(f"failed to run compiler {argv[0]!r}: {e}") from e
        if proc.returncode != 0:
            raise CompileError(
                f"compiler exited with {proc.returncode}\n{proc.stderr}{proc.stdout}"
            )
        return SubprocessExecutable(output_path, self.run_template)


class SubprocessExecutor(Executor):
    """Benchmarks one configuration at a time through external commands.

    Exclusive by design: interleaving measurements would corrupt timings,
    which is the whole point of replaying kernels in isolation.
    """

    reentrant = False

    def __init__(
        self,
        definition,
        compiler: SubprocessCompiler,
        device: DeviceIdent,
        problem=None,
        scalar_args: Mapping[str, int] | None = None,
    ) -> None:
        self.definition = definition
        self.compiler = compiler
        self.device = device
        self.problem = problem
        self.scalar_args = dict(scalar_args or {})

    def measure(self, config: Configuration) -> Measurement:
        stages: dict[str, float] = {}
        try:
            request = self.definition.render_compile_request(
                config, self.problem, self.scalar_args
            )
            t0 = time.perf_counter()
            handle = self.compiler.compile(request, self.device)
            stages["compile"] = time.perf_counter() - t0
        except (CompileError, xp.EvalError):
            return Measurement(STATUS_COMPILE_FAILED, stage_timings=stages)
        try:
            t0 = time.perf_counter()
            handle.load()
            stages["module_load"] = time.perf_counter() - t0
            geometry = (
                self.definition.derive_geometry(config, self.problem, self.scalar_args)
                if self.problem is not None
                else LaunchGeometry((1, 1, 1), (1, 1, 1))
            )
            seconds = handle.launch(geometry, ())
            stages["launch"] = seconds
        except (LaunchError, xp.EvalError):
            return Measurement(STATUS_LAUNCH_FAILED, stage_timings=stages)
        if seconds <= 0:
            return Measurement(STATUS_LAUNCH_FAILED, stage_timings=stages)
        return Measurement(STATUS_OK, objective=seconds, stage_timings=stages)

    def describe(self) -> dict:
        return {"backend": "subprocess", "device": self.device.to_json_obj()}
