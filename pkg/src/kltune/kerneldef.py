"""Tunable kernel definitions: configuration space, compile spec, and the
expressions that derive problem size and launch geometry from arguments."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from . import expr as xp
from .space import ConfigSpace, Configuration, TunableParam
from .util import atomic_write_text, canonical_dumps

_ARG_RE = re.compile(r"^arg\d+$")
_PROBLEM_NAMES = ("problem_x", "problem_y", "problem_z")

ProblemSize = tuple[int, ...]


class DefinitionError(ValueError):
    pass


@dataclass(frozen=True)
class LaunchGeometry:
    block: tuple[int, int, int]
    grid: tuple[int, int, int]
    shared_mem_bytes: int = 0

    def __post_init__(self) -> None:
        for axis, extent in zip("xyz", self.block):
            if extent < 1:
                raise DefinitionError(f"block.{axis} must be >= 1, got {extent}")
        for axis, extent in zip("xyz", self.grid):
            if extent < 1:
                raise DefinitionError(f"grid.{axis} must be >= 1, got {extent}")
        if self.shared_mem_bytes < 0:
            raise DefinitionError("shared_mem_bytes must be >= 0")


@dataclass(frozen=True)
class CompileRequest:
    """Everything a compiler needs for one configuration of one kernel."""

    source: str
    entry: str
    defines: tuple[str, ...]  # "-D name=value", declaration order
    flags: tuple[str, ...]


def _format_value(v: xp.Value) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _as_expr(e: xp.Expr | str | int) -> xp.Expr:
    if isinstance(e, str):
        return xp.parse(e)
    if isinstance(e, int) and not isinstance(e, bool):
        return xp.IntLit(e)
    return e


class KernelDefinition:
    """A kernel plus everything needed to compile and launch any configuration.

    ``problem_size`` expressions may reference only scalar kernel arguments
    (``arg0`` .. ``argN``); block/grid/shared/define/template expressions may
    additionally reference tunable parameters and ``problem_{x,y,z}``.
    """

    def __init__(
        self,
        name: str,
        space: ConfigSpace,
        *,
        source_text: str | None = None,
        source_file: str | None = None,
        problem_size: Sequence[xp.Expr | str],
        block: Sequence[xp.Expr | str | int] = (1, 1, 1),
        grid: Sequence[xp.Expr | str | int] | None = None,
        shared_mem: xp.Expr | str | int = 0,
        defines: Sequence[tuple[str, xp.Expr | str | int]] = (),
        template_args: Sequence[xp.Expr | str | int] = (),
        flags: Sequence[str] = (),
    ) -> None:
        if not name:
            raise DefinitionError("kernel name must be non-empty")
        if (source_text is None) == (source_file is None):
            raise DefinitionError("exactly one of source_text/source_file required")
        self.name = name
        self.space = space
        self.source_text = source_text
        self.source_file = source_file
        self.problem_size = tuple(_as_expr(e) for e in problem_size)
        if not 1 <= len(self.problem_size) <= 3:
            raise DefinitionError("problem_size takes 1 to 3 expressions")
        self.block = tuple(_as_expr(e) for e in block)
        if len(self.block) != 3:
            raise DefinitionError("block takes exactly 3 expressions")
        if grid is None:
            # Default rule: one thread block per block-size chunk of the problem.
            grid = [
                xp.Call("ceil_div", (xp.Ident(p), b))
                for p, b in zip(_PROBLEM_NAMES, self.block)
            ]
        self.grid = tuple(_as_expr(e) for e in grid)
        if len(self.grid) != 3:
            raise DefinitionError("grid takes exactly 3 expressions")
        self.shared_mem = _as_expr(shared_mem)
        self.defines = [(n, _as_expr(e)) for n, e in defines]
        self.template_args = tuple(_as_expr(e) for e in template_args)
        self.flags = tuple(flags)
        self._validate_identifiers()

    def _validate_identifiers(self) -> None:
        params = set(self.space.param_names)
        for e in self.problem_size:
            bad = [n for n in xp.identifiers(e) if not _ARG_RE.match(n)]
            if bad:
                raise DefinitionError(
                    f"problem_size may reference only argN, found: {sorted(bad)}"
                )
        launch_and_compile = (
            list(self.block)
            + list(self.grid)
            + [self.shared_mem]
            + [e for _, e in self.defines]
            + list(self.template_args)
        )
        for e in launch_and_compile:
            for n in xp.identifiers(e):
                if n in params or _ARG_RE.match(n) or n in _PROBLEM_NAMES:
                    continue
                raise DefinitionError(
                    f"'{n}' is not a parameter, argN, or problem_{{x,y,z}}"
                )

    # -- source ------------------------------------------------------------

    def resolve_source(self) -> str:
        if self.source_text is not None:
            return self.source_text
        return Path(self.source_file).read_text(encoding="utf-8")

    # -- derivation --------------------------------------------------------

    def derive_problem_size(self, scalar_args: Mapping[str, int]) -> ProblemSize:
        """Evaluate the problem-size expressions; every component must be > 0."""
        out = []
        for i, e in enumerate(self.problem_size):
            value = xp.evaluate_int(e, scalar_args)
            if value <= 0:
                raise DefinitionError(
                    f"problem size component {i} is non-positive ({value})"
                )
            out.append(value)
        return tuple(out)

    def _launch_env(
        self,
        config: Configuration,
        problem: ProblemSize,
        scalar_args: Mapping[str, int] | None,
    ) -> dict[str, xp.Value]:
        env: dict[str, xp.Value] = dict(config)
        if scalar_args:
            env.update(scalar_args)
        padded = tuple(problem) + (1,) * (3 - len(problem))
        env.update(zip(_PROBLEM_NAMES, padded))
        return env

    def derive_geometry(
        self,
        config: Configuration,
        problem: ProblemSize,
        scalar_args: Mapping[str, int] | None = None,
    ) -> LaunchGeometry:
        env = self._launch_env(config, problem, scalar_args)
        block = tuple(xp.evaluate_int(e, env) for e in self.block)
        grid = tuple(xp.evaluate_int(e, env) for e in self.grid)
        shared = xp.evaluate_int(self.shared_mem, env)
        return LaunchGeometry(block=block, grid=grid, shared_mem_bytes=shared)

    def render_compile_request(
        self,
        config: Configuration,
        problem: ProblemSize | None = None,
        scalar_args: Mapping[str, int] | None = None,
    ) -> CompileRequest:
        """Deterministic compile request: defines in declaration order,
        template-argument values printed into the entry name."""
        env: dict[str, xp.Value] = dict(config)
        if scalar_args:
            env.update(scalar_args)
        if problem is not None:
            padded = tuple(problem) + (1,) * (3 - len(problem))
            env.update(zip(_PROBLEM_NAMES, padded))
        defines = tuple(
            f"-D {name}={_format_value(xp.evaluate(e, env))}" for name, e in self.defines
        )
        entry = self.name
        if self.template_args:
            values = ",".join(_format_value(xp.evaluate(e, env)) for e in self.template_args)
            entry = f"{self.name}<{values}>"
        return CompileRequest(
            source=self.resolve_source(), entry=entry, defines=defines, flags=self.flags
        )

    # -- identity ----------------------------------------------------------

    def kernel_key(self) -> str:
        """Kernel name plus a space fingerprint, so a changed parameter set
        invalidates stale wisdom."""
        return f"{self.name}-{self.space.fingerprint()}"

    # -- serialization -----------------------------------------------------

    def to_json_obj(self, embed_source: bool = False) -> dict:
        obj = {
            "name": self.name,
            "params": self.space.to_json_obj()["params"],
            "restrictions": self.space.to_json_obj()["restrictions"],
            "defines": {n: xp.to_text(e) for n, e in self.defines},
            "template_args": [xp.to_text(e) for e in self.template_args],
            "block": [xp.to_text(e) for e in self.block],
            "grid": [xp.to_text(e) for e in self.grid],
            "problem_size": [xp.to_text(e) for e in self.problem_size],
            "shared_mem": xp.to_text(self.shared_mem),
            "flags": list(self.flags),
        }
        if embed_source or self.source_text is not None:
            obj["source_text"] = self.resolve_source()
        else:
            obj["source_file"] = self.source_file
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "KernelDefinition":
        space = ConfigSpace(
            [
                TunableParam(p["name"], p["values"], p["default"])
                for p in obj.get("params", [])
            ],
            obj.get("restrictions", []),
        )
        return cls(
            obj["name"],
            space,
            source_text=obj.get("source_text"),
            source_file=obj.get("source_file"),
            problem_size=obj["problem_size"],
            block=obj.get("block", (1, 1, 1)),
            grid=obj.get("grid"),
            shared_mem=obj.get("shared_mem", 0),
            defines=list(obj.get("defines", {}).items()),
            template_args=obj.get("template_args", ()),
            flags=obj.get("flags", ()),
        )

    def save(self, path: str | Path) -> None:
        atomic_write_text(path, canonical_dumps(self.to_json_obj()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "KernelDefinition":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_obj(json.load(fh))


class KernelBuilder:
    """Fluent construction of a KernelDefinition.

    >>> b = KernelBuilder("vector_add", source_file="vector_add.cu")
    >>> block_size = b.tune("block_size", [32, 64, 128, 256], default=128)
    >>> d = (b.problem_size("arg3")
    ...       .template_args(block_size)
    ...       .block(block_size)
    ...       .build())
    """

    def __init__(
        self,
        name: str,
        *,
        source_text: str | None = None,
        source_file: str | None = None,
    ) -> None:
        self._name = name
        self._source_text = source_text
        self._source_file = source_file
        self._params: list[TunableParam] = []
        self._restrictions: list[str] = []
        self._problem_size: tuple | None = None
        self._block: tuple = (1, 1, 1)
        self._grid: tuple | None = None
        self._shared: xp.Expr | str | int = 0
        self._defines: list[tuple[str, xp.Expr | str | int]] = []
        self._template_args: list = []
        self._flags: list[str] = []

    def tune(self, name: str, values: Sequence[xp.Value], default: xp.Value | None = None) -> str:
        """Declare a tunable parameter; returns its name for use in expressions."""
        if default is None:
            default = values[0]
        self._params.append(TunableParam(name, values, default))
        return name

    def restriction(self, text: str) -> "KernelBuilder":
        self._restrictions.append(text)
        return self

    def problem_size(self, *exprs: xp.Expr | str) -> "KernelBuilder":
        self._problem_size = exprs
        return self

    def block(self, x, y=1, z=1) -> "KernelBuilder":
        self._block = (x, y, z)
        return self

    def grid(self, x, y=1, z=1) -> "KernelBuilder":
        self._grid = (x, y, z)
        return self

    def shared_mem(self, e) -> "KernelBuilder":
        self._shared = e
        return self

    def define(self, name: str, e) -> "KernelBuilder":
        self._defines.append((name, e))
        return self

    def template_args(self, *exprs) -> "KernelBuilder":
        self._template_args.extend(exprs)
        return self

    def compiler_flags(self, *flags: str) -> "KernelBuilder":
        self._flags.extend(flags)
        return self

    def build(self) -> KernelDefinition:
        if self._problem_size is None:
            raise DefinitionError("problem_size was never specified")
        return KernelDefinition(
            self._name,
            ConfigSpace(self._params, self._restrictions),
            source_text=self._source_text,
            source_file=self._source_file,
            problem_size=self._problem_size,
            block=self._block,
            grid=self._grid,
            shared_mem=self._shared,
            defines=self._defines,
            template_args=self._template_args,
            flags=self._flags,
        )
