"""Tunable parameters, restrictions, and the induced configuration space."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterator, Sequence

from . import expr as xp
from .rng import SplitMix64
from .util import canonical_dumps

Configuration = dict[str, xp.Value]

REJECTION_LIMIT = 10_000


class RejectionLimitError(RuntimeError):
    """Raised after 10,000 consecutive rejected draws (over-constrained space)."""


def _value_kind(v: xp.Value) -> str:
    if isinstance(v, bool):
        return "bool"
    if isinstance(v, int):
        return "int"
    if isinstance(v, str):
        return "str"
    raise TypeError(f"unsupported parameter value type: {type(v).__name__}")


@dataclass(frozen=True)
class TunableParam:
    """One named knob with an ordered list of allowed values and a default."""

    name: str
    values: tuple[xp.Value, ...]
    default: xp.Value

    def __init__(self, name: str, values: Sequence[xp.Value], default: xp.Value) -> None:
        values = tuple(values)
        if not name or not name[0].isidentifier():
            raise ValueError(f"invalid parameter name {name!r}")
        if not values:
            raise ValueError(f"parameter '{name}' has no values")
        kinds = {_value_kind(v) for v in values}
        if len(kinds) != 1:
            raise ValueError(f"parameter '{name}' mixes value types: {sorted(kinds)}")
        if len(set(values)) != len(values):
            raise ValueError(f"parameter '{name}' has duplicate values")
        if default not in values:
            raise ValueError(f"default {default!r} not among values of '{name}'")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "default", default)


@dataclass
class ConfigSpace:
    """Ordered tunable parameters plus conjunctive boolean restrictions."""

    params: list[TunableParam]
    restrictions: list[xp.Expr] = field(default_factory=list)

    def __init__(
        self,
        params: Sequence[TunableParam],
        restrictions: Sequence[xp.Expr | str] = (),
    ) -> None:
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        known = set(names)
        self.restrictions = []
        for r in restrictions:
            tree = xp.parse(r) if isinstance(r, str) else r
            unknown = xp.identifiers(tree) - known
            if unknown:
                raise ValueError(
                    f"restriction references unknown parameters: {sorted(unknown)}"
                )
            self.restrictions.append(tree)

    @property
    def param_names(self) -> list[str]:
        return [p.name for p in self.params]

    def param(self, name: str) -> TunableParam:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    # -- counting ----------------------------------------------------------

    def cardinality(self) -> int:
        """Product of value-list lengths; restrictions are ignored."""
        total = 1
        for p in self.params:
            total *= len(p.values)
        return total

    def valid_cardinality(self) -> int:
        """Number of restriction-satisfying points, by enumeration."""
        return sum(1 for _ in self.enumerate_configs())

    # -- membership --------------------------------------------------------

    def is_valid(self, config: Configuration) -> bool:
        """True iff every restriction holds for ``config``."""
        return all(xp.evaluate_bool(r, config) for r in self.restrictions)

    # -- iteration ---------------------------------------------------------

    def enumerate_configs(self) -> Iterator[Configuration]:
        """Every valid configuration, in index-lexicographic order.

        The last-listed parameter varies fastest; the order is pinned so
        golden tests stay stable.
        """
        names = self.param_names
        values = [p.values for p in self.params]
        indices = [0] * len(self.params)
        if not self.params:
            cfg: Configuration = {}
            if self.is_valid(cfg):
                yield cfg
            return
        while True:
            cfg = {n: vals[i] for n, vals, i in zip(names, values, indices)}
            if self.is_valid(cfg):
                yield cfg
            k = len(indices) - 1
            while k >= 0:
                indices[k] += 1
                if indices[k] < len(values[k]):
                    break
                indices[k] = 0
                k -= 1
            if k < 0:
                return

    # -- sampling ----------------------------------------------------------

    def sample_one(self, rng: SplitMix64) -> Configuration:
        """One valid configuration: uniform per-parameter draws, rejection
        filtered. Raises RejectionLimitError after 10,000 consecutive misses.
        """
        rejections = 0
        while True:
            cfg = {p.name: p.values[rng.next_below(len(p.values))] for p in self.params}
            if self.is_valid(cfg):
                return cfg
            rejections += 1
            if rejections >= REJECTION_LIMIT:
                raise RejectionLimitError(
                    f"{REJECTION_LIMIT} consecutive rejections; "
                    "the space appears over-constrained"
                )

    def sample_random(self, seed: int, n: int) -> list[Configuration]:
        """``n`` valid configurations from a splitmix64 stream; duplicates allowed."""
        if n < 0:
            raise ValueError("n must be >= 0")
        rng = SplitMix64(seed)
        return [self.sample_one(rng) for _ in range(n)]

    # -- defaults ----------------------------------------------------------

    def default_config(self) -> tuple[Configuration, bool]:
        """The all-defaults point plus a flag: True iff it satisfies the
        restrictions (a default may legitimately violate them)."""
        cfg = {p.name: p.default for p in self.params}
        return cfg, self.is_valid(cfg)

    # -- encoding ----------------------------------------------------------

    def value_index(self, name: str, value: xp.Value) -> int:
        p = self.param(name)
        try:
            return p.values.index(value)
        except ValueError:
            raise ValueError(f"{value!r} is not a value of parameter '{name}'") from None

    def normalized_encoding(self, config: Configuration) -> list[float]:
        """Map a configuration to [0,1]^K by normalized value index.

        Parameter k with n_k values maps its i-th value to i/(n_k-1),
        or 0.0 when n_k == 1. Shared by the synthetic cost model and the
        surrogate search so distances mean the same thing everywhere.
        """
        out = []
        for p in self.params:
            n = len(p.values)
            i = p.values.index(config[p.name])
            out.append(0.0 if n == 1 else i / (n - 1))
        return out

    # -- serialization -----------------------------------------------------

    def to_json_obj(self) -> dict:
        return {
            "params": [
                {"name": p.name, "values": list(p.values), "default": p.default}
                for p in self.params
            ],
            "restrictions": [xp.to_text(r) for r in self.restrictions],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ConfigSpace":
        params = [
            TunableParam(p["name"], _json_values(p["values"]), _json_value(p["default"]))
            for p in obj.get("params", [])
        ]
        return cls(params, obj.get("restrictions", []))

    def fingerprint(self) -> str:
        """Stable hash of the space definition; part of the kernel key."""
        blob = canonical_dumps(self.to_json_obj()).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:12]


def _json_value(v) -> xp.Value:
    if isinstance(v, (bool, int, str)):
        return v
    raise ValueError(f"unsupported parameter value in JSON: {v!r}")


def _json_values(vs) -> list[xp.Value]:
    return [_json_value(v) for v in vs]
