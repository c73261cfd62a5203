"""Replay a capture across configurations under a search strategy and budget.

Three strategies are built in:

* ``exhaustive`` walks the space in its pinned enumeration order.
* ``random`` rejection-samples valid configurations from a seeded stream.
* ``surrogate`` bootstraps with 20 random evaluations, then repeatedly picks
  the best-looking point from a 100-candidate pool scored by a
  distance-weighted nearest-neighbor model minus an exploration bonus.

Every strategy only ever hands restriction-valid configurations to the
executor, failures are recorded but never abort a session, and a session is
fully determined by its seed when the executor is deterministic.
"""

from __future__ import annotations

import datetime as _dt
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .backend import (
    STATUS_OK,
    DeviceIdent,
    Executor,
    Measurement,
)
from .capture import Capture
from .kerneldef import ProblemSize
from .rng import SplitMix64
from .space import ConfigSpace, Configuration
from .util import atomic_write_text, canonical_dumps

STRATEGIES = ("exhaustive", "random", "surrogate")

SURROGATE_BOOTSTRAP = 20
SURROGATE_POOL = 100
SURROGATE_NEIGHBORS = 5
SURROGATE_BETA = 1.0
_EXCLUSION_LIMIT = 10_000

STATUS_COMPLETE = "ok"
STATUS_NO_RESULT = "no_valid_result"


class SpaceExhausted(Exception):
    """Every configuration in the space has been evaluated."""


@dataclass
class Budget:
    """Evaluation / wall-clock bounds; at least one must be set."""

    max_evaluations: int | None = None
    max_wall_seconds: float | None = 900.0

    def __post_init__(self) -> None:
        if self.max_evaluations is None and self.max_wall_seconds is None:
            raise ValueError("a budget needs at least one bound")
        if self.max_evaluations is not None and self.max_evaluations < 0:
            raise ValueError("max_evaluations must be >= 0")


@dataclass
class EvalRecord:
    config: Configuration
    measurement: Measurement
    wall_offset: float


@dataclass
class TuningSession:
    kernel_key: str
    strategy: str
    seed: int
    device: DeviceIdent | None = None
    problem: ProblemSize | None = None
    capture_ref: str | None = None
    backend_info: dict = field(default_factory=dict)
    evaluations: list[EvalRecord] = field(default_factory=list)
    best_config: Configuration | None = None
    best_objective: float | None = None
    status: str = STATUS_NO_RESULT
    started_at: str = ""

    @property
    def best(self) -> tuple[Configuration, float] | None:
        if self.best_config is None:
            return None
        return self.best_config, self.best_objective

    def ok_evaluations(self) -> list[EvalRecord]:
        return [e for e in self.evaluations if e.measurement.status == STATUS_OK]


def _config_key(space: ConfigSpace, config: Configuration) -> tuple:
    return tuple(config[name] for name in space.param_names)


def surrogate_propose(
    history: Sequence[EvalRecord],
    space: ConfigSpace,
    rng: SplitMix64 | int,
) -> Configuration:
    """Propose the next configuration from a random candidate pool.

    Scoring: predicted objective from the 5 nearest evaluated neighbors in
    normalized-index space (weights 1/(d+1e-9)) minus an exploration bonus
    beta * d_min * sigma, where d_min is the distance to the nearest already
    evaluated point and sigma the sample standard deviation of observed
    objectives. Ties prefer the larger d_min, then the earliest pool slot.

    Raises SpaceExhausted when no unevaluated valid configuration can be
    drawn anymore.
    """
    if not history:
        raise ValueError("surrogate_propose requires a non-empty history")
    if isinstance(rng, int):
        rng = SplitMix64(rng)

    seen = {_config_key(space, h.config) for h in history}
    pool: list[Configuration] = []
    rejections = 0
    while len(pool) < SURROGATE_POOL:
        candidate = space.sample_one(rng)
        if _config_key(space, candidate) in seen:
            rejections += 1
            if rejections >= _EXCLUSION_LIMIT:
                raise SpaceExhausted("no unevaluated configurations left to draw")
            continue
        rejections = 0
        pool.append(candidate)

    ok = [h for h in history if h.measurement.status == STATUS_OK]
    if not ok:
        return pool[0]  # nothing to model yet; behave like random search

    tried = np.array([space.normalized_encoding(h.config) for h in history])
    known = np.array([space.normalized_encoding(h.config) for h in ok])
    objectives = np.array([h.measurement.objective for h in ok])
    cand = np.array([space.normalized_encoding(c) for c in pool])

    d_known = np.sqrt(((cand[:, None, :] - known[None, :, :]) ** 2).sum(axis=2))
    d_tried = np.sqrt(((cand[:, None, :] - tried[None, :, :]) ** 2).sum(axis=2))
    d_min = d_tried.min(axis=1)

    k = min(SURROGATE_NEIGHBORS, len(ok))
    nearest = np.argpartition(d_known, k - 1, axis=1)[:, :k]
    dists = np.take_along_axis(d_known, nearest, axis=1)
    weights = 1.0 / (dists + 1e-9)
    predictions = (weights * objectives[nearest]).sum(axis=1) / weights.sum(axis=1)

    sigma = float(np.std(objectives, ddof=1)) if len(objectives) > 1 else 0.0
    acquisition = predictions - SURROGATE_BETA * d_min * sigma

    best = 0
    for i in range(1, len(pool)):
        if acquisition[i] < acquisition[best] or (
            acquisition[i] == acquisition[best] and d_min[i] > d_min[best]
        ):
            best = i
    return pool[best]


def tune(
    space: ConfigSpace,
    executor: Executor,
    *,
    strategy: str = "random",
    budget: Budget | None = None,
    seed: int = 0,
    capture: Capture | None = None,
    device: DeviceIdent | None = None,
    kernel_key: str | None = None,
    problem: ProblemSize | None = None,
    capture_ref: str | None = None,
) -> TuningSession:
    """Run one tuning session and return its complete log.

    When a capture is supplied, its definition's space must equal ``space``
    and the session inherits the capture's kernel key and problem size.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy '{strategy}' (choose from {STRATEGIES})")
    if budget is None:
        budget = Budget()
    if capture is not None:
        if capture.definition.space.to_json_obj() != space.to_json_obj():
            raise ValueError("capture's definition space differs from the tuning space")
        kernel_key = kernel_key or capture.definition.kernel_key()
        problem = problem or capture.problem
    if kernel_key is None:
        kernel_key = f"anonymous-{space.fingerprint()}"

    session = TuningSession(
        kernel_key=kernel_key,
        strategy=strategy,
        seed=seed,
        device=device,
        problem=problem,
        capture_ref=capture_ref,
        backend_info=executor.describe(),
        started_at=_dt.datetime.now(_dt.timezone.utc).isoformat(),
    )

    rng = SplitMix64(seed)
    enum_iter = space.enumerate_configs() if strategy == "exhaustive" else None
    start = time.monotonic()

    while True:
        if budget.max_evaluations is not None and len(session.evaluations) >= budget.max_evaluations:
            break
        elapsed = time.monotonic() - start
        if budget.max_wall_seconds is not None and elapsed >= budget.max_wall_seconds:
            break

        if strategy == "exhaustive":
            try:
                config = next(enum_iter)
            except StopIteration:
                break
        elif strategy == "random" or len(session.evaluations) < SURROGATE_BOOTSTRAP:
            config = space.sample_one(rng)
        else:
            try:
                config = surrogate_propose(session.evaluations, space, rng)
            except SpaceExhausted:
                break

        measurement = executor.measure(config)
        session.evaluations.append(
            EvalRecord(config, measurement, time.monotonic() - start)
        )
        if measurement.status == STATUS_OK and (
            session.best_objective is None or measurement.objective < session.best_objective
        ):
            session.best_config = dict(config)
            session.best_objective = measurement.objective

    session.status = STATUS_COMPLETE if session.best_config is not None else STATUS_NO_RESULT
    return session


# ---------------------------------------------------------------------------
# Session files (.klsession): newline-delimited canonical JSON


def _session_header(session: TuningSession) -> dict:
    return {
        "format_version": 1,
        "kernel_key": session.kernel_key,
        "strategy": session.strategy,
        "seed": session.seed,
        "device": session.device.to_json_obj() if session.device else None,
        "problem": list(session.problem) if session.problem else None,
        "capture": session.capture_ref,
        "backend": session.backend_info,
        "best": (
            {"config": session.best_config, "objective": session.best_objective}
            if session.best_config is not None
            else None
        ),
        "status": session.status,
        "evaluations": len(session.evaluations),
        "started_at": session.started_at,
    }


def save_session(session: TuningSession, path: str | Path) -> None:
    lines = [canonical_dumps(_session_header(session))]
    for e in session.evaluations:
        lines.append(
            canonical_dumps(
                {
                    "config": e.config,
                    "status": e.measurement.status,
                    "objective": e.measurement.objective,
                    "stages": dict(e.measurement.stage_timings),
                    "t": e.wall_offset,
                }
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_session(path: str | Path) -> TuningSession:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty session file")
    header = json.loads(lines[0])
    session = TuningSession(
        kernel_key=header["kernel_key"],
        strategy=header["strategy"],
        seed=header["seed"],
        device=DeviceIdent.from_json_obj(header["device"]) if header.get("device") else None,
        problem=tuple(header["problem"]) if header.get("problem") else None,
        capture_ref=header.get("capture"),
        backend_info=header.get("backend", {}),
        status=header["status"],
        started_at=header.get("started_at", ""),
    )
    for ln in lines[1:]:
        rec = json.loads(ln)
        measurement = Measurement(
            status=rec["status"],
            objective=rec["objective"],
            stage_timings=rec.get("stages", {}),
        )
        session.evaluations.append(EvalRecord(rec["config"], measurement, rec["t"]))
    best = header.get("best")
    if best:
        session.best_config = best["config"]
        session.best_objective = best["objective"]
    return session


def session_fingerprint(path: str | Path) -> str:
    """Canonical digest of a session file with timestamp-class fields
    (started_at, per-evaluation wall offsets) removed. Two tuning runs with
    the same seed and a deterministic executor agree on this."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    header = json.loads(lines[0])
    header.pop("started_at", None)
    out = [canonical_dumps(header)]
    for ln in lines[1:]:
        rec = json.loads(ln)
        rec.pop("t", None)
        out.append(canonical_dumps(rec))
    return "\n".join(out)
