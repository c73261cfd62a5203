"""Analyses over session and wisdom data: fraction-of-optimum distributions,
the cross-scenario portability matrix, and the performance portability metric
(harmonic mean of per-scenario efficiencies, zero if any scenario is
unsupported). All outputs are plain data plus CSV emitters; rendering is out
of scope."""

from __future__ import annotations

import io
import csv
import statistics
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .backend import STATUS_OK, Measurement
from .space import Configuration
from .tuner import TuningSession


class ReportError(Exception):
    pass


@dataclass(frozen=True)
class Scenario:
    """One (kernel, problem size, precision, device) tuning target."""

    kernel_key: str
    problem: tuple[int, ...]
    precision: str
    device_name: str

    def __post_init__(self) -> None:
        if not (self.kernel_key and self.problem and self.precision and self.device_name):
            raise ReportError("scenario components must be non-empty")

    @property
    def label(self) -> str:
        dims = "x".join(str(c) for c in self.problem)
        return f"{self.kernel_key}-{dims}-{self.precision}-{self.device_name}"


# Evaluates a configuration under scenario index j; returns a Measurement.
Evaluator = Callable[[int, Configuration], Measurement]


def _config_objective(
    session: TuningSession,
    config: Configuration,
    evaluator: Callable[[Configuration], Measurement] | None = None,
) -> float:
    for e in session.evaluations:
        if e.config == config and e.measurement.status == STATUS_OK:
            return e.measurement.objective
    if evaluator is not None:
        m = evaluator(config)
        if m.status == STATUS_OK:
            return m.objective
        raise ReportError(f"configuration failed under evaluator (status {m.status})")
    raise ReportError("configuration has no measurement in this session")


def fraction_of_optimum(
    session: TuningSession,
    config: Configuration,
    evaluator: Callable[[Configuration], Measurement] | None = None,
) -> float:
    """best_objective / config_objective; 1.0 means the config is optimal,
    0.8 means it reaches 80% of the session's best performance."""
    if session.best is None:
        raise ReportError("session has no best result")
    return session.best_objective / _config_objective(session, config, evaluator)


@dataclass
class EfficiencyMatrix:
    scenarios: list[Scenario]
    entries: list[list[float | None]] = field(default_factory=list)

    def row(self, i: int) -> list[float | None]:
        return self.entries[i]


def cross_matrix(
    scenarios: Sequence[Scenario],
    sessions: Sequence[TuningSession],
    evaluator: Evaluator,
) -> EfficiencyMatrix:
    """entry[i][j]: fraction of scenario j's optimum achieved by the
    configuration that is optimal for scenario i. Failures become None."""
    if len(scenarios) != len(sessions):
        raise ReportError("one session per scenario required")
    fingerprints = {s.kernel_key for s in sessions}
    if len(fingerprints) > 1:
        raise ReportError("all sessions must share one kernel (space) to be comparable")
    for s in sessions:
        if s.best is None:
            raise ReportError("every session needs a best configuration")

    matrix = EfficiencyMatrix(scenarios=list(scenarios))
    for i, source in enumerate(sessions):
        row: list[float | None] = []
        best_config = source.best_config
        for j, target in enumerate(sessions):
            m = evaluator(j, best_config)
            if m.status != STATUS_OK:
                row.append(None)
            else:
                row.append(target.best_objective / m.objective)
        matrix.entries.append(row)
    return matrix


@dataclass(frozen=True)
class PpmResult:
    best: float
    worst: float
    ppm: float


def ppm(efficiencies: Sequence[float | None]) -> PpmResult:
    """Harmonic mean of per-scenario efficiencies; an unsupported scenario
    (None) pins the metric to zero. Also reports the best and worst
    supported efficiency for table-style output."""
    if not efficiencies:
        raise ReportError("empty scenario set")
    present = [e for e in efficiencies if e is not None]
    if len(present) != len(efficiencies):
        return PpmResult(best=max(present, default=0.0), worst=0.0, ppm=0.0)
    for e in present:
        if e <= 0:
            raise ReportError(f"efficiencies must be positive, got {e}")
    return PpmResult(
        best=max(present),
        worst=min(present),
        ppm=statistics.harmonic_mean(present),
    )


@dataclass
class HistogramResult:
    bin_edges: list[float]  # len == bins + 1, spanning [0, 1]
    counts: list[int]
    markers: list[tuple[str, float]] = field(default_factory=list)


def histogram(
    session: TuningSession,
    bins: int,
    markers: Sequence[tuple[str, Configuration]] = (),
    evaluator: Callable[[Configuration], Measurement] | None = None,
) -> HistogramResult:
    """Bin the fraction-of-optimum of every successful evaluation over [0, 1].

    ``markers`` label reference configurations (the default configuration,
    a configuration tuned elsewhere) whose fraction is reported alongside.
    """
    if bins < 1:
        raise ReportError("bins must be >= 1")
    ok = session.ok_evaluations()
    if not ok:
        raise ReportError("session has no successful evaluations")
    edges = [i / bins for i in range(bins + 1)]
    counts = [0] * bins
    for e in ok:
        f = session.best_objective / e.measurement.objective
        idx = min(int(f * bins), bins - 1)
        counts[idx] += 1
    out = HistogramResult(bin_edges=edges, counts=counts)
    for label, config in markers:
        out.markers.append((label, fraction_of_optimum(session, config, evaluator)))
    return out


# ---------------------------------------------------------------------------
# CSV emission


def histogram_csv(result: HistogramResult) -> str:
    """Rows of bin_low,bin_high,count; marker rows use bin_low="marker",
    bin_high=label, count=fraction."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_low", "bin_high", "count"])
    for i, count in enumerate(result.counts):
        w.writerow([f"{result.bin_edges[i]:.6g}", f"{result.bin_edges[i + 1]:.6g}", count])
    for label, fraction in result.markers:
        w.writerow(["marker", label, f"{fraction:.6f}"])
    return buf.getvalue()


def matrix_csv(matrix: EfficiencyMatrix) -> str:
    """Row scenario x column scenario; empty cell = unsupported."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario"] + [s.label for s in matrix.scenarios])
    for s, row in zip(matrix.scenarios, matrix.entries):
        w.writerow([s.label] + ["" if e is None else f"{e:.6f}" for e in row])
    return buf.getvalue()


def ppm_csv(rows: Sequence[tuple[str, PpmResult]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "best", "worst", "ppm"])
    for label, r in rows:
        w.writerow([label, f"{r.best:.6f}", f"{r.worst:.6f}", f"{r.ppm:.6f}"])
    return buf.getvalue()


def matrix_ppm_rows(matrix: EfficiencyMatrix) -> list[tuple[str, PpmResult]]:
    """One PPM row per matrix row: how portable each scenario's optimum is."""
    return [
        (s.label, ppm(row)) for s, row in zip(matrix.scenarios, matrix.entries)
    ]
