"""Command-line workflow: inspect captures, tune them, query wisdom files,
and emit report CSVs.

Exit codes: 0 success, 1 domain error (missing file, bad data,
over-constrained space), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .backend import (
    DeviceIdent,
    Measurement,
    SimCostModel,
    SimulatedExecutor,
    SubprocessCompiler,
    SubprocessExecutor,
)
from .capture import CaptureFormatError, read_capture, read_capture_info
from .expr import EvalError, ParseError
from .kerneldef import DefinitionError, KernelDefinition
from .report import (
    ReportError,
    Scenario,
    cross_matrix,
    histogram,
    histogram_csv,
    matrix_csv,
    matrix_ppm_rows,
    ppm,
    ppm_csv,
)
from .space import RejectionLimitError
from .tuner import Budget, TuningSession, load_session, save_session, tune
from .util import atomic_write_text
from .wisdom import WisdomError, WisdomFile, append_result, load_or_create, merge_wisdom, select, wisdom_path

_DOMAIN_ERRORS = (
    CaptureFormatError,
    DefinitionError,
    EvalError,
    ParseError,
    RejectionLimitError,
    ReportError,
    WisdomError,
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
    ValueError,
)

CONFIG_FILE = "klconfig.json"


def _load_config(path: str | None) -> dict:
    candidate = Path(path) if path else Path(CONFIG_FILE)
    if path is None and not candidate.exists():
        return {}
    with open(candidate, encoding="utf-8") as fh:
        return json.load(fh)


def _parse_problem(text: str) -> tuple[int, ...]:
    try:
        parts = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"problem size must be integers, got {text!r}")
    if not 1 <= len(parts) <= 3:
        raise argparse.ArgumentTypeError("problem size takes 1 to 3 components")
    return parts


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# capture


def _cmd_capture_ls(args, cfg) -> int:
    directory = Path(args.directory or cfg.get("capture_dir", "."))
    rows = []
    for path in sorted(directory.glob("*.klcap")):
        info = read_capture_info(path)
        rows.append(
            {
                "file": path.name,
                "kernel": info["definition"]["name"],
                "problem": info["problem"],
                "bytes": path.stat().st_size,
            }
        )
    if args.json:
        print(json.dumps(rows, indent=2))
        return 0
    for r in rows:
        dims = "x".join(str(c) for c in r["problem"])
        print(f"{r['file']}  kernel={r['kernel']}  problem={dims}  size={r['bytes']}")
    if not rows:
        print(f"no captures in {directory}")
    return 0


def _cmd_capture_show(args, cfg) -> int:
    info = read_capture_info(args.file)
    if args.json:
        print(json.dumps(info, indent=2, sort_keys=True))
        return 0
    print(f"kernel:      {info['definition']['name']}")
    print(f"problem:     {'x'.join(str(c) for c in info['problem'])}")
    print(f"application: {info['application'] or '-'}")
    print(f"timestamp:   {info['timestamp'] or '-'}")
    for s in info["scalars"]:
        print(f"scalar arg{s['position']}: {s['dtype']} = {s['value']}")
    for b in info["buffers"]:
        print(
            f"buffer arg{b['position']}: {b['role']} {b['element_type']}"
            f"[{b['element_count']}] ({b['byte_length']} bytes, crc32 {b['crc32']:#010x})"
        )
    return 0


# ---------------------------------------------------------------------------
# tune


def _make_executor(args, cfg, cap):
    backend = args.backend or cfg.get("backend", "sim")
    if backend == "sim":
        sim_seed = args.sim_seed if args.sim_seed is not None else args.seed
        model = SimCostModel(
            sim_seed,
            cap.definition.space,
            noise_sigma=args.sim_noise if args.sim_noise is not None else cfg.get("sim_noise", 0.0),
        )
        reps = args.repetitions or cfg.get("repetitions", 7)
        return SimulatedExecutor(model, repetitions=reps)
    if backend == "subprocess":
        compile_template = cfg.get("compile_template")
        if not compile_template:
            raise WisdomError("subprocess backend needs 'compile_template' in klconfig.json")
        compiler = SubprocessCompiler(compile_template, cfg.get("run_template"))
        device = DeviceIdent(args.device or cfg.get("device", "unknown"),
                             args.arch or cfg.get("arch", "unknown"))
        return SubprocessExecutor(
            cap.definition, compiler, device,
            problem=cap.problem, scalar_args=cap.scalar_env(),
        )
    raise WisdomError(f"unknown backend '{backend}'")


def _cmd_tune(args, cfg) -> int:
    cap = read_capture(args.capture)
    executor = _make_executor(args, cfg, cap)
    device = DeviceIdent(
        args.device or cfg.get("device", "sim-device"),
        args.arch or cfg.get("arch", "sim"),
    )
    budget = Budget(
        max_evaluations=args.budget_evals if args.budget_evals is not None else cfg.get("budget_evals"),
        max_wall_seconds=args.budget_seconds if args.budget_seconds is not None else cfg.get("budget_seconds", 900.0),
    )
    session = tune(
        cap.definition.space,
        executor,
        strategy=args.strategy,
        budget=budget,
        seed=args.seed,
        capture=cap,
        device=device,
        capture_ref=Path(args.capture).name,
    )

    session_out = args.session_out or (
        f"{Path(args.capture).stem}.{args.strategy}.seed{args.seed}.klsession"
    )
    save_session(session, session_out)

    wisdom_dir = Path(args.wisdom or cfg.get("wisdom_dir", "."))
    wrote_wisdom = ""
    if session.best is not None and not args.no_wisdom:
        wfile = load_or_create(wisdom_dir, session.kernel_key)
        append_result(wfile, session)
        path = wisdom_path(wisdom_dir, session.kernel_key)
        wfile.save(path)
        wrote_wisdom = f"; wisdom -> {path}"

    if session.best is None:
        print(f"no successful evaluations ({len(session.evaluations)} attempted); session -> {session_out}")
        return 0
    print(
        f"best objective {session.best_objective:.6g} over {len(session.evaluations)} "
        f"evaluations ({args.strategy}); session -> {session_out}{wrote_wisdom}"
    )
    return 0


# ---------------------------------------------------------------------------
# wisdom


def _cmd_wisdom_best(args, cfg) -> int:
    path = Path(args.file)
    wfile = WisdomFile.load(path) if path.exists() else None
    default = {}
    if args.definition:
        definition = KernelDefinition.load(args.definition)
        default, _ = definition.space.default_config()
    device = DeviceIdent(args.device, args.arch)
    result = select(wfile, device, args.problem, default)
    if result.match_kind == "default" and not args.definition:
        raise WisdomError(
            "no records matched and no --definition was given to supply the default configuration"
        )
    if args.json:
        print(json.dumps({"config": result.config, "match_kind": result.match_kind}, sort_keys=True))
        return 0
    print(f"match_kind: {result.match_kind}")
    for k in sorted(result.config):
        print(f"  {k} = {result.config[k]}")
    return 0


def _cmd_wisdom_show(args, cfg) -> int:
    wfile = WisdomFile.load(args.file)
    if args.json:
        print(json.dumps(
            {
                "kernel_key": wfile.kernel_key,
                "objective": wfile.objective_name,
                "records": [r.to_json_obj() for r in wfile.records],
            },
            indent=2, sort_keys=True,
        ))
        return 0
    print(f"kernel_key: {wfile.kernel_key}  ({len(wfile.records)} records)")
    for r in wfile.records:
        dims = "x".join(str(c) for c in r.problem)
        print(
            f"  {r.device.name} [{r.device.architecture}] problem={dims} "
            f"objective={r.objective_seconds:.6g}s date={r.provenance.date}"
        )
    return 0


def _cmd_wisdom_merge(args, cfg) -> int:
    files = [WisdomFile.load(p) for p in args.inputs]
    merged = merge_wisdom(files)
    merged.save(args.output)
    print(f"merged {len(files)} files, {len(merged.records)} records -> {args.output}")
    return 0


# ---------------------------------------------------------------------------
# report


def _session_space(args, sessions: list[TuningSession]):
    if not args.definition:
        raise ReportError("--definition is required to rebuild the search space")
    definition = KernelDefinition.load(args.definition)
    space = definition.space
    for s in sessions:
        fp = s.backend_info.get("space_fingerprint")
        if fp and fp != space.fingerprint():
            raise ReportError(
                f"session {s.kernel_key} was tuned on a different space than the definition"
            )
    return definition, space


def _sim_evaluator_for(session: TuningSession, space):
    info = session.backend_info
    if info.get("backend") != "sim":
        raise ReportError("re-evaluation is only possible for sim-backend sessions")
    model = SimCostModel(
        info["seed"],
        space,
        noise_sigma=0.0,  # re-evaluation is noiseless by construction
        failure_restriction=info.get("failure_restriction"),
    )
    return SimulatedExecutor(model, repetitions=1)


def _cmd_report_histogram(args, cfg) -> int:
    session = load_session(args.session)
    markers = []
    evaluator = None
    if args.definition:
        definition, space = _session_space(args, [session])
        default, _ = space.default_config()
        markers.append(("default", default))
        if session.backend_info.get("backend") == "sim":
            executor = _sim_evaluator_for(session, space)
            evaluator = executor.measure
    result = histogram(session, args.bins, markers=markers, evaluator=evaluator)
    _emit(histogram_csv(result), args.out)
    return 0


def _cmd_report_matrix(args, cfg) -> int:
    sessions = [load_session(p) for p in args.sessions]
    definition, space = _session_space(args, sessions)
    executors = [_sim_evaluator_for(s, space) for s in sessions]

    def evaluator(j: int, config) -> Measurement:
        return executors[j].measure(config)

    scenarios = []
    for s, path in zip(sessions, args.sessions):
        device = s.device.name if s.device else "unknown"
        problem = s.problem or (0,)
        scenarios.append(
            Scenario(
                kernel_key=s.kernel_key,
                problem=tuple(problem),
                precision=s.backend_info.get("precision", "any"),
                device_name=f"{device}#{Path(path).stem}",
            )
        )
    matrix = cross_matrix(scenarios, sessions, evaluator)
    _emit(matrix_csv(matrix), args.out)
    return 0


def _cmd_report_ppm(args, cfg) -> int:
    if args.values:
        try:
            effs = [None if v.strip() in ("", "-") else float(v) for v in args.values.split(",")]
        except ValueError:
            raise ReportError(f"bad efficiency list: {args.values!r}")
        result = ppm(effs)
        if args.json:
            print(json.dumps({"best": result.best, "worst": result.worst, "ppm": result.ppm}))
        else:
            print(f"best {result.best:.4f}  worst {result.worst:.4f}  ppm {result.ppm:.4f}")
        return 0
    if args.matrix:
        rows = _read_matrix_csv(args.matrix)
        _emit(ppm_csv(rows), args.out)
        return 0
    raise ReportError("report ppm needs --values or --matrix")


def _read_matrix_csv(path: str) -> list:
    import csv as _csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "scenario":
            raise ReportError(f"{path} is not a matrix CSV (expected 'scenario' header)")
        rows = []
        for row in reader:
            label = row[0]
            effs = [None if cell == "" else float(cell) for cell in row[1:]]
            rows.append((label, ppm(effs)))
    return rows


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kltune",
        description="Capture, tune, and dispatch auto-tuned compute kernels.",
    )
    parser.add_argument("--version", action="version", version=f"kltune {__version__}")
    parser.add_argument("--config", help=f"config file (default ./{CONFIG_FILE} if present)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_capture = sub.add_parser("capture", help="inspect capture files")
    cap_sub = p_capture.add_subparsers(dest="subcommand", required=True)
    p_ls = cap_sub.add_parser("ls", help="list captures in a directory")
    p_ls.add_argument("directory", nargs="?", help="capture directory (default from config)")
    p_ls.add_argument("--json", action="store_true")
    p_ls.set_defaults(func=_cmd_capture_ls)
    p_show = cap_sub.add_parser("show", help="show one capture's metadata")
    p_show.add_argument("file")
    p_show.add_argument("--json", action="store_true")
    p_show.set_defaults(func=_cmd_capture_show)

    p_tune = sub.add_parser("tune", help="tune a captured kernel launch")
    p_tune.add_argument("capture", help="a .klcap file")
    p_tune.add_argument("--strategy", choices=("exhaustive", "random", "surrogate"),
                        default="surrogate")
    p_tune.add_argument("--budget-seconds", type=float, default=None,
                        help="wall-clock budget (default 900)")
    p_tune.add_argument("--budget-evals", type=int, default=None,
                        help="maximum number of evaluations")
    p_tune.add_argument("--backend", choices=("sim", "subprocess"), default=None)
    p_tune.add_argument("--seed", type=int, default=0, help="search strategy seed")
    p_tune.add_argument("--sim-seed", type=int, default=None,
                        help="simulated-landscape seed (default: --seed)")
    p_tune.add_argument("--sim-noise", type=float, default=None,
                        help="simulated measurement noise sigma (default 0)")
    p_tune.add_argument("--repetitions", type=int, default=None,
                        help="simulated launches per measurement (default 7)")
    p_tune.add_argument("--wisdom", help="wisdom directory (default from config or .)")
    p_tune.add_argument("--no-wisdom", action="store_true",
                        help="do not append the result to a wisdom file")
    p_tune.add_argument("--device", help="device name recorded in the session")
    p_tune.add_argument("--arch", help="device architecture recorded in the session")
    p_tune.add_argument("--session-out", help="session log path (.klsession)")
    p_tune.set_defaults(func=_cmd_tune)

    p_wisdom = sub.add_parser("wisdom", help="query and maintain wisdom files")
    wis_sub = p_wisdom.add_subparsers(dest="subcommand", required=True)
    p_best = wis_sub.add_parser("best", help="run the selection cascade for a device/problem")
    p_best.add_argument("file", help="a .wisdom file (may be missing/empty)")
    p_best.add_argument("--device", required=True)
    p_best.add_argument("--arch", required=True)
    p_best.add_argument("--problem", required=True, type=_parse_problem,
                        help="comma-separated, e.g. 256,256,256")
    p_best.add_argument("--definition", help="definition JSON supplying the default configuration")
    p_best.add_argument("--json", action="store_true")
    p_best.set_defaults(func=_cmd_wisdom_best)
    p_wshow = wis_sub.add_parser("show", help="print a wisdom file's records")
    p_wshow.add_argument("file")
    p_wshow.add_argument("--json", action="store_true")
    p_wshow.set_defaults(func=_cmd_wisdom_show)
    p_merge = wis_sub.add_parser("merge", help="keep-best merge of wisdom files")
    p_merge.add_argument("output")
    p_merge.add_argument("inputs", nargs="+")
    p_merge.set_defaults(func=_cmd_wisdom_merge)

    p_report = sub.add_parser("report", help="emit analysis CSVs from sessions")
    rep_sub = p_report.add_subparsers(dest="subcommand", required=True)
    p_hist = rep_sub.add_parser("histogram", help="fraction-of-optimum histogram of a session")
    p_hist.add_argument("session", help="a .klsession file")
    p_hist.add_argument("--bins", type=int, default=20)
    p_hist.add_argument("--definition", help="definition JSON (adds the default-config marker)")
    p_hist.add_argument("--out", help="CSV output path (default stdout)")
    p_hist.set_defaults(func=_cmd_report_histogram)
    p_matrix = rep_sub.add_parser("matrix", help="cross-scenario efficiency matrix")
    p_matrix.add_argument("sessions", nargs="+", help=".klsession files, one per scenario")
    p_matrix.add_argument("--definition", required=True,
                          help="definition JSON shared by all sessions")
    p_matrix.add_argument("--out", help="CSV output path (default stdout)")
    p_matrix.set_defaults(func=_cmd_report_matrix)
    p_ppm = rep_sub.add_parser("ppm", help="performance portability metric")
    p_ppm.add_argument("--values", help="comma-separated efficiencies; '-' marks unsupported")
    p_ppm.add_argument("--matrix", help="matrix CSV produced by 'report matrix'")
    p_ppm.add_argument("--out", help="CSV output path for --matrix mode")
    p_ppm.add_argument("--json", action="store_true")
    p_ppm.set_defaults(func=_cmd_report_ppm)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        return args.func(args, cfg)
    except _DOMAIN_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
