"""kltune: declare tunable kernels, capture launches, tune them offline, and
select + compile the best configuration at runtime per device and problem
size."""

from .backend import (
    CompileError,
    CompilerInterface,
    DeviceIdent,
    Executor,
    Measurement,
    MockCompiler,
    SimCostModel,
    SimulatedExecutor,
    SubprocessCompiler,
    SubprocessExecutor,
    sim_cost,
)
from .capture import (
    BufferArg,
    Capture,
    CapturePolicy,
    CaptureSession,
    ScalarArg,
    capture_from_args,
    read_capture,
    read_capture_info,
    should_capture,
    write_capture,
)
from .dispatch import LaunchReport, OverheadReport, WisdomKernel
from .kerneldef import (
    CompileRequest,
    KernelBuilder,
    KernelDefinition,
    LaunchGeometry,
)
from .report import (
    EfficiencyMatrix,
    HistogramResult,
    PpmResult,
    Scenario,
    cross_matrix,
    fraction_of_optimum,
    histogram,
    ppm,
)
from .space import ConfigSpace, Configuration, RejectionLimitError, TunableParam
from .tuner import (
    Budget,
    EvalRecord,
    TuningSession,
    load_session,
    save_session,
    surrogate_propose,
    tune,
)
from .wisdom import (
    Provenance,
    SelectionResult,
    WisdomFile,
    WisdomRecord,
    append_result,
    merge_wisdom,
    select,
)

__version__ = "0.1.0"

__all__ = [
    "Budget",
    "BufferArg",
    "Capture",
    "CapturePolicy",
    "CaptureSession",
    "CompileError",
    "CompileRequest",
    "CompilerInterface",
    "ConfigSpace",
    "Configuration",
    "DeviceIdent",
    "EfficiencyMatrix",
    "EvalRecord",
    "Executor",
    "HistogramResult",
    "KernelBuilder",
    "KernelDefinition",
    "LaunchGeometry",
    "LaunchReport",
    "Measurement",
    "MockCompiler",
    "OverheadReport",
    "PpmResult",
    "Provenance",
    "RejectionLimitError",
    "ScalarArg",
    "Scenario",
    "SelectionResult",
    "SimCostModel",
    "SimulatedExecutor",
    "SubprocessCompiler",
    "SubprocessExecutor",
    "TunableParam",
    "TuningSession",
    "WisdomFile",
    "WisdomKernel",
    "WisdomRecord",
    "append_result",
    "capture_from_args",
    "cross_matrix",
    "fraction_of_optimum",
    "histogram",
    "load_session",
    "merge_wisdom",
    "ppm",
    "read_capture",
    "read_capture_info",
    "save_session",
    "select",
    "should_capture",
    "sim_cost",
    "surrogate_propose",
    "tune",
    "write_capture",
]
