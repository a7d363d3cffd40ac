"""Trajectory optimization by direct multiple shooting with quasi-interpolated controls."""

from .errors import (
    InvalidArgumentError,
    NumericDivergenceError,
    OutOfDomainError,
    QitrajError,
    ValidationError,
)
from .kernels import GeneratingKernel, eval_kernel, make_kernel, measured_order, moment
from .quasi import ControlGrid, QuasiInterpolant, build_interpolant, eval_signal, sample_signal
from .exprlang import Expression, parse
from .problem import OcpDefinition, builtin, define, load_problem, save_problem, validate
from .integrate import Scheme, simulate
from .nlp import NlpOptions, NlpProblem, NlpResult, Status, check_gradient, kkt_residual, solve
from .transcribe import SolutionBundle, TranscriptionOptions, extract_solution, transcribe
from .metrics import ErrorReport, dft, error_report, error_trajectory, l2_norm, reference, reference_signal

__version__ = "0.1.0"

__all__ = [
    "ControlGrid",
    "ErrorReport",
    "Expression",
    "GeneratingKernel",
    "InvalidArgumentError",
    "NlpOptions",
    "NlpProblem",
    "NlpResult",
    "NumericDivergenceError",
    "OcpDefinition",
    "OutOfDomainError",
    "QitrajError",
    "QuasiInterpolant",
    "Scheme",
    "SolutionBundle",
    "Status",
    "TranscriptionOptions",
    "ValidationError",
    "build_interpolant",
    "builtin",
    "check_gradient",
    "define",
    "dft",
    "error_report",
    "error_trajectory",
    "eval_kernel",
    "eval_signal",
    "extract_solution",
    "kkt_residual",
    "l2_norm",
    "load_problem",
    "make_kernel",
    "measured_order",
    "moment",
    "parse",
    "reference",
    "reference_signal",
    "sample_signal",
    "save_problem",
    "simulate",
    "solve",
    "transcribe",
    "validate",
]
