"""Exact solutions of convex QPs by scaled iterative refinement over a floating-point oracle."""

from .exact import RatLU, RatMatrix, fraction_str, lu_factor, lu_solve, to_rational
from .model import (
    INF,
    FloatQP,
    GeneralQP,
    GeneralSolution,
    StandardQP,
    objective_exact,
    recover_solution,
    round_to_float,
    to_standard_form,
)
from .oracle import ActiveSetOracle, Basis, OracleResult, OracleSettings, OracleStatus, QPOracle, VarStatus
from .qps import (
    QPSFormatError,
    SolveReport,
    parse_certificate,
    parse_qps,
    read_qps,
    write_certificate,
    write_qps,
    write_report,
)
from .refinement import (
    PRESETS,
    Iterate,
    RefineOutcome,
    RefineParams,
    Residuals,
    Status,
    apply_correction,
    build_refined_qp,
    choose_scaling,
    compute_iteration_bound,
    compute_residuals,
    preset,
    rational_basis_solve,
    refine,
    verify_kkt_exact,
)

__version__ = "0.1.0"

__all__ = [
    "RatLU",
    "RatMatrix",
    "fraction_str",
    "lu_factor",
    "lu_solve",
    "to_rational",
    "INF",
    "FloatQP",
    "GeneralQP",
    "GeneralSolution",
    "StandardQP",
    "objective_exact",
    "recover_solution",
    "round_to_float",
    "to_standard_form",
    "ActiveSetOracle",
    "Basis",
    "OracleResult",
    "OracleSettings",
    "OracleStatus",
    "QPOracle",
    "VarStatus",
    "QPSFormatError",
    "SolveReport",
    "parse_certificate",
    "parse_qps",
    "read_qps",
    "write_certificate",
    "write_qps",
    "write_report",
    "PRESETS",
    "Iterate",
    "RefineOutcome",
    "RefineParams",
    "Residuals",
    "Status",
    "apply_correction",
    "build_refined_qp",
    "choose_scaling",
    "compute_iteration_bound",
    "compute_residuals",
    "preset",
    "rational_basis_solve",
    "refine",
    "verify_kkt_exact",
]
