from .program import (BINARY, CONTINUOUS, ConicProgram, LinExpr, LinRow,
                      RsocRow, SocRow, convert_rotated)
from .solve import (GAP_FEASIBLE, INFEASIBLE, ITERATION_LIMIT, NUMERICAL,
                    OPTIMAL, UNBOUNDED, SolveResult, solve_socp)
from .bnb import branch_and_bound
from .textio import FormatError, dumps, loads, parse, serialize

__all__ = [
    "BINARY", "CONTINUOUS", "ConicProgram", "LinExpr", "LinRow", "RsocRow",
    "SocRow", "convert_rotated", "GAP_FEASIBLE", "INFEASIBLE",
    "ITERATION_LIMIT", "NUMERICAL", "OPTIMAL", "UNBOUNDED", "SolveResult",
    "solve_socp", "branch_and_bound", "FormatError", "dumps", "loads",
    "parse", "serialize",
]
