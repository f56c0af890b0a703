"""Registry mapping named decisions to conic-program columns."""

from __future__ import annotations

import math

from ..conic.program import ConicProgram, LinExpr


class DecisionIndex:
    """Named handle table over program columns.

    Keys are tuples like ("gp", slot, t) or ("cP", line, res, t); values are
    column ids.  Name strings baked into the program mirror the keys so a
    serialized program remains self-describing.
    """

    def __init__(self, prog: ConicProgram):
        self.prog = prog
        self._cols: dict[tuple, int] = {}

    def add(self, key: tuple, kind: str = "c",
            lb: float = -math.inf, ub: float = math.inf) -> int:
        if key in self._cols:
            raise ValueError(f"duplicate decision {key}")
        name = key[0] + "[" + ",".join(str(k) for k in key[1:]) + "]"
        col = self.prog.add_var(name, kind, lb, ub)
        self._cols[key] = col
        return col

    def col(self, *key) -> int:
        return self._cols[key]

    def expr(self, *key) -> LinExpr:
        return LinExpr.var(self._cols[key])

    def has(self, *key) -> bool:
        return key in self._cols

    def keys(self):
        return self._cols.keys()

    def value(self, x, *key) -> float:
        return float(x[self._cols[key]])
