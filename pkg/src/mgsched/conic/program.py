"""Solver-agnostic mixed-integer second-order cone program representation.

A program is a variable table plus linear rows, standard second-order
cone rows ||terms|| <= rhs, and rotated cone rows ||terms||^2 <= 2*u*v,
all with affine entries.  Every row carries a tuple of audit tags that
map it back to the model equation (or "plumbing") it came from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

CONTINUOUS = "c"
BINARY = "b"

SENSES = ("<=", ">=", "==")


class LinExpr:
    """Sparse affine expression over program columns: sum(coefs)*x + const."""

    __slots__ = ("coefs", "const")

    def __init__(self, coefs: dict[int, float] | None = None, const: float = 0.0):
        self.coefs = dict(coefs) if coefs else {}
        self.const = float(const)

    @staticmethod
    def var(col: int, coef: float = 1.0) -> "LinExpr":
        return LinExpr({col: float(coef)})

    @staticmethod
    def constant(c: float) -> "LinExpr":
        return LinExpr({}, c)

    def copy(self) -> "LinExpr":
        return LinExpr(self.coefs, self.const)

    def add_term(self, col: int, coef: float) -> "LinExpr":
        if coef != 0.0:
            self.coefs[col] = self.coefs.get(col, 0.0) + coef
            if self.coefs[col] == 0.0:
                del self.coefs[col]
        return self

    def __add__(self, other):
        out = self.copy()
        if isinstance(other, LinExpr):
            for c, v in other.coefs.items():
                out.add_term(c, v)
            out.const += other.const
        else:
            out.const += float(other)
        return out

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, LinExpr):
            return self + (other * -1.0)
        return self + (-float(other))

    def __rsub__(self, other):
        return (self * -1.0) + other

    def __mul__(self, s: float):
        s = float(s)
        return LinExpr({c: v * s for c, v in self.coefs.items()}, self.const * s)

    __rmul__ = __mul__

    def value(self, x) -> float:
        return self.const + sum(v * x[c] for c, v in self.coefs.items())

    def is_constant(self) -> bool:
        return not self.coefs


@dataclass
class LinRow:
    expr: LinExpr           # expr <sense> 0 is NOT the convention; see rhs
    sense: str              # "<=", ">=", "=="
    rhs: float
    tags: tuple[str, ...] = ()


@dataclass
class SocRow:
    """||terms||_2 <= rhs, entries affine."""

    terms: list[LinExpr]
    rhs: LinExpr
    tags: tuple[str, ...] = ()


@dataclass
class RsocRow:
    """||terms||_2^2 <= 2*u*v with u, v affine (nonnegativity implied)."""

    u: LinExpr
    v: LinExpr
    terms: list[LinExpr]
    tags: tuple[str, ...] = ()


@dataclass
class ConicProgram:
    names: list[str] = field(default_factory=list)
    kinds: list[str] = field(default_factory=list)
    lb: list[float] = field(default_factory=list)
    ub: list[float] = field(default_factory=list)
    lin: list[LinRow] = field(default_factory=list)
    soc: list[SocRow] = field(default_factory=list)
    rsoc: list[RsocRow] = field(default_factory=list)
    objective: LinExpr = field(default_factory=LinExpr)

    # -- construction -------------------------------------------------

    def add_var(self, name: str, kind: str = CONTINUOUS,
                lb: float = -math.inf, ub: float = math.inf) -> int:
        if kind not in (CONTINUOUS, BINARY):
            raise ValueError(f"unknown variable kind {kind!r}")
        if lb > ub:
            raise ValueError(f"variable {name}: lb {lb} > ub {ub}")
        if kind == BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        self.names.append(name)
        self.kinds.append(kind)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        return len(self.names) - 1

    def _check_expr(self, e: LinExpr):
        n = len(self.names)
        for c in e.coefs:
            if not 0 <= c < n:
                raise ValueError(f"row references undeclared variable {c}")

    def add_lin(self, expr: LinExpr, sense: str, rhs: float,
                tags: tuple[str, ...] = ()) -> int:
        if sense not in SENSES:
            raise ValueError(f"bad sense {sense!r}")
        self._check_expr(expr)
        self.lin.append(LinRow(expr, sense, float(rhs), tuple(tags)))
        return len(self.lin) - 1

    def add_soc(self, terms: list[LinExpr], rhs: LinExpr,
                tags: tuple[str, ...] = ()) -> int:
        for t in terms:
            self._check_expr(t)
        self._check_expr(rhs)
        self.soc.append(SocRow(list(terms), rhs, tuple(tags)))
        return len(self.soc) - 1

    def add_rsoc(self, u: LinExpr, v: LinExpr, terms: list[LinExpr],
                 tags: tuple[str, ...] = ()) -> int:
        for t in terms:
            self._check_expr(t)
        self._check_expr(u)
        self._check_expr(v)
        self.rsoc.append(RsocRow(u, v, list(terms), tuple(tags)))
        return len(self.rsoc) - 1

    # -- queries ------------------------------------------------------

    @property
    def num_vars(self) -> int:
        return len(self.names)

    def binary_cols(self) -> list[int]:
        return [j for j, k in enumerate(self.kinds) if k == BINARY]

    def col(self, name: str) -> int:
        return self.names.index(name)

    def all_tags(self) -> set[str]:
        out: set[str] = set()
        for group in (self.lin, self.soc, self.rsoc):
            for row in group:
                out.update(row.tags)
        return out

    # -- point checks -------------------------------------------------

    def check_point(self, x, tol: float = 1e-6) -> list[str]:
        """Return one message per violated row/bound at point x."""
        bad = []
        for j in range(self.num_vars):
            if x[j] < self.lb[j] - tol or x[j] > self.ub[j] + tol:
                bad.append(f"bound {self.names[j]}={x[j]} outside "
                           f"[{self.lb[j]}, {self.ub[j]}]")
        for k, row in enumerate(self.lin):
            v = row.expr.value(x)
            if row.sense == "<=" and v > row.rhs + tol:
                bad.append(f"lin[{k}] {row.tags}: {v} > {row.rhs}")
            elif row.sense == ">=" and v < row.rhs - tol:
                bad.append(f"lin[{k}] {row.tags}: {v} < {row.rhs}")
            elif row.sense == "==" and abs(v - row.rhs) > tol:
                bad.append(f"lin[{k}] {row.tags}: {v} != {row.rhs}")
        for k, row in enumerate(self.soc):
            nrm = math.sqrt(sum(t.value(x) ** 2 for t in row.terms))
            if nrm > row.rhs.value(x) + tol:
                bad.append(f"soc[{k}] {row.tags}: ||.||={nrm} > {row.rhs.value(x)}")
        for k, row in enumerate(self.rsoc):
            w2 = sum(t.value(x) ** 2 for t in row.terms)
            u, v = row.u.value(x), row.v.value(x)
            if u < -tol or v < -tol or w2 > 2 * u * v + tol:
                bad.append(f"rsoc[{k}] {row.tags}: ||w||^2={w2} > 2*{u}*{v}")
        return bad


def convert_rotated(row: RsocRow) -> SocRow:
    """Rewrite ||w||^2 <= 2 u v as ||(u - v, sqrt(2) w)|| <= u + v."""
    terms = [row.u - row.v] + [t * math.sqrt(2.0) for t in row.terms]
    return SocRow(terms, row.u + row.v, row.tags)
