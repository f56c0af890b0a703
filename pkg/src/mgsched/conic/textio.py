"""Conic-text format v1: line-oriented serializer/parser for ConicProgram.

Layout (LF endings, reals with 17 significant digits):

    CONIC-TEXT 1
    VAR <n>          one line per variable: <id> <kind c|b> <lb> <ub>
    LIN <m>          one line per row: coef*var ... <sense> <rhs>
    SOC <k>          one line per cone: <rhs affine> | <term affine> | ...
    RSOC <k>         one line per cone: <u> | <v> | <term affine> | ...
    OBJ              one affine line
    TAG              one line per tagged row: <L|S|R> <idx> <tag,tag,...>
    END

An affine segment is `coef*var ...` followed by a bare constant token.
Linear-row constants are folded into the rhs, so serialize -> parse ->
serialize is byte-identical.
"""

from __future__ import annotations

from .program import ConicProgram, LinExpr

MAGIC = "CONIC-TEXT 1"


class FormatError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _fmt_affine(e: LinExpr) -> str:
    parts = [f"{_fmt(v)}*{c}" for c, v in sorted(e.coefs.items())]
    parts.append(_fmt(e.const))
    return " ".join(parts)


def _parse_affine(tokens: list[str], lineno: int) -> LinExpr:
    if not tokens:
        raise FormatError(lineno, "empty affine segment")
    coefs = {}
    for tok in tokens[:-1]:
        if "*" not in tok:
            raise FormatError(lineno, f"expected coef*var, got {tok!r}")
        cs, vs = tok.split("*", 1)
        try:
            coefs[int(vs)] = float(cs)
        except ValueError:
            raise FormatError(lineno, f"bad affine term {tok!r}") from None
    try:
        const = float(tokens[-1])
    except ValueError:
        raise FormatError(lineno, f"bad constant {tokens[-1]!r}") from None
    return LinExpr(coefs, const)


def dumps(p: ConicProgram) -> str:
    out = [MAGIC]
    out.append(f"VAR {p.num_vars}")
    for j in range(p.num_vars):
        out.append(f"{j} {p.kinds[j]} {_fmt(p.lb[j])} {_fmt(p.ub[j])}")
    out.append(f"LIN {len(p.lin)}")
    for row in p.lin:
        coefs = " ".join(f"{_fmt(v)}*{c}" for c, v in sorted(row.expr.coefs.items()))
        rhs = row.rhs - row.expr.const
        out.append(f"{coefs} {row.sense} {_fmt(rhs)}".lstrip())
    out.append(f"SOC {len(p.soc)}")
    for row in p.soc:
        segs = [_fmt_affine(row.rhs)] + [_fmt_affine(t) for t in row.terms]
        out.append(" | ".join(segs))
    out.append(f"RSOC {len(p.rsoc)}")
    for row in p.rsoc:
        segs = [_fmt_affine(row.u), _fmt_affine(row.v)]
        segs += [_fmt_affine(t) for t in row.terms]
        out.append(" | ".join(segs))
    out.append("OBJ")
    out.append(_fmt_affine(p.objective))
    out.append("TAG")
    for mark, rows in (("L", p.lin), ("S", p.soc), ("R", p.rsoc)):
        for i, row in enumerate(rows):
            if row.tags:
                out.append(f"{mark} {i} {','.join(row.tags)}")
    out.append("END")
    return "\n".join(out) + "\n"


def serialize(p: ConicProgram, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps(p))


def loads(text: str) -> ConicProgram:
    lines = text.split("\n")
    pos = 0

    def take() -> tuple[int, str]:
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            raise FormatError(len(lines), "unexpected end of file")
        pos += 1
        return pos, lines[pos - 1].strip()

    def expect_count(keyword: str) -> int:
        n, line = take()
        parts = line.split()
        if len(parts) != 2 or parts[0] != keyword:
            raise FormatError(n, f"expected '{keyword} <count>', got {line!r}")
        return int(parts[1])

    n, line = take()
    if line != MAGIC:
        raise FormatError(n, f"bad header {line!r}")
    p = ConicProgram()

    nvar = expect_count("VAR")
    for _ in range(nvar):
        n, line = take()
        parts = line.split()
        if len(parts) != 4:
            raise FormatError(n, f"bad VAR line {line!r}")
        vid, kind, lb, ub = parts
        if int(vid) != p.num_vars:
            raise FormatError(n, f"variable ids must be dense, got {vid}")
        p.add_var(f"v{vid}", kind, float(lb), float(ub))

    nlin = expect_count("LIN")
    for _ in range(nlin):
        n, line = take()
        toks = line.split()
        sense_at = [i for i, t in enumerate(toks) if t in ("<=", ">=", "==")]
        if len(sense_at) != 1 or sense_at[0] != len(toks) - 2:
            raise FormatError(n, f"bad LIN row {line!r}")
        k = sense_at[0]
        expr = _parse_affine(toks[:k] + ["0"], n)
        p.add_lin(expr, toks[k], float(toks[k + 1]))

    nsoc = expect_count("SOC")
    for _ in range(nsoc):
        n, line = take()
        segs = [s.split() for s in line.split("|")]
        if len(segs) < 2:
            raise FormatError(n, "SOC row needs rhs and at least one term")
        rhs = _parse_affine(segs[0], n)
        terms = [_parse_affine(s, n) for s in segs[1:]]
        p.add_soc(terms, rhs)

    nrsoc = expect_count("RSOC")
    for _ in range(nrsoc):
        n, line = take()
        segs = [s.split() for s in line.split("|")]
        if len(segs) < 3:
            raise FormatError(n, "RSOC row needs u, v and at least one term")
        u = _parse_affine(segs[0], n)
        v = _parse_affine(segs[1], n)
        terms = [_parse_affine(s, n) for s in segs[2:]]
        p.add_rsoc(u, v, terms)

    n, line = take()
    if line != "OBJ":
        raise FormatError(n, f"expected OBJ, got {line!r}")
    n, line = take()
    p.objective = _parse_affine(line.split(), n)

    n, line = take()
    if line != "TAG":
        raise FormatError(n, f"expected TAG, got {line!r}")
    while True:
        n, line = take()
        if line == "END":
            break
        parts = line.split()
        if len(parts) != 3 or parts[0] not in ("L", "S", "R"):
            raise FormatError(n, f"bad TAG line {line!r}")
        mark, idx, tags = parts[0], int(parts[1]), tuple(parts[2].split(","))
        group = {"L": p.lin, "S": p.soc, "R": p.rsoc}[mark]
        if idx >= len(group):
            raise FormatError(n, f"TAG references missing row {mark} {idx}")
        group[idx].tags = tags
    return p


def parse(path) -> ConicProgram:
    with open(path) as fh:
        return loads(fh.read())
