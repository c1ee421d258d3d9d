"""CPLEX-LP text serialization.

Numbers use Python's shortest round-trip ``repr`` with a trailing ``.0``
dropped, so identical problems give byte-identical files.  Names containing
characters the format does not allow are rewritten; the returned
:class:`NameMap` records every rewrite so backend output can be mapped back.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..lpform import LpProblem, RowTag

_ILLEGAL = re.compile(r"[^A-Za-z0-9!\"#$%&()/,.;?@_`'{}|~]")
_MAX_NAME = 255
_TERMS_PER_LINE = 8


@dataclass
class NameMap:
    """Maps names used in the LP file back to problem names."""

    columns: dict[str, str] = field(default_factory=dict)
    rows: dict[str, str] = field(default_factory=dict)

    def column(self, lp_name: str) -> str:
        return self.columns.get(lp_name, lp_name)

    def row(self, lp_name: str) -> str:
        return self.rows.get(lp_name, lp_name)

    def to_text(self) -> str:
        lines = [f"col\t{a}\t{b}" for a, b in sorted(self.columns.items())]
        lines += [f"row\t{a}\t{b}" for a, b in sorted(self.rows.items())]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str) -> "NameMap":
        out = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            kind, a, b = line.split("\t", 2)
            (out.columns if kind == "col" else out.rows)[a] = b
        return out


def fmt(value: float) -> str:
    """Shortest round-trip decimal; integers lose their ``.0``."""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    text = repr(float(value))
    if text.endswith(".0"):
        text = text[:-2]
    if text == "-0":
        text = "0"
    return text


def _sanitize(names, taken=None):
    taken = set() if taken is None else taken
    out, back = [], {}
    for name in names:
        lp = _ILLEGAL.sub("_", name)
        if not lp or lp[0].isdigit() or lp[0] == ".":
            lp = "_" + lp
        lp = lp[:_MAX_NAME]
        if lp in taken:
            k = 1
            while f"{lp[:_MAX_NAME - 8]}~{k}" in taken:
                k += 1
            lp = f"{lp[:_MAX_NAME - 8]}~{k}"
        taken.add(lp)
        out.append(lp)
        if lp != name:
            back[lp] = name
    return out, back


def _term(magnitude, name) -> str:
    """``name`` alone for a unit coefficient, else ``coef name``."""
    return name if magnitude == 1.0 else f"{fmt(magnitude)} {name}"


def _expr(coefs, names) -> list[str]:
    parts = []
    for k, (v, nm) in enumerate(zip(coefs, names)):
        if k == 0 and v >= 0:
            parts.append(_term(v, nm))
        elif v < 0:
            parts.append(f"- {_term(-v, nm)}")
        else:
            parts.append(f"+ {_term(v, nm)}")
    lines = []
    for k in range(0, len(parts), _TERMS_PER_LINE):
        lines.append(" ".join(parts[k:k + _TERMS_PER_LINE]))
    return lines


def write_lp_text(problem: LpProblem) -> tuple[str, NameMap]:
    """Serialize ``problem`` to CPLEX-LP text.

    Returns
    -------
    text : str
    names : NameMap
        Rewrites applied to column and row names (empty if none).
    """
    cols, col_back = _sanitize(problem.col_names)
    rows, row_back = _sanitize(problem.row_names, taken=set(cols) | {"obj"})
    A = problem.A.tocsr()
    A.sort_indices()
    used = np.zeros(problem.n_cols, dtype=bool)
    used[A.indices] = True

    out = ["Minimize"]
    if problem.obj_constant:
        out.insert(0, f"\\ objective constant: {fmt(problem.obj_constant)}")
    nz = np.flatnonzero((problem.obj != 0) | ~used)
    if nz.size == 0 and problem.n_cols:
        nz = np.array([0])
    terms = _expr(problem.obj[nz], [cols[j] for j in nz])
    if terms:
        out.append(" obj: " + terms[0])
        out.extend("   " + t for t in terms[1:])
    else:
        out.append(" obj:")
    out.append("Subject To")
    for i in range(problem.n_rows):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        idx, vals = A.indices[lo:hi], A.data[lo:hi]
        if idx.size == 0:
            idx, vals = np.array([0]), np.array([0.0])
        lines = _expr(vals, [cols[j] for j in idx])
        tail = f" {problem.row_sense[i]} {fmt(problem.rhs[i])}"
        lines[-1] += tail
        out.append(f" {rows[i]}: " + lines[0])
        out.extend("   " + t for t in lines[1:])
    bounds = []
    for j in range(problem.n_cols):
        lo, hi = problem.col_lower[j], problem.col_upper[j]
        if lo == 0.0 and math.isinf(hi) and hi > 0:
            continue
        if math.isinf(lo) and math.isinf(hi):
            bounds.append(f" {cols[j]} free")
        elif lo == hi:
            bounds.append(f" {cols[j]} = {fmt(lo)}")
        else:
            bounds.append(f" {fmt(lo)} <= {cols[j]} <= {fmt(hi) if math.isfinite(hi) else '+inf'}")
    if bounds:
        out.append("Bounds")
        out.extend(bounds)
    out.append("End")
    return "\n".join(out) + "\n", NameMap(col_back, row_back)


# ---------------------------------------------------------------------------
# reader (subset produced by write_lp_text and common hand-written files)
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"<=|>=|=<|=>|[<>=]|(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?(?![^\s<>=+-])|[+-]|[^\s<>=+-]+"
)


def _number(tok: str) -> float | None:
    try:
        return float(tok)
    except ValueError:
        low = tok.lower()
        if low in ("inf", "infinity", "+inf"):
            return math.inf
        return None


def _linear(tokens):
    """Parse ``[+|-] [coef] name ...`` into a list of (coef, name)."""
    terms, sign, coef = [], 1.0, None
    for tok in tokens:
        if tok == "+":
            continue
        if tok == "-":
            sign = -sign
            continue
        num = _number(tok)
        if num is not None and coef is None and not math.isinf(num):
            coef = num
            continue
        terms.append((sign * (1.0 if coef is None else coef), tok))
        sign, coef = 1.0, None
    return terms


def read_lp_text(text: str) -> LpProblem:
    """Parse CPLEX-LP text into an :class:`LpProblem` (rows tagged ``unknown``)."""
    section = None
    constant = 0.0
    sense_max = False
    obj_tokens: list[str] = []
    rows: list[tuple[str, list[str]]] = []
    bound_lines: list[str] = []
    current: list[str] | None = None
    for raw in text.splitlines():
        m = re.match(r"\\\s*objective constant:\s*(\S+)", raw)
        if m:
            constant = float(m.group(1))
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        low = line.lower()
        if low in ("minimize", "minimise", "min", "maximize", "maximise", "max"):
            section, sense_max = "obj", low.startswith("max")
            continue
        if low in ("subject to", "such that", "st", "s.t."):
            section = "rows"
            continue
        if low == "bounds":
            section = "bounds"
            continue
        if low == "end":
            break
        if section == "obj":
            if ":" in line:
                line = line.split(":", 1)[1]
            obj_tokens.extend(_TOKEN.findall(line))
        elif section == "rows":
            m = re.match(r"([^:\s]+)\s*:(.*)", line)
            if m:
                current = _TOKEN.findall(m.group(2))
                rows.append((m.group(1), current))
            elif current is not None:
                current.extend(_TOKEN.findall(line))
        elif section == "bounds":
            bound_lines.append(line)

    col_names: list[str] = []
    index: dict[str, int] = {}

    def col(name):
        if name not in index:
            index[name] = len(col_names)
            col_names.append(name)
        return index[name]

    obj_terms = _linear(obj_tokens)
    for _, nm in obj_terms:
        col(nm)
    ti, tj, tv, senses, rhs, names = [], [], [], [], [], []
    for r, (name, toks) in enumerate(rows):
        k = next(i for i, t in enumerate(toks) if t in ("<=", ">=", "=", "<", ">", "=<", "=>"))
        op = {"<": "<=", "=<": "<=", ">": ">=", "=>": ">="}.get(toks[k], toks[k])
        value = toks[k + 1:]
        neg = value[0] == "-"
        num = float(value[-1]) * (-1.0 if neg else 1.0)
        for v, nm in _linear(toks[:k]):
            ti.append(r)
            tj.append(col(nm))
            tv.append(v)
        names.append(name)
        senses.append(op)
        rhs.append(num)
    n = len(col_names)
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    for line in bound_lines:
        toks = line.split()
        if len(toks) == 2 and toks[1].lower() == "free":
            j = col(toks[0])
            lo, hi = _grow(lo, hi, len(col_names))
            lo[j], hi[j] = -np.inf, np.inf
        elif len(toks) == 5:
            j = col(toks[2])
            lo, hi = _grow(lo, hi, len(col_names))
            lo[j], hi[j] = _number(toks[0]), _number(toks[4])
        elif len(toks) == 3:
            j = col(toks[0])
            lo, hi = _grow(lo, hi, len(col_names))
            v = _number(toks[2])
            if toks[1] == "=":
                lo[j] = hi[j] = v
            elif toks[1] in ("<=", "=<"):
                hi[j] = v
            else:
                lo[j] = v
        else:
            raise ValueError(f"cannot parse bound line {line!r}")
    n = len(col_names)
    lo, hi = _grow(lo, hi, n)
    c = np.zeros(n)
    for v, nm in obj_terms:
        c[index[nm]] += v
    if sense_max:
        c = -c
    A = sp.csr_matrix((tv, (ti, tj)), shape=(len(rows), n))
    A.sum_duplicates()
    A.eliminate_zeros()
    return LpProblem(
        col_names=col_names,
        col_lower=lo,
        col_upper=hi,
        obj=c,
        row_names=names,
        row_sense=np.array(senses, dtype="<U2"),
        rhs=np.array(rhs, dtype=float),
        A=A,
        row_tags=[RowTag("unknown", nm) for nm in names],
        obj_constant=constant,
    )


def _grow(lo, hi, n):
    if lo.size < n:
        lo = np.concatenate([lo, np.zeros(n - lo.size)])
        hi = np.concatenate([hi, np.full(n - hi.size, np.inf)])
    return lo, hi
