"""Karush-Kuhn-Tucker verification of a claimed optimal LP solution.

With duals ``y = d objective / d rhs`` and reduced costs ``z = c - A'y`` the
optimality conditions for ``min c'x, A x (sense) b, l <= x <= u`` are

* primal feasibility of rows and bounds,
* dual sign: ``y >= 0`` on ``>=`` rows, ``y <= 0`` on ``<=`` rows,
* stationarity: ``z`` lies in the normal cone of the bounds at ``x``
  (``z >= 0`` unless ``x`` can decrease no further, ``z <= 0`` unless it
  can increase no further), and the reported reduced costs equal ``c - A'y``,
* complementary slackness on rows and bounds,
* zero duality gap.

Row quantities are measured relative to ``1 + |rhs|``; a row passes when its
residual is below ``abs_tol + rel_tol * scale`` with ``scale`` the largest
magnitude among costs and duals.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..lpform import EQ, GE, LE, LpProblem
from .types import LpSolution


@dataclass
class CheckResult:
    name: str
    worst: float
    where: str
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.worst <= self.tolerance)


@dataclass
class KktReport:
    checks: dict[str, CheckResult] = field(default_factory=dict)
    # (check, row kind) -> (worst residual, row name)
    by_kind: dict[tuple[str, str], tuple[float, str]] = field(default_factory=dict)
    primal_objective: float = np.nan
    dual_objective: float = np.nan

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks.values() if not c.passed]

    def worst(self) -> CheckResult:
        return max(self.checks.values(), key=lambda c: c.worst / max(c.tolerance, 1e-300))

    def __str__(self):
        lines = []
        for c in self.checks.values():
            flag = "ok  " if c.passed else "FAIL"
            lines.append(f"{flag} {c.name:<26} worst={c.worst:.3e} tol={c.tolerance:.1e} at {c.where}")
        return "\n".join(lines)


def _record(report, name, values, labels, kinds, tol):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        report.checks[name] = CheckResult(name, 0.0, "-", tol)
        return
    values = np.nan_to_num(values, nan=np.inf)
    k = int(np.argmax(values))
    report.checks[name] = CheckResult(name, float(values[k]), labels[k], tol)
    if kinds is not None:
        for i in np.argsort(-values, kind="stable"):
            key = (name, kinds[i])
            if key not in report.by_kind:
                report.by_kind[key] = (float(values[i]), labels[i])


def check_kkt(problem: LpProblem, solution: LpSolution, abs_tol: float = 1e-6,
              rel_tol: float = 1e-6) -> KktReport:
    """Verify the optimality conditions of ``solution``; never raises."""
    report = KktReport()
    x, y = np.asarray(solution.x, float), np.asarray(solution.duals, float)
    c, b, lo, hi = problem.obj, problem.rhs, problem.col_lower, problem.col_upper
    s = problem.row_sense
    act = problem.A @ x
    rnames = problem.row_names
    cnames = problem.col_names
    rkinds = [t.kind for t in problem.row_tags] if problem.row_tags else ["row"] * problem.n_rows
    ckinds = [t.kind for t in problem.col_tags] if problem.col_tags else ["column"] * problem.n_cols
    scale = max(1.0, np.abs(c).max(initial=0.0), np.abs(y).max(initial=0.0))
    tol = abs_tol + rel_tol * scale
    row_scale = 1.0 + np.abs(b)

    # primal feasibility
    viol = np.where(s == EQ, np.abs(act - b),
                    np.where(s == LE, np.maximum(act - b, 0.0), np.maximum(b - act, 0.0)))
    _record(report, "primal_rows", viol / row_scale, rnames, rkinds, abs_tol + rel_tol)
    bviol = np.maximum(lo - x, 0.0) + np.maximum(x - hi, 0.0)
    _record(report, "primal_bounds", bviol / (1.0 + np.abs(x)), cnames, ckinds, abs_tol + rel_tol)

    # dual sign on inequality rows
    dsign = np.where(s == GE, np.maximum(-y, 0.0), np.where(s == LE, np.maximum(y, 0.0), 0.0))
    _record(report, "dual_sign", dsign, rnames, rkinds, tol)

    # stationarity: reduced costs consistent and in the normal cone of the bounds
    z = c - problem.A.T @ y
    if solution.reduced_costs is not None and np.size(solution.reduced_costs) == problem.n_cols:
        _record(report, "stationarity_residual", np.abs(np.asarray(solution.reduced_costs) - z),
                cnames, ckinds, tol)
    xs = 1.0 + np.abs(x)
    at_lo = np.isfinite(lo) & (x - lo <= (abs_tol + rel_tol) * xs)
    at_hi = np.isfinite(hi) & (hi - x <= (abs_tol + rel_tol) * xs)
    cone = np.where(at_lo, 0.0, np.maximum(z, 0.0)) + np.where(at_hi, 0.0, np.maximum(-z, 0.0))
    _record(report, "stationarity", cone, cnames, ckinds, tol)

    # complementary slackness
    slack = np.where(s == EQ, 0.0, np.abs(act - b))
    _record(report, "complementary_rows", np.abs(y) * slack / row_scale, rnames, rkinds, tol)
    gap_lo = np.where(np.isfinite(lo), x - lo, 0.0)
    gap_hi = np.where(np.isfinite(hi), hi - x, 0.0)
    cs_cols = np.maximum(z, 0.0) * np.abs(gap_lo) + np.maximum(-z, 0.0) * np.abs(gap_hi)
    _record(report, "complementary_bounds", cs_cols / xs, cnames, ckinds, tol)

    # duality gap
    primal = float(c @ x)
    zpos, zneg = np.maximum(z, 0.0), np.minimum(z, 0.0)
    bound_term = np.where(np.isfinite(lo), lo, 0.0) @ zpos + np.where(np.isfinite(hi), hi, 0.0) @ zneg
    dual = float(b @ y + bound_term)
    report.primal_objective = primal + problem.obj_constant
    report.dual_objective = dual + problem.obj_constant
    gap = abs(primal - dual) / max(1.0, abs(primal))
    report.checks["duality_gap"] = CheckResult("duality_gap", gap, "objective", abs_tol + rel_tol)
    return report
