"""Adapters for external LP backends.

``cbc``
    File based.  The problem is written as CPLEX-LP text into a temporary
    directory, the executable is run as
    ``cbc model.lp solve printingOptions all solution solution.txt`` and the
    solution file is parsed.  The executable is taken from
    :attr:`BackendConfig.executable`, else the ``PTXHUB_CBC_PATH`` or
    ``PTXHUB_SOLVER_PATH`` environment variables, else ``cbc`` on ``PATH``,
    else the binary bundled with the ``pulp`` package if installed.
``highs``
    In-process HiGHS through :func:`scipy.optimize.linprog`.

Every accepted solution is checked for primal feasibility independently of
the backend; a solution violating a row or bound by more than the
tolerance raises :class:`SolverError`.
"""
from __future__ import annotations

import logging
import os
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..lpform import EQ, GE, LE, LpProblem
from .lpfile import NameMap, write_lp_text
from .types import LpSolution, SolverError

log = logging.getLogger(__name__)

ENV_VARS = ("PTXHUB_CBC_PATH", "PTXHUB_SOLVER_PATH")


@dataclass
class BackendConfig:
    name: str = "highs"
    executable: str | None = None
    options: dict = field(default_factory=dict)
    workdir: str | None = None
    keep_files: bool = False
    time_limit: float | None = None
    feasibility_tol: float = 1e-6


def find_cbc(config: BackendConfig | None = None) -> str | None:
    if config is not None and config.executable:
        return config.executable
    for var in ENV_VARS:
        if os.environ.get(var):
            return os.environ[var]
    found = shutil.which("cbc")
    if found:
        return found
    try:
        import pulp  # noqa: F401  (optional; only used to locate its bundled binary)
    except ImportError:
        return None
    base = Path(pulp.__file__).parent / "solverdir" / "cbc"
    for sub in ("linux/i64/cbc", "linux/arm64/cbc", "osx/i64/cbc", "win/i64/cbc.exe"):
        path = base / sub
        if path.exists():
            return str(path)
    return None


def primal_residuals(problem: LpProblem, x: np.ndarray):
    """Worst row violation and worst bound violation (both absolute)."""
    act = problem.A @ x
    viol = np.zeros(problem.n_rows)
    s = problem.row_sense
    viol[s == EQ] = np.abs(act - problem.rhs)[s == EQ]
    viol[s == LE] = np.maximum(act - problem.rhs, 0.0)[s == LE]
    viol[s == GE] = np.maximum(problem.rhs - act, 0.0)[s == GE]
    scale = 1.0 + np.abs(problem.rhs)
    bound = np.maximum(problem.col_lower - x, 0.0) + np.maximum(x - problem.col_upper, 0.0)
    return viol / scale, bound / (1.0 + np.abs(x))


def _verify(problem, sol: LpSolution, tol: float) -> LpSolution:
    if sol.status != "optimal":
        return sol
    rows, cols = primal_residuals(problem, sol.x)
    worst = max(rows.max(initial=0.0), cols.max(initial=0.0))
    if worst > tol:
        i = int(np.argmax(rows)) if rows.size else -1
        raise SolverError(
            f"{sol.solver} solution rejected: primal residual {worst:.3g} > {tol:g}"
            + (f" (row {problem.row_names[i]})" if i >= 0 and rows[i] == worst else "")
        )
    return sol


def parse_solution(text: str, problem: LpProblem, names: NameMap | None = None,
                   solver: str = "cbc") -> LpSolution:
    """Parse a CBC ``printingOptions all`` solution file.

    Row entries come first, then column entries; each line is
    ``index name activity dual`` (columns: ``value reduced_cost``), optionally
    prefixed by ``**`` for infeasible entries.
    """
    names = names or NameMap()
    lines = text.splitlines()
    if not lines:
        raise SolverError("empty solution file")
    head = lines[0].strip().lower()
    if head.startswith("optimal"):
        status = "optimal"
    elif "infeasible" in head:
        status = "infeasible"
    elif "unbounded" in head:
        status = "unbounded"
    else:
        status = "error"
    n, m = problem.n_cols, problem.n_rows
    x = np.zeros(n)
    y = np.zeros(m)
    seen_rows = seen_cols = 0
    entries = []
    for line in lines[1:]:
        toks = line.replace("**", " ").split()
        if len(toks) < 4:
            continue
        entries.append(toks)
    if len(entries) < m:
        raise SolverError(f"solution lists {len(entries)} entries, expected at least {m} rows")
    for toks in entries[:m]:
        name = names.row(toks[1])
        try:
            i = problem.row_index[name]
        except KeyError:
            raise SolverError(f"unknown row {name!r} in solution file") from None
        y[i] = float(toks[3])
        seen_rows += 1
    for toks in entries[m:]:
        name = names.column(toks[1])
        try:
            j = problem.col_index[name]
        except KeyError:
            raise SolverError(f"unknown column {name!r} in solution file") from None
        x[j] = float(toks[2])
        seen_cols += 1
    if status == "optimal" and seen_rows != m:
        raise SolverError("solution file is missing rows")
    obj = float(problem.obj @ x + problem.obj_constant)
    reduced = problem.obj - problem.A.T @ y
    return LpSolution(status, obj if status == "optimal" else np.nan, x, y, reduced,
                      0.0, solver, lines[0].strip())


def _solve_cbc(problem: LpProblem, config: BackendConfig) -> LpSolution:
    exe = find_cbc(config)
    if exe is None:
        raise SolverError(
            "no CBC executable found; set PTXHUB_CBC_PATH or install cbc/pulp"
        )
    text, names = write_lp_text(problem)
    tmp = tempfile.mkdtemp(prefix="ptxhub-", dir=config.workdir)
    try:
        lp_path = Path(tmp) / "model.lp"
        sol_path = Path(tmp) / "solution.txt"
        lp_path.write_text(text)
        (Path(tmp) / "names.tsv").write_text(names.to_text())
        cmd = [exe, str(lp_path)]
        if config.time_limit:
            cmd += ["sec", str(config.time_limit)]
        for key, value in config.options.items():
            cmd += [str(key), str(value)]
        cmd += ["solve", "printingOptions", "all", "solution", str(sol_path)]
        start = time.perf_counter()
        try:
            proc = subprocess.run(cmd, capture_output=True, text=True, timeout=None)
        except OSError as exc:
            raise SolverError(f"cannot run {exe}: {exc}") from exc
        wall = time.perf_counter() - start
        if proc.returncode != 0 or not sol_path.exists():
            tail = (proc.stdout + proc.stderr)[-2000:]
            raise SolverError(f"cbc failed (exit {proc.returncode}):\n{tail}")
        sol = parse_solution(sol_path.read_text(), problem, names, solver="cbc")
        sol.wall_time = wall
        return sol
    finally:
        if config.keep_files:
            log.info("cbc files kept in %s", tmp)
        else:
            shutil.rmtree(tmp, ignore_errors=True)


def _solve_highs(problem: LpProblem, config: BackendConfig) -> LpSolution:
    from scipy.optimize import linprog

    s = problem.row_sense
    le, ge, eq = np.flatnonzero(s == LE), np.flatnonzero(s == GE), np.flatnonzero(s == EQ)
    A = problem.A.tocsr()
    ub_rows = np.concatenate([le, ge])
    A_ub = sp.vstack([A[le], -A[ge]]).tocsr() if ub_rows.size else None
    b_ub = np.concatenate([problem.rhs[le], -problem.rhs[ge]]) if ub_rows.size else None
    A_eq = A[eq] if eq.size else None
    b_eq = problem.rhs[eq] if eq.size else None
    bounds = np.column_stack([problem.col_lower, problem.col_upper])
    options = dict(config.options)
    if config.time_limit:
        options["time_limit"] = config.time_limit
    start = time.perf_counter()
    res = linprog(problem.obj, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs", options=options)
    wall = time.perf_counter() - start
    n, m = problem.n_cols, problem.n_rows
    status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status, "error")
    if status != "optimal":
        return LpSolution(status, np.nan, np.full(n, np.nan), np.full(m, np.nan),
                          np.full(n, np.nan), wall, "highs", res.message,
                          getattr(res, "nit", None))
    y = np.zeros(m)
    if ub_rows.size:
        marg = res.ineqlin.marginals
        y[le] = marg[: le.size]
        y[ge] = -marg[le.size:]
    if eq.size:
        y[eq] = res.eqlin.marginals
    x = res.x
    reduced = problem.obj - problem.A.T @ y
    return LpSolution("optimal", float(problem.obj @ x + problem.obj_constant), x, y,
                      reduced, wall, "highs", res.message, getattr(res, "nit", None))


BACKENDS = {"cbc": _solve_cbc, "highs": _solve_highs}


def solve_external(problem: LpProblem, config: BackendConfig | None = None) -> LpSolution:
    """Solve with an external backend and verify the primal solution.

    Raises
    ------
    SolverError
        Unknown backend, backend crash, unreadable output, or a returned
        solution violating the feasibility tolerance.
    """
    config = config or BackendConfig()
    try:
        backend = BACKENDS[config.name]
    except KeyError:
        raise SolverError(f"unknown backend {config.name!r}; choose from {sorted(BACKENDS)}") from None
    sol = backend(problem, config)
    return _verify(problem, sol, config.feasibility_tol)
