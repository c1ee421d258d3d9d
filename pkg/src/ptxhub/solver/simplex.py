"""Bundled two-phase revised primal simplex for test-scale problems.

The problem is brought into standard form ``min c'x, A x = b, x >= 0`` by
shifting, reflecting or splitting columns, turning finite upper bounds into
extra rows and adding slack/surplus columns.  The basis inverse is kept
explicitly and updated with elementary row operations, with a fresh
inversion every ``refactor_every`` pivots.

Pricing is Dantzig's most-negative reduced cost; after a run of degenerate
pivots the rule switches to Bland's smallest-index rule, which cannot cycle.
The ratio test follows Harris (largest pivot among near-ties) and ignores
pivots below ``pivot_tol``.  A final feasibility check turns numerical
breakdown into an ``error`` status rather than a wrong optimum.
"""
from __future__ import annotations

import time

import numpy as np

from .types import LpSolution, ProblemTooLarge

MAX_COLUMNS = 50_000
MAX_ROWS = 5_000


class _StandardForm:
    """``min c'z, M z = b, z >= 0`` plus the map back to the original columns."""

    def __init__(self, problem):
        A = problem.A.toarray()
        m, n = A.shape
        lo, hi, c = problem.col_lower, problem.col_upper, problem.obj
        b = problem.rhs.astype(float).copy()
        self.m_orig, self.n_orig = m, n
        # x_j = offset_j + sum_k scale_k * z_k over the z columns of j
        self.offset = np.zeros(n)
        self.parts: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        cols, costs = [], []
        bound_rows = []  # (z index, upper)
        const = 0.0
        for j in range(n):
            a = A[:, j]
            if np.isfinite(lo[j]) and np.isfinite(hi[j]) and lo[j] == hi[j]:
                self.offset[j] = lo[j]
            elif np.isfinite(lo[j]):
                self.offset[j] = lo[j]
                self.parts[j].append((len(cols), 1.0))
                if np.isfinite(hi[j]):
                    bound_rows.append((len(cols), hi[j] - lo[j]))
                cols.append(a)
                costs.append(c[j])
            elif np.isfinite(hi[j]):
                self.offset[j] = hi[j]
                self.parts[j].append((len(cols), -1.0))
                cols.append(-a)
                costs.append(-c[j])
            else:
                self.parts[j].append((len(cols), 1.0))
                cols.append(a)
                costs.append(c[j])
                self.parts[j].append((len(cols), -1.0))
                cols.append(-a)
                costs.append(-c[j])
            if self.offset[j] != 0.0:
                b -= a * self.offset[j]
                const += c[j] * self.offset[j]
        nz = len(cols)
        M = np.column_stack(cols) if cols else np.zeros((m, 0))
        senses = list(problem.row_sense)
        if bound_rows:
            extra = np.zeros((len(bound_rows), nz))
            for r, (k, u) in enumerate(bound_rows):
                extra[r, k] = 1.0
            M = np.vstack([M, extra])
            b = np.concatenate([b, [u for _, u in bound_rows]])
            senses += ["<="] * len(bound_rows)
        mm = M.shape[0]
        slack_cols = []
        self.slack_of_row = np.full(mm, -1)
        for i, s in enumerate(senses):
            if s == "=":
                continue
            col = np.zeros(mm)
            col[i] = 1.0 if s == "<=" else -1.0
            self.slack_of_row[i] = nz + len(slack_cols)
            slack_cols.append(col)
        if slack_cols:
            M = np.hstack([M, np.column_stack(slack_cols)])
        self.sign = np.where(b < 0, -1.0, 1.0)
        self.M = M * self.sign[:, None]
        self.b = b * self.sign
        self.c = np.concatenate([np.asarray(costs, float), np.zeros(len(slack_cols))])
        self.const = const
        self.nz = nz

    def recover(self, z):
        x = self.offset.copy()
        for j, parts in enumerate(self.parts):
            for k, s in parts:
                x[j] += s * z[k]
        return x


class _Simplex:
    def __init__(self, M, b, c, *, tol=1e-9, max_iter=None, refactor_every=50, degenerate_switch=30):
        self.M, self.b, self.c = M, b, c
        self.m, self.n = M.shape
        self.tol = tol
        self.pivot_tol = 1e-7  # smallest usable pivot
        self.max_iter = max_iter or 50 * (self.m + self.n) + 1000
        self.refactor_every = refactor_every
        self.degenerate_switch = degenerate_switch
        self.iterations = 0

    def _refactor(self):
        self.Binv = np.linalg.inv(self.M[:, self.basis])
        self.xB = self.Binv @ self.b
        self.since_refactor = 0

    def run(self, cost, allowed):
        """Iterate to optimality for ``cost``; ``allowed`` masks enterable columns."""
        degenerate_run = 0
        allowed = allowed.copy()
        while True:
            if self.iterations >= self.max_iter:
                return "iteration_limit"
            y = cost[self.basis] @ self.Binv
            d = cost - y @ self.M
            d[self.basis] = 0.0
            d[~allowed] = 0.0
            scale = 1.0 + np.abs(cost).max(initial=0.0)
            candidates = np.flatnonzero(d < -self.tol * scale)
            if candidates.size == 0:
                if self.since_refactor:
                    # confirm optimality on a fresh factorization
                    self._refactor()
                    continue
                return "optimal"
            if degenerate_run >= self.degenerate_switch:
                q = int(candidates[0])
            else:
                q = int(candidates[np.argmin(d[candidates])])
            u = self.Binv @ self.M[:, q]
            pos = np.flatnonzero(u > self.pivot_tol)
            if pos.size == 0:
                if self.since_refactor:
                    self._refactor()
                    continue
                if d[q] > -1e-6 * scale:
                    # rounding noise in the reduced cost, not a ray
                    allowed[q] = False
                    continue
                return "unbounded"
            xb = np.maximum(self.xB[pos], 0.0)
            if degenerate_run >= self.degenerate_switch:
                ratios = xb / u[pos]
                best = ratios.min()
                ties = pos[ratios <= best + 1e-12 * (1.0 + best)]
                ties = ties[u[ties] >= 1e-3 * u[ties].max()]
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                # Harris: among rows blocking within a small tolerance take the largest pivot
                bound = ((xb + self.tol) / u[pos]).min()
                ties = pos[xb / u[pos] <= bound]
                r = int(ties[np.argmax(u[ties])])
            theta = max(self.xB[r], 0.0) / u[r]
            degenerate_run = degenerate_run + 1 if theta <= self.tol else 0
            # pivot
            self.xB -= theta * u
            self.xB[r] = theta
            self.basis[r] = q
            piv = self.Binv[r] / u[r]
            self.Binv -= np.outer(u, piv)
            self.Binv[r] = piv
            self.iterations += 1
            self.since_refactor += 1
            if self.since_refactor >= self.refactor_every:
                self._refactor()

    def solve(self, initial_basis, artificial_rows):
        """Two-phase solve.  Returns status and removed (redundant) rows."""
        m = self.m
        n_art = len(artificial_rows)
        if n_art:
            art = np.zeros((m, n_art))
            art[artificial_rows, np.arange(n_art)] = 1.0
            self.M = np.hstack([self.M, art])
            self.c = np.concatenate([self.c, np.zeros(n_art)])
        n_real = self.n
        self.n = self.M.shape[1]
        self.basis = np.array(initial_basis, dtype=int)
        for k, i in enumerate(artificial_rows):
            self.basis[i] = n_real + k
        self._refactor()
        removed = []
        if n_art:
            phase1 = np.zeros(self.n)
            phase1[n_real:] = 1.0
            allowed = np.ones(self.n, dtype=bool)
            status = self.run(phase1, allowed)
            if status != "optimal":
                return status, removed
            infeas = phase1[self.basis] @ self.xB
            if infeas > 1e-7 * (1.0 + np.abs(self.b).max(initial=0.0)):
                return "infeasible", removed
            # drive zero-level artificials out of the basis
            for r in range(m):
                if self.basis[r] < n_real:
                    continue
                row = self.Binv[r] @ self.M[:, :n_real]
                row[self.basis[self.basis < n_real]] = 0.0
                cand = np.flatnonzero(np.abs(row) > 1e-7)
                if cand.size:
                    q = int(cand[np.argmax(np.abs(row[cand]))])
                    u = self.Binv @ self.M[:, q]
                    self.basis[r] = q
                    piv = self.Binv[r] / u[r]
                    self.Binv -= np.outer(u, piv)
                    self.Binv[r] = piv
                    self.xB = self.Binv @ self.b
                else:
                    removed.append(r)
            if removed:
                keep = np.setdiff1d(np.arange(m), removed)
                self.M = self.M[keep]
                self.b = self.b[keep]
                self.basis = self.basis[keep]
                self.m = len(keep)
            self.M = self.M[:, :n_real]
            self.c = self.c[:n_real]
            self.n = n_real
            self._refactor()
        status = self.run(self.c, np.ones(self.n, dtype=bool))
        return status, removed


def _feasible(problem, x, tol=1e-6):
    """Primal feasibility of ``x`` relative to the problem's magnitudes."""
    scale = 1.0 + max(np.abs(problem.rhs).max(initial=0.0), np.abs(x).max(initial=0.0))
    if np.any(x < problem.col_lower - tol * scale) or np.any(x > problem.col_upper + tol * scale):
        return False
    act = problem.A @ x
    sense = np.asarray(problem.row_sense)
    gap = act - problem.rhs
    bad = ((sense == "=") & (np.abs(gap) > tol * scale)) | \
          ((sense == "<=") & (gap > tol * scale)) | ((sense == ">=") & (gap < -tol * scale))
    return not bool(np.any(bad))


def solve_reference(problem, *, tol: float = 1e-9, max_iter: int | None = None) -> LpSolution:
    """Solve ``problem`` with the bundled revised simplex.

    Parameters
    ----------
    problem : LpProblem
        At most :data:`MAX_COLUMNS` columns and :data:`MAX_ROWS` rows.
    tol : float
        Pivot and optimality tolerance.
    max_iter : int, optional
        Iteration limit; defaults to ``50 * (rows + columns) + 1000``.

    Returns
    -------
    LpSolution
        Duals follow ``d objective / d rhs``.

    Raises
    ------
    ProblemTooLarge
        If the problem exceeds the size limits.
    """
    if problem.n_cols > MAX_COLUMNS or problem.n_rows > MAX_ROWS:
        raise ProblemTooLarge(
            f"problem has {problem.n_rows} rows x {problem.n_cols} columns; the reference "
            f"solver accepts at most {MAX_ROWS} x {MAX_COLUMNS}; use an external backend"
        )
    start = time.perf_counter()
    sf = _StandardForm(problem)
    m = sf.M.shape[0]
    basis = np.full(m, -1)
    artificial = []
    for i in range(m):
        k = sf.slack_of_row[i]
        if k >= 0 and sf.M[i, k] > 0:
            basis[i] = k
        else:
            artificial.append(i)
    engine = _Simplex(sf.M, sf.b, sf.c, tol=tol, max_iter=max_iter)
    try:
        status, removed = engine.solve(basis, np.array(artificial, dtype=int))
    except np.linalg.LinAlgError:
        status, removed = "singular_basis", []
    wall = time.perf_counter() - start
    n, mo = problem.n_cols, problem.n_rows
    messages = {"iteration_limit": "iteration limit reached",
                "singular_basis": "basis became numerically singular",
                "lost_feasibility": "numerical error: final point violates constraints"}
    x = None
    if status == "optimal":
        z = np.zeros(engine.n)
        z[engine.basis] = engine.xB
        x = sf.recover(z[: sf.nz])
        if not _feasible(problem, x):
            status = "lost_feasibility"
    if status != "optimal":
        mapped = "error" if status in messages else status
        return LpSolution(mapped, np.nan, np.full(n, np.nan), np.full(mo, np.nan),
                          np.full(n, np.nan), wall, "reference", messages.get(status, status),
                          engine.iterations)
    y_kept = engine.c[engine.basis] @ engine.Binv
    y_std = np.zeros(m)
    keep = np.setdiff1d(np.arange(m), removed)
    y_std[keep] = y_kept
    y = (y_std * sf.sign)[:mo]
    reduced = problem.obj - problem.A.T @ y
    objective = float(problem.obj @ x + problem.obj_constant)
    return LpSolution("optimal", objective, x, y, reduced, wall, "reference",
                      "optimal", engine.iterations)
