from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STATUSES = ("optimal", "infeasible", "unbounded", "error")


class SolverError(RuntimeError):
    """Backend failure: crash, unreadable output or rejected solution."""


class ProblemTooLarge(SolverError):
    pass


@dataclass(eq=False)
class LpSolution:
    """Primal/dual solution of an :class:`~ptxhub.lpform.LpProblem`.

    ``duals`` are ``d objective / d rhs`` per row; ``reduced_costs`` are
    ``obj - A' duals`` per column.  ``objective`` includes the problem's
    constant term.
    """

    status: str
    objective: float
    x: np.ndarray
    duals: np.ndarray
    reduced_costs: np.ndarray
    wall_time: float
    solver: str
    message: str = ""
    iterations: int | None = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def value(self, problem, name: str) -> float:
        return float(self.x[problem.col_index[name]])

    def dual(self, problem, name: str) -> float:
        return float(self.duals[problem.row_index[name]])
