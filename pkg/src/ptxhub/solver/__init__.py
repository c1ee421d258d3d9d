"""LP solvers: a bundled reference simplex and external backend adapters."""
from .external import BackendConfig, find_cbc, parse_solution, primal_residuals, solve_external
from .kkt import KktReport, check_kkt
from .lpfile import NameMap, read_lp_text, write_lp_text
from .simplex import MAX_COLUMNS, MAX_ROWS, solve_reference
from .types import LpSolution, ProblemTooLarge, SolverError


def solve(problem, solver: str = "reference", config: BackendConfig | None = None) -> LpSolution:
    """Dispatch to :func:`solve_reference` or :func:`solve_external` by name."""
    if solver == "reference":
        return solve_reference(problem)
    config = config or BackendConfig(name=solver)
    if config.name != solver:
        config = BackendConfig(**{**config.__dict__, "name": solver})
    return solve_external(problem, config)


__all__ = [
    "BackendConfig", "KktReport", "LpSolution", "MAX_COLUMNS", "MAX_ROWS", "NameMap",
    "ProblemTooLarge", "SolverError", "check_kkt", "find_cbc", "parse_solution",
    "primal_residuals", "read_lp_text", "solve", "solve_external", "solve_reference",
    "write_lp_text",
]
