"""
Dense/row-wise linear programming for the design problem class.

Programs are stored in the canonical form

    minimize  c @ v   subject to  A_ub @ v <= b_ub,  lo <= v <= hi

and solved with the HiGHS solvers shipped in scipy.optimize.linprog.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

logger = logging.getLogger(__name__)

OPTIMAL = 'optimal'
INFEASIBLE = 'infeasible'
UNBOUNDED = 'unbounded'
ITERATION_LIMIT = 'iteration-limit'

_STATUS = {0: OPTIMAL, 1: ITERATION_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}

# HiGHS rejects feasibility tolerances below this
_MIN_HIGHS_TOLERANCE = 1e-10


@dataclass
class LinearProgram:
    cost: np.ndarray
    A_ub: sparse.csr_matrix
    b_ub: np.ndarray
    bounds: Optional[List[Tuple[Optional[float], Optional[float]]]] = None
    names: Optional[Sequence[str]] = None

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=float)
        self.A_ub = sparse.csr_matrix(self.A_ub, dtype=float)
        self.b_ub = np.asarray(self.b_ub, dtype=float)
        if self.n_vars < 1:
            raise ValueError("A linear program needs at least one variable")
        if self.A_ub.shape != (self.b_ub.size, self.n_vars):
            raise ValueError(
                f"Constraint matrix {self.A_ub.shape} does not match {self.b_ub.size} bounds x {self.n_vars} variables"
            )
        if not (np.all(np.isfinite(self.cost)) and np.all(np.isfinite(self.A_ub.data))
                and np.all(np.isfinite(self.b_ub))):
            raise ValueError("Linear program entries must be finite")

    @property
    def n_vars(self) -> int:
        return self.cost.size

    @property
    def n_constraints(self) -> int:
        return self.b_ub.size

    @classmethod
    def from_rows(cls, cost, rows: Sequence[Tuple[Sequence[float], float]], bounds=None) -> 'LinearProgram':
        """Build from (row, bound) pairs meaning row @ v <= bound."""
        cost = np.asarray(cost, dtype=float)
        if rows:
            A = np.array([row for row, _ in rows], dtype=float)
            b = np.array([bound for _, bound in rows], dtype=float)
        else:
            A = np.zeros((0, cost.size))
            b = np.zeros(0)
        return cls(cost=cost, A_ub=A, b_ub=b, bounds=bounds)

    def violation(self, v) -> float:
        """Largest constraint or bound violation at v (0 when feasible)."""
        v = np.asarray(v, dtype=float)
        worst = 0.0
        if self.n_constraints:
            worst = max(worst, float(np.max(self.A_ub @ v - self.b_ub)))
        for value, (lo, hi) in zip(v, self.bounds or []):
            if lo is not None:
                worst = max(worst, lo - value)
            if hi is not None:
                worst = max(worst, value - hi)
        return max(worst, 0.0)


@dataclass
class LpSolution:
    status: str
    v: Optional[np.ndarray] = None
    objective: float = float('nan')
    max_violation: float = float('nan')
    iterations: int = 0
    message: str = ''
    duals: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def solve_lp(lp: LinearProgram, tolerance: float = 1e-7, max_iters: int = 200000) -> LpSolution:
    """Solve with HiGHS; the status is reported, never raised."""
    bounds = lp.bounds if lp.bounds is not None else [(None, None)] * lp.n_vars
    feas_tol = max(tolerance, _MIN_HIGHS_TOLERANCE)
    logger.debug(f"Solving LP: {lp.n_vars} variables, {lp.n_constraints} constraints")

    result = linprog(
        lp.cost,
        A_ub=lp.A_ub if lp.n_constraints else None,
        b_ub=lp.b_ub if lp.n_constraints else None,
        bounds=bounds,
        method='highs',
        options={
            'maxiter': max_iters,
            'primal_feasibility_tolerance': feas_tol,
            'dual_feasibility_tolerance': feas_tol,
            'presolve': True,
        },
    )

    status = _STATUS.get(result.status, INFEASIBLE)
    iterations = int(getattr(result, 'nit', 0) or 0)
    if status != OPTIMAL:
        logger.warning(f"LP finished with status {status}: {result.message}")
        return LpSolution(status=status, message=str(result.message), iterations=iterations)

    v = np.asarray(result.x, dtype=float)
    duals = None
    ineqlin = getattr(result, 'ineqlin', None)
    if ineqlin is not None and lp.n_constraints:
        duals = np.asarray(ineqlin.marginals, dtype=float)
    solution = LpSolution(
        status=OPTIMAL,
        v=v,
        objective=float(result.fun),
        max_violation=lp.violation(v),
        iterations=iterations,
        message=str(result.message),
        duals=duals,
    )
    if solution.max_violation > tolerance:
        logger.warning(f"LP solution violates constraints by {solution.max_violation:.3g}")
    return solution


def _term(coef: float, name: str, first: bool) -> str:
    if first:
        return f"{'-' if coef < 0 else ''}{abs(coef)!r} {name}"
    return f" {'-' if coef < 0 else '+'} {abs(coef)!r} {name}"


def write_lp_text(lp: LinearProgram) -> str:
    """Render the program in CPLEX LP text format."""
    names = list(lp.names) if lp.names is not None else [f"v{i + 1}" for i in range(lp.n_vars)]

    def expression(coefs) -> str:
        parts = []
        for index in np.flatnonzero(coefs):
            parts.append(_term(float(coefs[index]), names[index], not parts))
        return ''.join(parts) if parts else f"0 {names[0]}"

    lines = ['\\ DFK design program', 'Minimize', f" obj: {expression(lp.cost)}", 'Subject To']
    A = lp.A_ub.tocsr()
    for row in range(lp.n_constraints):
        coefs = np.zeros(lp.n_vars)
        start, end = A.indptr[row], A.indptr[row + 1]
        coefs[A.indices[start:end]] = A.data[start:end]
        lines.append(f" c{row + 1}: {expression(coefs)} <= {float(lp.b_ub[row])!r}")

    lines.append('Bounds')
    bounds = lp.bounds if lp.bounds is not None else [(None, None)] * lp.n_vars
    for name, (lo, hi) in zip(names, bounds):
        if lo is None and hi is None:
            lines.append(f" {name} free")
        else:
            low = '-inf' if lo is None else repr(float(lo))
            high = '+inf' if hi is None else repr(float(hi))
            lines.append(f" {low} <= {name} <= {high}")
    lines.append('End')
    return '\n'.join(lines) + '\n'
