"""Small linear-programming layer shared by every solver.

Problems are always maximizations.  Rows may be given dense or as scipy
sparse blocks; the solve is delegated to HiGHS through ``scipy.optimize``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

FEAS_TOL = 1e-7

_RELATIONS = ("<=", "=", ">=")


@dataclass
class LpProblem:
    """max ``objective @ x`` subject to row blocks and variable bounds."""

    objective: np.ndarray
    names: list[str] | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    blocks: list[tuple[sp.csr_matrix, str, np.ndarray]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        nv = self.objective.size
        if self.names is not None and len(self.names) != nv:
            raise ValueError("names must match the variable count")
        self.lower = np.zeros(nv) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(nv, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if self.lower.shape != (nv,) or self.upper.shape != (nv,):
            raise ValueError("bounds must match the variable count")

    @property
    def num_vars(self) -> int:
        return self.objective.size

    @property
    def num_rows(self) -> int:
        return sum(b[0].shape[0] for b in self.blocks)

    def add_rows(self, coeffs, relation: str, rhs) -> None:
        if relation not in _RELATIONS:
            raise ValueError(f"unknown relation {relation!r}")
        mat = sp.csr_matrix(coeffs if sp.issparse(coeffs) else np.atleast_2d(np.asarray(coeffs, dtype=float)))
        if mat.shape[1] != self.num_vars:
            raise ValueError(f"row width {mat.shape[1]} != variable count {self.num_vars}")
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), (mat.shape[0],)).copy()
        if not (np.all(np.isfinite(mat.data)) and np.all(np.isfinite(rhs))):
            raise ValueError("constraint data must be finite")
        self.blocks.append((mat, relation, rhs))

    def add_row(self, coeffs, relation: str, rhs: float) -> None:
        self.add_rows(np.asarray(coeffs, dtype=float)[None, :], relation, [rhs])

    def stacked(self, relation: str) -> tuple[sp.csr_matrix | None, np.ndarray | None]:
        mats = [b[0] for b in self.blocks if b[1] == relation]
        if not mats:
            return None, None
        rhs = np.concatenate([b[2] for b in self.blocks if b[1] == relation])
        return sp.vstack(mats, format="csr"), rhs


@dataclass(frozen=True)
class LpSolution:
    status: str  # optimal | infeasible | unbounded | numerical_failure
    value: float
    assignment: np.ndarray
    residual: float
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


class LpError(RuntimeError):
    """Raised by callers that need an optimum and did not get one."""

    def __init__(self, solution: LpSolution):
        super().__init__(f"LP {solution.status}: {solution.message}")
        self.solution = solution


def residual(prob: LpProblem, x: np.ndarray) -> float:
    """Largest violation of any row or bound at ``x``."""
    worst = 0.0
    if x.size:
        worst = max(worst, float(np.max(prob.lower - x, initial=0.0)))
        fin = np.isfinite(prob.upper)
        if fin.any():
            worst = max(worst, float(np.max(x[fin] - prob.upper[fin], initial=0.0)))
    for mat, rel, rhs in prob.blocks:
        lhs = mat @ x
        if rel == "<=":
            v = lhs - rhs
        elif rel == ">=":
            v = rhs - lhs
        else:
            v = np.abs(lhs - rhs)
        if v.size:
            worst = max(worst, float(v.max()))
    return worst


def solve_lp(prob: LpProblem) -> LpSolution:
    a_ge, b_ge = prob.stacked(">=")
    a_le, b_le = prob.stacked("<=")
    a_eq, b_eq = prob.stacked("=")
    if a_ge is not None:
        a_le = -a_ge if a_le is None else sp.vstack([a_le, -a_ge], format="csr")
        b_le = -b_ge if b_le is None else np.concatenate([b_le, -b_ge])
    upper = [None if not np.isfinite(u) else u for u in prob.upper]
    bounds = list(zip(prob.lower, upper))
    res = linprog(
        -prob.objective,
        A_ub=a_le,
        b_ub=b_le,
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    nv = prob.num_vars
    if res.status == 2:
        return LpSolution("infeasible", float("nan"), np.full(nv, np.nan), float("inf"), res.message)
    if res.status == 3:
        return LpSolution("unbounded", float("inf"), np.full(nv, np.nan), float("inf"), res.message)
    if res.status != 0 or res.x is None:
        return LpSolution("numerical_failure", float("nan"), np.full(nv, np.nan), float("inf"), res.message)
    x = np.asarray(res.x, dtype=float)
    # snap round-off below the lower bounds
    x = np.maximum(x, prob.lower)
    r = residual(prob, x)
    value = float(prob.objective @ x)
    if r > FEAS_TOL:
        return LpSolution("numerical_failure", value, x, r, f"residual {r:.3e} exceeds {FEAS_TOL:g}")
    return LpSolution("optimal", value, x, r, res.message)


def solve_or_raise(prob: LpProblem) -> LpSolution:
    sol = solve_lp(prob)
    if not sol.ok:
        raise LpError(sol)
    return sol


def block_diag_rows(blocks: Sequence[sp.spmatrix]) -> sp.csr_matrix:
    return sp.block_diag(blocks, format="csr")
