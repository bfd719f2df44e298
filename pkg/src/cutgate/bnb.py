"""Branch-and-bound over LP relaxations for mixed-binary/integer programs.

Best-bound node selection with depth-first dives on ties; branching on the
most fractional variable (lowest index on ties). Cuts never originate here —
decomposition-level cuts arrive as ordinary rows of the underlying LP.
"""

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, LpProblem, LpSolution, solve_lp

CONTINUOUS = 0
INTEGER = 1
BINARY = 2

INT_TOL = 1e-6
DEFAULT_NODE_LIMIT = 1_000_000

LIMIT = "limit"


@dataclass
class MipProblem:
    lp: LpProblem
    integrality: np.ndarray  # per-variable: CONTINUOUS / INTEGER / BINARY

    @classmethod
    def build(cls, lp: LpProblem, integrality) -> "MipProblem":
        mask = np.asarray(integrality, dtype=int)
        if mask.size != lp.n_vars:
            raise InputError("integrality mask must match the variable count")
        binaries = mask == BINARY
        if np.any(lp.lower[binaries] < -INT_TOL) or np.any(lp.upper[binaries] > 1 + INT_TOL):
            raise InputError("binary variables must carry [0, 1] bounds")
        return cls(lp, mask)


@dataclass
class MipSolution:
    status: str
    x: np.ndarray | None
    objective: float
    best_bound: float
    node_count: int
    proof_gap: float


def _fractional(x, int_vars):
    frac = np.abs(x[int_vars] - np.round(x[int_vars]))
    viol = frac > INT_TOL
    if not np.any(viol):
        return None
    # most fractional = closest to 0.5; ties broken by lowest variable index
    dist = np.where(viol, np.abs(frac - 0.5), np.inf)
    return int(int_vars[int(np.argmin(dist))])


def solve_mip(problem: MipProblem, gap_tol: float = 1e-9,
              node_limit: int = DEFAULT_NODE_LIMIT) -> MipSolution:
    """Best-bound branch-and-bound search, deterministic for a fixed input.

    Returns the incumbent once its proof gap |obj - bound| / (1 + |obj|)
    drops to gap_tol; hitting the node limit yields status "limit" with the
    best incumbent found.
    """
    if gap_tol < 0:
        raise InputError("gap_tol must be nonnegative")
    lp = problem.lp
    minimize = lp.sense == "min"
    int_vars = np.flatnonzero(problem.integrality != CONTINUOUS)

    def key(obj):  # min-space value for bound bookkeeping
        return obj if minimize else -obj

    root = solve_lp(lp)
    if root.status == INFEASIBLE:
        return MipSolution(INFEASIBLE, None, np.nan, np.nan, 1, np.nan)
    if root.status == UNBOUNDED:
        return MipSolution(UNBOUNDED, None, np.nan, np.nan, 1, np.nan)

    best_x = None
    best_obj = np.inf  # min-space incumbent
    nodes = 1
    seq = 0
    # heap entries: (parent bound, -depth, seq, lower array, upper array)
    heap = []

    def push(bound, depth, lower, upper):
        nonlocal seq
        heapq.heappush(heap, (bound, -depth, seq, lower, upper))
        seq += 1

    def consider(sol: LpSolution, depth, lower, upper):
        """Either update the incumbent or queue branching children."""
        nonlocal best_x, best_obj
        j = _fractional(sol.x, int_vars)
        val = key(sol.objective)
        if j is None:
            if val < best_obj - 1e-12:
                best_obj = val
                best_x = sol.x.copy()
            return
        xj = sol.x[j]
        lo_u = upper.copy()
        lo_u[j] = np.floor(xj)
        push(val, depth + 1, lower, lo_u)
        hi_l = lower.copy()
        hi_l[j] = np.ceil(xj)
        push(val, depth + 1, hi_l, upper)

    consider(root, 0, lp.lower.copy(), lp.upper.copy())

    status = OPTIMAL
    bound_floor = key(root.objective)
    while heap:
        bound, ndepth, _, lower, upper = heapq.heappop(heap)
        bound_floor = max(bound_floor, bound)
        gap = abs(best_obj - bound_floor) / (1.0 + abs(best_obj))
        if best_x is not None and (bound >= best_obj - 1e-9 * (1.0 + abs(best_obj)) or gap <= gap_tol):
            bound_floor = min(best_obj, bound)
            break
        if nodes >= node_limit:
            status = LIMIT
            break
        child = LpProblem(lp.sense, lp.c, lp.A, lp.senses, lp.b, lower, upper)
        sol = solve_lp(child)
        nodes += 1
        if sol.status != OPTIMAL:
            continue  # infeasible subtree (cannot be unbounded if the root was bounded)
        if key(sol.objective) >= best_obj - 1e-9 * (1.0 + abs(best_obj)):
            continue
        consider(sol, -ndepth, lower, upper)

    if best_x is None:
        if status == LIMIT:
            return MipSolution(LIMIT, None, np.nan, np.nan, nodes, np.nan)
        return MipSolution(INFEASIBLE, None, np.nan, np.nan, nodes, np.nan)

    if not heap and status == OPTIMAL:
        bound_floor = best_obj
    obj = best_obj if minimize else -best_obj
    bb = bound_floor if minimize else -bound_floor
    proof_gap = abs(best_obj - bound_floor) / (1.0 + abs(best_obj))
    return MipSolution(status, best_x, float(obj), float(bb), nodes, float(proof_gap))
