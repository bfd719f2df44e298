"""Dense two-phase simplex with primal and dual extraction.

Dantzig pricing by default, switching to Bland's rule after a run of
degenerate pivots so the method cannot cycle. Row/column storage is plain
dense numpy; problem sizes here stay in the low thousands of nonzeros.

General bounds are handled by shifting finite lower bounds to zero, splitting
free variables, and emitting finite upper bounds as extra rows, so the
internal form is always ``min c'x, A'x {<=,=,>=} b', x >= 0``. Duals are read
off the final reduced-cost row under each row's identity seed column and
mapped back to the caller's row order and senses.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalFailure

OPT_TOL = 1e-7          # reduced-cost / feasibility tolerance
PIVOT_TOL = 1e-9        # minimum admissible pivot magnitude
DEGENERATE_LIMIT = 1000  # degenerate pivots before Bland's rule kicks in
DEFAULT_PIVOT_LIMIT = 50_000

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LpProblem:
    """Standard-form LP: ``sense c.x  s.t.  A x {<=,=,>=} b,  lower <= x <= upper``."""

    sense: str
    c: np.ndarray
    A: np.ndarray
    senses: list
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def build(cls, sense, c, A, senses, b, lower=None, upper=None):
        c = np.asarray(c, dtype=float)
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float)
        n = c.size
        if lower is None:
            lower = np.zeros(n)
        if upper is None:
            upper = np.full(n, np.inf)
        prob = cls(sense, c, A, list(senses), b,
                   np.asarray(lower, dtype=float), np.asarray(upper, dtype=float))
        prob.validate()
        return prob

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b.size

    def validate(self):
        if self.sense not in ("min", "max"):
            raise InputError(f"objective sense must be min or max, got {self.sense!r}")
        m, n = self.A.shape if self.A.size else (len(self.senses), self.c.size)
        if self.A.size and (m != self.b.size or n != self.c.size):
            raise InputError(
                f"shape mismatch: A is {self.A.shape}, b has {self.b.size}, c has {self.c.size}")
        if len(self.senses) != self.b.size:
            raise InputError("one sense per constraint row required")
        for s in self.senses:
            if s not in ("<=", "=", ">="):
                raise InputError(f"unknown row sense {s!r}")
        if self.lower.size != self.c.size or self.upper.size != self.c.size:
            raise InputError("bounds must match the variable count")
        if np.any(self.lower > self.upper):
            raise InputError("lower bound exceeds upper bound")


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None
    duals: np.ndarray | None
    reduced_costs: np.ndarray | None
    objective: float
    dual_objective: float
    pivots: int


def _pivot(tab, zrow, pr, q):
    col = tab[:, q].copy()
    piv = col[pr]
    prow = tab[pr] / piv
    tab -= np.outer(col, prow)
    tab[pr] = prow
    tab[:, q] = 0.0
    tab[pr, q] = 1.0
    zq = zrow[q]
    if zq != 0.0:
        zrow -= zq * prow
        zrow[q] = 0.0


def _run_simplex(tab, zrow, basis, allowed, pivot_budget, state):
    """Iterate to optimality of the current cost row. Returns (status, pivots_used)."""
    pivots = 0
    m = tab.shape[0]
    rows = np.arange(m)
    while True:
        if pivots >= pivot_budget:
            raise NumericalFailure("simplex pivot limit exceeded")
        red = zrow[:-1]
        if state["bland"]:
            cand = np.flatnonzero(allowed & (red < -OPT_TOL))
            if cand.size == 0:
                return OPTIMAL, pivots
            q = int(cand[0])
        else:
            masked = np.where(allowed, red, np.inf)
            q = int(np.argmin(masked))
            if masked[q] >= -OPT_TOL:
                return OPTIMAL, pivots
        col = tab[:, q]
        eligible = col > PIVOT_TOL
        if not np.any(eligible):
            return UNBOUNDED, pivots
        ratios = np.where(eligible, tab[:, -1] / np.where(eligible, col, 1.0), np.inf)
        rmin = ratios.min()
        ties = rows[ratios <= rmin + 1e-9 * (1.0 + abs(rmin))]
        # Bland-compatible leaving rule: smallest basic variable index among ties
        pr = int(ties[np.argmin(np.asarray(basis)[ties])])
        if rmin <= 1e-10:
            state["degenerate"] += 1
            if state["degenerate"] >= DEGENERATE_LIMIT:
                state["bland"] = True
        _pivot(tab, zrow, pr, q)
        basis[pr] = q
        pivots += 1


def solve_lp(problem: LpProblem, pivot_limit: int = DEFAULT_PIVOT_LIMIT) -> LpSolution:
    """Solve an LP, returning primal values, row duals and both objectives.

    Raises InputError for malformed problems and NumericalFailure when the
    pivot budget is exhausted (distinct from an infeasible status).
    """
    problem.validate()
    n = problem.n_vars
    m_user = problem.n_rows
    minimize = problem.sense == "min"
    c_user = problem.c if minimize else -problem.c

    # variable transforms: shift finite lower bounds, split free variables
    shift = np.where(np.isfinite(problem.lower), problem.lower, 0.0)
    split = ~np.isfinite(problem.lower)
    pos_col = np.zeros(n, dtype=int)
    neg_col = np.full(n, -1, dtype=int)
    ncols = 0
    for j in range(n):
        pos_col[j] = ncols
        ncols += 1
        if split[j]:
            neg_col[j] = ncols
            ncols += 1

    def expand(row_user):
        row = np.zeros(ncols)
        row[pos_col] = row_user
        sel = split & (row_user != 0.0)
        row[neg_col[sel]] = -row_user[sel]
        return row

    rows = []
    senses = []
    rhs = []
    if problem.A.size:
        base = problem.b - problem.A @ shift
        for i in range(m_user):
            rows.append(expand(problem.A[i]))
            senses.append(problem.senses[i])
            rhs.append(base[i])
    else:
        for i in range(m_user):
            rows.append(np.zeros(ncols))
            senses.append(problem.senses[i])
            rhs.append(problem.b[i])
    ub_rows = []  # (var j, row index)
    for j in range(n):
        u = problem.upper[j]
        if np.isfinite(u):
            r = np.zeros(ncols)
            r[pos_col[j]] = 1.0
            if split[j]:
                r[neg_col[j]] = -1.0
            rows.append(r)
            senses.append("<=")
            rhs.append(u - shift[j])
            ub_rows.append(j)

    m = len(rows)
    body = np.array(rows) if m else np.zeros((0, ncols))
    rhs = np.asarray(rhs, dtype=float)
    flipped = rhs < 0
    body[flipped] *= -1.0
    rhs[flipped] *= -1.0
    sense_flip = {"<=": ">=", ">=": "<=", "=": "="}
    senses = [sense_flip[s] if f else s for s, f in zip(senses, flipped)]

    # slack (+1) for <=, surplus (-1) for >=, artificial (+1) for >= and =
    n_slack = sum(s != "=" for s in senses)
    n_art = sum(s != "<=" for s in senses)
    total = ncols + n_slack + n_art
    tab = np.zeros((m, total + 1))
    tab[:, :ncols] = body
    tab[:, -1] = rhs
    seed_col = np.zeros(m, dtype=int)   # +e_i column per row, for dual recovery
    art_cols = []
    basis = []
    sl = ncols
    ar = ncols + n_slack
    for i, s in enumerate(senses):
        if s == "<=":
            tab[i, sl] = 1.0
            seed_col[i] = sl
            basis.append(sl)
            sl += 1
        elif s == ">=":
            tab[i, sl] = -1.0
            sl += 1
            tab[i, ar] = 1.0
            seed_col[i] = ar
            art_cols.append(ar)
            basis.append(ar)
            ar += 1
        else:
            tab[i, ar] = 1.0
            seed_col[i] = ar
            art_cols.append(ar)
            basis.append(ar)
            ar += 1
    art_cols = np.asarray(art_cols, dtype=int)
    is_art = np.zeros(total, dtype=bool)
    is_art[art_cols] = True

    state = {"bland": False, "degenerate": 0}
    pivots_used = 0

    # phase 1: minimize the artificial sum
    if n_art:
        cost1 = np.zeros(total + 1)
        cost1[art_cols] = 1.0
        zrow = cost1.copy()
        for r, bc in enumerate(basis):
            if cost1[bc] != 0.0:
                zrow -= cost1[bc] * tab[r]
        allowed = np.ones(total, dtype=bool)
        status, used = _run_simplex(tab, zrow, basis, allowed, pivot_limit, state)
        pivots_used += used
        if status != OPTIMAL:
            raise NumericalFailure("phase-1 simplex did not terminate cleanly")
        if -zrow[-1] > OPT_TOL * (1.0 + np.abs(rhs).max(initial=0.0)):
            return LpSolution(INFEASIBLE, None, None, None, np.nan, np.nan, pivots_used)
        # drive basic artificials out where possible; leftover rows are redundant
        for r in range(m):
            if is_art[basis[r]]:
                cand = np.flatnonzero((~is_art[:total]) & (np.abs(tab[r, :total]) > PIVOT_TOL))
                if cand.size:
                    _pivot(tab, zrow, r, int(cand[0]))
                    basis[r] = int(cand[0])
                    pivots_used += 1

    # phase 2: original costs, artificials barred from entering
    cost2 = np.zeros(total + 1)
    cost2[pos_col] = c_user
    cost2[neg_col[split]] = -c_user[split]
    zrow = cost2.copy()
    for r, bc in enumerate(basis):
        if cost2[bc] != 0.0:
            zrow -= cost2[bc] * tab[r]
    allowed = ~is_art
    status, used = _run_simplex(tab, zrow, basis, allowed, pivot_limit - pivots_used, state)
    pivots_used += used
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, None, None, None, np.nan, np.nan, pivots_used)

    x_int = np.zeros(total)
    for r, bc in enumerate(basis):
        x_int[bc] = tab[r, -1]
    x = shift + x_int[pos_col]
    x[split] -= x_int[neg_col[split]]

    # duals: seed column of row i is +e_i with zero phase-2 cost, so y_i = -z_seed
    y_int = -zrow[seed_col]
    y_int[flipped] *= -1.0
    y_user = y_int[:m_user].copy()
    rc = zrow[pos_col].copy()

    objective = float(problem.c @ x)
    # rhs was sign-flipped above; undo so b.y is taken over the pre-flip rows
    dual_internal = float(np.where(flipped, -rhs, rhs) @ y_int)
    dual_obj = dual_internal + float(c_user @ shift)
    if not minimize:
        y_user = -y_user
        rc = -rc
        dual_obj = -dual_obj
    return LpSolution(OPTIMAL, x, y_user, rc, objective, float(dual_obj), pivots_used)
