"""Stochastic inventory management: instances, subproblems, and the Benders loop.

A master decision is one delivery schedule (one-hot ``u``) plus integer
order-up-to amounts ``a_t``; each demand scenario induces a recourse LP over
order/inventory/holding/emergency/overfill variables. The scenario LP's right
hand side is affine in the master decision, so its optimal duals yield a
subgradient cut on the scenario proxy that is valid everywhere (weak duality).

Decision-vector layout everywhere: ``x = (u_1..u_S, a_0..a_{T-1})``.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import rngutil
from .bnb import BINARY, CONTINUOUS, INTEGER, MipProblem, solve_mip
from .cuts import Cut, CutLedger
from .errors import InputError, NumericalFailure
from .simplex import INFEASIBLE, OPTIMAL, LpProblem, solve_lp
from .trace import ConvergenceTrace, TraceRow

DEFAULT_COSTS = {"h": 1.0, "e": 20.0, "q": 4.0, "f_lo": 10.0, "f_hi": 60.0, "m_factor": 3.0}


@dataclass
class ImpInstance:
    T: int
    R: int
    schedules: np.ndarray      # (S, T) 0/1, w[s, t] = schedule s orders on day t
    schedule_costs: np.ndarray  # (S,)
    h: float
    e: float
    q: float
    m: int
    y: int
    demand: np.ndarray         # (R, T) integer
    mu: np.ndarray             # (T,)
    sigma: np.ndarray          # (T,)

    @property
    def S(self) -> int:
        return self.schedules.shape[0]

    @property
    def n_dims(self) -> int:
        return self.S + self.T

    def validate(self):
        if self.schedules.shape != (self.S, self.T) or self.demand.shape != (self.R, self.T):
            raise InputError("schedule or demand array has the wrong shape")
        if min(self.h, self.e, self.q) < 0 or np.any(self.schedule_costs < 0):
            raise InputError("costs must be nonnegative")
        if not (0 <= self.y <= self.m):
            raise InputError("starting inventory must lie in [0, capacity]")
        if np.any(self.demand < 0):
            raise InputError("demand must be nonnegative")
        if np.any(self.schedules.sum(axis=1) < 1):
            raise InputError("every schedule needs at least one ordering day")

    def to_json(self) -> str:
        return json.dumps({
            "T": self.T, "R": self.R,
            "schedules": self.schedules.astype(int).tolist(),
            "schedule_costs": self.schedule_costs.tolist(),
            "h": self.h, "e": self.e, "q": self.q, "m": int(self.m), "y": int(self.y),
            "demand": self.demand.astype(int).tolist(),
            "mu": self.mu.tolist(), "sigma": self.sigma.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "ImpInstance":
        d = json.loads(text)
        inst = cls(
            T=int(d["T"]), R=int(d["R"]),
            schedules=np.asarray(d["schedules"], dtype=int),
            schedule_costs=np.asarray(d["schedule_costs"], dtype=float),
            h=float(d["h"]), e=float(d["e"]), q=float(d["q"]),
            m=int(d["m"]), y=int(d["y"]),
            demand=np.asarray(d["demand"], dtype=int),
            mu=np.asarray(d["mu"], dtype=float),
            sigma=np.asarray(d["sigma"], dtype=float),
        )
        inst.validate()
        return inst


@dataclass
class ImpMasterDecision:
    u: np.ndarray   # (S,) one-hot
    a: np.ndarray   # (T,) integer order-up-to amounts
    fixed_cost: float

    @classmethod
    def make(cls, instance: ImpInstance, schedule_idx: int, a) -> "ImpMasterDecision":
        u = np.zeros(instance.S, dtype=int)
        u[schedule_idx] = 1
        a = np.asarray(a, dtype=int)
        dec = cls(u, a, float(instance.schedule_costs[schedule_idx]))
        dec.validate(instance)
        return dec

    @property
    def schedule_idx(self) -> int:
        return int(np.argmax(self.u))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.u.astype(float), self.a.astype(float)])

    def validate(self, instance: ImpInstance):
        if self.u.sum() != 1:
            raise InputError("exactly one schedule must be selected")
        w = instance.schedules[self.schedule_idx]
        if np.any(self.a[w == 0] != 0):
            raise InputError("order-up-to must be zero on unscheduled days")
        if np.any(self.a < 0) or np.any(self.a > instance.m):
            raise InputError("order-up-to amounts must lie in [0, capacity]")


def periodic_schedules(T: int, count: int) -> np.ndarray:
    """First `count` distinct periodic patterns (period ascending, offset ascending).

    Periods run 1..7 and extend up to T when more patterns are requested than
    the short periods can supply; duplicates (as day vectors) are skipped.
    """
    patterns = []
    seen = set()
    for p in range(1, max(7, T) + 1):
        for o in range(p):
            w = tuple(1 if t % p == o else 0 for t in range(T))
            if sum(w) == 0 or w in seen:
                continue
            seen.add(w)
            patterns.append(w)
            if len(patterns) == count:
                return np.array(patterns, dtype=int)
    raise InputError(
        f"only {len(patterns)} distinct periodic schedules exist for T={T}, "
        f"requested {count}")


def generate_instance(seed: int, T: int, R: int, n_schedules: int,
                      cost_params: dict | None = None) -> ImpInstance:
    """Synthetic instance, deterministic per seed.

    Demand is ``max(0, round(mu_t + sigma_t * eps))`` with standard-normal
    eps, mu_t ~ U[5, 30] and sigma_t = 0.2 mu_t. Defaults put emergency cost
    well above holding so emergency orders are sometimes worth taking.
    """
    if T < 2 or R < 1 or n_schedules < 1:
        raise InputError("need T >= 2, R >= 1, n_schedules >= 1")
    params = dict(DEFAULT_COSTS)
    if cost_params:
        params.update(cost_params)
    rng = rngutil.stream(seed, rngutil.DATA)
    mu = rng.uniform(5.0, 30.0, size=T)
    sigma = 0.2 * mu
    eps = rng.standard_normal(size=(R, T))
    demand = np.maximum(0, np.round(mu + sigma * eps)).astype(int)
    schedules = periodic_schedules(T, n_schedules)
    costs = rng.uniform(params["f_lo"], params["f_hi"], size=n_schedules)
    m = int(np.ceil(params["m_factor"] * mu.max()))
    y = int(rng.integers(0, m // 3 + 1))
    inst = ImpInstance(T=T, R=R, schedules=schedules, schedule_costs=costs,
                       h=params["h"], e=params["e"], q=params["q"], m=m, y=y,
                       demand=demand, mu=mu, sigma=sigma)
    inst.validate()
    return inst


# ---------------------------------------------------------------------------
# scenario recourse
# ---------------------------------------------------------------------------

def recourse_cost(instance: ImpInstance, schedule: np.ndarray, a: np.ndarray,
                  demand_row: np.ndarray) -> float:
    """Exact optimal recourse cost for a fixed decision on one demand path.

    Order quantities are pinned by the order-up-to rows, so the only recourse
    freedom is emergency orders (cover each day's shortfall), the holding
    recursion, and a possible day-0 overfill dump bounded by a_0. Dumping
    later days is dominated (it costs q and only shrinks stock), and the
    day-0 dump objective is piecewise linear with integer breakpoints, so a
    scan over integer dump amounts is exact. Cross-checked against the
    scenario LP in the test suite.
    """
    T, y, m = instance.T, instance.y, instance.m
    h, e, q = instance.h, instance.e, instance.q
    a = np.asarray(a, dtype=float)
    n = np.asarray(demand_row, dtype=float)
    if schedule[0]:
        v0 = np.arange(0.0, a[0] + 1.0)   # k_0 = a_0 - y, stock = a_0 - v0
        stock = a[0] - v0
    else:
        v0 = np.zeros(1)
        stock = np.full(1, float(y))
    p = np.maximum(0.0, stock)
    o = np.maximum(0.0, n[0] - stock)
    d = np.maximum(0.0, stock - n[0])
    cost = q * v0 + h * p + e * o
    for t in range(1, T):
        stock = np.full_like(d, a[t]) if schedule[t] else d
        p = np.maximum(a[t], p - a[t])
        o = np.maximum(0.0, n[t] - stock)
        d = np.maximum(0.0, stock - n[t])
        cost += h * p + e * o
    return float(cost.min())


def evaluate_decision(instance: ImpInstance, decision: ImpMasterDecision,
                      scenario_ids=None) -> float:
    """Fixed cost plus mean recourse cost over the given scenarios (all by default)."""
    w = instance.schedules[decision.schedule_idx]
    ids = range(instance.R) if scenario_ids is None else scenario_ids
    vals = [recourse_cost(instance, w, decision.a, instance.demand[r]) for r in ids]
    return decision.fixed_cost + float(np.mean(vals))


# ---------------------------------------------------------------------------
# scenario LP and its dual
# ---------------------------------------------------------------------------

# variable layout per day: k (free order), d (inventory), p (holding), o (emergency), v (overfill)
_K, _D, _P, _O, _V = 0, 1, 2, 3, 4


def _sp_matrices(instance: ImpInstance, scenario: int):
    """Scenario LP data with the RHS split as ``b = G x + g0`` for x = (u, a).

    Returns (c, A, senses, G, g0, groups) where `groups` maps dual-group names
    to row-index arrays.
    """
    T, S = instance.T, instance.S
    y, m = float(instance.y), float(instance.m)
    w = instance.schedules.astype(float)            # (S, T)
    n = instance.demand[scenario].astype(float)
    nv = 5 * T
    ndim = S + T

    def col(t, kind):
        return 5 * t + kind

    rows, senses, g_rows, g0 = [], [], [], []
    groups = {k: [] for k in
              ("alpha", "gamma", "omega", "phi", "xi0", "xi_lb", "xi_ub", "sigma", "pi", "rho")}

    def add(kind, coeffs, sense, gx, g0val):
        groups[kind].append(len(rows))
        row = np.zeros(nv)
        for c, v in coeffs:
            row[c] = v
        rows.append(row)
        senses.append(sense)
        g_rows.append(gx)
        g0.append(g0val)

    zero = np.zeros(ndim)

    for t in range(T):
        # flow balance: day 0 starts from y, later days from d_{t-1}
        if t == 0:
            add("alpha", [(col(0, _D), 1.0), (col(0, _K), -1.0), (col(0, _O), -1.0),
                          (col(0, _V), 1.0)], "=", zero, y - n[0])
        else:
            add("alpha", [(col(t, _D), 1.0), (col(t - 1, _D), -1.0), (col(t, _K), -1.0),
                          (col(t, _O), -1.0), (col(t, _V), 1.0)], "=", zero, -n[t])
    for t in range(T):
        # holding floor: stock after the day-0 order, order-up-to later
        if t == 0:
            add("gamma", [(col(0, _P), 1.0), (col(0, _K), -1.0), (col(0, _V), 1.0)],
                ">=", zero, y)
        else:
            gx = np.zeros(ndim)
            gx[S + t] = 1.0
            add("gamma", [(col(t, _P), 1.0)], ">=", gx, 0.0)
    for t in range(1, T):
        gx = np.zeros(ndim)
        gx[S + t] = -1.0
        add("omega", [(col(t, _P), 1.0), (col(t - 1, _P), -1.0)], ">=", gx, 0.0)
    for t in range(T):
        # capacity at fill time
        if t == 0:
            add("phi", [(col(0, _K), 1.0), (col(0, _V), -1.0)], "<=", zero, m - y)
        else:
            add("phi", [(col(t - 1, _D), 1.0), (col(t, _K), 1.0), (col(t, _V), -1.0)],
                "<=", zero, m)
    # order linking: the day-0 order is pinned to a_0 minus starting stock
    gx = np.zeros(ndim)
    gx[S] = 1.0
    gx[:S] = -y * w[:, 0]
    add("xi0", [(col(0, _K), 1.0)], "=", gx, 0.0)
    for t in range(1, T):
        gx = np.zeros(ndim)
        gx[S + t] = 1.0
        add("xi_lb", [(col(t, _K), 1.0), (col(t - 1, _D), 1.0)], ">=", gx, 0.0)
    for t in range(1, T):
        gx = np.zeros(ndim)
        gx[S + t] = 1.0
        gx[:S] = -m * w[:, t]
        add("xi_ub", [(col(t, _K), 1.0), (col(t - 1, _D), 1.0)], "<=", gx, m)
    for t in range(T):
        gx = np.zeros(ndim)
        gx[S + t] = 1.0
        add("sigma", [(col(t, _K), 1.0)], "<=", gx, 0.0)
    for t in range(T):
        gx = np.zeros(ndim)
        gx[:S] = -m * w[:, t]
        add("pi", [(col(t, _K), 1.0)], ">=", gx, 0.0)
    for t in range(T):
        gx = np.zeros(ndim)
        gx[S + t] = 1.0
        add("rho", [(col(t, _V), 1.0)], "<=", gx, 0.0)

    c = np.zeros(nv)
    for t in range(T):
        c[col(t, _P)] = instance.h
        c[col(t, _O)] = instance.e
        c[col(t, _V)] = instance.q
    A = np.array(rows)
    G = np.array(g_rows)
    g0 = np.array(g0)
    groups = {k: np.array(v, dtype=int) for k, v in groups.items()}
    return c, A, senses, G, g0, groups


def _sp_problem(instance, scenario, x):
    c, A, senses, G, g0, groups = _sp_matrices(instance, scenario)
    b = G @ x + g0
    T = instance.T
    lower = np.zeros(5 * T)
    lower[_K::5] = -np.inf   # order quantities may be negative (returns)
    lp = LpProblem.build("min", c, A, senses, b, lower=lower)
    return lp, G, g0, groups


@dataclass
class ImpDualSolution:
    """Scenario-dual vectors grouped by the primal row family they price.

    Signs follow the primal row senses (capacity duals are reported with
    positive sign): gamma, omega, phi, xi_lb, pi >= 0; xi_ub, sigma, rho <= 0;
    alpha and xi0 are free. `objective` equals the primal subproblem optimum.
    """
    alpha: np.ndarray
    gamma: np.ndarray
    omega: np.ndarray
    phi: np.ndarray
    rho: np.ndarray
    xi0: float
    xi_lb: np.ndarray
    xi_ub: np.ndarray
    sigma: np.ndarray
    pi: np.ndarray
    objective: float


def solve_primal_sp(instance: ImpInstance, decision: ImpMasterDecision, scenario: int):
    lp, _, _, _ = _sp_problem(instance, scenario, decision.vector())
    sol = solve_lp(lp)
    if sol.status != OPTIMAL:
        raise NumericalFailure(
            f"scenario subproblem reported {sol.status}; it is feasible by construction")
    return sol


def solve_dual_sp(instance: ImpInstance, decision: ImpMasterDecision, scenario: int):
    """Solve the scenario LP and assemble the subgradient cut from its duals.

    The cut ``theta_r >= (G^T y) . x + g0 . y`` reproduces the subproblem
    optimum at the generating decision (strong duality) and lower-bounds it
    everywhere else (the dual feasible set does not depend on x).
    """
    x = decision.vector()
    lp, G, g0, groups = _sp_problem(instance, scenario, x)
    sol = solve_lp(lp)
    if sol.status != OPTIMAL:
        raise NumericalFailure(
            f"scenario subproblem reported {sol.status}; it is feasible by construction")
    y = sol.duals
    if abs(sol.objective - sol.dual_objective) > 1e-6 * (1.0 + abs(sol.objective)):
        raise NumericalFailure("strong duality lost on a scenario subproblem")
    cut = Cut(scenario, G.T @ y, float(g0 @ y))
    dual = ImpDualSolution(
        alpha=y[groups["alpha"]], gamma=y[groups["gamma"]], omega=y[groups["omega"]],
        phi=-y[groups["phi"]], rho=y[groups["rho"]], xi0=float(y[groups["xi0"]][0]),
        xi_lb=y[groups["xi_lb"]], xi_ub=y[groups["xi_ub"]], sigma=y[groups["sigma"]],
        pi=y[groups["pi"]], objective=float(sol.objective))
    return dual, cut


# ---------------------------------------------------------------------------
# master problem and the extensive form
# ---------------------------------------------------------------------------

def build_master(instance: ImpInstance, ledger: CutLedger,
                 cut_subset: dict | None = None) -> MipProblem:
    """Master MIP over (u, a, theta) with one row per stored cut.

    `cut_subset` optionally restricts to {scenario: [cut indices]} — used by
    the row-activation loop in run_benders; omitted means every stored cut.
    """
    S, T, R = instance.S, instance.T, instance.R
    if ledger.n_dims != S + T or ledger.n_scenarios != R:
        raise InputError("ledger dimensions do not match the instance")
    n = S + T + R
    c = np.concatenate([instance.schedule_costs, np.zeros(T), np.full(R, 1.0 / R)])
    rows, senses, b = [], [], []
    for t in range(T):
        row = np.zeros(n)
        row[S + t] = 1.0
        row[:S] = -instance.m * instance.schedules[:, t]
        rows.append(row)
        senses.append("<=")
        b.append(0.0)
    row = np.zeros(n)
    row[:S] = 1.0
    rows.append(row)
    senses.append("=")
    b.append(1.0)
    for r in range(R):
        a_r, c_r = ledger.rows(r)
        idx = range(a_r.shape[0]) if cut_subset is None else cut_subset.get(r, ())
        for i in idx:
            row = np.zeros(n)
            row[S + T + r] = 1.0
            row[:S + T] = -a_r[i]
            rows.append(row)
            senses.append(">=")
            b.append(c_r[i])
    lower = np.zeros(n)
    upper = np.concatenate([np.ones(S), np.full(T, float(instance.m)), np.full(R, np.inf)])
    lp = LpProblem.build("min", c, np.array(rows), senses, np.array(b), lower, upper)
    mask = [BINARY] * S + [INTEGER] * T + [CONTINUOUS] * R
    return MipProblem.build(lp, mask)


def _decision_from_master(instance, x):
    u = np.round(x[:instance.S]).astype(int)
    a = np.round(x[instance.S:instance.S + instance.T]).astype(int)
    return ImpMasterDecision.make(instance, int(np.argmax(u)), a)


def solve_master(instance: ImpInstance, ledger: CutLedger, active: dict | None = None,
                 mip_gap: float = 1e-9):
    """Exact master solve via row activation over the stored cuts.

    Solves the master restricted to an active cut subset and re-solves with
    any cut violated at the incumbent until none are, which certifies the
    restricted optimum for the full cut set. Deterministic; `active` carries
    the working set across calls.
    """
    if active is None:
        active = {r: [] for r in range(instance.R)}
    for r in range(instance.R):
        nc = ledger.n_cuts(r)
        if nc and (not active[r] or active[r][-1] != nc - 1):
            active[r] = sorted(set(active[r]) | {nc - 1})
    while True:
        mp = build_master(instance, ledger, cut_subset=active)
        sol = solve_mip(mp, gap_tol=mip_gap)
        if sol.status != "optimal":
            raise NumericalFailure(f"master solve returned {sol.status}")
        x = sol.x[:instance.S + instance.T]
        theta = sol.x[instance.S + instance.T:]
        added = 0
        for r in range(instance.R):
            a_r, c_r = ledger.rows(r)
            if a_r.shape[0] == 0:
                continue
            vals = a_r @ x + c_r
            worst = int(np.argmax(vals))
            if vals[worst] > theta[r] + 1e-7 * (1.0 + abs(vals[worst])) and worst not in active[r]:
                active[r] = sorted(set(active[r]) | {worst})
                added += 1
        if added == 0:
            return float(sol.objective), _decision_from_master(instance, sol.x), active


def solve_extensive(instance: ImpInstance, gap_tol: float = 0.0):
    """Monolithic deterministic-equivalent MIP (oracle for small instances).

    Integrality lives on (u, a); recourse variables stay continuous, matching
    the relaxation the decomposition relies on.
    """
    S, T, R = instance.S, instance.T, instance.R
    base = S + T
    n = base + 5 * T * R

    def col(r, t, kind):
        return base + 5 * T * r + 5 * t + kind

    c = np.zeros(n)
    c[:S] = instance.schedule_costs
    rows, senses, b = [], [], []
    for t in range(T):
        row = np.zeros(n)
        row[S + t] = 1.0
        row[:S] = -instance.m * instance.schedules[:, t]
        rows.append(row)
        senses.append("<=")
        b.append(0.0)
    row = np.zeros(n)
    row[:S] = 1.0
    rows.append(row)
    senses.append("=")
    b.append(1.0)

    for r in range(R):
        for t in range(T):
            c[col(r, t, _P)] = instance.h / R
            c[col(r, t, _O)] = instance.e / R
            c[col(r, t, _V)] = instance.q / R
        sp_c, sp_A, sp_senses, G, g0, _ = _sp_matrices(instance, r)
        for i in range(sp_A.shape[0]):
            row = np.zeros(n)
            row[base + 5 * T * r: base + 5 * T * (r + 1)] = sp_A[i]
            row[:base] = -G[i]          # move the decision terms onto the LHS
            rows.append(row)
            senses.append(sp_senses[i])
            b.append(g0[i])

    lower = np.zeros(n)
    upper = np.full(n, np.inf)
    upper[:S] = 1.0
    upper[S:base] = float(instance.m)
    for r in range(R):
        for t in range(T):
            lower[col(r, t, _K)] = -np.inf
    mask = [BINARY] * S + [INTEGER] * T + [CONTINUOUS] * (5 * T * R)
    lp = LpProblem.build("min", c, np.array(rows), senses, np.array(b), lower, upper)
    sol = solve_mip(MipProblem.build(lp, mask), gap_tol=gap_tol)
    if sol.status != "optimal":
        raise NumericalFailure(f"extensive form solve returned {sol.status}")
    return float(sol.objective), _decision_from_master(instance, sol.x)


# ---------------------------------------------------------------------------
# the decomposition loop
# ---------------------------------------------------------------------------

def relative_gap(lb: float, ub: float) -> float:
    """(UB - LB) / (1 + |UB|), infinite until both bounds exist."""
    if not (np.isfinite(lb) and np.isfinite(ub)):
        return np.inf
    return max(0.0, (ub - lb) / (1.0 + abs(ub)))


def run_benders(instance: ImpInstance, gap_tol: float = 1e-4,
                surrogate_config=None, policy=None, iter_cap: int = 500):
    """Benders loop, optionally gated by a learned surrogate for the master.

    Lower bounds come only from exact master solves; surrogate iterations
    contribute decisions (hence cuts and upper-bound candidates) but never a
    bound, so certification is untouched. Terminates when the relative gap
    closes on an exact iteration, or returns a trace flagged "iteration_limit".
    """
    if gap_tol <= 0:
        raise InputError("gap_tol must be positive")
    ledger = CutLedger(instance.n_dims, instance.R)
    trace = ConvergenceTrace()
    gated = surrogate_config is not None
    if gated:
        from .envs import ImpRolloutAdapter  # deferred: envs imports this module
        from .gate import gate as gate_draw
        from .gate import select_index, surrogate_step
        streams = rngutil.RngStreams(surrogate_config.seed)
        adapter = ImpRolloutAdapter(instance, policy)

    lb = -np.inf
    ub = np.inf
    incumbent = None
    active = None
    rel_gap = np.inf
    status = "iteration_limit"

    for it in range(1, iter_cap + 1):
        t0 = time.perf_counter()
        used_surrogate = False
        if gated and gate_draw(surrogate_config, streams, rel_gap):
            used_surrogate = True
            batch = surrogate_step(policy, adapter, surrogate_config, streams)
            idx = select_index(batch, surrogate_config, ledger, streams)
            decision = batch.payloads[idx]
        else:
            mobj, decision, active = solve_master(instance, ledger, active)
            lb = max(lb, mobj)
            rel_gap = relative_gap(lb, ub)
            if rel_gap <= gap_tol:
                wall = (time.perf_counter() - t0) * 1000.0
                trace.append(TraceRow(it, 0, lb, ub, rel_gap, len(ledger), wall))
                status = "converged"
                break
        sp_total = 0.0
        for r in range(instance.R):
            dual, cut = solve_dual_sp(instance, decision, r)
            ledger.add_cut(cut)
            sp_total += dual.objective
        cand = decision.fixed_cost + sp_total / instance.R
        if cand < ub:
            ub = cand
            incumbent = decision
        rel_gap = relative_gap(lb, ub)
        wall = (time.perf_counter() - t0) * 1000.0
        trace.append(TraceRow(it, int(used_surrogate), lb, ub, rel_gap, len(ledger), wall))
        if not used_surrogate and rel_gap <= gap_tol:
            status = "converged"
            break
    trace.status = status
    return ub, incumbent, trace
