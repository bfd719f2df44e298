"""Best-subset regression via outer approximation, plus lasso baseline and metrics.

The master MILP minimizes ``theta + lambda * sum(z)`` subject to big-M rows
``|beta_i| <= M z_i`` and the accumulated tangent cuts on theta; the convex
squared loss supplies a closed-form gradient, so each iteration adds tangents
that are tight where they were generated and lower bounds everywhere else.

Ledger convention: cut coefficients live in the beta block only (length P);
the ``lambda * |z|`` part of a candidate's cost travels as its fixed cost.
"""

import json
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import rngutil
from .bnb import BINARY, CONTINUOUS, MipProblem, solve_mip
from .cuts import Cut, CutLedger
from .errors import InputError, NumericalFailure
from .simplex import LpProblem
from .trace import ConvergenceTrace, TraceRow

TIE_EPS = 1e-9  # objective ties break toward the smaller support


@dataclass
class RegressionData:
    X: np.ndarray          # (M, P)
    y: np.ndarray          # (M,)
    beta_true: np.ndarray  # (P,)
    support_size: int
    noise_scale: float     # sample mean of the noiseless response; noise ~ U(0.05, 0.25) x this

    @property
    def n_obs(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def to_json(self) -> str:
        return json.dumps({
            "X": self.X.tolist(), "y": self.y.tolist(),
            "beta_true": self.beta_true.tolist(),
            "support_size": int(self.support_size),
            "noise_scale": float(self.noise_scale),
        })

    @classmethod
    def from_json(cls, text: str) -> "RegressionData":
        d = json.loads(text)
        return cls(np.asarray(d["X"], dtype=float), np.asarray(d["y"], dtype=float),
                   np.asarray(d["beta_true"], dtype=float), int(d["support_size"]),
                   float(d["noise_scale"]))


def generate_rr_data(seed: int, n_features: int = 10, n_obs: int = 250) -> RegressionData:
    """Synthetic sparse-regression data, deterministic per seed.

    Standard-normal design; support size uniform on {3..8}; support
    coefficients uniform on [-10, 10]; additive noise uniform between 5% and
    25% of the noiseless sample mean.
    """
    rng = rngutil.stream(seed, rngutil.DATA)
    X = rng.standard_normal(size=(n_obs, n_features))
    k = int(rng.integers(3, 9))
    support = rng.choice(n_features, size=k, replace=False)
    beta = np.zeros(n_features)
    beta[support] = rng.uniform(-10.0, 10.0, size=k)
    signal = X @ beta
    mu_y = float(signal.mean())
    lo, hi = sorted((0.05 * mu_y, 0.25 * mu_y))  # the mean may be negative
    eps = rng.uniform(lo, hi, size=n_obs)
    return RegressionData(X, signal + eps, beta, k, mu_y)


@dataclass
class SubsetModel:
    z: np.ndarray          # (P,) 0/1 support indicator
    beta: np.ndarray       # (P,), exactly zero off-support
    loss: float            # ||X beta - y||^2
    fixed_cost: float      # lambda * |z|
    ridged: bool = False   # Gram matrix was singular; delta = 1e-8 ridge applied

    @property
    def objective(self) -> float:
        return self.loss + self.fixed_cost


def loss_value(data: RegressionData, beta: np.ndarray) -> float:
    r = data.X @ beta - data.y
    return float(r @ r)


def loss_gradient(data: RegressionData, beta: np.ndarray) -> np.ndarray:
    return 2.0 * data.X.T @ (data.X @ beta - data.y)


def fit_subset(data: RegressionData, z, lam: float = 0.0) -> SubsetModel:
    """Exact least squares restricted to the support z (zero off-support)."""
    z = np.asarray(z).astype(bool)
    if z.shape != (data.n_features,):
        raise InputError("support indicator must have one entry per feature")
    beta = np.zeros(data.n_features)
    ridged = False
    if z.any():
        Xz = data.X[:, z]
        gram = Xz.T @ Xz
        rhs = Xz.T @ data.y
        try:
            sub = np.linalg.solve(gram, rhs)
            if not np.all(np.isfinite(sub)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            sub = np.linalg.solve(gram + 1e-8 * np.eye(gram.shape[0]), rhs)
            ridged = True
        beta[z] = sub
    return SubsetModel(z.astype(int), beta, loss_value(data, beta),
                       lam * float(z.sum()), ridged)


def subgradient_cut(data: RegressionData, beta_point: np.ndarray) -> Cut:
    """Tangent plane to the squared loss at beta_point (single proxy scenario)."""
    beta_point = np.asarray(beta_point, dtype=float)
    if not np.all(np.isfinite(beta_point)):
        raise InputError("cut point must be finite")
    grad = loss_gradient(data, beta_point)
    const = loss_value(data, beta_point) - float(grad @ beta_point)
    return Cut(0, grad, const)


def big_m(data: RegressionData) -> float:
    """Coefficient box from the full least-squares fit (floor 1.0)."""
    full = fit_subset(data, np.ones(data.n_features, dtype=int))
    return max(1.0, 2.0 * float(np.abs(full.beta).max()))


def build_l0_master(data: RegressionData, lam: float, ledger: CutLedger,
                    box: float) -> MipProblem:
    """MILP over (beta, z, theta) with big-M link rows and the stored cuts."""
    P = data.n_features
    n = 2 * P + 1
    c = np.concatenate([np.zeros(P), np.full(P, lam), [1.0]])
    rows, senses, b = [], [], []
    for i in range(P):
        row = np.zeros(n)
        row[i] = 1.0
        row[P + i] = -box
        rows.append(row)
        senses.append("<=")
        b.append(0.0)
        row = np.zeros(n)
        row[i] = -1.0
        row[P + i] = -box
        rows.append(row)
        senses.append("<=")
        b.append(0.0)
    a_r, c_r = ledger.rows(0)
    scale = np.maximum(1.0, np.abs(a_r).max(axis=1, initial=1.0))
    for i in range(a_r.shape[0]):
        row = np.zeros(n)
        row[-1] = 1.0 / scale[i]
        row[:P] = -a_r[i] / scale[i]   # row equilibration; same halfspace
        rows.append(row)
        senses.append(">=")
        b.append(c_r[i] / scale[i])
    lower = np.concatenate([np.full(P, -box), np.zeros(P), [0.0]])
    upper = np.concatenate([np.full(P, box), np.ones(P), [np.inf]])
    lp = LpProblem.build("min", c, np.array(rows), senses, np.array(b), lower, upper)
    return MipProblem.build(lp, [CONTINUOUS] * P + [BINARY] * P + [CONTINUOUS])


def _better(obj, size, best_obj, best_size):
    if obj < best_obj - TIE_EPS:
        return True
    return abs(obj - best_obj) <= TIE_EPS and size < best_size


def enumerate_best_subset(data: RegressionData, lam: float, max_features=None):
    """Exhaustive oracle: best support over all subsets (ties to smaller support)."""
    P = data.n_features
    kmax = P if max_features is None else min(P, max_features)
    gram = data.X.T @ data.X
    rhs = data.X.T @ data.y
    yty = float(data.y @ data.y)
    best_obj, best_z = yty, np.zeros(P, dtype=int)
    best_size = 0
    for k in range(1, kmax + 1):
        supports = list(combinations(range(P), k))
        idx = np.array(supports)                      # (n_k, k)
        grams = gram[idx[:, :, None], idx[:, None, :]]
        rhss = rhs[idx]
        sols = np.linalg.solve(grams, rhss)
        # loss = y.y - 2 b.rhs + b.G.b with exact restricted solve: y.y - b.rhs
        losses = yty - np.einsum("ij,ij->i", sols, rhss)
        objs = losses + lam * k
        order = np.argsort(objs, kind="stable")
        j = int(order[0])
        if _better(objs[j], k, best_obj, best_size):
            best_obj = float(objs[j])
            best_z = np.zeros(P, dtype=int)
            best_z[idx[j]] = 1
            best_size = k
    model = fit_subset(data, best_z, lam)
    return model.objective, best_z, model.beta


def run_l0_cutplane(data: RegressionData, lam: float, tol: float = 1e-6,
                    surrogate_config=None, policy=None, iter_cap: int = 200):
    """Outer-approximation loop for the penalized best-subset problem.

    Exact iterations solve the master MILP, evaluate the true loss at the
    master's beta, and add tangents both there and at the support's exact
    refit (the latter pins the visited support, giving finite termination).
    Surrogate iterations take a policy-proposed support instead and add the
    refit tangent only; they never move the lower bound.
    """
    import time
    if lam < 0 or tol <= 0:
        raise InputError("need lam >= 0 and tol > 0")
    P = data.n_features
    ledger = CutLedger(P, 1)
    box = big_m(data)
    trace = ConvergenceTrace()
    gated = surrogate_config is not None
    if gated:
        from .envs import RrRolloutAdapter
        from .gate import gate as gate_draw
        from .gate import select_index, surrogate_step
        streams = rngutil.RngStreams(surrogate_config.seed)
        adapter = RrRolloutAdapter(data, lam, policy)

    lb = -np.inf
    incumbent = fit_subset(data, np.zeros(P, dtype=int), lam)
    rel_gap = np.inf
    status = "iteration_limit"

    for it in range(1, iter_cap + 1):
        t0 = time.perf_counter()
        used_surrogate = False
        if gated and gate_draw(surrogate_config, streams, rel_gap):
            used_surrogate = True
            batch = surrogate_step(policy, adapter, surrogate_config, streams)
            idx = select_index(batch, surrogate_config, ledger, streams)
            refit = batch.payloads[idx]
            ledger.add_cut(subgradient_cut(data, refit.beta))
        else:
            sol = solve_mip(build_l0_master(data, lam, ledger, box), gap_tol=1e-9)
            if sol.status != "optimal":
                raise NumericalFailure(f"subset master returned {sol.status}")
            lb = max(lb, sol.objective)
            beta_m = sol.x[:P]
            z = (np.round(sol.x[P:2 * P]) > 0).astype(int)
            if np.abs(beta_m).max(initial=0.0) >= 0.999 * box:
                raise NumericalFailure("big-M box is binding; bound too small")
            refit = fit_subset(data, z, lam)
            ledger.add_cut(subgradient_cut(data, beta_m))
            ledger.add_cut(subgradient_cut(data, refit.beta))
        if _better(refit.objective, int(refit.z.sum()),
                   incumbent.objective, int(incumbent.z.sum())):
            incumbent = refit
        gap = incumbent.objective - lb if np.isfinite(lb) else np.inf
        denom = 1.0 + abs(incumbent.objective)
        rel = max(0.0, gap / denom) if np.isfinite(gap) else np.inf
        wall = (time.perf_counter() - t0) * 1000.0
        trace.append(TraceRow(it, int(used_surrogate), lb, incumbent.objective,
                              rel, len(ledger), wall))
        if not used_surrogate and gap <= tol:
            status = "converged"
            break
    trace.status = status
    return incumbent.objective, incumbent, trace


# ---------------------------------------------------------------------------
# lasso baseline and the metric suite
# ---------------------------------------------------------------------------

def fit_lasso(data: RegressionData, lam: float, gap_tol: float = 1e-8,
              max_sweeps: int = 100_000) -> np.ndarray:
    """Coordinate descent for ``||X b - y||^2 + lam ||b||_1`` to a duality gap.

    Deterministic sweep order 0..P-1; soft threshold at lam/2 per coordinate.
    """
    if lam < 0:
        raise InputError("lam must be nonnegative")
    X, y = data.X, data.y
    P = data.n_features
    norms = (X ** 2).sum(axis=0)
    beta = np.zeros(P)
    resid = y.copy()

    def duality_gap(b, r):
        # dual point: scaled residual nu with ||X^T nu||_inf <= lam (for primal
        # ||Xb - y||^2 + lam||b||_1, the dual is -||nu||^2/4 - nu.y over that ball)
        grad = X.T @ (2.0 * r)
        gmax = np.abs(grad).max(initial=0.0)
        scale = 1.0 if gmax <= lam or gmax == 0.0 else lam / gmax
        nu = -2.0 * r * scale
        dual = -0.25 * float(nu @ nu) - float(nu @ y)
        primal = float(r @ r) + lam * float(np.abs(b).sum())
        return primal - dual

    for _ in range(max_sweeps):
        for j in range(P):
            if norms[j] == 0.0:
                continue
            if beta[j] != 0.0:
                resid += X[:, j] * beta[j]
            rho = float(X[:, j] @ resid)
            bj = np.sign(rho) * max(abs(rho) - lam / 2.0, 0.0) / norms[j]
            beta[j] = bj
            if bj != 0.0:
                resid -= X[:, j] * bj
        if duality_gap(beta, resid) <= gap_tol:
            break
    return beta


def rr_metrics(beta_hat: np.ndarray, data: RegressionData,
               support_threshold: float = 1e-6):
    """(support recovery error, coefficient MSE, prediction MSE).

    Recovery counts support disagreements against the true indicator, scaled
    by the true support size; the estimate's support uses `support_threshold`
    so shrunk-but-nonzero baselines are read sensibly.
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    true_ind = (np.abs(data.beta_true) > 0).astype(float)
    hat_ind = (np.abs(beta_hat) > support_threshold).astype(float)
    recovery = float(np.abs(true_ind - hat_ind).sum()) / data.support_size
    beta_mse = float(((data.beta_true - beta_hat) ** 2).mean())
    pred_mse = float(((data.y - data.X @ beta_hat) ** 2).mean())
    return recovery, beta_mse, pred_mse
