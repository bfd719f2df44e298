"""Per-scenario subgradient cuts on the loss proxies and their batch algebra.

A cut is one linear lower bound ``theta_r >= coeffs . x + constant`` on the
scenario-r proxy. The ledger keeps every generated cut in insertion order
(the initial ``theta_r >= 0`` floor is implicit, never stored) and evaluates
batches of candidate decisions against the accumulated bounds.

Concurrency contract: any number of readers, or exactly one writer
(``add_cut``) with no concurrent readers.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass
class Cut:
    scenario: int
    coeffs: np.ndarray
    constant: float

    def value(self, x: np.ndarray) -> float:
        return float(self.coeffs @ x + self.constant)


class CutLedger:
    """Cuts grouped by scenario: matrix A_r of coefficient rows, vector c_r of constants."""

    def __init__(self, n_dims: int, n_scenarios: int):
        if n_dims < 1 or n_scenarios < 1:
            raise InputError("ledger needs at least one dimension and one scenario")
        self.n_dims = int(n_dims)
        self.n_scenarios = int(n_scenarios)
        self._rows = [[] for _ in range(self.n_scenarios)]
        self._consts = [[] for _ in range(self.n_scenarios)]

    def __len__(self) -> int:
        return sum(len(rows) for rows in self._rows)

    def n_cuts(self, scenario: int) -> int:
        return len(self._rows[scenario])

    def add_cut(self, cut: Cut) -> None:
        coeffs = np.asarray(cut.coeffs, dtype=float)
        if coeffs.shape != (self.n_dims,):
            raise InputError(
                f"cut has {coeffs.size} coefficients, ledger dimension is {self.n_dims}")
        if not (0 <= cut.scenario < self.n_scenarios):
            raise InputError(f"scenario {cut.scenario} outside 0..{self.n_scenarios - 1}")
        self._rows[cut.scenario].append(coeffs.copy())
        self._consts[cut.scenario].append(float(cut.constant))

    def rows(self, scenario: int):
        """(A_r, c_r) for one scenario; shapes (I, N) and (I,)."""
        rows = self._rows[scenario]
        if not rows:
            return np.zeros((0, self.n_dims)), np.zeros(0)
        return np.array(rows), np.array(self._consts[scenario])

    def proxy_value(self, scenario: int, x: np.ndarray) -> float:
        """Binding bound on theta_r at x: max over stored cuts and the 0 floor."""
        a, c = self.rows(scenario)
        if a.shape[0] == 0:
            return 0.0
        return float(max(0.0, np.max(a @ x + c)))

    def approx_losses(self, decisions: np.ndarray, fixed_costs: np.ndarray) -> np.ndarray:
        """Ledger-approximated total loss per decision column.

        For each scenario, each cut row i gives a loss estimate
        ``A_r[i] . D[:, b] + c_r[i]`` per column b (one dot per cut row,
        accumulated in insertion order); the per-scenario estimate is the
        binding one (max over rows, floored at 0 like theta_r itself). The
        result averages over scenarios and adds the per-column fixed cost.
        """
        decisions = np.asarray(decisions, dtype=float)
        fixed_costs = np.asarray(fixed_costs, dtype=float)
        if decisions.ndim != 2 or decisions.shape[0] != self.n_dims:
            raise InputError(
                f"decision matrix must be ({self.n_dims}, B), got {decisions.shape}")
        n_batch = decisions.shape[1]
        if fixed_costs.shape != (n_batch,):
            raise InputError("fixed costs must give one entry per decision column")
        total = np.zeros(n_batch)
        for r in range(self.n_scenarios):
            a, c = self.rows(r)
            best = np.zeros(n_batch)  # the implicit theta_r >= 0 floor
            for i in range(a.shape[0]):
                np.maximum(best, a[i] @ decisions + c[i], out=best)
            total += best
        return total / self.n_scenarios + fixed_costs

    def to_json(self) -> str:
        payload = {
            "n_dims": self.n_dims,
            "scenarios": [
                {"coeffs": [list(map(float, row)) for row in self._rows[r]],
                 "constants": [float(v) for v in self._consts[r]]}
                for r in range(self.n_scenarios)
            ],
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "CutLedger":
        payload = json.loads(text)
        ledger = cls(payload["n_dims"], len(payload["scenarios"]))
        for r, block in enumerate(payload["scenarios"]):
            for row, const in zip(block["coeffs"], block["constants"]):
                ledger.add_cut(Cut(r, np.asarray(row, dtype=float), const))
        return ledger
