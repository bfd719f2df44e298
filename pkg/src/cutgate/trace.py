"""Per-iteration convergence records and their CSV form."""

import io
from dataclasses import dataclass, field

TRACE_COLUMNS = ["iteration", "used_surrogate", "lower_bound", "upper_bound",
                 "rel_gap", "n_cuts_total", "wall_ms"]


@dataclass
class TraceRow:
    iteration: int
    used_surrogate: int
    lower_bound: float
    upper_bound: float
    rel_gap: float
    n_cuts_total: int
    wall_ms: float


@dataclass
class ConvergenceTrace:
    rows: list = field(default_factory=list)
    status: str = "running"

    def append(self, row: TraceRow):
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def exact_solves(self) -> int:
        return sum(1 for r in self.rows if not r.used_surrogate)

    def surrogate_calls(self) -> int:
        return sum(1 for r in self.rows if r.used_surrogate)

    def iterations_to_gap(self, gap: float):
        """First iteration whose recorded relative gap is <= gap, else None."""
        for r in self.rows:
            if r.rel_gap <= gap:
                return r.iteration
        return None

    def exact_solves_to_gap(self, gap: float):
        """Exact master solves spent until the relative gap first reaches `gap`."""
        count = 0
        for r in self.rows:
            if not r.used_surrogate:
                count += 1
            if r.rel_gap <= gap:
                return count
        return None

    def semantically_equal(self, other: "ConvergenceTrace") -> bool:
        """Row-by-row equality of every column except wall-clock time."""
        if len(self.rows) != len(other.rows) or self.status != other.status:
            return False
        for a, b in zip(self.rows, other.rows):
            if (a.iteration, a.used_surrogate, a.n_cuts_total) != \
               (b.iteration, b.used_surrogate, b.n_cuts_total):
                return False
            if not (a.lower_bound == b.lower_bound and a.upper_bound == b.upper_bound
                    and a.rel_gap == b.rel_gap):
                return False
        return True

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(",".join(TRACE_COLUMNS) + "\n")
        for r in self.rows:
            out.write(f"{r.iteration},{r.used_surrogate},{r.lower_bound!r},"
                      f"{r.upper_bound!r},{r.rel_gap!r},{r.n_cuts_total},{r.wall_ms!r}\n")
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str, status: str = "loaded") -> "ConvergenceTrace":
        lines = [ln for ln in text.strip().splitlines() if ln]
        if lines and lines[0].split(",")[0] == "iteration":
            lines = lines[1:]
        trace = cls(status=status)
        for ln in lines:
            parts = ln.split(",")
            trace.append(TraceRow(int(parts[0]), int(parts[1]), float(parts[2]),
                                  float(parts[3]), float(parts[4]), int(parts[5]),
                                  float(parts[6])))
        return trace

    def summary(self) -> dict:
        last = self.rows[-1] if self.rows else None
        return {
            "status": self.status,
            "iterations": len(self.rows),
            "exact_solves": self.exact_solves(),
            "surrogate_calls": self.surrogate_calls(),
            "total_cuts": last.n_cuts_total if last else 0,
            "objective": last.upper_bound if last else float("inf"),
            "lower_bound": last.lower_bound if last else float("-inf"),
            "rel_gap": last.rel_gap if last else float("inf"),
        }
