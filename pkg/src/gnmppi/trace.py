"""Per-iteration solver records."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

CONVERGED = "converged"
ITERATION_CAP = "iteration_cap"
ERROR = "error"


@dataclass
class IterationRecord:
    k: int
    U: NDArray[np.float64]
    cost: float
    step_norm: float
    grad_norm: float
    batches: int
    evaluations: int
    wall_time: float
    alpha: float | None = None
    accepted: bool = True
    weight_entropy: float | None = None


@dataclass
class SolverTrace:
    """Everything a solve did, one record per executed iteration.

    ``records[k].U`` and ``records[k].cost`` describe the iterate the
    iteration started from; ``U_final`` is the returned iterate.
    ``batches`` and ``evaluations`` are read from the evaluator's counters.
    """

    method: str
    records: list[IterationRecord] = field(default_factory=list)
    status: str = ITERATION_CAP
    U_final: NDArray[np.float64] | None = None
    batches: int = 0
    evaluations: int = 0
    message: str = ""

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def costs(self) -> NDArray[np.float64]:
        return np.array([r.cost for r in self.records])

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def rows(self) -> list[dict]:
        """Flat per-iteration rows for trace files."""
        return [
            {
                "k": r.k,
                "cost": r.cost,
                "step_norm": r.step_norm,
                "grad_norm": r.grad_norm,
                "alpha": r.alpha,
                "accepted": r.accepted,
                "batches": r.batches,
            }
            for r in self.records
        ]
