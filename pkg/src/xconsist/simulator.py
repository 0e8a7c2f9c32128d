"""Monte-Carlo simulation of a hypothetical model's top-1 consistency.

Each trial draws correct/incorrect outcomes for an anchor and a target
task at the given accuracies; the trial is consistent iff both outcomes
agree.  Three couplings of the two correctness events are supported:
independent draws, maximal overlap of the correct sets ("same errors"),
and minimal overlap ("different errors").  Closed forms for all three are
provided for cross-checking.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._util import parallel_map

_CHUNK = 1 << 16  # trials per RNG substream; keyed by (seed, chunk index)


class ErrorScenario(enum.Enum):
    INDEPENDENT_ERRORS = "independent"
    SAME_ERRORS = "same"
    DIFFERENT_ERRORS = "different"


@dataclass(frozen=True)
class ErrorModelSpec:
    scenario: ErrorScenario
    anchor_acc: float
    target_acc: float
    trials: int
    seed: int

    def __post_init__(self) -> None:
        for name, acc in (("anchor_acc", self.anchor_acc), ("target_acc", self.target_acc)):
            if not (0.0 <= acc <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {acc}")
        if self.trials <= 0:
            raise ValueError(f"trials must be positive, got {self.trials}")
        if self.seed < 0:
            raise ValueError(f"seed must be an unsigned integer, got {self.seed}")


def closed_form_c1(scenario: ErrorScenario, anchor_acc: float, target_acc: float) -> float:
    """Exact top-1 consistency under each error coupling.

    Independent: a*t + (1-a)(1-t).  Same errors (maximal overlap of correct
    sets): min(a,t) + min(1-a,1-t) = 1 - |a-t|.  Different errors (minimal
    overlap): max(0, a+t-1) + max(0, 1-a-t).
    """
    a, t = anchor_acc, target_acc
    for name, acc in (("anchor_acc", a), ("target_acc", t)):
        if not (0.0 <= acc <= 1.0):
            raise ValueError(f"{name} must lie in [0, 1], got {acc}")
    if scenario is ErrorScenario.INDEPENDENT_ERRORS:
        return a * t + (1.0 - a) * (1.0 - t)
    if scenario is ErrorScenario.SAME_ERRORS:
        return 1.0 - abs(a - t)
    return max(0.0, a + t - 1.0) + max(0.0, 1.0 - a - t)


def simulate_c1(spec: ErrorModelSpec) -> float:
    """Monte-Carlo estimate of top-1 consistency; deterministic given the seed.

    Trials are drawn in fixed-size chunks, each from its own substream keyed
    by (seed, chunk index), so results are independent of execution order.
    """
    consistent = 0
    remaining = spec.trials
    chunk_index = 0
    while remaining > 0:
        size = min(_CHUNK, remaining)
        rng = np.random.default_rng((spec.seed, chunk_index))
        u = rng.random(size)
        anchor_ok = u < spec.anchor_acc
        if spec.scenario is ErrorScenario.INDEPENDENT_ERRORS:
            target_ok = rng.random(size) < spec.target_acc
        elif spec.scenario is ErrorScenario.SAME_ERRORS:
            target_ok = u < spec.target_acc
        else:
            target_ok = u >= 1.0 - spec.target_acc
        consistent += int(np.count_nonzero(anchor_ok == target_ok))
        remaining -= size
        chunk_index += 1
    return consistent / spec.trials


@dataclass(frozen=True, slots=True)
class SweepRow:
    scenario: ErrorScenario
    anchor_acc: float
    target_acc: float
    c1_mc: float
    c1_closed: float
    trials: int
    seed: int


def grid_values(grid_step: float) -> list[float]:
    """Accuracy grid {0, step, 2*step, ...} up to 1; values near 1 snap to 1."""
    if not (0.0 < grid_step <= 0.5):
        raise ValueError(f"grid_step must lie in (0, 0.5], got {grid_step}")
    steps = math.floor(1.0 / grid_step + 1e-9)
    values = [i * grid_step for i in range(steps + 1)]
    if abs(values[-1] - 1.0) < 1e-9:
        values[-1] = 1.0
    return values


def sweep(
    scenario: ErrorScenario, grid_step: float, trials: int, seed: int
) -> list[SweepRow]:
    """Full accuracy grid, Monte-Carlo vs. closed form, as heat-map-ready rows.

    Every cell simulates under its own seed derived from (seed, cell indices)
    so cells may run in parallel without changing the output.
    """
    values = grid_values(grid_step)
    cells = [
        (i, j, a, t)
        for i, a in enumerate(values)
        for j, t in enumerate(values)
    ]

    def run(cell: tuple[int, int, float, float]) -> SweepRow:
        i, j, a, t = cell
        cell_seed = int(np.random.SeedSequence((seed, i, j)).generate_state(1)[0])
        mc = simulate_c1(ErrorModelSpec(scenario, a, t, trials, cell_seed))
        return SweepRow(
            scenario=scenario, anchor_acc=a, target_acc=t,
            c1_mc=mc, c1_closed=closed_form_c1(scenario, a, t),
            trials=trials, seed=seed,
        )

    return parallel_map(run, cells)


def sweep_csv_lines(rows: list[SweepRow]) -> list[str]:
    lines = ["scenario,anchor_acc,target_acc,c1_mc,c1_closed,trials,seed"]
    for r in rows:
        lines.append(
            f"{r.scenario.value},{r.anchor_acc!r},{r.target_acc!r},"
            f"{r.c1_mc!r},{r.c1_closed!r},{r.trials},{r.seed}"
        )
    return lines
