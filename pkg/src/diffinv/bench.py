"""Reconstruction-accuracy grid over steps, guidance scales and methods.

Each grid cell inverts one shared reference latent and resamples it,
reporting the round-trip error, PSNR and predictor-call count.  The CSV
output is byte-deterministic under a fixed seed: rows are ordered by
(method, steps, omega) regardless of execution order, floats carry nine
significant digits with `\\n` line endings, and the informational wall_ms
column is written as 0 unless timing output is explicitly requested.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .inversion import FixedPointConfig, FixedPointVariant, invert_trajectory
from .metrics import psnr, relative_l2
from .predictor import ContractivePredictor, NoisePredictor, PromptId
from .sampler import sample_trajectory
from .schedule import build_schedule

METHODS = ("anderson", "averaged", "euler", "plain")

# Iteration budgets per step count; unlisted counts fall back to 6.
DEFAULT_ITERS = {10: 11, 20: 6, 50: 5}
FALLBACK_ITERS = 6

CSV_HEADER = "method,steps,omega,round_trip_relative_l2,psnr,nfe,wall_ms,seed"


def method_config(method: str, steps: int, iters: int | None = None, window: int = 2):
    """FixedPointConfig for a named method, or None for the Euler baseline."""
    if method == "euler":
        return None
    if iters is None:
        iters = DEFAULT_ITERS.get(steps, FALLBACK_ITERS)
    variants = {
        "plain": FixedPointVariant.PLAIN,
        "averaged": FixedPointVariant.AVERAGED,
        "anderson": FixedPointVariant.ANDERSON,
    }
    if method not in variants:
        raise ValueError(f"unknown method {method!r}; expected one of {('euler',) + tuple(variants)}")
    return FixedPointConfig(variant=variants[method], iters=iters, window=window)


@dataclass(frozen=True)
class ExperimentGrid:
    """Axes and fixed inputs of one benchmark run."""

    step_counts: tuple[int, ...] = (10, 20, 50)
    omegas: tuple[float, ...] = (0.0, 1.0, 3.0, 5.0, 7.0)
    methods: tuple[str, ...] = METHODS
    dim: int = 64
    seed: int = 0
    predictor: NoisePredictor | None = None
    iters: int | None = None
    window: int = 2

    def __post_init__(self):
        if not self.step_counts or not self.omegas or not self.methods:
            raise ValueError("grid axes must be nonempty")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}; expected subset of {METHODS}")


@dataclass(frozen=True)
class GridRow:
    method: str
    steps: int
    omega: float
    round_trip_relative_l2: float
    psnr: float
    nfe: int
    wall_ms: float
    seed: int


def run_grid(grid: ExperimentGrid) -> list[GridRow]:
    """Evaluate every cell; deterministic under a fixed seed.

    The same reference latent (standard normal, drawn from the grid seed)
    is inverted in every cell so errors are comparable across methods.
    Rows come back in canonical (method, steps, omega) order.
    """
    pred = grid.predictor
    if pred is None:
        pred = ContractivePredictor.default(grid.dim, seed=0)
    base = build_schedule()
    z_0 = np.random.default_rng(grid.seed).standard_normal(grid.dim)
    rows: list[GridRow] = []
    for method in sorted(grid.methods):
        for steps in sorted(grid.step_counts):
            schedule = base.subsample(steps)
            cfg = method_config(method, steps, grid.iters, grid.window)
            for omega in sorted(grid.omegas):
                start = time.perf_counter()
                z_t, report = invert_trajectory(schedule, pred, z_0, PromptId.SOURCE, omega, cfg)
                z_rec = sample_trajectory(schedule, pred, z_t, PromptId.SOURCE, omega)[-1]
                wall_ms = (time.perf_counter() - start) * 1e3
                rows.append(
                    GridRow(
                        method=method,
                        steps=steps,
                        omega=float(omega),
                        round_trip_relative_l2=relative_l2(z_rec, z_0),
                        psnr=psnr(z_rec, z_0),
                        nfe=report.nfe,
                        wall_ms=wall_ms,
                        seed=grid.seed,
                    )
                )
    return rows


def write_grid_csv(rows: list[GridRow], path, timing: bool = False) -> None:
    """Write rows as CSV.

    wall_ms is informational; by default it is written as 0 so repeated
    runs produce byte-identical files.  Pass timing=True to record the
    measured values (which breaks byte-determinism).
    """
    lines = [CSV_HEADER]
    for r in rows:
        wall = r.wall_ms if timing else 0.0
        lines.append(
            f"{r.method},{r.steps},{r.omega:.9g},{r.round_trip_relative_l2:.9g},"
            f"{r.psnr:.9g},{r.nfe},{wall:.9g},{r.seed}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
