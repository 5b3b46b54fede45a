"""DDIM inversion: forward-Euler baseline and accelerated fixed-point steps.

The exact reverse of a DDIM update from t to t_prev satisfies

    z_t = sqrt(ab_t / ab_prev) * z_prev + coeff(t, t_prev) * eps(z_t, t),

an implicit equation because the noise prediction is evaluated at the
unknown z_t.  Each inversion step therefore solves z = f(z) for the map
built by `fixed_point_map`.  Plain iteration z <- f(z) converges linearly
for contractive predictors; the Anderson variant extrapolates over a short
window of residuals, and the averaged variant blends the last two map
evaluations with fixed weights (0.5, 0.5).  The cheap baseline
`euler_invert_step` instead evaluates the noise at the current state and
is exact only when the prediction does not depend on z.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError
from .predictor import CallCounter, NoisePredictor, PromptId, guided_epsilon
from .schedule import NoiseSchedule, inversion_eps_coeff


class FixedPointVariant(enum.Enum):
    PLAIN = "plain"
    AVERAGED = "averaged"
    ANDERSON = "anderson"


@dataclass(frozen=True)
class FixedPointConfig:
    """Iteration budget and acceleration settings for one inversion step.

    `iters` fixes the number of iterations unless `residual_tol` > 0 stops
    earlier.  `window` is the Anderson history length m (coerced to 1 for
    the other variants, which do not use it).  `ridge` regularizes the tiny
    least-squares solve for the Anderson weights.
    """

    variant: FixedPointVariant = FixedPointVariant.AVERAGED
    iters: int = 6
    window: int = 2
    residual_tol: float = 0.0
    ridge: float = 1e-10

    def __post_init__(self):
        if self.iters < 1:
            raise ValueError(f"iters must be >= 1, got {self.iters}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.residual_tol < 0.0:
            raise ValueError(f"residual_tol must be >= 0, got {self.residual_tol}")
        if self.ridge < 0.0:
            raise ValueError(f"ridge must be >= 0, got {self.ridge}")
        if self.variant is not FixedPointVariant.ANDERSON and self.window != 1:
            object.__setattr__(self, "window", 1)


@dataclass
class InversionReport:
    """Residual traces and cost accounting for one inversion run.

    `step_traces` holds (timestep, residual norms per iteration); the
    baseline records empty traces.  `nfe` counts noise-predictor calls
    (two per guided evaluation).  `round_trip_l2` is filled once a caller
    resamples and measures the reconstruction.
    """

    step_traces: list[tuple[int, list[float]]] = field(default_factory=list)
    nfe: int = 0
    wall_ms: float = 0.0
    z_final: np.ndarray | None = None
    round_trip_l2: float | None = None

    def to_csv(self, path) -> None:
        """Write the residual table plus a trailing summary section."""
        lines = ["step_t,iteration,residual_norm"]
        for t, trace in self.step_traces:
            for i, res in enumerate(trace, start=1):
                lines.append(f"{t},{i},{res:.9g}")
        lines.append("round_trip_l2,nfe,wall_ms")
        rt = float("nan") if self.round_trip_l2 is None else self.round_trip_l2
        lines.append(f"{rt:.9g},{self.nfe},{self.wall_ms:.9g}")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def euler_invert_step(
    schedule: NoiseSchedule,
    pred: NoisePredictor,
    z_t,
    t: int,
    t_next: int,
    cond: PromptId,
    omega: float,
) -> np.ndarray:
    """Linearized inversion step from t up to t_next.

    Evaluates the guided noise at the current state with the *next*
    timestep as time argument, then applies the sampling formula towards
    higher noise.  t may be 0.
    """
    if not t < t_next:
        raise ValueError(f"need t < t_next, got {t} >= {t_next}")
    z_t = np.asarray(z_t, dtype=np.float64)
    eps = guided_epsilon(pred, z_t, cond, omega, t_next)
    ab_t = float(schedule.alpha_bar[t])
    ab_n = float(schedule.alpha_bar[t_next])
    if ab_t <= 0.0:
        raise ValueError(f"alpha_bar[{t}] must be positive")
    z0_hat = (z_t - math.sqrt(1.0 - ab_t) * eps) / math.sqrt(ab_t)
    return math.sqrt(ab_n) * z0_hat + math.sqrt(1.0 - ab_n) * eps


def fixed_point_map(
    schedule: NoiseSchedule,
    pred: NoisePredictor,
    z_candidate,
    z_prev,
    t: int,
    t_prev: int,
    cond: PromptId,
    omega: float,
) -> np.ndarray:
    """The implicit inversion map f whose fixed point is the exact z_t.

    f(z) = sqrt(ab_t / ab_prev) * z_prev + coeff * guided_eps(z, t) with
    coeff = sqrt(1 - ab_t) - sqrt((1 - ab_prev) * ab_t / ab_prev).  At a
    fixed point, a subsequent `ddim_step` recovers z_prev exactly.  The
    noise is evaluated at time t, matching the step being solved for.
    """
    if not t_prev < t:
        raise ValueError(f"need t_prev < t, got {t_prev} >= {t}")
    ab_t = float(schedule.alpha_bar[t])
    ab_p = float(schedule.alpha_bar[t_prev])
    eps = guided_epsilon(pred, np.asarray(z_candidate, dtype=np.float64), cond, omega, t)
    coeff = inversion_eps_coeff(ab_t, ab_p)
    return math.sqrt(ab_t / ab_p) * np.asarray(z_prev, dtype=np.float64) + coeff * eps


def anderson_weights(residual_history, ridge: float = 1e-10) -> np.ndarray:
    """Combination weights minimizing || sum_j gamma_j g_j ||_2 with sum(gamma) = 1.

    The constraint is eliminated by expressing the last weight as one minus
    the others, leaving an unconstrained least-squares problem on residual
    differences that is solved via ridge-regularized normal equations (the
    systems stay tiny, window + 1 entries at most).  Degenerate systems
    fall back to (0, ..., 0, 1), i.e. a plain iteration.
    """
    g = [np.ravel(np.asarray(r, dtype=np.float64)) for r in residual_history]
    m1 = len(g)
    if m1 == 0:
        raise ValueError("residual history must be nonempty")
    fallback = np.zeros(m1)
    fallback[-1] = 1.0
    if m1 == 1:
        return np.array([1.0])
    stacked = np.stack(g)
    diffs = (stacked[:-1] - stacked[-1]).T  # n x m
    normal = diffs.T @ diffs + ridge * np.eye(m1 - 1)
    rhs = -diffs.T @ stacked[-1]
    try:
        beta = np.linalg.solve(normal, rhs)
    except np.linalg.LinAlgError:
        return fallback
    if not np.all(np.isfinite(beta)):
        return fallback
    gamma = np.concatenate((beta, [1.0 - float(np.sum(beta))]))
    total = float(np.sum(gamma))
    if total != 1.0:
        # One rounding correction; give up on pathological magnitudes.
        gamma[-1] += 1.0 - total
        if float(np.sum(gamma)) != 1.0:
            return fallback
    return gamma


def iterative_invert_step(
    schedule: NoiseSchedule,
    pred: NoisePredictor,
    z_prev,
    t: int,
    t_prev: int,
    cond: PromptId,
    omega: float,
    cfg: FixedPointConfig,
) -> tuple[np.ndarray, list[float]]:
    """Solve one implicit inversion step z = f(z) by accelerated iteration.

    Starts from z^0 = z_prev, z^1 = f(z^0), then for i = 1..iters records
    the residual ||f(z^i) - z^i||_2 and forms

        z^{i+1} = sum_j gamma_j * f(z^{i - m_i + j})

    with gamma from Anderson least squares (window m), the fixed pair
    (0.5, 0.5) for the averaged variant, or (0, 1) for plain iteration.
    Returns (z^iters, residual trace), or an earlier iterate when
    `residual_tol` > 0 is reached.  Map evaluations are cached, so a step
    with I iterations costs exactly I + 1 evaluations.
    """

    def f(z):
        return fixed_point_map(schedule, pred, z, z_prev, t, t_prev, cond, omega)

    z_hist = [np.asarray(z_prev, dtype=np.float64)]
    f_hist = [f(z_hist[0])]
    z_hist.append(f_hist[0])
    trace: list[float] = []
    for i in range(1, cfg.iters + 1):
        if not np.all(np.isfinite(z_hist[i])):
            raise DivergenceError(step_t=t, iteration=i)
        f_i = f(z_hist[i])
        f_hist.append(f_i)
        residual = f_i - z_hist[i]
        res_norm = float(np.linalg.norm(np.ravel(residual)))
        trace.append(res_norm)
        if cfg.residual_tol > 0.0 and res_norm <= cfg.residual_tol:
            return z_hist[i], trace
        if cfg.variant is FixedPointVariant.PLAIN:
            z_next = f_i
        elif cfg.variant is FixedPointVariant.AVERAGED:
            z_next = 0.5 * f_hist[i - 1] + 0.5 * f_hist[i]
        else:
            m_i = min(cfg.window, i)
            residuals = [f_hist[j] - z_hist[j] for j in range(i - m_i, i + 1)]
            gamma = anderson_weights(residuals, cfg.ridge)
            z_next = sum(gamma[j] * f_hist[i - m_i + j] for j in range(m_i + 1))
        z_hist.append(z_next)
    return z_hist[cfg.iters], trace


def invert_trajectory(
    schedule: NoiseSchedule,
    pred: NoisePredictor,
    z_0,
    cond: PromptId,
    omega: float = 1.0,
    cfg: FixedPointConfig | None = None,
) -> tuple[np.ndarray, InversionReport]:
    """Invert a clean latent across the scheduled timesteps in increasing order.

    With a FixedPointConfig each step runs `iterative_invert_step`; with
    cfg=None the forward-Euler baseline is used.  Returns the final noise
    vector and a report with per-step residual traces and the
    noise-predictor call count.
    """
    counter = CallCounter(pred)
    start = time.perf_counter()
    z = np.asarray(z_0, dtype=np.float64)
    traces: list[tuple[int, list[float]]] = []
    for t_prev, t in schedule.inversion_pairs():
        if cfg is None:
            z = euler_invert_step(schedule, counter, z, t_prev, t, cond, omega)
            traces.append((t, []))
        else:
            z, trace = iterative_invert_step(
                schedule, counter, z, t, t_prev, cond, omega, cfg
            )
            traces.append((t, trace))
    wall_ms = (time.perf_counter() - start) * 1e3
    report = InversionReport(
        step_traces=traces, nfe=counter.calls, wall_ms=wall_ms, z_final=z
    )
    return z, report
