"""Noise schedules for DDIM-style sampling and inversion.

A schedule holds the cumulative signal fractions alpha_bar[0..T] of a
variance-preserving diffusion plus the subset of timesteps an N-step run
actually visits.  alpha_bar[0] = 1 by convention, so coefficient lookups one
grid point before the first scheduled step stay well defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericsError

DEFAULT_BIG_T = 1000
DEFAULT_BETA_START = 0.00085
DEFAULT_BETA_END = 0.012


def _validate_alpha_bar(alpha_bar: np.ndarray) -> None:
    if alpha_bar.ndim != 1 or alpha_bar.size < 2:
        raise ValueError("alpha_bar must be 1-D with at least one step entry")
    if alpha_bar[0] != 1.0:
        raise ValueError("alpha_bar[0] must be exactly 1")
    core = alpha_bar[1:]
    if not np.all(np.isfinite(core)):
        raise ValueError("alpha_bar contains non-finite entries")
    if np.any(core <= 0.0) or np.any(core > 1.0):
        raise ValueError("alpha_bar entries for t >= 1 must lie in (0, 1]")
    if core.size > 1 and np.any(np.diff(core) >= 0.0):
        raise ValueError("alpha_bar must be strictly decreasing on 1..T")


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative noise schedule and the active timestep grid.

    alpha_bar[t] is the product of (1 - beta_s) for s = 1..t.  `timesteps`
    is a strictly increasing subset of 1..big_t; a freshly built schedule
    uses the full grid until `subsample` narrows it.
    """

    alpha_bar: np.ndarray
    big_t: int
    timesteps: np.ndarray

    def __post_init__(self):
        alpha_bar = np.asarray(self.alpha_bar, dtype=np.float64)
        timesteps = np.asarray(self.timesteps, dtype=np.int64)
        _validate_alpha_bar(alpha_bar)
        if self.big_t != alpha_bar.size - 1:
            raise ValueError(
                f"big_t={self.big_t} does not match alpha_bar length {alpha_bar.size}"
            )
        if timesteps.ndim != 1 or timesteps.size == 0:
            raise ValueError("timesteps must be a nonempty 1-D integer sequence")
        if timesteps[0] < 1 or timesteps[-1] > self.big_t:
            raise ValueError("timesteps must lie within [1, big_t]")
        if timesteps.size > 1 and np.any(np.diff(timesteps) <= 0):
            raise ValueError("timesteps must be strictly increasing and duplicate-free")
        alpha_bar.setflags(write=False)
        timesteps.setflags(write=False)
        object.__setattr__(self, "alpha_bar", alpha_bar)
        object.__setattr__(self, "timesteps", timesteps)

    @property
    def n_steps(self) -> int:
        return int(self.timesteps.size)

    def subsample(self, n_steps: int) -> "NoiseSchedule":
        """Select a uniform-stride grid of `n_steps` timesteps ending at big_t.

        The stride is floor(big_t / n_steps); the grid is anchored at the
        horizon so the last entry always equals big_t.  Idempotent for a
        fixed `n_steps`.
        """
        if not 1 <= n_steps <= self.big_t:
            raise ValueError(f"n_steps must be in [1, {self.big_t}], got {n_steps}")
        stride = self.big_t // n_steps
        ts = self.big_t - stride * np.arange(n_steps - 1, -1, -1, dtype=np.int64)
        return NoiseSchedule(self.alpha_bar, self.big_t, ts)

    def inversion_pairs(self) -> list[tuple[int, int]]:
        """(t_prev, t) pairs in increasing order, starting from (0, first)."""
        ts = self.timesteps.tolist()
        return list(zip([0] + ts[:-1], ts))

    def sampling_pairs(self) -> list[tuple[int, int]]:
        """(t, t_prev) pairs in decreasing order, ending at (first, 0)."""
        return [(t, prev) for prev, t in reversed(self.inversion_pairs())]


def build_schedule(
    big_t: int = DEFAULT_BIG_T,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Construct a scaled-linear beta schedule and its cumulative products.

    beta_s interpolates linearly in sqrt space between beta_start and
    beta_end; alpha_bar[t] = prod_{s<=t} (1 - beta_s).  The defaults match
    the schedule commonly used by public latent diffusion checkpoints.
    """
    if big_t < 1:
        raise ValueError(f"big_t must be >= 1, got {big_t}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"betas must satisfy 0 < beta_start <= beta_end < 1, "
            f"got ({beta_start}, {beta_end})"
        )
    if big_t == 1 or beta_start == beta_end:
        betas = np.full(big_t, beta_start, dtype=np.float64)
    else:
        betas = np.linspace(math.sqrt(beta_start), math.sqrt(beta_end), big_t) ** 2
    alpha_bar = np.concatenate(([1.0], np.cumprod(1.0 - betas)))
    return NoiseSchedule(alpha_bar, big_t, np.arange(1, big_t + 1, dtype=np.int64))


def subsample(schedule: NoiseSchedule, n_steps: int) -> NoiseSchedule:
    return schedule.subsample(n_steps)


def schedule_from_alpha_bar(values) -> NoiseSchedule:
    """Build a schedule from explicit alpha_bar values for t = 1..T.

    The t = 0 sentinel value of 1 is prepended automatically.
    """
    core = np.asarray(values, dtype=np.float64)
    if core.ndim != 1 or core.size < 1:
        raise ValueError("need a flat, nonempty list of alpha_bar values")
    alpha_bar = np.concatenate(([1.0], core))
    big_t = core.size
    return NoiseSchedule(alpha_bar, big_t, np.arange(1, big_t + 1, dtype=np.int64))


def load_alpha_bar(path) -> NoiseSchedule:
    """Load alpha_bar values (one real per line, t = 1..T) from a text file.

    Pins a schedule bit-exactly regardless of how it was generated.
    """
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                values.append(float(text))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: not a real number: {text!r}") from exc
    if not values:
        raise ValueError(f"{path}: no alpha_bar values found")
    return schedule_from_alpha_bar(values)


def inversion_eps_coeff(alpha_bar_t: float, alpha_bar_prev: float) -> float:
    """Coefficient on the noise prediction in the exact reverse of a DDIM step.

    Rearranging the DDIM update from t to t_prev for z_t gives

        z_t = sqrt(ab_t / ab_prev) * z_prev + coeff * eps,
        coeff = sqrt(1 - ab_t) - sqrt((1 - ab_prev) * ab_t / ab_prev).
    """
    if alpha_bar_prev <= 0.0:
        raise NumericsError("alpha_bar at the previous step must be positive")
    return math.sqrt(1.0 - alpha_bar_t) - math.sqrt(
        (1.0 - alpha_bar_prev) * alpha_bar_t / alpha_bar_prev
    )
