"""Invert / reconstruct / edit pipeline with best-of-n stochastic candidates.

The pipeline inverts the input under the source prompt at a small guidance
scale, reconstructs it with the same settings (which also supplies the
per-step soft masks), and then samples edited candidates under the target
prompt using a per-pixel guidance field blended between the inversion
scale and a larger editing scale.  With eta > 0 the candidate passes are
stochastic inside the masked region and a pluggable scorer ranks them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .guidance import (
    AttentionMap,
    MaskNormConfig,
    SoftMask,
    blended_scale_field,
    normalize_map,
    soft_mask,
    synthetic_attention,
)
from .inversion import FixedPointConfig, InversionReport, invert_trajectory
from .metrics import relative_l2
from .predictor import NoisePredictor, PromptId
from .sampler import StochasticConfig, sample_trajectory
from .schedule import NoiseSchedule


def default_scorer(candidate, reference) -> float:
    """Relative L2 distance to the reference latent; lower is better."""
    return relative_l2(candidate, reference)


@dataclass(frozen=True)
class EditConfig:
    """Settings for the full pipeline.

    omega is used for inversion and reconstruction, omega_e only inside the
    masked editing region.  attention may be a static AttentionMap or a
    callable t -> AttentionMap for time-varying sources; None builds a
    centered synthetic blob on the latent's spatial grid.
    """

    omega: float = 1.0
    omega_e: float = 7.0
    attention: AttentionMap | Callable[[int], AttentionMap] | None = None
    mask: MaskNormConfig = field(default_factory=MaskNormConfig)
    fixed_point: FixedPointConfig | None = field(default_factory=FixedPointConfig)
    eta: float = 0.0
    n_candidates: int = 1
    seed: int = 0
    scorer: Callable[[np.ndarray, np.ndarray], float] = default_scorer

    def __post_init__(self):
        if not 0.0 <= self.omega <= self.omega_e:
            raise ValueError(
                f"need 0 <= omega <= omega_e, got omega={self.omega}, omega_e={self.omega_e}"
            )
        if self.n_candidates < 1:
            raise ValueError(f"n_candidates must be >= 1, got {self.n_candidates}")
        if self.eta < 0.0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")


@dataclass
class EditResult:
    """Candidates with scores plus everything needed to audit the run."""

    candidates: list[np.ndarray]
    scores: list[float]
    best_index: int
    reconstruction: np.ndarray
    masks: list[SoftMask]
    report: InversionReport

    @property
    def best(self) -> np.ndarray:
        return self.candidates[self.best_index]


def _attention_provider(cfg: EditConfig, latent_shape) -> Callable[[int], AttentionMap]:
    attention = cfg.attention
    if attention is None:
        h, w = _grid_shape(latent_shape)
        attention = synthetic_attention((h, w), blob_sigma=max(h, w) / 4.0)
    if isinstance(attention, AttentionMap):
        static = attention
        return lambda t: static
    return attention


def _grid_shape(latent_shape):
    shape = tuple(latent_shape)
    if len(shape) >= 2:
        return shape[-2], shape[-1]
    return 1, shape[0]


def step_mask(cfg: EditConfig, provider, t: int) -> SoftMask:
    """Soft mask for one scheduled timestep from the attention source."""
    return soft_mask(normalize_map(provider(t), cfg.mask), cfg.mask.polarity)


def reconstruct(
    schedule: NoiseSchedule,
    pred: NoisePredictor,
    z_0,
    source_prompt: PromptId,
    cfg: EditConfig,
) -> tuple[np.ndarray, list[SoftMask]]:
    """Invert then resample under the same prompt and guidance scale.

    Returns the reconstructed latent and the per-step soft masks (aligned
    with decreasing timesteps) that the edit branch consumes.
    """
    z_0 = np.asarray(z_0, dtype=np.float64)
    z_t, _ = invert_trajectory(schedule, pred, z_0, source_prompt, cfg.omega, cfg.fixed_point)
    states = sample_trajectory(schedule, pred, z_t, source_prompt, cfg.omega)
    provider = _attention_provider(cfg, z_0.shape)
    masks = [step_mask(cfg, provider, t) for t, _ in schedule.sampling_pairs()]
    return states[-1], masks


def edit(
    schedule: NoiseSchedule,
    pred: NoisePredictor,
    z_0,
    source_prompt: PromptId,
    target_prompt: PromptId,
    cfg: EditConfig,
) -> EditResult:
    """Run the three-branch pipeline and rank the edited candidates.

    The inversion and the reconstruction run once regardless of
    n_candidates; every candidate restarts sampling from the shared
    inverted noise vector.  With eta = 0 all candidates coincide with the
    single deterministic edit.  target == source with omega_e == omega and
    eta == 0 reproduces the reconstruction bit-exactly.
    """
    z_0 = np.asarray(z_0, dtype=np.float64)
    z_t, report = invert_trajectory(
        schedule, pred, z_0, source_prompt, cfg.omega, cfg.fixed_point
    )

    rec_states = sample_trajectory(schedule, pred, z_t, source_prompt, cfg.omega)
    reconstruction = rec_states[-1]
    provider = _attention_provider(cfg, z_0.shape)
    masks = [step_mask(cfg, provider, t) for t, _ in schedule.sampling_pairs()]

    mask_arrays = [m.for_latent(z_0.shape) for m in masks]
    fields = [blended_scale_field(m, cfg.omega, cfg.omega_e) for m in mask_arrays]

    candidates: list[np.ndarray] = []
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_candidates)
    for k in range(cfg.n_candidates):
        if cfg.eta > 0.0:
            rng = np.random.default_rng(seeds[k])
            states = sample_trajectory(
                schedule,
                pred,
                z_t,
                target_prompt,
                scale_fields=fields,
                stochastic=StochasticConfig(eta=cfg.eta, seed=cfg.seed),
                masks=mask_arrays,
                rng=rng,
            )
        else:
            states = sample_trajectory(
                schedule, pred, z_t, target_prompt, scale_fields=fields
            )
        candidates.append(states[-1])

    try:
        scores = [float(cfg.scorer(c, z_0)) for c in candidates]
        best_index = int(np.argmin(scores))
    except Exception:
        # Scorer failure: keep candidate order, mark scores as unknown.
        scores = [math.nan] * len(candidates)
        best_index = 0
    return EditResult(
        candidates=candidates,
        scores=scores,
        best_index=best_index,
        reconstruction=reconstruction,
        masks=masks,
        report=report,
    )


def write_scores_csv(result: EditResult, path) -> None:
    """CSV of per-candidate scores, best candidate first column-flagged."""
    lines = ["candidate,score,is_best"]
    for k, score in enumerate(result.scores):
        lines.append(f"{k},{score:.9g},{1 if k == result.best_index else 0}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
