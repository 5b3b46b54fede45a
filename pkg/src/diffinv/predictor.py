"""Noise-predictor interface and analytic toy predictors.

A noise predictor maps (latent, prompt, timestep) to a same-shaped noise
estimate.  The toy implementations here are desk-scale stand-ins for a
denoising network: each prompt selects its own parameters, which emulates
prompt-dependent predictions without any text encoder.  All predictors are
deterministic, shape preserving and immutable after construction, so
concurrent `predict` calls are safe.
"""

from __future__ import annotations

import abc
import enum
import math

import numpy as np

from .schedule import NoiseSchedule, build_schedule, inversion_eps_coeff


class PromptId(enum.Enum):
    """Conditioning selector: the null reference, a source or a target prompt."""

    NULL = "null"
    SOURCE = "source"
    TARGET = "target"


class NoisePredictor(abc.ABC):
    @abc.abstractmethod
    def predict(self, z: np.ndarray, prompt: PromptId, t: int) -> np.ndarray:
        """Return a noise estimate with the same shape as `z`."""


def spectral_norm(matrix: np.ndarray, iters: int = 200, tol: float = 1e-13) -> float:
    """Largest singular value, estimated by power iteration on M^T M.

    Deterministic: starts from the normalized all-ones vector.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("spectral_norm expects a 2-D matrix")
    n = m.shape[1]
    v = np.full(n, 1.0 / math.sqrt(n))
    prev = 0.0
    for _ in range(iters):
        w = m.T @ (m @ v)
        peak = float(np.max(np.abs(w)))
        if peak == 0.0:
            return 0.0
        scaled = w / peak  # avoids overflow in the norm for huge entries
        norm_scaled = float(np.linalg.norm(scaled))
        v = scaled / norm_scaled
        sigma = math.sqrt(peak) * math.sqrt(norm_scaled)
        if abs(sigma - prev) <= tol * max(sigma, 1.0):
            return sigma
        prev = sigma
    return prev


def _normalized_matrix(rng: np.random.Generator, dim: int, target_norm: float) -> np.ndarray:
    raw = rng.standard_normal((dim, dim))
    sn = spectral_norm(raw)
    return raw * (target_norm / sn)


class ZeroPredictor(NoisePredictor):
    """Predicts zero noise for every input; useful for telescoping checks."""

    def predict(self, z, prompt, t):
        return np.zeros_like(np.asarray(z, dtype=np.float64))


class ConstantPredictor(NoisePredictor):
    """Predicts the same constant for every pixel, prompt and timestep."""

    def __init__(self, value: float):
        self.value = float(value)

    def predict(self, z, prompt, t):
        return np.full_like(np.asarray(z, dtype=np.float64), self.value)


_POWER_CHECK_MAX_DIM = 512


class AffinePredictor(NoisePredictor):
    """eps(z, p) = A_p @ flat(z) + b_p with a declared spectral bound on A_p.

    The declared bound is verified by power iteration at construction for
    small sizes, so downstream convergence reasoning can rely on it.
    """

    def __init__(
        self,
        weights: dict[PromptId, np.ndarray],
        biases: dict[PromptId, np.ndarray],
        spectral_bound: float,
    ):
        self.weights = {}
        self.biases = {}
        dims = set()
        for prompt in PromptId:
            if prompt not in weights or prompt not in biases:
                raise ValueError(f"missing weights or bias for prompt {prompt.value}")
            a = np.asarray(weights[prompt], dtype=np.float64)
            b = np.asarray(biases[prompt], dtype=np.float64)
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ValueError("affine weights must be square matrices")
            if b.shape != (a.shape[0],):
                raise ValueError("bias length must match the weight matrix size")
            a.setflags(write=False)
            b.setflags(write=False)
            self.weights[prompt] = a
            self.biases[prompt] = b
            dims.add(a.shape[0])
        if len(dims) != 1:
            raise ValueError("all prompts must share one latent dimension")
        self.dim = dims.pop()
        self.spectral_bound = float(spectral_bound)
        if self.dim <= _POWER_CHECK_MAX_DIM:
            for prompt, a in self.weights.items():
                sn = spectral_norm(a)
                if sn > self.spectral_bound * (1.0 + 1e-8):
                    raise ValueError(
                        f"declared spectral bound {self.spectral_bound} violated for "
                        f"prompt {prompt.value}: measured {sn:.6g}"
                    )

    @classmethod
    def scalar(cls, a_by_prompt: dict[PromptId, float], b_by_prompt=None) -> "AffinePredictor":
        """1-D convenience constructor: eps(z) = a_p * z + b_p."""
        if b_by_prompt is None:
            b_by_prompt = {p: 0.0 for p in PromptId}
        weights = {p: np.array([[a_by_prompt[p]]]) for p in PromptId}
        biases = {p: np.array([b_by_prompt[p]]) for p in PromptId}
        bound = max(abs(a) for a in a_by_prompt.values())
        return cls(weights, biases, bound)

    @classmethod
    def random(
        cls,
        dim: int,
        seed: int = 0,
        norms: dict[PromptId, float] | None = None,
        bias_scale: float = 0.1,
    ) -> "AffinePredictor":
        if norms is None:
            norms = {PromptId.NULL: 0.02, PromptId.SOURCE: 0.05, PromptId.TARGET: 0.05}
        rng = np.random.default_rng(seed)
        weights = {p: _normalized_matrix(rng, dim, norms[p]) for p in PromptId}
        biases = {p: bias_scale * rng.standard_normal(dim) for p in PromptId}
        return cls(weights, biases, max(norms.values()))

    def lipschitz(self, prompt: PromptId) -> float:
        return spectral_norm(self.weights[prompt])

    def predict(self, z, prompt, t):
        z = np.asarray(z, dtype=np.float64)
        flat = z.reshape(-1)
        if flat.size != self.dim:
            raise ValueError(f"latent has {flat.size} elements, predictor expects {self.dim}")
        return (self.weights[prompt] @ flat + self.biases[prompt]).reshape(z.shape)


class ContractivePredictor(NoisePredictor):
    """eps(z, p) = s * tanh(W_p @ flat(z)), built to keep inversion contractive.

    The per-step implicit inversion map multiplies the noise prediction by a
    schedule coefficient; construction asserts that the largest such
    coefficient on the default 20-step schedule times the predictor
    Lipschitz bound s * max_p ||W_p|| stays below 0.9, which guarantees the
    fixed-point iteration converges at guidance scale 1.
    """

    CONTRACTION_LIMIT = 0.9

    def __init__(self, scale: float, weights: dict[PromptId, np.ndarray], check_margin: bool = True):
        self.scale = float(scale)
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")
        self.weights = {}
        dims = set()
        for prompt in PromptId:
            if prompt not in weights:
                raise ValueError(f"missing weights for prompt {prompt.value}")
            w = np.asarray(weights[prompt], dtype=np.float64)
            if w.ndim != 2 or w.shape[0] != w.shape[1]:
                raise ValueError("weights must be square matrices")
            w.setflags(write=False)
            self.weights[prompt] = w
            dims.add(w.shape[0])
        if len(dims) != 1:
            raise ValueError("all prompts must share one latent dimension")
        self.dim = dims.pop()
        self.lipschitz_bound = self.scale * max(
            spectral_norm(w) for w in self.weights.values()
        )
        if check_margin:
            coeff = max_inversion_coeff(build_schedule().subsample(20))
            margin = coeff * self.lipschitz_bound
            if margin >= self.CONTRACTION_LIMIT:
                raise ValueError(
                    f"contraction margin {margin:.4f} >= {self.CONTRACTION_LIMIT}; "
                    "reduce scale or the weight norms"
                )

    @classmethod
    def default(cls, dim: int = 64, seed: int = 0) -> "ContractivePredictor":
        """Weak nonlinear predictor with a milder null branch.

        The null-conditioned weights get a smaller norm than the prompted
        ones, mirroring how unconditioned predictions are tamer than
        prompted ones.
        """
        norms = {PromptId.NULL: 0.1, PromptId.SOURCE: 0.4, PromptId.TARGET: 0.4}
        rng = np.random.default_rng(seed)
        weights = {p: _normalized_matrix(rng, dim, norms[p]) for p in PromptId}
        return cls(scale=0.1, weights=weights)

    def lipschitz(self, prompt: PromptId) -> float:
        return self.scale * spectral_norm(self.weights[prompt])

    def predict(self, z, prompt, t):
        z = np.asarray(z, dtype=np.float64)
        flat = z.reshape(-1)
        if flat.size != self.dim:
            raise ValueError(f"latent has {flat.size} elements, predictor expects {self.dim}")
        return (self.scale * np.tanh(self.weights[prompt] @ flat)).reshape(z.shape)


def max_inversion_coeff(schedule: NoiseSchedule) -> float:
    """Largest noise coefficient of the implicit inversion map over a schedule."""
    return max(
        abs(inversion_eps_coeff(schedule.alpha_bar[t], schedule.alpha_bar[t_prev]))
        for t_prev, t in schedule.inversion_pairs()
    )


class CallCounter(NoisePredictor):
    """Wraps a predictor and counts `predict` calls (not thread safe)."""

    def __init__(self, inner: NoisePredictor):
        self.inner = inner
        self.calls = 0

    def predict(self, z, prompt, t):
        self.calls += 1
        return self.inner.predict(z, prompt, t)


def guided_epsilon(
    pred: NoisePredictor, z: np.ndarray, cond: PromptId, omega: float, t: int
) -> np.ndarray:
    """Classifier-free guided noise: omega * eps_cond + (1 - omega) * eps_null.

    Affine in omega, so omega = 1 returns the conditional prediction
    bit-exactly and omega = 0 the null-conditioned one.
    """
    if cond is PromptId.NULL:
        raise ValueError("conditioning prompt must not be the null prompt")
    eps_cond = pred.predict(z, cond, t)
    eps_null = pred.predict(z, PromptId.NULL, t)
    if eps_cond.shape != eps_null.shape:
        raise ValueError(
            f"conditional/unconditional shape mismatch: {eps_cond.shape} vs {eps_null.shape}"
        )
    omega = float(omega)
    return omega * eps_cond + (1.0 - omega) * eps_null


def load_predictor(path) -> NoisePredictor:
    """Build a predictor from a `key = value` spec file.

    Common keys: `kind` (zero | constant | affine | contractive), `dim`,
    `seed`.  Weights load from tensor files referenced relative to the spec
    file (`w_null = w0.txt`, `a_source = ...`, `b_source = ...`), or are
    generated from `seed` with per-prompt spectral norms
    (`norm_null = 0.1`, ...).  `scale` sets the contractive amplitude,
    `value` the constant, `bound` the declared affine spectral bound.
    """
    from pathlib import Path

    from .fileio import load_tensor, parse_kv_file

    path = Path(path)
    spec = parse_kv_file(path)
    kind = spec.get("kind")
    if kind is None:
        raise ValueError(f"{path}: missing 'kind'")

    def tensor(key):
        if key not in spec:
            return None
        return load_tensor(path.parent / spec[key])

    if kind == "zero":
        return ZeroPredictor()
    if kind == "constant":
        if "value" not in spec:
            raise ValueError(f"{path}: constant predictor needs 'value'")
        return ConstantPredictor(float(spec["value"]))

    dim = int(spec.get("dim", 64))
    seed = int(spec.get("seed", 0))
    if kind == "contractive":
        scale = float(spec.get("scale", 0.1))
        explicit = {p: tensor(f"w_{p.value}") for p in PromptId}
        if all(w is not None for w in explicit.values()):
            return ContractivePredictor(scale, explicit)
        if any(w is not None for w in explicit.values()):
            raise ValueError(f"{path}: give all of w_null/w_source/w_target or none")
        norms = {
            p: float(spec.get(f"norm_{p.value}", default))
            for p, default in zip(PromptId, (0.1, 0.4, 0.4))
        }
        rng = np.random.default_rng(seed)
        weights = {p: _normalized_matrix(rng, dim, norms[p]) for p in PromptId}
        return ContractivePredictor(scale, weights)
    if kind == "affine":
        weights = {p: tensor(f"a_{p.value}") for p in PromptId}
        biases = {p: tensor(f"b_{p.value}") for p in PromptId}
        if all(w is not None for w in weights.values()):
            filled = {
                p: (b if b is not None else np.zeros(weights[p].shape[0]))
                for p, b in biases.items()
            }
            bound = float(spec.get("bound", max(spectral_norm(w) for w in weights.values())))
            return AffinePredictor(weights, filled, bound)
        if any(w is not None for w in weights.values()):
            raise ValueError(f"{path}: give all of a_null/a_source/a_target or none")
        norms = {
            p: float(spec.get(f"norm_{p.value}", default))
            for p, default in zip(PromptId, (0.02, 0.05, 0.05))
        }
        return AffinePredictor.random(
            dim, seed, norms, bias_scale=float(spec.get("bias_scale", 0.1))
        )
    raise ValueError(f"{path}: unknown predictor kind {kind!r}")


def blended_epsilon(
    pred: NoisePredictor, z: np.ndarray, cond: PromptId, scale_field, t: int
) -> np.ndarray:
    """Per-pixel guided noise: field * eps_cond + (1 - field) * eps_null.

    `scale_field` must broadcast to the latent shape.  A uniform field
    degenerates to `guided_epsilon` bit-exactly.
    """
    if cond is PromptId.NULL:
        raise ValueError("conditioning prompt must not be the null prompt")
    z = np.asarray(z, dtype=np.float64)
    field = np.asarray(scale_field, dtype=np.float64)
    try:
        if np.broadcast_shapes(field.shape, z.shape) != z.shape:
            raise ValueError
    except ValueError:
        raise ValueError(
            f"scale field of shape {field.shape} does not broadcast to latent shape {z.shape}"
        ) from None
    eps_cond = pred.predict(z, cond, t)
    eps_null = pred.predict(z, PromptId.NULL, t)
    if eps_cond.shape != eps_null.shape:
        raise ValueError(
            f"conditional/unconditional shape mismatch: {eps_cond.shape} vs {eps_null.shape}"
        )
    return field * eps_cond + (1.0 - field) * eps_null
