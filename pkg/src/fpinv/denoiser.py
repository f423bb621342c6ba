"""Conditional noise prediction.

This module defines the eps-prediction contract shared by the sampler and
the inversion solvers: given a noisy latent z_t, a timestep t and a
condition, return the predicted noise. The reference implementation is a
Gaussian-mixture predictor whose conditional expectation has a closed
form, so every numerical claim downstream can be checked against exact
math rather than a trained network. Conditioning is discrete: a "prompt"
selects one mixture component, which reshapes the prediction the same way
a text prompt reshapes a learned denoiser. Classifier-free guidance
blends the conditional and unconditional predictions. A few analytic
stubs (zero, constant, linear) used by the solver diagnostics live here
as well.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from fpinv.schedule import NoiseSchedule

__all__ = [
    "Unconditional",
    "UNCONDITIONAL",
    "ComponentPrompt",
    "Condition",
    "GuidanceConfig",
    "GaussianMixtureModel",
    "DenoiserModel",
    "GaussianMixtureDenoiser",
    "ZeroDenoiser",
    "ConstantDenoiser",
    "LinearDenoiser",
    "guided_noise",
]


@dataclass(frozen=True)
class Unconditional:
    """Absence of a prompt: the predictor sees the full data distribution."""


UNCONDITIONAL = Unconditional()


@dataclass(frozen=True)
class ComponentPrompt:
    """Discrete prompt selecting a single mixture component by index."""

    component: int

    def __post_init__(self) -> None:
        if self.component < 0:
            raise ValueError("component index must be non-negative")


Condition = Unconditional | ComponentPrompt


@dataclass(frozen=True)
class GuidanceConfig:
    """Classifier-free guidance strength.

    scale = 1 is the pure conditional prediction, scale = 0 the pure
    unconditional one; larger values extrapolate past the conditional.
    """

    scale: float = 1.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.scale) or self.scale < 0.0:
            raise ValueError(f"guidance scale must be finite and >= 0, got {self.scale!r}")


@dataclass(frozen=True, eq=False)
class GaussianMixtureModel:
    """Diagonal-covariance Gaussian mixture specifying the data distribution.

    weights: (K,), positive, summing to 1 within 1e-12.
    means: (K, d).
    variances: (K, d), strictly positive (diagonal covariances).
    """

    dimension: int
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GaussianMixtureModel):
            return NotImplemented
        return (
            self.dimension == other.dimension
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.means, other.means)
            and np.array_equal(self.variances, other.variances)
        )

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=float)
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        variances = np.atleast_2d(np.asarray(self.variances, dtype=float))
        k = weights.shape[0]
        if weights.ndim != 1 or k < 1:
            raise ValueError("weights must be a non-empty 1-D array")
        if means.shape != (k, self.dimension):
            raise ValueError(f"means must have shape ({k}, {self.dimension})")
        if variances.shape == (k, 1):
            variances = np.broadcast_to(variances, (k, self.dimension)).copy()
        if variances.shape != (k, self.dimension):
            raise ValueError(f"variances must have shape ({k}, {self.dimension})")
        if not np.all(weights > 0.0):
            raise ValueError("all mixture weights must be positive")
        if abs(float(weights.sum()) - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1 within 1e-12")
        if not np.all(variances > 0.0):
            raise ValueError("all variances must be positive")
        if not (np.all(np.isfinite(means)) and np.all(np.isfinite(variances))):
            raise ValueError("means and variances must be finite")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        for arr in (weights, means, variances):
            arr.setflags(write=False)

    @property
    def num_components(self) -> int:
        return len(self.weights)

    @classmethod
    def from_dict(cls, spec: dict) -> "GaussianMixtureModel":
        """Build from ``{"dimension": d, "components": [{weight, mean, variance}]}``.

        ``variance`` may be a scalar (isotropic component) or a length-d list.
        """
        d = int(spec["dimension"])
        comps = spec["components"]
        weights = np.array([float(c["weight"]) for c in comps])
        means = np.array([np.broadcast_to(np.asarray(c["mean"], dtype=float), (d,)) for c in comps])
        variances = np.array(
            [np.broadcast_to(np.asarray(c["variance"], dtype=float), (d,)) for c in comps]
        )
        return cls(dimension=d, weights=weights, means=means, variances=variances)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "components": [
                {
                    "weight": float(w),
                    "mean": [float(x) for x in m],
                    "variance": [float(v) for v in s2],
                }
                for w, m, s2 in zip(self.weights, self.means, self.variances)
            ],
        }


class DenoiserModel(ABC):
    """A conditional noise predictor bound to a noise schedule.

    Implementations must be pure functions of their inputs so that
    sampling and inversion stay deterministic and safe to parallelize.
    """

    def __init__(self, schedule: NoiseSchedule, dimension: int):
        self._schedule = schedule
        self._dimension = int(dimension)

    @property
    def schedule(self) -> NoiseSchedule:
        return self._schedule

    @property
    def dimension(self) -> int:
        return self._dimension

    def _check_inputs(self, z: np.ndarray, t: int) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape != (self._dimension,):
            raise ValueError(f"latent must have shape ({self._dimension},), got {z.shape}")
        if not 1 <= t <= self._schedule.total_steps:
            raise ValueError(f"timestep {t} outside 1..{self._schedule.total_steps}")
        return z

    @abstractmethod
    def predict_noise(self, z: np.ndarray, t: int, cond: Condition) -> np.ndarray:
        """Predicted noise for latent z at timestep t under the condition."""


class GaussianMixtureDenoiser(DenoiserModel):
    """Exact conditional-expectation noise predictor for a Gaussian mixture.

    At timestep t the marginal of z_t restricted to component k is
    N(sqrt(ab)*mu_k, ab*var_k + (1 - ab)) with ab = alpha_bar(t). The
    predicted noise is (z - sqrt(ab) * E[z_0 | z, cond]) / sqrt(1 - ab),
    where the posterior mixes components by their responsibilities
    (computed in log space; alpha_bar near 1 makes the raw component
    likelihoods span hundreds of orders of magnitude).
    """

    def __init__(self, mixture: GaussianMixtureModel, schedule: NoiseSchedule):
        super().__init__(schedule, mixture.dimension)
        self.mixture = mixture

    def _restricted(self, cond: Condition) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        mix = self.mixture
        if isinstance(cond, ComponentPrompt):
            k = cond.component
            if k >= mix.num_components:
                raise ValueError(
                    f"component index {k} out of range for {mix.num_components} components"
                )
            sel = slice(k, k + 1)
            return np.ones(1), mix.means[sel], mix.variances[sel]
        if isinstance(cond, Unconditional):
            return mix.weights, mix.means, mix.variances
        raise TypeError(f"unsupported condition {cond!r}")

    @staticmethod
    def _log_responsibilities(
        z: np.ndarray, weights: np.ndarray, m: np.ndarray, s2: np.ndarray
    ) -> np.ndarray:
        log_r = np.log(weights) - 0.5 * np.sum(
            np.log(2.0 * np.pi * s2) + (z - m) ** 2 / s2, axis=1
        )
        shift = np.max(log_r)
        return log_r - (shift + np.log(np.sum(np.exp(log_r - shift))))

    def predict_noise(self, z: np.ndarray, t: int, cond: Condition) -> np.ndarray:
        z = self._check_inputs(z, t)
        weights, mu, var = self._restricted(cond)
        ab = self._schedule.alpha_bar(t)
        a = math.sqrt(ab)
        b2 = 1.0 - ab
        m = a * mu
        s2 = ab * var + b2
        r = np.exp(self._log_responsibilities(z, weights, m, s2))
        posterior_means = mu + (a * var / s2) * (z - m)
        e_z0 = r @ posterior_means
        return (z - a * e_z0) / math.sqrt(b2)

    def log_marginal_density(self, z: np.ndarray, t: int, cond: Condition) -> float:
        """Exact log density of z under the time-t marginal of the mixture.

        t = 0 is allowed and gives the data-distribution density itself.
        """
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dimension,):
            raise ValueError(f"latent must have shape ({self.dimension},), got {z.shape}")
        if not 0 <= t <= self._schedule.total_steps:
            raise ValueError(f"timestep {t} outside 0..{self._schedule.total_steps}")
        weights, mu, var = self._restricted(cond)
        ab = self._schedule.alpha_bar(t)
        m = math.sqrt(ab) * mu
        s2 = ab * var + (1.0 - ab)
        log_comp = np.log(weights) - 0.5 * np.sum(
            np.log(2.0 * np.pi * s2) + (z - m) ** 2 / s2, axis=1
        )
        shift = np.max(log_comp)
        return float(shift + np.log(np.sum(np.exp(log_comp - shift))))


class ZeroDenoiser(DenoiserModel):
    """Stub predicting zero noise; isolates the linear part of each step."""

    def predict_noise(self, z: np.ndarray, t: int, cond: Condition) -> np.ndarray:
        z = self._check_inputs(z, t)
        return np.zeros_like(z)


class ConstantDenoiser(DenoiserModel):
    """Stub predicting a fixed vector regardless of latent or condition."""

    def __init__(self, schedule: NoiseSchedule, value: np.ndarray):
        value = np.asarray(value, dtype=float)
        super().__init__(schedule, value.shape[0])
        self.value = value

    def predict_noise(self, z: np.ndarray, t: int, cond: Condition) -> np.ndarray:
        self._check_inputs(z, t)
        return self.value.copy()


class LinearDenoiser(DenoiserModel):
    """Stub predicting slope * z; makes every solver map exactly affine."""

    def __init__(self, schedule: NoiseSchedule, dimension: int, slope: float):
        super().__init__(schedule, dimension)
        self.slope = float(slope)

    def predict_noise(self, z: np.ndarray, t: int, cond: Condition) -> np.ndarray:
        z = self._check_inputs(z, t)
        return self.slope * z


def guided_noise(
    model: DenoiserModel,
    z: np.ndarray,
    t: int,
    prompt: Condition,
    guidance: GuidanceConfig,
) -> np.ndarray:
    """Classifier-free guided prediction eps_u + scale * (eps_c - eps_u).

    The prompt must be a ComponentPrompt; scale 1 returns the conditional
    prediction exactly and scale 0 the unconditional one.
    """
    if not isinstance(prompt, ComponentPrompt):
        raise TypeError("guided_noise requires a ComponentPrompt prompt")
    w = guidance.scale
    if w == 1.0:
        return model.predict_noise(z, t, prompt)
    if w == 0.0:
        return model.predict_noise(z, t, UNCONDITIONAL)
    eps_c = model.predict_noise(z, t, prompt)
    eps_u = model.predict_noise(z, t, UNCONDITIONAL)
    return eps_u + w * (eps_c - eps_u)
