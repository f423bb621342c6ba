"""Latent inversion: one-shot approximation, fixed-point solver, and diagnostics.

Inverting one denoising step means solving the implicit equation

    z_t = c_lin * z_prev + c_noise * eps_hat(z_t, t)

for z_t given z_prev. The one-shot approximation evaluates the predictor
at z_prev instead; the fixed-point solver iterates the right-hand side to
convergence, tracking the residual ||z - f(z)|| at every iterate. With
the coefficients used here the solved z_t is the exact preimage of the
denoising update: feeding it back through ddim_step reproduces z_prev up
to the final residual. A short prompt-aware adjustment (a few noising
steps followed by the same number of denoising steps under the prompt)
pulls an externally encoded latent onto the prompt-consistent region
before inversion. An empirical Lipschitz probe estimates whether the
per-step map is contractive, which gates the convergence guarantees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fpinv.denoiser import (
    Condition,
    DenoiserModel,
    GuidanceConfig,
    guided_noise,
)
from fpinv.sampler import ddim_step
from fpinv.schedule import NoiseSchedule, delta_psi

__all__ = [
    "FixedPointConfig",
    "AdjustmentConfig",
    "StepTrace",
    "InversionTrace",
    "ddim_invert_step",
    "fp_invert_step",
    "invert",
    "prompt_aware_adjust",
    "estimate_contraction",
    "inversion_coefficients",
]


@dataclass(frozen=True)
class FixedPointConfig:
    """Solver controls for one inversion step.

    max_iterations bounds the number of predictor evaluations per step;
    the solver also stops early once the residual drops below
    residual_tolerance. Non-convergence is reported, never raised: an
    inversion always returns a seed.
    """

    max_iterations: int = 5
    residual_tolerance: float = 1e-6
    track_trace: bool = False

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not math.isfinite(self.residual_tolerance) or self.residual_tolerance < 0.0:
            raise ValueError("residual_tolerance must be finite and >= 0")


@dataclass(frozen=True)
class AdjustmentConfig:
    """Controls for the prompt-aware adjustment of an encoded latent.

    Each cycle applies steps_per_cycle one-shot noising steps followed by
    steps_per_cycle denoising steps under the prompt. latent_drift_cap, if
    set, bounds how far the output may move from the input; the result is
    clipped along the segment between them. guidance_scale overrides the
    guidance used inside the cycles (None means: same as the inversion).
    """

    num_cycles: int = 1
    steps_per_cycle: int = 2
    latent_drift_cap: float | None = None
    guidance_scale: float | None = None

    def __post_init__(self) -> None:
        if self.num_cycles < 1:
            raise ValueError("num_cycles must be >= 1")
        if self.steps_per_cycle < 1:
            raise ValueError("steps_per_cycle must be >= 1")
        if self.latent_drift_cap is not None and self.latent_drift_cap <= 0.0:
            raise ValueError("latent_drift_cap must be positive when set")
        if self.guidance_scale is not None and (
            not math.isfinite(self.guidance_scale) or self.guidance_scale < 0.0
        ):
            raise ValueError("guidance_scale override must be finite and >= 0")


@dataclass(frozen=True)
class StepTrace:
    """Residual history of the fixed-point solver at one timestep."""

    timestep: int
    residuals: tuple[float, ...]
    converged: bool
    iterates: tuple[np.ndarray, ...] | None = None


@dataclass
class InversionTrace:
    """Per-timestep solver diagnostics for a full inversion."""

    steps: list[StepTrace]

    @property
    def all_converged(self) -> bool:
        return all(s.converged for s in self.steps)

    @property
    def non_converged_timesteps(self) -> tuple[int, ...]:
        return tuple(s.timestep for s in self.steps if not s.converged)

    @property
    def total_evaluations(self) -> int:
        """Total predictor evaluations, one per recorded residual."""
        return sum(len(s.residuals) for s in self.steps)

    def to_json_dict(self) -> list[dict]:
        return [
            {
                "timestep": s.timestep,
                "residuals": list(s.residuals),
                "converged": s.converged,
            }
            for s in self.steps
        ]


def inversion_coefficients(
    schedule: NoiseSchedule, t: int, t_prev: int
) -> tuple[float, float]:
    """(c_lin, c_noise) of the per-step inversion map f.

    c_noise is sqrt(ab_t) * dpsi, which makes f the exact algebraic
    inverse of the denoising update: its fixed point z* satisfies
    ddim_step(z*, t, t_prev) == z_prev to rounding. (Equivalently, at
    t_prev = 0 the map reduces to the forward noising identity
    sqrt(ab_t) * z_0 + sqrt(1 - ab_t) * eps_hat.)
    """
    dpsi = delta_psi(schedule, t, t_prev)
    ab_t = schedule.alpha_bar(t)
    ab_prev = schedule.alpha_bar(t_prev)
    return math.sqrt(ab_t / ab_prev), math.sqrt(ab_t) * dpsi


def ddim_invert_step(
    model: DenoiserModel,
    z_prev: np.ndarray,
    t: int,
    t_prev: int,
    cond: Condition,
    guidance: GuidanceConfig,
) -> np.ndarray:
    """One-shot inversion step: the implicit right-hand side at z_prev.

    Equivalent to the fixed-point solver with max_iterations = 1.
    """
    c_lin, c_noise = inversion_coefficients(model.schedule, t, t_prev)
    eps = guided_noise(model, z_prev, t, cond, guidance)
    return c_lin * z_prev + c_noise * eps


def _fp_invert_step_full(
    model: DenoiserModel,
    z_prev: np.ndarray,
    t: int,
    t_prev: int,
    cond: Condition,
    guidance: GuidanceConfig,
    cfg: FixedPointConfig,
) -> tuple[np.ndarray, list[float], list[np.ndarray]]:
    c_lin, c_noise = inversion_coefficients(model.schedule, t, t_prev)
    base = c_lin * z_prev
    z = z_prev
    residuals: list[float] = []
    iterates: list[np.ndarray] = [z_prev] if cfg.track_trace else []
    for _ in range(cfg.max_iterations):
        fz = base + c_noise * guided_noise(model, z, t, cond, guidance)
        residuals.append(float(np.linalg.norm(z - fz)))
        z = fz
        if cfg.track_trace:
            iterates.append(z)
        if residuals[-1] < cfg.residual_tolerance:
            break
    return z, residuals, iterates


def fp_invert_step(
    model: DenoiserModel,
    z_prev: np.ndarray,
    t: int,
    t_prev: int,
    cond: Condition,
    guidance: GuidanceConfig,
    cfg: FixedPointConfig,
) -> tuple[np.ndarray, list[float]]:
    """Solve one inversion step by fixed-point iteration.

    Starts from z_prev, iterates z <- f(z), and records the residual
    ||z - f(z)|| once per predictor evaluation (so the evaluation count is
    exactly len(residuals)). Stops at residual_tolerance or
    max_iterations, whichever comes first, and returns the last computed
    f(z): with max_iterations = 1 the output is identical to
    ddim_invert_step. A final residual above tolerance signals
    non-convergence but is not an error.
    """
    z, residuals, _ = _fp_invert_step_full(model, z_prev, t, t_prev, cond, guidance, cfg)
    return z, residuals


def invert(
    model: DenoiserModel,
    z0: np.ndarray,
    cond: Condition,
    guidance: GuidanceConfig,
    cfg: FixedPointConfig,
) -> tuple[np.ndarray, InversionTrace]:
    """Invert a clean latent to its seed across the ascending timestep grid.

    The output is the single seed latent plus a trace flagging any
    timestep whose final residual stayed above tolerance.
    """
    z = np.asarray(z0, dtype=float)
    if z.shape != (model.dimension,):
        raise ValueError(f"latent must have shape ({model.dimension},), got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("latent must be finite")
    steps: list[StepTrace] = []
    for t, t_prev in model.schedule.inversion_pairs():
        z, residuals, iterates = _fp_invert_step_full(
            model, z, t, t_prev, cond, guidance, cfg
        )
        steps.append(
            StepTrace(
                timestep=t,
                residuals=tuple(residuals),
                converged=residuals[-1] <= cfg.residual_tolerance,
                iterates=tuple(iterates) if cfg.track_trace else None,
            )
        )
    return z, InversionTrace(steps)


def prompt_aware_adjust(
    model: DenoiserModel,
    z0_encoded: np.ndarray,
    cond: Condition,
    guidance: GuidanceConfig,
    adj: AdjustmentConfig,
) -> np.ndarray:
    """Short backward-forward cycles that make an encoding prompt-consistent.

    Each cycle runs steps_per_cycle one-shot noising steps up the grid and
    then the same number of denoising steps back down, all under the
    prompt that will later drive the inversion. If latent_drift_cap is set
    and exceeded, the output is pulled back onto the segment toward the
    input so that the drift equals the cap.
    """
    schedule = model.schedule
    if adj.steps_per_cycle > schedule.num_sampling_steps:
        raise ValueError("steps_per_cycle cannot exceed the number of sampling steps")
    g = guidance if adj.guidance_scale is None else GuidanceConfig(adj.guidance_scale)
    pairs = schedule.inversion_pairs()[: adj.steps_per_cycle]
    z = np.asarray(z0_encoded, dtype=float)
    if z.shape != (model.dimension,):
        raise ValueError(f"latent must have shape ({model.dimension},), got {z.shape}")
    for _ in range(adj.num_cycles):
        for t, t_prev in pairs:
            z = ddim_invert_step(model, z, t, t_prev, cond, g)
        for t, t_prev in reversed(pairs):
            z = ddim_step(model, z, t, t_prev, cond, g)
    if adj.latent_drift_cap is not None:
        drift = z - z0_encoded
        norm = float(np.linalg.norm(drift))
        if norm > adj.latent_drift_cap:
            z = z0_encoded + (adj.latent_drift_cap / norm) * drift
    return z


def estimate_contraction(
    model: DenoiserModel,
    z_prev: np.ndarray,
    t: int,
    t_prev: int,
    cond: Condition,
    guidance: GuidanceConfig,
    probe_radius: float,
    num_probes: int,
    rng: np.random.Generator | None = None,
) -> float:
    """Empirical Lipschitz estimate of the per-step inversion map f.

    Samples num_probes points within probe_radius of z_prev, evaluates f
    at each, and returns the largest ratio ||f(x) - f(y)|| / ||x - y||
    over all probe pairs. Values below 1 indicate the fixed-point
    iteration contracts on the probed neighbourhood. Degenerate probe
    pairs (coincident points) are resampled.
    """
    if probe_radius <= 0.0:
        raise ValueError("probe_radius must be positive")
    if num_probes < 2:
        raise ValueError("num_probes must be >= 2")
    if rng is None:
        rng = np.random.default_rng(0)
    c_lin, c_noise = inversion_coefficients(model.schedule, t, t_prev)
    base = c_lin * np.asarray(z_prev, dtype=float)

    def sample_probe() -> np.ndarray:
        direction = rng.standard_normal(model.dimension)
        norm = float(np.linalg.norm(direction))
        while norm < 1e-12:
            direction = rng.standard_normal(model.dimension)
            norm = float(np.linalg.norm(direction))
        radius = probe_radius * rng.uniform() ** (1.0 / model.dimension)
        return z_prev + (radius / norm) * direction

    probes = [sample_probe() for _ in range(num_probes)]
    values = [base + c_noise * guided_noise(model, x, t, cond, guidance) for x in probes]
    rho = 0.0
    for i in range(num_probes):
        for j in range(i + 1, num_probes):
            gap = float(np.linalg.norm(probes[i] - probes[j]))
            while gap < 1e-15:
                probes[j] = sample_probe()
                values[j] = base + c_noise * guided_noise(
                    model, probes[j], t, cond, guidance
                )
                gap = float(np.linalg.norm(probes[i] - probes[j]))
            rho = max(rho, float(np.linalg.norm(values[i] - values[j])) / gap)
    return rho
