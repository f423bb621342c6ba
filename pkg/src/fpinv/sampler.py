"""Deterministic DDIM generation from a seed latent down to a clean latent."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fpinv.denoiser import Condition, DenoiserModel, GuidanceConfig, guided_noise
from fpinv.schedule import delta_psi

__all__ = ["Trajectory", "ddim_step", "generate"]


@dataclass(frozen=True)
class Trajectory:
    """Ordered (timestep, latent) pairs from the seed z_T down to z_0."""

    entries: tuple[tuple[int, np.ndarray], ...]

    def __post_init__(self) -> None:
        ts = [t for t, _ in self.entries]
        if len(ts) < 2 or any(b >= a for a, b in zip(ts, ts[1:])):
            raise ValueError("trajectory timesteps must be strictly decreasing")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def timesteps(self) -> tuple[int, ...]:
        return tuple(t for t, _ in self.entries)

    @property
    def initial(self) -> np.ndarray:
        """The seed latent z_T."""
        return self.entries[0][1]

    @property
    def final(self) -> np.ndarray:
        """The clean latent z_0."""
        return self.entries[-1][1]


def ddim_step(
    model: DenoiserModel,
    z_t: np.ndarray,
    t: int,
    t_prev: int,
    cond: Condition,
    guidance: GuidanceConfig,
) -> np.ndarray:
    """One deterministic denoising update from timestep t down to t_prev.

    Returns sqrt(ab_prev / ab_t) * z_t - sqrt(ab_prev) * dpsi * eps_hat,
    where dpsi = psi(ab_t) - psi(ab_prev) and eps_hat is the guided
    prediction at (z_t, t). t_prev may be 0, meaning alpha_bar = 1.
    """
    schedule = model.schedule
    dpsi = delta_psi(schedule, t, t_prev)
    ab_t = schedule.alpha_bar(t)
    ab_prev = schedule.alpha_bar(t_prev)
    eps = guided_noise(model, z_t, t, cond, guidance)
    return math.sqrt(ab_prev / ab_t) * z_t - math.sqrt(ab_prev) * dpsi * eps


def generate(
    model: DenoiserModel,
    seed: np.ndarray,
    cond: Condition,
    guidance: GuidanceConfig,
) -> Trajectory:
    """Run the full denoising pass from a seed, recording every latent.

    Applies ddim_step across the descending timestep grid; the returned
    trajectory has num_sampling_steps + 1 entries ending at (0, z_0).
    Pure function: identical inputs give bit-identical trajectories.
    """
    seed = np.asarray(seed, dtype=float)
    if seed.shape != (model.dimension,):
        raise ValueError(f"seed must have shape ({model.dimension},), got {seed.shape}")
    if not np.all(np.isfinite(seed)):
        raise ValueError("seed must be finite")
    z = seed
    entries = [(model.schedule.timesteps[-1], seed)]
    for t, t_prev in model.schedule.generation_pairs():
        z = ddim_step(model, z, t, t_prev, cond, guidance)
        entries.append((t_prev, z))
    return Trajectory(tuple(entries))
