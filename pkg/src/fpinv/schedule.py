"""Noise schedules for deterministic diffusion sampling and inversion.

A schedule owns the per-step noise rates beta_t, the cumulative
signal-retention products alpha_bar_t = prod(1 - beta_i), and the strided
subsequence of timesteps that sampling and inversion actually visit.
Timestep 0 is the clean-data boundary and has alpha_bar 0 defined as 1, so
the final denoising step and the first inversion step are well defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["NoiseSchedule", "build_linear_schedule", "psi", "delta_psi"]


def psi(alpha_bar: float) -> float:
    """Noise-to-signal ratio sqrt(1/alpha_bar - 1).

    Strictly decreasing in alpha_bar, with psi(1) = 0.
    """
    if not 0.0 < alpha_bar <= 1.0:
        raise ValueError(f"alpha_bar must lie in (0, 1], got {alpha_bar!r}")
    return math.sqrt(1.0 / alpha_bar - 1.0)


@dataclass(frozen=True)
class NoiseSchedule:
    """Immutable beta/alpha-bar tables plus the sampled timestep grid.

    ``betas[i]`` is the noise rate at timestep ``i + 1`` and
    ``alpha_bars[i]`` the cumulative product of ``1 - beta`` through that
    timestep. ``timesteps`` is the strictly increasing subsequence of
    ``1..total_steps`` visited by the sampler; generation walks it in
    descending order, inversion in ascending order.
    """

    total_steps: int
    betas: np.ndarray
    alpha_bars: np.ndarray
    timesteps: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.total_steps < 1:
            raise ValueError("total_steps must be a positive integer")
        betas = np.asarray(self.betas, dtype=float)
        alpha_bars = np.asarray(self.alpha_bars, dtype=float)
        if betas.shape != (self.total_steps,):
            raise ValueError("betas must have one entry per diffusion timestep")
        if alpha_bars.shape != (self.total_steps,):
            raise ValueError("alpha_bars must have one entry per diffusion timestep")
        if not np.all((betas > 0.0) & (betas < 1.0)):
            raise ValueError("every beta must lie in (0, 1)")
        if not np.all((alpha_bars > 0.0) & (alpha_bars <= 1.0)):
            raise ValueError("every alpha_bar must lie in (0, 1]")
        if not np.all(np.diff(alpha_bars) < 0.0) or alpha_bars[0] >= 1.0:
            raise ValueError("alpha_bar must be strictly decreasing from below 1")
        recomputed = np.cumprod(1.0 - betas)
        if not np.allclose(alpha_bars, recomputed, rtol=1e-9, atol=0.0):
            raise ValueError("alpha_bars are inconsistent with betas")
        ts = tuple(int(t) for t in self.timesteps)
        if len(ts) == 0:
            raise ValueError("timesteps must be non-empty")
        if any(t2 <= t1 for t1, t2 in zip(ts, ts[1:])):
            raise ValueError("timesteps must be strictly increasing (no duplicates)")
        if ts[0] < 1 or ts[-1] > self.total_steps:
            raise ValueError("timesteps must lie within 1..total_steps")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bars", alpha_bars)
        object.__setattr__(self, "timesteps", ts)
        betas.setflags(write=False)
        alpha_bars.setflags(write=False)

    @property
    def num_sampling_steps(self) -> int:
        return len(self.timesteps)

    def alpha_bar(self, t: int) -> float:
        """alpha_bar at timestep t, with the t = 0 boundary equal to 1."""
        if t == 0:
            return 1.0
        if not 1 <= t <= self.total_steps:
            raise ValueError(f"timestep {t} outside 0..{self.total_steps}")
        return float(self.alpha_bars[t - 1])

    def previous_timestep(self, t: int) -> int:
        """The sampled timestep immediately before t (0 for the first one)."""
        try:
            idx = self.timesteps.index(t)
        except ValueError:
            raise ValueError(f"{t} is not a sampled timestep") from None
        return self.timesteps[idx - 1] if idx > 0 else 0

    def check_adjacent(self, t: int, t_prev: int) -> None:
        """Reject (t, t_prev) unless they are consecutive sampled timesteps."""
        if self.previous_timestep(t) != t_prev:
            raise ValueError(
                f"({t_prev}, {t}) are not adjacent sampled timesteps"
            )

    def generation_pairs(self) -> list[tuple[int, int]]:
        """(t, t_prev) pairs in descending order, ending at t_prev = 0."""
        ts = (0,) + self.timesteps
        return [(ts[i], ts[i - 1]) for i in range(len(ts) - 1, 0, -1)]

    def inversion_pairs(self) -> list[tuple[int, int]]:
        """(t, t_prev) pairs in ascending order, starting from t_prev = 0."""
        ts = (0,) + self.timesteps
        return [(ts[i], ts[i - 1]) for i in range(1, len(ts))]


def delta_psi(schedule: NoiseSchedule, t: int, t_prev: int) -> float:
    """psi(alpha_bar_t) - psi(alpha_bar_t_prev) for adjacent sampled timesteps.

    Positive for every valid pair because alpha_bar strictly decreases.
    """
    schedule.check_adjacent(t, t_prev)
    return psi(schedule.alpha_bar(t)) - psi(schedule.alpha_bar(t_prev))


def build_linear_schedule(
    total_steps: int,
    beta_start: float,
    beta_end: float,
    num_sampling_steps: int,
) -> NoiseSchedule:
    """Build a linear-beta schedule with an evenly strided timestep grid.

    Args:
        total_steps: diffusion horizon T.
        beta_start: noise rate at timestep 1; must satisfy
            0 < beta_start <= beta_end < 1.
        beta_end: noise rate at timestep T.
        num_sampling_steps: number of sampled timesteps; the grid is
            ``{round(i * T / n) for i in 1..n}``, so T itself is always the
            largest entry (stride T / n, e.g. stride 20 for T=1000, n=50).

    Returns:
        An immutable NoiseSchedule.
    """
    if total_steps < 1:
        raise ValueError("total_steps must be a positive integer")
    if num_sampling_steps < 1:
        raise ValueError("num_sampling_steps must be a positive integer")
    if num_sampling_steps > total_steps:
        raise ValueError("num_sampling_steps cannot exceed total_steps")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError(
            "betas must satisfy 0 < beta_start <= beta_end < 1, got "
            f"({beta_start!r}, {beta_end!r})"
        )
    betas = np.linspace(beta_start, beta_end, total_steps)
    alpha_bars = np.cumprod(1.0 - betas)
    # Integer stride arithmetic keeps the grid strictly increasing even when
    # total_steps is not divisible by num_sampling_steps.
    timesteps = tuple(
        (i * total_steps) // num_sampling_steps
        for i in range(1, num_sampling_steps + 1)
    )
    return NoiseSchedule(
        total_steps=total_steps,
        betas=betas,
        alpha_bars=alpha_bars,
        timesteps=timesteps,
    )
