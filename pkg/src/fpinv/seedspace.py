"""Seed-space geometry: norm-aware spherical interpolation and centroids.

Seeds of a diffusion model live in the high-probability shell of a
Gaussian, so paths and centroids interpolate directions on the sphere and
norms linearly instead of averaging raw coordinates (the raw mean of
Gaussian seeds collapses toward the origin, where the denoiser is never
exercised).
"""

from __future__ import annotations

import math
import warnings

import numpy as np

__all__ = ["slerp", "centroid"]

_ANTIPODAL_TOLERANCE = 1e-6


def slerp(a: np.ndarray, b: np.ndarray, u: float) -> np.ndarray:
    """Spherical interpolation of directions with linear interpolation of norms.

    u = 0 returns a, u = 1 returns b, and every intermediate point has
    norm (1 - u) * ||a|| + u * ||b||. Near-antipodal inputs (angle within
    1e-6 of pi) have no well-defined great circle; those fall back to
    linear interpolation with a warning.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("endpoints must share a dimension")
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"u must lie in [0, 1], got {u!r}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("slerp endpoints must be nonzero")
    if u == 0.0:
        return a.copy()
    if u == 1.0:
        return b.copy()
    unit_a = a / norm_a
    unit_b = b / norm_b
    cosine = float(np.clip(np.dot(unit_a, unit_b), -1.0, 1.0))
    angle = math.acos(cosine)
    target_norm = (1.0 - u) * norm_a + u * norm_b
    if angle > math.pi - _ANTIPODAL_TOLERANCE:
        warnings.warn(
            "slerp endpoints are nearly antipodal; falling back to linear interpolation",
            RuntimeWarning,
            stacklevel=2,
        )
        return (1.0 - u) * a + u * b
    if angle < 1e-12:
        direction = unit_a
    else:
        direction = (
            math.sin((1.0 - u) * angle) * unit_a + math.sin(u * angle) * unit_b
        ) / math.sin(angle)
        direction = direction / float(np.linalg.norm(direction))
    return target_norm * direction


def centroid(seeds: list[np.ndarray] | np.ndarray) -> np.ndarray:
    """Arithmetic mean of the seeds rescaled to their mean norm.

    Keeps the centroid inside the seed shell instead of letting it decay
    toward the origin. Independent of seed ordering. Raises if the mean
    direction degenerates (antipodal cancellation).
    """
    arr = np.atleast_2d(np.asarray(seeds, dtype=float))
    if arr.shape[0] < 1:
        raise ValueError("centroid needs at least one seed")
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("seeds must be nonzero")
    mean = arr.mean(axis=0)
    mean_norm = float(np.linalg.norm(mean))
    target_norm = float(norms.mean())
    if mean_norm < 1e-9 * target_norm:
        raise ValueError("degenerate centroid: seed directions cancel out")
    return (target_norm / mean_norm) * mean
