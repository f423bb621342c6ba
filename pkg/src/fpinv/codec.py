"""A toy lossy codec standing in for a prompt-agnostic autoencoder.

Decoding is a fixed full-rank linear map from latent space to a higher
dimensional pixel space; encoding is the least-squares pseudo-inverse
followed by uniform quantization. Quantization (rather than additive
noise) is the lossy mechanism: it is deterministic, reproducible, and
directionally biased, so encodings land slightly off wherever the latent
happened to be, the way a real autoencoder's reconstructions do. The
codec never sees a condition; prompt-agnosticism is enforced by the
signatures themselves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ToyCodec", "build_codec", "calibrate_quant_step"]


@dataclass(frozen=True)
class ToyCodec:
    """Linear decode map plus quantizing least-squares encoder.

    quant_step = 0 disables quantization, making encode(decode(z)) exact
    up to solver rounding.
    """

    latent_dim: int
    pixel_dim: int
    decode_matrix: np.ndarray
    encode_matrix: np.ndarray
    quant_step: float

    def __post_init__(self) -> None:
        d, m = self.latent_dim, self.pixel_dim
        if d < 1 or m < d:
            raise ValueError("need pixel_dim >= latent_dim >= 1")
        if self.decode_matrix.shape != (m, d):
            raise ValueError(f"decode_matrix must have shape ({m}, {d})")
        if self.encode_matrix.shape != (d, m):
            raise ValueError(f"encode_matrix must have shape ({d}, {m})")
        if self.quant_step < 0.0:
            raise ValueError("quant_step must be >= 0")
        singular_values = np.linalg.svd(self.decode_matrix, compute_uv=False)
        if singular_values[-1] <= 1e-10 * singular_values[0]:
            raise ValueError("decode_matrix must have full column rank")
        self.decode_matrix.setflags(write=False)
        self.encode_matrix.setflags(write=False)

    def decode(self, z: np.ndarray) -> np.ndarray:
        """Pixel vector D @ z."""
        z = np.asarray(z, dtype=float)
        if z.shape != (self.latent_dim,):
            raise ValueError(f"latent must have shape ({self.latent_dim},), got {z.shape}")
        return self.decode_matrix @ z

    def encode(self, x: np.ndarray) -> np.ndarray:
        """Least-squares latent for x, snapped to the quantization grid."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.pixel_dim,):
            raise ValueError(f"pixel vector must have shape ({self.pixel_dim},), got {x.shape}")
        z = self.encode_matrix @ x
        if self.quant_step > 0.0:
            z = np.round(z / self.quant_step) * self.quant_step
        return z

    def round_trip(self, z: np.ndarray) -> np.ndarray:
        return self.encode(self.decode(z))


def calibrate_quant_step(
    samples: np.ndarray, target_error_fraction: float
) -> float:
    """Choose a quantization step so the mean encoding error hits a target.

    Picks q such that mean ||quantize(z) - z|| over the sample latents is
    target_error_fraction times the mean latent norm, by bisection on q.
    Deterministic given the samples.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if not 0.0 < target_error_fraction < 1.0:
        raise ValueError("target_error_fraction must lie in (0, 1)")
    mean_norm = float(np.mean(np.linalg.norm(samples, axis=1)))
    if mean_norm <= 0.0:
        raise ValueError("calibration samples must have positive mean norm")
    target = target_error_fraction * mean_norm

    def mean_error(q: float) -> float:
        quantized = np.round(samples / q) * q
        return float(np.mean(np.linalg.norm(quantized - samples, axis=1)))

    d = samples.shape[1]
    # Uniform-error model: per-coordinate error ~ U(-q/2, q/2), so
    # mean error ~ q * sqrt(d / 12); bracket the root around that guess.
    q_guess = target / np.sqrt(d / 12.0)
    lo, hi = q_guess / 16.0, q_guess * 16.0
    while mean_error(hi) < target:
        hi *= 2.0
        if hi > 1e6 * q_guess:
            raise ValueError("calibration failed to bracket the target error")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if mean_error(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def build_codec(
    latent_dim: int,
    pixel_dim: int,
    rng_seed: int,
    quant_step: float | None = None,
    target_error_fraction: float | None = None,
    calibration_samples: np.ndarray | None = None,
) -> ToyCodec:
    """Construct a codec with a seeded random full-rank decode map.

    Exactly one of quant_step and target_error_fraction must be given;
    the latter requires calibration_samples (latents representative of
    what will be encoded) and derives the step from them.
    """
    if (quant_step is None) == (target_error_fraction is None):
        raise ValueError("give exactly one of quant_step or target_error_fraction")
    rng = np.random.default_rng(rng_seed)
    decode_matrix = rng.standard_normal((pixel_dim, latent_dim))
    encode_matrix = np.linalg.pinv(decode_matrix)
    if quant_step is None:
        if calibration_samples is None:
            raise ValueError("target_error_fraction requires calibration_samples")
        quant_step = calibrate_quant_step(calibration_samples, target_error_fraction)
    return ToyCodec(
        latent_dim=latent_dim,
        pixel_dim=pixel_dim,
        decode_matrix=decode_matrix,
        encode_matrix=encode_matrix,
        quant_step=float(quant_step),
    )
