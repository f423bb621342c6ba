"""Deterministic diffusion sampling, fixed-point latent inversion, and a
desk-scale experiment bench with analytically exact toy denoisers."""

from fpinv.codec import ToyCodec, build_codec, calibrate_quant_step
from fpinv.denoiser import (
    UNCONDITIONAL,
    ComponentPrompt,
    Condition,
    ConstantDenoiser,
    DenoiserModel,
    GaussianMixtureDenoiser,
    GaussianMixtureModel,
    GuidanceConfig,
    LinearDenoiser,
    Unconditional,
    ZeroDenoiser,
    guided_noise,
)
from fpinv.inversion import (
    AdjustmentConfig,
    FixedPointConfig,
    InversionTrace,
    StepTrace,
    ddim_invert_step,
    estimate_contraction,
    fp_invert_step,
    invert,
    inversion_coefficients,
    prompt_aware_adjust,
)
from fpinv.sampler import Trajectory, ddim_step, generate
from fpinv.schedule import NoiseSchedule, build_linear_schedule, delta_psi, psi
from fpinv.seedspace import centroid, slerp

__all__ = [
    "NoiseSchedule",
    "build_linear_schedule",
    "psi",
    "delta_psi",
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
    "Trajectory",
    "ddim_step",
    "generate",
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
    "ToyCodec",
    "build_codec",
    "calibrate_quant_step",
    "slerp",
    "centroid",
]

__version__ = "0.1.0"
