"""Forward-noising schedule math and the denoising training objective.

Pure numpy; the denoiser itself stays behind a callable so the training-step
contract can be exercised without any learned model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidRangeError, ShapeMismatchError, TimestepOutOfRangeError


@dataclass(frozen=True)
class NoiseSchedule:
    """Accumulated signal-retention table.

    bar_alpha has total_steps + 1 entries; entry 0 is exactly 1 (no noise)
    and entries decrease strictly toward 0.
    """

    total_steps: int
    bar_alpha: np.ndarray


@dataclass(frozen=True)
class EditConditioning:
    """Image and text conditioning tensors handed to a denoiser.

    The encoders producing them live behind the edit backend; here they are
    opaque finite arrays of fixed per-configuration shape.
    """

    c_image: np.ndarray
    c_text: np.ndarray

    def validate(self) -> None:
        if not np.all(np.isfinite(self.c_image)) or not np.all(np.isfinite(self.c_text)):
            raise InvalidRangeError("conditioning tensors must be finite")


def make_linear_schedule(
    total_steps: int, beta_start: float = 1e-4, beta_end: float = 2e-2
) -> NoiseSchedule:
    """Schedule from per-step variances increasing linearly over the run."""
    if total_steps < 1:
        raise InvalidRangeError(f"total_steps must be >= 1, got {total_steps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise InvalidRangeError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    betas = np.linspace(beta_start, beta_end, total_steps)
    bar_alpha = np.concatenate(([1.0], np.cumprod(1.0 - betas)))
    return NoiseSchedule(total_steps=total_steps, bar_alpha=bar_alpha)


def validate_schedule(sched: NoiseSchedule) -> None:
    ba = np.asarray(sched.bar_alpha)
    if ba.shape != (sched.total_steps + 1,):
        raise InvalidRangeError("bar_alpha length must be total_steps + 1")
    if ba[0] != 1.0:
        raise InvalidRangeError("bar_alpha[0] must be exactly 1")
    if np.any(ba <= 0.0) or np.any(ba > 1.0):
        raise InvalidRangeError("bar_alpha entries must lie in (0, 1]")
    if np.any(np.diff(ba) >= 0.0):
        raise InvalidRangeError("bar_alpha must be strictly decreasing")


def forward_noise(
    z: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule
) -> np.ndarray:
    """Noise a clean latent to step t: sqrt(a)*z + sqrt(1-a)*eps with a = bar_alpha[t]."""
    z = np.asarray(z, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if z.shape != eps.shape:
        raise ShapeMismatchError(f"latent {z.shape} vs noise {eps.shape}")
    if not (0 <= t <= sched.total_steps):
        raise TimestepOutOfRangeError(f"t={t} outside [0, {sched.total_steps}]")
    a = float(sched.bar_alpha[t])
    return np.sqrt(a) * z + np.sqrt(1.0 - a) * eps


def denoising_loss(eps: np.ndarray, eps_pred: np.ndarray) -> float:
    """Mean squared error between true and predicted noise.

    The squared norm is divided by the element count so the magnitude does
    not depend on tensor shape.
    """
    eps = np.asarray(eps, dtype=float)
    eps_pred = np.asarray(eps_pred, dtype=float)
    if eps.shape != eps_pred.shape:
        raise ShapeMismatchError(f"noise {eps.shape} vs prediction {eps_pred.shape}")
    diff = eps - eps_pred
    return float(np.mean(diff * diff))


def training_step_loss(z, t, eps, sched, denoiser, conditioning=None) -> float:
    """One training-step evaluation with a pluggable denoiser.

    denoiser(z_t, t, conditioning) must return a tensor of z's shape.
    """
    z_t = forward_noise(z, t, eps, sched)
    eps_pred = denoiser(z_t, t, conditioning)
    return denoising_loss(eps, eps_pred)
