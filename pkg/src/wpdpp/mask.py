"""Complex ideal ratio masks and desired-signal power estimates."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from .stft import Spectrogram

logger = logging.getLogger(__name__)

CIRM_FLOOR = 1e-8
SIGMA_FLOOR = 1e-6


class MaskRole(str, enum.Enum):
    SPEECH = "speech"
    NOISE = "noise"
    SIGMA = "sigma"


@dataclass
class ComplexMask:
    values: np.ndarray  # complex (F, T)
    role: MaskRole = MaskRole.SPEECH

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        self.role = MaskRole(self.role)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("mask contains NaN or Inf")


@dataclass
class SigmaPower:
    values: np.ndarray  # real (F, T), floored
    floor: float
    degenerate: bool = False  # input had no energy at all


def _bins(x) -> np.ndarray:
    if isinstance(x, Spectrogram):
        x = x.bins
    return np.asarray(x, dtype=np.complex128)


def _single(x) -> np.ndarray:
    b = _bins(x)
    if b.ndim == 3:
        if b.shape[0] != 1:
            raise ValueError(f"expected a single-channel spectrogram, got {b.shape[0]} channels")
        b = b[0]
    return b


def oracle_cirm(target, mixture, role=MaskRole.SPEECH, eps: float | None = None) -> ComplexMask:
    """Uncompressed complex ratio mask ``target / mixture`` with a floored denominator.

    ``eps`` defaults to ``1e-8 * mean(|mixture|^2)``; pass ``0.0`` for exact
    division on synthetic data.
    """
    s = _bins(target)
    y = _bins(mixture)
    if s.shape != y.shape:
        raise ValueError(f"shape mismatch: target {s.shape} vs mixture {y.shape}")
    if s.ndim == 3 and s.shape[0] == 1:
        s, y = s[0], y[0]
    power = y.real ** 2 + y.imag ** 2
    if eps is None:
        eps = CIRM_FLOOR * float(np.mean(power))
    den = power + eps
    # exact zeros (silence) map to a zero mask rather than 0/0
    den = np.where(den > 0, den, 1.0)
    real = (y.real * s.real + y.imag * s.imag) / den
    imag = (y.real * s.imag - y.imag * s.real) / den
    return ComplexMask(real + 1j * imag, role)


def apply_mask(mask: ComplexMask | np.ndarray, spec):
    """Complex multiplication of an (F, T) mask with every channel of ``spec``."""
    values = mask.values if isinstance(mask, ComplexMask) else np.asarray(mask)
    y = _bins(spec)
    if values.shape != y.shape[-2:]:
        raise ValueError(f"mask shape {values.shape} does not match spectrogram {y.shape}")
    out = values * y
    if isinstance(spec, Spectrogram):
        return Spectrogram(out, spec.config, spec.length)
    return out


def _floored_power(power: np.ndarray) -> SigmaPower:
    mean = float(np.mean(power))
    if mean <= 0.0:
        floor = SIGMA_FLOOR * np.finfo(np.float64).tiny
        logger.warning("desired-signal estimate has no energy; sigma^2 set to a uniform floor")
        return SigmaPower(np.full(power.shape, floor), floor, degenerate=True)
    floor = SIGMA_FLOOR * mean
    return SigmaPower(np.maximum(power, floor), floor)


def oracle_sigma(dry_clean_ref) -> SigmaPower:
    """sigma^2(t, f) = |D_q(t, f)|^2, floored at 1e-6 of its utterance mean."""
    d = _single(dry_clean_ref)
    return _floored_power(d.real ** 2 + d.imag ** 2)


def sigma_from_mask(mask_sigma: ComplexMask, mixture_ref) -> SigmaPower:
    """sigma^2 = |mask * Y_q|^2 with the same flooring as :func:`oracle_sigma`."""
    if mask_sigma.role is not MaskRole.SIGMA:
        raise ValueError(f"expected a sigma mask, got role {mask_sigma.role.value!r}")
    est = apply_mask(mask_sigma, _single(mixture_ref))
    return _floored_power(est.real ** 2 + est.imag ** 2)
