"""Mask -> covariance -> weights -> enhanced waveform, for every beamformer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import beamform, mask as masklib, tapstack
from .mask import ComplexMask, MaskRole
from .stft import Spectrogram, StftConfig, analyze, synthesize
from .tapstack import TapSet

METHODS = ("passthrough", "mask-only", "mvdr", "mtmvdr", "wpd", "wpdpp")

DEFAULT_TAPS = {
    "mvdr": "0",
    "mtmvdr": "-1,0,1",
    "wpd": "-3,0",
    "wpdpp": "-1,0,1",
}


@dataclass
class MaskSet:
    speech: ComplexMask
    noise: ComplexMask
    sigma: ComplexMask


@dataclass
class EnhanceResult:
    waveform: np.ndarray  # (N,)
    spectrum: np.ndarray  # (F, T)
    method: str
    taps: TapSet | None
    flagged: np.ndarray  # frequencies that fell back to passthrough


def default_taps(method: str) -> TapSet | None:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    text = DEFAULT_TAPS.get(method)
    return TapSet.parse(text) if text else None


def oracle_masks(mixture_spec: Spectrogram, dry_spec: Spectrogram,
                 reference_channel: int = 0) -> MaskSet:
    """Speech, noise and sigma cIRMs from the dry-clean reference.

    The noise mask targets everything except the dry clean signal.
    """
    y_ref = mixture_spec.bins[reference_channel]
    d = dry_spec.bins[0]
    speech = masklib.oracle_cirm(d, y_ref, MaskRole.SPEECH)
    noise = masklib.oracle_cirm(y_ref - d, y_ref, MaskRole.NOISE)
    sigma = masklib.oracle_cirm(d, y_ref, MaskRole.SIGMA)
    return MaskSet(speech, noise, sigma)


def enhance_spectrum(mixture_spec: Spectrogram, masks: MaskSet, method: str,
                     taps: TapSet | None = None,
                     solver: beamform.SolverConfig | None = None):
    """Return (enhanced (F, T) spectrum, taps used, flagged frequencies)."""
    solver = solver or beamform.SolverConfig()
    q = solver.reference_channel
    y = mixture_spec.bins
    n_freq = y.shape[1]
    if method == "passthrough":
        return y[q].copy(), None, np.zeros(n_freq, dtype=bool)
    if method == "mask-only":
        return masklib.apply_mask(masks.speech, y[q]), None, np.zeros(n_freq, dtype=bool)
    taps = taps or default_taps(method)
    stacked = tapstack.stack(y, taps)
    phi_ss = tapstack.masked_covariance(stacked, masks.speech)
    if method in ("mvdr", "mtmvdr"):
        phi_nn = tapstack.masked_covariance(stacked, masks.noise)
        weights = beamform.solve_mvdr(phi_nn, phi_ss, solver, y.shape[0])
    elif method == "wpd":
        sigma2 = masklib.sigma_from_mask(masks.sigma, y[q])
        r = tapstack.sigma_weighted_covariance(stacked, sigma2)
        weights = beamform.solve_wpd(r, phi_ss, solver, y.shape[0])
    elif method == "wpdpp":
        sigma2 = masklib.sigma_from_mask(masks.sigma, y[q])
        r = tapstack.sigma_normalized_covariance(stacked, sigma2)
        weights = beamform.solve_wpdpp(r, phi_ss, solver, y.shape[0])
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    return beamform.apply(weights, stacked), taps, weights.flagged


def enhance(mixture: np.ndarray, masks: MaskSet | None, method: str, taps: TapSet | None = None,
            solver: beamform.SolverConfig | None = None, stft_cfg: StftConfig | None = None,
            dry_clean_ref: np.ndarray | None = None) -> EnhanceResult:
    """Enhance an (M, N) mixture. Oracle masks are built when ``masks`` is None."""
    stft_cfg = stft_cfg or StftConfig()
    solver = solver or beamform.SolverConfig()
    mixture = np.atleast_2d(np.asarray(mixture, dtype=np.float64))
    spec = analyze(mixture, stft_cfg)
    if masks is None:
        if dry_clean_ref is None:
            raise ValueError("oracle masks need the dry clean reference")
        masks = oracle_masks(spec, analyze(dry_clean_ref, stft_cfg), solver.reference_channel)
    out, used_taps, flagged = enhance_spectrum(spec, masks, method, taps, solver)
    wave = synthesize(Spectrogram(out[None], stft_cfg, mixture.shape[1])).samples[0]
    return EnhanceResult(wave, out, method, used_taps, flagged)
