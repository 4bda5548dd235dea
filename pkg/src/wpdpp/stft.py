"""Short-time Fourier analysis/synthesis.

Shape convention: audio is (M, N), spectrograms are (M, F, T) with
F = fft_len // 2 + 1. Frame ``t`` is centered on sample ``t * hop`` of the
original signal (reflect padding of ``window_len // 2`` on both sides).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class StftConfig:
    window_len: int = 512
    hop: int = 256
    fft_len: int | None = None
    window: str = "hann"
    sample_rate: int = 16000

    def __post_init__(self):
        if self.fft_len is None:
            object.__setattr__(self, "fft_len", self.window_len)
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")
        if not 0 < self.hop <= self.window_len:
            raise ValueError("hop must be in (0, window_len]")
        if self.fft_len < self.window_len:
            raise ValueError("fft_len must be >= window_len")

    @property
    def n_freq(self) -> int:
        return self.fft_len // 2 + 1

    def window_coeffs(self) -> np.ndarray:
        # periodic Hann
        n = np.arange(self.window_len)
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.window_len)

    def n_frames(self, n_samples: int) -> int:
        # one extra frame so the last sample sits within half a window of a frame center
        return 1 + n_samples // self.hop


@dataclass
class MultiChannelAudio:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError(f"expected (M, N) samples, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("audio contains NaN or Inf")
        self.samples = x

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


@dataclass
class Spectrogram:
    bins: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)
    length: int | None = None  # original signal length, for synthesis

    def __post_init__(self):
        b = np.asarray(self.bins)
        if b.ndim == 2:
            b = b[None]
        if b.ndim != 3:
            raise ValueError(f"expected (M, F, T) bins, got shape {b.shape}")
        if b.shape[1] != self.config.n_freq:
            raise ValueError(
                f"frequency axis {b.shape[1]} does not match fft_len {self.config.fft_len}")
        self.bins = b.astype(np.complex128, copy=False)

    @property
    def shape(self):
        return self.bins.shape

    def channel(self, m: int) -> "Spectrogram":
        return Spectrogram(self.bins[m:m + 1], self.config, self.length)


def _as_audio(audio) -> MultiChannelAudio:
    if isinstance(audio, MultiChannelAudio):
        return audio
    return MultiChannelAudio(np.asarray(audio, dtype=np.float64))


def _frame_indices(cfg: StftConfig, n_frames: int) -> np.ndarray:
    return np.arange(n_frames)[:, None] * cfg.hop + np.arange(cfg.window_len)[None, :]


def analyze(audio, cfg: StftConfig | None = None) -> Spectrogram:
    """STFT of every channel of ``audio`` (MultiChannelAudio or array (M, N) / (N,))."""
    cfg = cfg or StftConfig()
    audio = _as_audio(audio)
    x = audio.samples
    n = x.shape[1]
    half = cfg.window_len // 2
    if n == 0:
        raise ValueError("empty audio")
    if n <= half:
        raise ValueError(
            f"signal of {n} samples is too short for reflect padding of {half}")
    n_frames = cfg.n_frames(n)
    padded = np.pad(x, ((0, 0), (half, half)), mode="reflect")
    need = (n_frames - 1) * cfg.hop + cfg.window_len
    if need > padded.shape[1]:
        padded = np.pad(padded, ((0, 0), (0, need - padded.shape[1])))
    frames = padded[:, _frame_indices(cfg, n_frames)] * cfg.window_coeffs()
    spec = np.fft.rfft(frames, n=cfg.fft_len, axis=-1)  # (M, T, F)
    return Spectrogram(np.transpose(spec, (0, 2, 1)), cfg, n)


def synthesize(spec: Spectrogram, length: int | None = None) -> MultiChannelAudio:
    """Weighted overlap-add inverse of :func:`analyze`."""
    cfg = spec.config
    bins = spec.bins
    n_frames = bins.shape[2]
    if length is None:
        length = spec.length if spec.length is not None else n_frames * cfg.hop
    half = cfg.window_len // 2
    win = cfg.window_coeffs()
    frames = np.fft.irfft(np.transpose(bins, (0, 2, 1)), n=cfg.fft_len, axis=-1)
    frames = frames[..., :cfg.window_len] * win
    total = (n_frames - 1) * cfg.hop + cfg.window_len
    idx = _frame_indices(cfg, n_frames).ravel()
    out = np.zeros((bins.shape[0], total))
    for m in range(bins.shape[0]):
        out[m] = np.bincount(idx, weights=frames[m].ravel(), minlength=total)
    wsum = np.bincount(idx, weights=np.tile(win ** 2, n_frames), minlength=total)
    # positions with vanishing window support are left at zero
    ok = wsum > 1e-10
    out[:, ok] /= wsum[ok]
    out[:, ~ok] = 0.0
    out = out[:, half:half + length]
    if out.shape[1] < length:
        out = np.pad(out, ((0, 0), (0, length - out.shape[1])))
    return MultiChannelAudio(out, cfg.sample_rate)
