"""Spatio-temporal tap stacking and covariance estimation.

A stacked spectrogram has shape (D, F, T) where D is the sum of the channel
counts of every tap. Covariances are (F, D, D).
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

import numpy as np

from .mask import ComplexMask, SigmaPower
from .stft import Spectrogram

_TAP_RE = re.compile(r"^\s*([+-]?\d+)\s*(?:\[\s*(\d*)\s*:\s*(\d*)\s*\])?\s*$")


@dataclass(frozen=True)
class TapSet:
    offsets: tuple[int, ...] = (0,)
    channel_subsets: tuple[tuple[int, ...] | None, ...] | None = None

    def __post_init__(self):
        offsets = tuple(int(o) for o in self.offsets)
        subsets = self.channel_subsets
        if subsets is None:
            subsets = (None,) * len(offsets)
        subsets = tuple(None if s is None else tuple(int(c) for c in s) for s in subsets)
        if len(subsets) != len(offsets):
            raise ValueError("one channel subset per offset required")
        if len(set(offsets)) != len(offsets):
            raise ValueError(f"duplicate tap offsets in {offsets}")
        if 0 not in offsets:
            raise ValueError("tap set must contain offset 0")
        for s in subsets:
            if s is not None and (len(s) == 0 or min(s) < 0 or len(set(s)) != len(s)):
                raise ValueError(f"invalid channel subset {s}")
        order = np.argsort(offsets, kind="stable")
        object.__setattr__(self, "offsets", tuple(offsets[i] for i in order))
        object.__setattr__(self, "channel_subsets", tuple(subsets[i] for i in order))

    @classmethod
    def parse(cls, text: str) -> "TapSet":
        """Parse ``"-1,0,1"`` or ``"-3[0:6],-4[0:6],-1,0,1"``."""
        offsets, subsets = [], []
        for part in text.split(","):
            m = _TAP_RE.match(part)
            if not m:
                raise ValueError(f"cannot parse tap {part!r} in {text!r}")
            offsets.append(int(m.group(1)))
            if m.group(2) is None and m.group(3) is None and "[" not in part:
                subsets.append(None)
            else:
                lo = int(m.group(2) or 0)
                if not m.group(3):
                    raise ValueError(f"channel slice in {part!r} needs an explicit end")
                hi = int(m.group(3))
                if hi <= lo:
                    raise ValueError(f"empty channel slice in {part!r}")
                subsets.append(tuple(range(lo, hi)))
        return cls(tuple(offsets), tuple(subsets))

    def __str__(self):
        parts = []
        for o, s in zip(self.offsets, self.channel_subsets):
            if s is None:
                parts.append(str(o))
            elif s == tuple(range(s[0], s[-1] + 1)):
                parts.append(f"{o}[{s[0]}:{s[-1] + 1}]")
            else:
                raise ValueError("non-contiguous channel subsets have no text form")
        return ",".join(parts)

    def channels(self, n_channels: int) -> list[tuple[int, ...]]:
        out = []
        for s in self.channel_subsets:
            if s is None:
                out.append(tuple(range(n_channels)))
            else:
                if max(s) >= n_channels:
                    raise ValueError(f"channel subset {s} out of range for {n_channels} channels")
                out.append(s)
        return out

    def dim(self, n_channels: int) -> int:
        return sum(len(c) for c in self.channels(n_channels))

    def reference_index(self, n_channels: int, reference_channel: int = 0) -> int:
        """Position of (offset 0, reference channel) in the stacked vector."""
        pos = 0
        for o, chans in zip(self.offsets, self.channels(n_channels)):
            if o == 0:
                if reference_channel not in chans:
                    raise ValueError(
                        f"reference channel {reference_channel} missing from the offset-0 tap")
                return pos + chans.index(reference_channel)
            pos += len(chans)
        raise AssertionError("unreachable: offset 0 is validated")


@dataclass
class StackedSpectrogram:
    bins: np.ndarray  # (D, F, T)
    taps: TapSet
    n_channels: int


class CovarianceKind(str, enum.Enum):
    MASKED_SPEECH = "masked_speech"
    MASKED_NOISE = "masked_noise"
    SIGMA_WEIGHTED = "sigma_weighted"
    SIGMA_NORMALIZED = "sigma_normalized"


@dataclass
class FreqCovariance:
    matrices: np.ndarray  # (F, D, D)
    kind: CovarianceKind
    taps: TapSet = field(default_factory=TapSet)
    flagged: np.ndarray | None = None  # frequencies whose normalizer was floored


def _shift(x: np.ndarray, offset: int) -> np.ndarray:
    """out[..., t] = x[..., t + offset], zero outside [0, T)."""
    out = np.zeros_like(x)
    n = x.shape[-1]
    if offset >= 0:
        if offset < n:
            out[..., :n - offset] = x[..., offset:]
    else:
        if -offset < n:
            out[..., -offset:] = x[..., :n + offset]
    return out


def stack(spec, taps: TapSet) -> StackedSpectrogram:
    """Stack time-shifted channel blocks: block k holds Y(t + offsets[k])."""
    y = spec.bins if isinstance(spec, Spectrogram) else np.asarray(spec, dtype=np.complex128)
    if y.ndim != 3:
        raise ValueError(f"expected (M, F, T) input, got {y.shape}")
    n_ch = y.shape[0]
    blocks = [_shift(y[list(chans)], o) for o, chans in zip(taps.offsets, taps.channels(n_ch))]
    return StackedSpectrogram(np.concatenate(blocks, axis=0), taps, n_ch)


def stack_mask(mask: np.ndarray, taps: TapSet, n_channels: int) -> np.ndarray:
    """Per-row mask matching :func:`stack` layout, shape (D, F, T)."""
    rows = [np.broadcast_to(_shift(mask, o), (len(chans),) + mask.shape)
            for o, chans in zip(taps.offsets, taps.channels(n_channels))]
    return np.concatenate(rows, axis=0)


def _hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def _scatter(z: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """sum_t w(f, t) z(:, f, t) z(:, f, t)^H  ->  (F, D, D)."""
    zf = np.transpose(z, (1, 0, 2))  # (F, D, T)
    lhs = zf if weights is None else zf * weights[:, None, :]
    return lhs @ np.conj(np.swapaxes(zf, -1, -2))


def _floor_normalizer(den: np.ndarray):
    flagged = ~(den > 0)
    scale = float(den.max()) if np.any(den > 0) else 0.0
    floor = max(1e-10 * scale, np.finfo(np.float64).tiny)
    return np.maximum(den, floor), flagged


def masked_covariance(stacked: StackedSpectrogram, mask: ComplexMask | np.ndarray,
                      kind: CovarianceKind | None = None) -> FreqCovariance:
    """sum_t S(t) S(t)^H / sum_t |mask(t)|^2 with S the stack of masked frames."""
    m = mask.values if isinstance(mask, ComplexMask) else np.asarray(mask, dtype=np.complex128)
    if kind is None:
        role = getattr(getattr(mask, "role", None), "value", "speech")
        kind = CovarianceKind.MASKED_NOISE if role == "noise" else CovarianceKind.MASKED_SPEECH
    if m.shape != stacked.bins.shape[1:]:
        raise ValueError(f"mask {m.shape} does not match stacked spectrogram {stacked.bins.shape}")
    masked = stack_mask(m, stacked.taps, stacked.n_channels) * stacked.bins
    den, flagged = _floor_normalizer(np.sum(np.abs(m) ** 2, axis=-1))
    cov = _scatter(masked) / den[:, None, None]
    return FreqCovariance(_hermitize(cov), kind, stacked.taps, flagged)


def _check_sigma(stacked: StackedSpectrogram, sigma2) -> np.ndarray:
    s2 = sigma2.values if isinstance(sigma2, SigmaPower) else np.asarray(sigma2, dtype=np.float64)
    if s2.shape != stacked.bins.shape[1:]:
        raise ValueError(f"sigma^2 {s2.shape} does not match stacked spectrogram {stacked.bins.shape}")
    if np.any(s2 <= 0):
        raise ValueError("sigma^2 must be floored to positive values")
    return s2


def sigma_weighted_covariance(stacked: StackedSpectrogram, sigma2) -> FreqCovariance:
    """R(f) = sum_t Y(t) Y(t)^H / sigma^2(t, f)."""
    s2 = _check_sigma(stacked, sigma2)
    cov = _scatter(stacked.bins, 1.0 / s2)
    return FreqCovariance(_hermitize(cov), CovarianceKind.SIGMA_WEIGHTED, stacked.taps,
                          np.zeros(s2.shape[0], dtype=bool))


def sigma_normalized_covariance(stacked: StackedSpectrogram, sigma2) -> FreqCovariance:
    """Weighted average of Y(t) Y(t)^H with weights 1 / sigma^2(t, f)."""
    s2 = _check_sigma(stacked, sigma2)
    w = 1.0 / s2
    cov = _scatter(stacked.bins, w) / np.sum(w, axis=-1)[:, None, None]
    return FreqCovariance(_hermitize(cov), CovarianceKind.SIGMA_NORMALIZED, stacked.taps,
                          np.zeros(s2.shape[0], dtype=bool))
