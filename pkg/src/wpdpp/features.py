"""Frontend features: log-power spectra, inter-channel phase differences and
the location-guided directional feature."""
from __future__ import annotations

import numpy as np

from .stft import Spectrogram

LPS_FLOOR = 1e-12


def _bins(spec) -> np.ndarray:
    return spec.bins if isinstance(spec, Spectrogram) else np.asarray(spec, dtype=np.complex128)


def lps(spec) -> np.ndarray:
    """log(|Y|^2 + 1e-12) of a single-channel spectrogram (first channel if several)."""
    y = _bins(spec)
    if y.ndim == 3:
        y = y[0]
    return np.log(y.real ** 2 + y.imag ** 2 + LPS_FLOOR)


def default_pairs(n_channels: int) -> list[tuple[int, int]]:
    """Adjacent microphone pairs plus the widest pair."""
    pairs = [(m, m + 1) for m in range(n_channels - 1)]
    if n_channels > 2:
        pairs.append((0, n_channels - 1))
    return pairs


def _check_pairs(pairs, n_channels):
    for a, b in pairs:
        if not (0 <= a < n_channels and 0 <= b < n_channels) or a == b:
            raise ValueError(f"invalid microphone pair ({a}, {b}) for {n_channels} channels")


def ipd(spec, pairs=None) -> np.ndarray:
    """angle(Y_a * conj(Y_b)) per pair, in (-pi, pi]; shape (pairs, F, T)."""
    y = _bins(spec)
    pairs = default_pairs(y.shape[0]) if pairs is None else list(pairs)
    _check_pairs(pairs, y.shape[0])
    out = np.stack([np.angle(y[a] * np.conj(y[b])) for a, b in pairs])
    # np.angle returns [-pi, pi]; fold -pi onto pi
    out[out <= -np.pi] += 2 * np.pi
    return out


def steering_vector(mic_positions, azimuth_deg: float, n_freq: int, sample_rate: int = 16000,
                    speed_of_sound: float = 343.0, elevation_deg: float = 0.0) -> np.ndarray:
    """Far-field plane-wave phases (M, F) for a source at the given direction.

    Azimuth is measured in the x-y plane from the +x axis.
    """
    mics = np.asarray(mic_positions, dtype=float)
    az, el = np.radians(azimuth_deg), np.radians(elevation_deg)
    direction = np.array([np.cos(az) * np.cos(el), np.sin(az) * np.cos(el), np.sin(el)])
    # microphones further along the source direction receive the wave earlier
    delays = -(mics - mics.mean(axis=0)) @ direction / speed_of_sound
    freqs = np.arange(n_freq) * sample_rate / (2 * (n_freq - 1))
    return np.exp(-2j * np.pi * delays[:, None] * freqs[None, :])


def directional_feature(spec, steering, pairs=None) -> np.ndarray:
    """Mean over pairs of cos(observed IPD - steering IPD); (F, T) in [-1, 1].

    Bins where a pair has no energy contribute 0.
    """
    y = _bins(spec)
    steering = np.asarray(steering)
    if steering.shape != y.shape[:2]:
        raise ValueError(f"steering {steering.shape} does not match spectrogram {y.shape[:2]}")
    pairs = default_pairs(y.shape[0]) if pairs is None else list(pairs)
    _check_pairs(pairs, y.shape[0])
    df = np.zeros(y.shape[1:])
    for a, b in pairs:
        cross = y[a] * np.conj(y[b])
        mag = np.abs(cross)
        expected = steering[a] * np.conj(steering[b])
        expected = expected / np.maximum(np.abs(expected), 1e-300)
        unit = np.divide(cross, mag, out=np.zeros_like(cross), where=mag > 0)
        df += np.real(unit * np.conj(expected[:, None]))
    return np.clip(df / len(pairs), -1.0, 1.0)
