"""Closed-form mask-based beamformers.

Every solver here has the same reference-channel form

    w(f) = A(f)^-1 B(f) u / trace(A(f)^-1 B(f))

with (A, B) = (noise cov, speech cov) for MVDR and multi-tap MVDR,
(sigma-weighted R, speech cov) for WPD and (sigma-normalized R, speech cov)
for WPD++. ``u`` selects the reference channel of the offset-0 tap.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .tapstack import FreqCovariance, StackedSpectrogram, TapSet

logger = logging.getLogger(__name__)


class SingularCovarianceError(np.linalg.LinAlgError):
    def __init__(self, freq_index, loading):
        super().__init__(
            f"covariance at frequency {freq_index} is singular after loading {loading:g}")
        self.freq_index = freq_index
        self.loading = loading


@dataclass(frozen=True)
class SolverConfig:
    diagonal_loading: float = 1e-5
    max_loading_retries: int = 3
    reference_channel: int = 0

    def __post_init__(self):
        if not self.diagonal_loading > 0:
            raise ValueError("diagonal_loading must be positive")
        if self.max_loading_retries < 0:
            raise ValueError("max_loading_retries must be >= 0")


@dataclass
class BeamformerWeights:
    weights: np.ndarray  # (F, D)
    taps: TapSet
    reference_channel: int = 0
    n_channels: int | None = None
    flagged: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def hermitian_solve(a, b, loading: float = 0.0, max_retries: int = 3, freq_index=None):
    """Solve (A + loading * trace(A)/dim * I) X = B with a Cholesky factorization.

    On breakdown the loading is multiplied by 10 and the solve retried.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    dim = a.shape[0]
    scale = float(np.real(np.trace(a))) / dim
    if not scale > 0:
        scale = 1.0
    delta = loading
    for attempt in range(max_retries + 1):
        loaded = a + (delta * scale) * np.eye(dim)
        try:
            factor = scipy.linalg.cho_factor(loaded, lower=True, check_finite=True)
            x = scipy.linalg.cho_solve(factor, b)
        except (np.linalg.LinAlgError, ValueError):
            delta = delta * 10.0 if delta > 0 else 1e-10
            continue
        if np.all(np.isfinite(x)):
            return x
        delta = delta * 10.0 if delta > 0 else 1e-10
    raise SingularCovarianceError(freq_index, delta)


def _reference_form(a: FreqCovariance, b: FreqCovariance, cfg: SolverConfig,
                    n_channels: int | None) -> BeamformerWeights:
    if a.matrices.shape != b.matrices.shape:
        raise ValueError(f"covariance shapes differ: {a.matrices.shape} vs {b.matrices.shape}")
    if a.taps != b.taps:
        raise ValueError(f"tap sets differ: {a.taps} vs {b.taps}")
    taps = a.taps
    n_freq, dim, _ = a.matrices.shape
    if n_channels is None:
        n_channels = _infer_channels(taps, dim)
    ref = taps.reference_index(n_channels, cfg.reference_channel)
    weights = np.zeros((n_freq, dim), dtype=np.complex128)
    flagged = np.zeros(n_freq, dtype=bool)
    for f in range(n_freq):
        try:
            num = hermitian_solve(a.matrices[f], b.matrices[f], cfg.diagonal_loading,
                                  cfg.max_loading_retries, freq_index=f)
        except SingularCovarianceError as err:
            logger.warning("%s; passing the reference channel through", err)
            flagged[f] = True
            weights[f, ref] = 1.0
            continue
        tr = np.trace(num)
        floor = 1e-10 * np.linalg.norm(num)
        if abs(tr) < floor:
            tr = floor if tr == 0 else floor * tr / abs(tr)
        if tr == 0:
            flagged[f] = True
            weights[f, ref] = 1.0
            continue
        weights[f] = num[:, ref] / tr
    return BeamformerWeights(weights, taps, cfg.reference_channel, n_channels, flagged)


def _infer_channels(taps: TapSet, dim: int) -> int:
    fixed = sum(len(s) for s in taps.channel_subsets if s is not None)
    free = sum(1 for s in taps.channel_subsets if s is None)
    if free == 0:
        return max(max(s) for s in taps.channel_subsets) + 1
    if (dim - fixed) % free:
        raise ValueError(f"cannot infer channel count from dimension {dim} and taps {taps}")
    return (dim - fixed) // free


def solve_mvdr(phi_nn: FreqCovariance, phi_ss: FreqCovariance, cfg: SolverConfig | None = None,
               n_channels: int | None = None) -> BeamformerWeights:
    """(Multi-tap) MVDR with reference-channel selection."""
    return _reference_form(phi_nn, phi_ss, cfg or SolverConfig(), n_channels)


def solve_wpd(r: FreqCovariance, phi_ss_bar: FreqCovariance, cfg: SolverConfig | None = None,
              n_channels: int | None = None) -> BeamformerWeights:
    """Steering-vector-free WPD from the sigma-weighted covariance ``r``."""
    return _reference_form(r, phi_ss_bar, cfg or SolverConfig(), n_channels)


def solve_wpdpp(r_tilde: FreqCovariance, phi_ss_tilde: FreqCovariance,
                cfg: SolverConfig | None = None, n_channels: int | None = None) -> BeamformerWeights:
    """WPD++ from the sigma-normalized covariance ``r_tilde`` over neighbouring taps."""
    return _reference_form(r_tilde, phi_ss_tilde, cfg or SolverConfig(), n_channels)


def apply(weights: BeamformerWeights, stacked: StackedSpectrogram) -> np.ndarray:
    """S(t, f) = w(f)^H Y(t, f); returns complex (F, T)."""
    if weights.taps != stacked.taps:
        raise ValueError(f"tap mismatch: weights {weights.taps} vs input {stacked.taps}")
    if weights.weights.shape != stacked.bins.shape[:2][::-1]:
        raise ValueError(
            f"weights {weights.weights.shape} incompatible with stacked input {stacked.bins.shape}")
    return np.einsum("fd,dft->ft", np.conj(weights.weights), stacked.bins)


def steering_wpd(r: np.ndarray, v: np.ndarray, loading: float = 0.0) -> np.ndarray:
    """Steering-vector WPD/MPDR weights R^-1 v / (v^H R^-1 v) for one frequency.

    Kept as a test oracle; the pipeline never estimates steering vectors.
    """
    rv = hermitian_solve(r, v, loading)
    return rv / np.vdot(v, rv)
