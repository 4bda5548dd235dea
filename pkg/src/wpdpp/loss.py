"""SNR-family and spectral losses with analytic gradients.

SNR values are reported in dB (higher is better) and clipped to +/-60 dB.
``gradient`` differentiates the quantity to *minimize*: the negated SNR for
``si_snr``/``c_si_snr``, the raw value for the MSE variants and the combo loss.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SNR_CLIP_DB = 60.0
_DB = 10.0 / np.log(10.0)


@dataclass
class LossValue:
    value: float
    components: dict[str, float] = field(default_factory=dict)
    raw: dict[str, float] = field(default_factory=dict)
    clipped: bool = False

    def __float__(self):
        return float(self.value)


@dataclass
class LossGradient:
    grad_estimate: np.ndarray | tuple
    clipped: bool = False


def _as_real_vector(x) -> np.ndarray:
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return np.concatenate([x.real.ravel(), x.imag.ravel()])
    return x.astype(np.float64).ravel()


def _snr_parts(est: np.ndarray, ref: np.ndarray):
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch: estimate {est.shape} vs target {ref.shape}")
    ref_energy = float(ref @ ref)
    if ref_energy <= 0.0:
        raise ValueError("target has zero energy")
    proj = float(est @ ref)
    alpha = proj / ref_energy
    err = est - alpha * ref
    sig_energy = alpha * alpha * ref_energy
    err_energy = float(err @ err)
    if sig_energy <= 0.0:
        snr = -np.inf
    elif err_energy <= 0.0:
        snr = np.inf
    else:
        snr = _DB * np.log(sig_energy / err_energy)
    return snr, proj, err, err_energy


def _clip(snr: float):
    clipped = not (-SNR_CLIP_DB < snr < SNR_CLIP_DB)
    return float(np.clip(snr, -SNR_CLIP_DB, SNR_CLIP_DB)), clipped


def si_snr(estimate, target) -> LossValue:
    """Scale-invariant SNR of a real waveform estimate, in dB."""
    est = np.asarray(estimate, dtype=np.float64).ravel()
    ref = np.asarray(target, dtype=np.float64).ravel()
    snr, *_ = _snr_parts(est, ref)
    value, clipped = _clip(snr)
    return LossValue(value, clipped=clipped)


def c_si_snr(estimate, target) -> LossValue:
    """Si-SNR on the concatenated [real, imag] parts of two complex spectrograms.

    A single real scale factor is shared by the real and imaginary halves.
    """
    est, ref = np.asarray(estimate), np.asarray(target)
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch: estimate {est.shape} vs target {ref.shape}")
    est = np.asarray(est, dtype=np.complex128)
    ref = np.asarray(ref, dtype=np.complex128)
    snr, *_ = _snr_parts(_as_real_vector(est), _as_real_vector(ref))
    value, clipped = _clip(snr)
    return LossValue(value, clipped=clipped)


def mag_mse(estimate, target, complex_diff: bool = False) -> LossValue:
    """Sum over bins of (|S| - |S_hat|)^2.

    With ``complex_diff`` the complex spectra are subtracted directly instead.
    """
    est, ref = np.asarray(estimate), np.asarray(target)
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch: estimate {est.shape} vs target {ref.shape}")
    diff = (ref - est) if complex_diff else (np.abs(ref) - np.abs(est))
    return LossValue(float(np.sum(np.abs(diff) ** 2)))


def combo_loss(sigma_spec, sigma_wave, dry_spec, dry_wave,
               gamma: float = 0.3, beta: float = 1.0) -> LossValue:
    """gamma * Mag-MSE - beta * Si-SNR - C-Si-SNR for the sigma branch.

    SNR terms enter negated so that every improvement lowers the total.
    """
    mse = mag_mse(sigma_spec, dry_spec).value
    snr = si_snr(sigma_wave, dry_wave)
    csnr = c_si_snr(sigma_spec, dry_spec)
    components = {
        "mag_mse": gamma * mse,
        "si_snr": -beta * snr.value,
        "c_si_snr": -csnr.value,
    }
    total = components["mag_mse"] + components["si_snr"] + components["c_si_snr"]
    raw = {"mag_mse": mse, "si_snr": snr.value, "c_si_snr": csnr.value}
    return LossValue(total, components, raw, clipped=snr.clipped or csnr.clipped)


def _snr_grad(est: np.ndarray, ref: np.ndarray):
    """d SNR_dB / d est for real vectors, plus the clip flag."""
    snr, proj, err, err_energy = _snr_parts(est, ref)
    _, clipped = _clip(snr)
    if clipped:
        return np.zeros_like(est), True
    grad = _DB * (2.0 * ref / proj - 2.0 * err / err_energy)
    return grad, False


def _to_complex(vec: np.ndarray, like: np.ndarray) -> np.ndarray:
    n = like.size
    return (vec[:n] + 1j * vec[n:]).reshape(like.shape)


def _mag_mse_grad(est, ref, complex_diff):
    est = np.asarray(est)
    ref = np.asarray(ref)
    if complex_diff:
        return 2.0 * (est - ref)
    mag = np.abs(est)
    unit = np.divide(est, mag, out=np.zeros_like(est, dtype=np.result_type(est, float)),
                     where=mag > 0)
    return 2.0 * (mag - np.abs(ref)) * unit


def gradient(kind: str, estimate, target, gamma: float = 0.3, beta: float = 1.0) -> LossGradient:
    """Analytic gradient of the minimized loss with respect to the estimate.

    Complex estimates get ``d/dRe + 1j * d/dIm``. For ``kind="combo"`` pass
    ``(spec, wave)`` tuples and receive a ``(grad_spec, grad_wave)`` tuple.
    """
    if kind == "si_snr":
        est = np.asarray(estimate, dtype=np.float64)
        g, clipped = _snr_grad(est.ravel(), np.asarray(target, dtype=np.float64).ravel())
        return LossGradient(-g.reshape(est.shape), clipped)
    if kind == "c_si_snr":
        est = np.asarray(estimate, dtype=np.complex128)
        ref = np.asarray(target, dtype=np.complex128)
        g, clipped = _snr_grad(_as_real_vector(est), _as_real_vector(ref))
        return LossGradient(-_to_complex(g, est), clipped)
    if kind in ("mag_mse", "mag_mse_complex"):
        return LossGradient(_mag_mse_grad(estimate, target, kind == "mag_mse_complex"))
    if kind == "combo":
        spec, wave = estimate
        dry_spec, dry_wave = target
        g_mse = _mag_mse_grad(np.asarray(spec, dtype=np.complex128), dry_spec, False)
        g_c = gradient("c_si_snr", spec, dry_spec)
        g_s = gradient("si_snr", wave, dry_wave)
        grad_spec = gamma * g_mse + g_c.grad_estimate
        grad_wave = beta * g_s.grad_estimate
        return LossGradient((grad_spec, grad_wave), g_c.clipped or g_s.clipped)
    raise ValueError(f"unknown loss kind {kind!r}")
