"""Spectrogram images and report figures (non-interactive)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .stft import StftConfig, analyze  # noqa: E402

DYNAMIC_RANGE_DB = 80.0

# strip the version-dependent "Software" key so bytes only depend on the data
_PNG_META = {"Software": None}


def spectrogram_image(wave, cfg: StftConfig | None = None,
                      dynamic_range_db: float = DYNAMIC_RANGE_DB) -> np.ndarray:
    """uint8 (F, T) image: dB magnitude over a fixed range, low frequencies at the bottom."""
    x = np.atleast_2d(np.asarray(wave, dtype=np.float64))[:1]
    power = np.abs(analyze(x, cfg).bins[0]) ** 2
    top = power.max()
    if top <= 0:
        return np.zeros(power.shape, dtype=np.uint8)
    db = 10.0 * np.log10(np.maximum(power / top, 1e-30))
    level = np.clip((db + dynamic_range_db) / dynamic_range_db, 0.0, 1.0)
    return np.round(level * 255.0).astype(np.uint8)[::-1]


def write_pgm(path, image: np.ndarray) -> None:
    h, w = image.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + image.tobytes())


def save_spectrogram(wave, path, cfg: StftConfig | None = None) -> np.ndarray:
    """Render ``wave`` to ``path``; ``.pgm`` is written raw, anything else via matplotlib."""
    img = spectrogram_image(wave, cfg)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".pgm":
        write_pgm(path, img)
    else:
        plt.imsave(path, img, cmap="gray", vmin=0, vmax=255, metadata=_PNG_META)
    return img


def plot_report(agg: dict, path) -> None:
    """Bar charts of mean SI-SNRi per method, overall and per angle bucket."""
    labels = sorted(agg)
    buckets = ["0-15", "15-45", "45-90", "90-180"]
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(11, 4))
    overall = [agg[k]["overall"]["si_snri"] for k in labels]
    ax0.bar(range(len(labels)), overall, color="0.4")
    ax0.set_xticks(range(len(labels)))
    ax0.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax0.set_ylabel("mean SI-SNRi (dB)")
    ax0.axhline(0.0, color="k", lw=0.8)

    width = 0.8 / max(len(labels), 1)
    for i, k in enumerate(labels):
        vals = [agg[k]["by_angle"].get(b, {}).get("si_snri", np.nan) for b in buckets]
        ax1.bar(np.arange(len(buckets)) + i * width, vals, width, label=k)
    ax1.set_xticks(np.arange(len(buckets)) + 0.4 - width / 2)
    ax1.set_xticklabels([f"{b} deg" for b in buckets])
    ax1.set_ylabel("mean SI-SNRi (dB)")
    ax1.legend(fontsize=7)
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
