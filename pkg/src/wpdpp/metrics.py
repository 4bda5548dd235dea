"""SI-SNR based evaluation of enhanced outputs and report writing."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from . import loss, simroom
from .audio_io import read_wav

REPORT_COLUMNS = ("id", "method", "taps", "n_spk", "angle_bucket",
                  "si_snr_dry", "si_snr_reverb", "si_snri", "pesq", "wer")


def si_snr_metric(estimate, reference) -> float:
    """SI-SNR in dB, higher is better (clipped at +/-60 dB)."""
    return loss.si_snr(estimate, reference).value


def _align(x, n):
    x = np.asarray(x, dtype=np.float64).ravel()
    return x[:n] if x.size >= n else np.pad(x, (0, n - x.size))


def score_utterance(utt_id: str, bundle: simroom.MixtureBundle, enhanced: np.ndarray,
                    method: str, taps: str = "", reference_channel: int = 0) -> dict:
    n = bundle.mixture.shape[1]
    est = _align(enhanced, n)
    dry = _align(bundle.dry_clean_ref, n)
    reverb = _align(bundle.reverberant_clean[reference_channel], n)
    base = si_snr_metric(bundle.mixture[reference_channel], dry)
    dry_score = si_snr_metric(est, dry)
    meta = bundle.metadata or {}
    return {
        "id": utt_id,
        "method": method,
        "taps": taps,
        "n_spk": int(bundle.spec.n_speakers),
        "angle_bucket": meta.get("angle_bucket", "none"),
        "si_snr_dry": dry_score,
        "si_snr_reverb": si_snr_metric(est, reverb),
        "si_snri": dry_score - base,
        "pesq": "",
        "wer": "",
    }


def aggregate(rows: list[dict]) -> dict:
    """Per-method means overall, by angle bucket and by speaker count."""
    out = {}
    methods = sorted({(r["method"], r["taps"]) for r in rows})
    keys = ("si_snr_dry", "si_snr_reverb", "si_snri")
    for method, taps in methods:
        sel = [r for r in rows if r["method"] == method and r["taps"] == taps]
        label = f"{method}[{taps}]" if taps else method

        def means(group):
            return {k: float(np.mean([r[k] for r in group])) for k in keys} | {"n": len(group)}

        by_angle = {}
        for bucket in simroom.ANGLE_BUCKETS + ("none",):
            group = [r for r in sel if r["angle_bucket"] == bucket]
            if group:
                by_angle[bucket] = means(group)
        by_spk = {}
        for k in sorted({r["n_spk"] for r in sel}):
            by_spk[f"{k}spk"] = means([r for r in sel if r["n_spk"] == k])
        out[label] = {"method": method, "taps": taps, "overall": means(sel),
                      "by_angle": by_angle, "by_n_spk": by_spk}
    return out


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.6f}"
    return value


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: _fmt(r[k]) for k in REPORT_COLUMNS})
    return buf.getvalue()


def write_report(rows: list[dict], csv_path, json_path=None) -> dict:
    agg = aggregate(rows)
    Path(csv_path).parent.mkdir(parents=True, exist_ok=True)
    Path(csv_path).write_text(rows_to_csv(rows))
    if json_path is not None:
        Path(json_path).write_text(json.dumps(agg, indent=2, sort_keys=True))
    return agg


def load_manifest(enhanced_dir) -> dict:
    path = Path(enhanced_dir) / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"no manifest.json in {enhanced_dir}")
    return json.loads(path.read_text())


def evaluate_corpus(corpus_dir, enhanced_dirs) -> list[dict]:
    """Score every enhanced directory (each with a manifest) against the corpus.

    The unprocessed reference channel is always included as ``passthrough``.
    """
    corpus_dir = Path(corpus_dir)
    index = simroom.load_corpus(corpus_dir)
    manifests = [(Path(d), load_manifest(d)) for d in enhanced_dirs]
    rows = []
    for utt_id in index["utterances"]:
        bundle = simroom.load_bundle(corpus_dir / utt_id)
        q = int(bundle.metadata.get("array", {}).get("reference_channel", 0))
        rows.append(score_utterance(utt_id, bundle, bundle.mixture[q], "passthrough", "", q))
        for enh_dir, manifest in manifests:
            entry = manifest["utterances"].get(utt_id)
            if entry is None:
                raise FileNotFoundError(f"{enh_dir} has no output for {utt_id}")
            wave, _ = read_wav(enh_dir / entry["output"])
            rows.append(score_utterance(utt_id, bundle, wave[0],
                                        manifest.get("label", manifest["method"]),
                                        manifest.get("taps") or "",
                                        int(manifest.get("reference_channel", q))))
    return rows
