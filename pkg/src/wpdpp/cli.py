"""Command-line entry point: simulate, enhance, evaluate, spectrogram, features."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import features, metrics, pipeline, plotting, simroom
from .audio_io import read_tensor, read_wav, write_tensor, write_wav
from .beamform import SolverConfig
from .mask import ComplexMask, MaskRole
from .stft import StftConfig, analyze
from .tapstack import TapSet

logger = logging.getLogger("wpdpp")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
JOBS_ENV = "WPDPP_JOBS"


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


class NumericalError(Exception):
    pass


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- simulate ------------------------------------------------------------------

def cmd_simulate(args) -> int:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {args.config}: {err}") from err
    if args.n is not None:
        data["n_utterances"] = args.n
    try:
        cfg = simroom.CorpusConfig.from_dict(data)
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err
    index = simroom.generate_corpus(cfg, args.out, seed=args.seed, jobs=args.jobs)
    print(f"wrote {len(index['utterances'])} utterances to {args.out}")
    return EXIT_OK


# -- enhance -------------------------------------------------------------------

MASK_FILES = {"speech": MaskRole.SPEECH, "noise": MaskRole.NOISE, "sigma": MaskRole.SIGMA}


def _load_file_masks(mask_dir: Path, utt_id: str, shape) -> pipeline.MaskSet:
    masks = {}
    for name, role in MASK_FILES.items():
        path = mask_dir / utt_id / f"{name}.c64"
        if not path.exists():
            raise DataError(f"missing mask file {path}")
        values, _ = read_tensor(path)
        if values.shape != shape:
            raise DataError(f"{path}: mask shape {values.shape} != spectrogram {shape}")
        try:
            masks[name] = ComplexMask(values, role)
        except ValueError as err:
            raise DataError(f"{path}: {err}") from err
    return pipeline.MaskSet(**masks)


def _enhance_one(job):
    (corpus_dir, utt_id, method, taps_text, mask_source, mask_dir, q, delta, out_dir) = job
    utt_dir = Path(corpus_dir) / utt_id
    mixture, fs = read_wav(utt_dir / "mixture.wav")
    if q >= mixture.shape[0]:
        raise ConfigError(f"reference channel {q} out of range for {mixture.shape[0]} channels")
    stft_cfg = StftConfig(sample_rate=fs)
    spec = analyze(mixture, stft_cfg)
    input_hashes = {"mixture": _sha256(utt_dir / "mixture.wav")}
    if mask_source == "oracle":
        dry_path = utt_dir / "dry_clean.wav"
        if not dry_path.exists():
            raise DataError(f"oracle masks need {dry_path}")
        dry, _ = read_wav(dry_path)
        masks = pipeline.oracle_masks(spec, analyze(dry[0], stft_cfg), q)
        input_hashes["dry_clean"] = _sha256(dry_path)
    else:
        masks = _load_file_masks(Path(mask_dir), utt_id, spec.bins.shape[1:])
        for name in MASK_FILES:
            input_hashes[f"mask_{name}"] = _sha256(Path(mask_dir) / utt_id / f"{name}.c64")
    taps = TapSet.parse(taps_text) if taps_text else None
    solver = SolverConfig(diagonal_loading=delta, reference_channel=q)
    result = pipeline.enhance(mixture, masks, method, taps, solver, stft_cfg)
    out_name = f"{utt_id}.wav"
    write_wav(Path(out_dir) / out_name, result.waveform, fs)
    return utt_id, {"output": out_name, "inputs": input_hashes,
                    "flagged_frequencies": int(np.count_nonzero(result.flagged))}


def cmd_enhance(args) -> int:
    method = args.method
    if method not in pipeline.METHODS:
        raise ConfigError(f"unknown method {method!r}")
    taps_text = None
    if method in pipeline.DEFAULT_TAPS:
        taps_text = args.taps or pipeline.DEFAULT_TAPS[method]
        try:
            taps_text = str(TapSet.parse(taps_text))
        except ValueError as err:
            raise ConfigError(str(err)) from err
    elif args.taps:
        raise ConfigError(f"method {method!r} takes no taps")
    if args.mask_source == "file" and not args.mask_dir:
        raise ConfigError("--mask-source file requires --mask-dir")
    try:
        SolverConfig(diagonal_loading=args.loading, reference_channel=args.ref_channel)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    try:
        index = simroom.load_corpus(args.corpus)
    except FileNotFoundError as err:
        raise DataError(str(err)) from err
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(args.corpus, utt, method, taps_text, args.mask_source, args.mask_dir,
             args.ref_channel, args.loading, str(out_dir)) for utt in index["utterances"]]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_enhance_one, jobs))
    else:
        results = [_enhance_one(j) for j in jobs]
    utterances = dict(results)
    flagged = sum(v["flagged_frequencies"] for v in utterances.values())
    label = args.label or (method if args.mask_source == "oracle" else f"{method}-{args.mask_source}")
    manifest = {
        "label": label,
        "method": method,
        "taps": taps_text,
        "diagonal_loading": args.loading,
        "reference_channel": args.ref_channel,
        "mask_source": args.mask_source,
        "stft": {"window_len": 512, "hop": 256, "window": "hann"},
        "corpus": str(Path(args.corpus)),
        "utterances": utterances,
    }
    digest = hashlib.sha256(json.dumps(manifest, sort_keys=True).encode()).hexdigest()
    manifest["content_hash"] = digest
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    print(f"enhanced {len(utterances)} utterances with {method}"
          + (f" [{taps_text}]" if taps_text else "") + f" -> {out_dir}")
    if flagged:
        logger.warning("%d frequency bins fell back to passthrough", flagged)
        if args.strict:
            raise NumericalError(f"{flagged} frequency bins were singular beyond retries")
    return EXIT_OK


# -- evaluate ------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    try:
        rows = metrics.evaluate_corpus(args.corpus, args.enhanced)
    except FileNotFoundError as err:
        raise DataError(str(err)) from err
    csv_path = Path(args.out)
    json_path = Path(args.json) if args.json else csv_path.with_suffix(".json")
    agg = metrics.write_report(rows, csv_path, json_path)
    if args.figure:
        plotting.plot_report(agg, args.figure)
    for label in sorted(agg):
        o = agg[label]["overall"]
        print(f"{label:24s} n={o['n']:4d}  SI-SNR(dry)={o['si_snr_dry']:7.2f}  "
              f"SI-SNRi={o['si_snri']:6.2f}")
    return EXIT_OK


# -- spectrogram / features / masks ---------------------------------------------

def cmd_spectrogram(args) -> int:
    try:
        wave, fs = read_wav(args.wav)
    except (OSError, ValueError) as err:
        raise DataError(f"cannot read {args.wav}: {err}") from err
    if not 0 <= args.channel < wave.shape[0]:
        raise ConfigError(f"channel {args.channel} out of range for {wave.shape[0]} channels")
    plotting.save_spectrogram(wave[args.channel], args.image, StftConfig(sample_rate=fs))
    return EXIT_OK


def cmd_features(args) -> int:
    utt_dir = Path(args.corpus) / args.utt
    try:
        bundle = simroom.load_bundle(utt_dir)
    except FileNotFoundError as err:
        raise DataError(str(err)) from err
    meta = bundle.metadata
    spec = analyze(bundle.mixture, StftConfig(sample_rate=bundle.sample_rate))
    doa = args.doa if args.doa is not None else meta["azimuths_deg"][0]
    mics = np.asarray(meta["array"]["mic_positions"])
    steering = features.steering_vector(mics, doa, spec.bins.shape[1], bundle.sample_rate,
                                        meta["room"]["speed_of_sound"])
    out = Path(args.out)
    pairs = features.default_pairs(spec.bins.shape[0])
    write_tensor(out / "lps.f32", features.lps(spec), axes=["freq", "frame"])
    write_tensor(out / "ipd.f32", features.ipd(spec, pairs), axes=["pair", "freq", "frame"],
                 pairs=pairs)
    write_tensor(out / "df.f32", features.directional_feature(spec, steering, pairs),
                 axes=["freq", "frame"], doa_deg=doa)
    return EXIT_OK


def cmd_export_masks(args) -> int:
    try:
        index = simroom.load_corpus(args.corpus)
    except FileNotFoundError as err:
        raise DataError(str(err)) from err
    for utt in index["utterances"]:
        bundle = simroom.load_bundle(Path(args.corpus) / utt)
        cfg = StftConfig(sample_rate=bundle.sample_rate)
        masks = pipeline.oracle_masks(analyze(bundle.mixture, cfg),
                                      analyze(bundle.dry_clean_ref, cfg), args.ref_channel)
        for name in MASK_FILES:
            m = getattr(masks, name)
            write_tensor(Path(args.out) / utt / f"{name}.c64", m.values,
                         role=m.role.value, axes=["freq", "frame"])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wpdpp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a simulated reverberant corpus")
    p.add_argument("--config", help="JSON corpus config (defaults used for missing keys)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-n", type=int, help="override n_utterances")
    p.add_argument("--jobs", type=int, default=_default_jobs())
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("enhance", help="beamform every utterance of a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--method", required=True, choices=pipeline.METHODS)
    p.add_argument("--taps", help='frame taps, e.g. "-1,0,1" or "-3[0:6],-1,0,1"')
    p.add_argument("--mask-source", choices=("oracle", "file"), default="oracle")
    p.add_argument("--mask-dir", help="directory of <utt>/{speech,noise,sigma}.c64 masks")
    p.add_argument("--ref-channel", type=int, default=0)
    p.add_argument("--loading", type=float, default=1e-5, help="relative diagonal loading")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=_default_jobs())
    p.add_argument("--label", help="name used in reports (default: method)")
    p.add_argument("--strict", action="store_true",
                   help="exit 4 if any frequency needed the passthrough fallback")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("evaluate", help="SI-SNR report for enhanced outputs")
    p.add_argument("--corpus", required=True)
    p.add_argument("enhanced", nargs="*", help="enhanced output directories")
    p.add_argument("--out", required=True, help="CSV report path")
    p.add_argument("--json", help="aggregate JSON path (default: CSV path with .json)")
    p.add_argument("--figure", help="optional PNG/PDF summary figure")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("spectrogram", help="render a grayscale spectrogram image")
    p.add_argument("wav")
    p.add_argument("image", help=".pgm for raw graymap, .png etc. via matplotlib")
    p.add_argument("--channel", type=int, default=0)
    p.set_defaults(func=cmd_spectrogram)

    p = sub.add_parser("features", help="dump LPS/IPD/DF features for one utterance")
    p.add_argument("--corpus", required=True)
    p.add_argument("--utt", required=True)
    p.add_argument("--doa", type=float, help="target azimuth in degrees (default: metadata)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("export-masks", help="write oracle masks as flat tensors")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ref-channel", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_masks)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
