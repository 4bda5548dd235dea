"""Shoebox image-source simulation and reverberant mixture synthesis."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.signal

from .audio_io import read_wav, write_wav

logger = logging.getLogger(__name__)

SINC_TAPS = 81
ANGLE_BUCKETS = ("0-15", "15-45", "45-90", "90-180")

# x-offsets in meters of non-uniform linear arrays, denser near the center
ARRAY_PRESETS = {
    2: (-0.05, 0.05),
    4: (-0.15, -0.04, 0.04, 0.15),
    8: (-0.15, -0.09, -0.05, -0.02, 0.02, 0.05, 0.09, 0.15),
    15: (-0.20, -0.15, -0.11, -0.08, -0.055, -0.035, -0.015, 0.0,
         0.015, 0.035, 0.055, 0.08, 0.11, 0.15, 0.20),
}


@dataclass
class RoomSpec:
    dimensions: tuple[float, float, float]
    absorption: float | tuple[float, ...] = 0.4  # scalar or per wall (x0, x1, y0, y1, z0, z1)
    max_order: int = 20
    speed_of_sound: float = 343.0
    sample_rate: int = 16000
    rir_length: int = 8000

    def __post_init__(self):
        self.dimensions = tuple(float(d) for d in self.dimensions)
        if len(self.dimensions) != 3 or min(self.dimensions) <= 0:
            raise ValueError(f"invalid room dimensions {self.dimensions}")
        absorption = np.broadcast_to(np.asarray(self.absorption, dtype=float), (6,))
        if np.any(absorption <= 0) or np.any(absorption > 1):
            raise ValueError("absorption coefficients must lie in (0, 1]")
        if self.max_order < 0:
            raise ValueError("max_order must be >= 0")

    @property
    def wall_reflection(self) -> np.ndarray:
        """Pressure reflection coefficient per wall."""
        a = np.broadcast_to(np.asarray(self.absorption, dtype=float), (6,))
        return np.sqrt(1.0 - a)

    def contains(self, point) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p > 0) and np.all(p < np.asarray(self.dimensions)))


@dataclass
class ArrayGeometry:
    mic_positions: np.ndarray  # (M, 3)

    def __post_init__(self):
        self.mic_positions = np.atleast_2d(np.asarray(self.mic_positions, dtype=float))
        if self.mic_positions.shape[1] != 3:
            raise ValueError("mic positions must be 3-D")
        diffs = self.mic_positions[:, None] - self.mic_positions[None]
        dist = np.linalg.norm(diffs, axis=-1) + np.eye(len(self.mic_positions))
        if np.any(dist <= 0):
            raise ValueError("microphone positions must be distinct")

    @classmethod
    def linear(cls, n_mics: int, center, offsets=None) -> "ArrayGeometry":
        """Non-uniform linear array along x centered at ``center``."""
        if offsets is None:
            if n_mics not in ARRAY_PRESETS:
                raise ValueError(f"no preset for {n_mics} microphones; pass offsets")
            offsets = ARRAY_PRESETS[n_mics]
        center = np.asarray(center, dtype=float)
        pos = np.tile(center, (len(offsets), 1))
        pos[:, 0] += np.asarray(offsets)
        return cls(pos)

    @property
    def n_mics(self) -> int:
        return len(self.mic_positions)

    @property
    def center(self) -> np.ndarray:
        return self.mic_positions.mean(axis=0)


@dataclass
class MixtureSpec:
    n_speakers: int = 2
    sir_db: float = 0.0
    snr_db: float = 25.0  # math.inf disables noise
    seed: int = 0
    target_index: int = 0

    def __post_init__(self):
        if not 1 <= self.n_speakers <= 3:
            raise ValueError("n_speakers must be 1..3")
        if not -6.0 <= self.sir_db <= 6.0:
            raise ValueError("sir_db must lie in [-6, 6]")
        if not (18.0 <= self.snr_db <= 30.0 or math.isinf(self.snr_db)):
            raise ValueError("snr_db must lie in [18, 30] (or be inf)")


@dataclass
class MixtureBundle:
    mixture: np.ndarray  # (M, N)
    dry_clean_ref: np.ndarray  # (N,)
    reverberant_clean: np.ndarray  # (M, N)
    interference: np.ndarray  # (M, N)
    noise: np.ndarray  # (M, N)
    sample_rate: int
    spec: MixtureSpec = field(default_factory=MixtureSpec)
    metadata: dict = field(default_factory=dict)

    @property
    def interference_plus_noise(self) -> np.ndarray:
        return self.interference + self.noise


# -- image-source method ------------------------------------------------------

def image_sources(room: RoomSpec, src, max_order: int | None = None):
    """Enumerate shoebox image sources.

    Returns (positions (K, 3), gains (K,), orders (K,)) where gain is the
    product of wall reflection coefficients along the image path.
    """
    src = np.asarray(src, dtype=float)
    if not room.contains(src):
        raise ValueError(f"source {src.tolist()} is outside the room")
    order = room.max_order if max_order is None else max_order
    beta = room.wall_reflection
    per_dim = []
    for d, length in enumerate(room.dimensions):
        n = np.arange(-(order // 2) - 1, order // 2 + 2)
        coords, refl0, refl1 = [], [], []
        for p in (0, 1):
            coords.append((1 - 2 * p) * src[d] + 2 * n * length)
            refl0.append(np.abs(n - p))
            refl1.append(np.abs(n))
        coords = np.concatenate(coords)
        refl0 = np.concatenate(refl0)
        refl1 = np.concatenate(refl1)
        keep = refl0 + refl1 <= order
        per_dim.append((coords[keep], refl0[keep], refl1[keep]))

    grids = [np.meshgrid(*[pd[k] for pd in per_dim], indexing="ij") for k in range(3)]
    coords = np.stack([g.ravel() for g in grids[0]], axis=1)
    r0 = np.stack([g.ravel() for g in grids[1]], axis=1)
    r1 = np.stack([g.ravel() for g in grids[2]], axis=1)
    orders = (r0 + r1).sum(axis=1)
    keep = orders <= order
    coords, r0, r1, orders = coords[keep], r0[keep], r1[keep], orders[keep]
    gains = np.prod(beta[0::2] ** r0, axis=1) * np.prod(beta[1::2] ** r1, axis=1)
    return coords, gains, orders


def fractional_delay_taps(delay: np.ndarray, n_taps: int = SINC_TAPS):
    """Hann-windowed sinc interpolation kernels centered at fractional ``delay``.

    Returns (indices (K, n_taps), weights (K, n_taps)).
    """
    delay = np.atleast_1d(np.asarray(delay, dtype=float))
    half = n_taps // 2
    idx = np.floor(delay)[:, None].astype(np.int64) + np.arange(-half, half + 1)[None, :]
    x = idx - delay[:, None]
    win = 0.5 * (1.0 + np.cos(np.pi * x / (half + 1)))
    return idx, np.sinc(x) * win


def image_source_rir(room: RoomSpec, src, mic, max_order: int | None = None,
                     images=None) -> np.ndarray:
    """Room impulse response of length ``room.rir_length`` from ``src`` to ``mic``."""
    mic = np.asarray(mic, dtype=float)
    if not room.contains(mic):
        raise ValueError(f"microphone {mic.tolist()} is outside the room")
    if images is None:
        images = image_sources(room, src, max_order)
    coords, gains, _ = images
    dist = np.linalg.norm(coords - mic, axis=1)
    delay = dist * room.sample_rate / room.speed_of_sound
    keep = (gains > 0) & (delay < room.rir_length + SINC_TAPS)
    delay, amp = delay[keep], gains[keep] / (4.0 * np.pi * dist[keep])
    idx, w = fractional_delay_taps(delay)
    weights = (w * amp[:, None]).ravel()
    idx = idx.ravel()
    valid = (idx >= 0) & (idx < room.rir_length)
    return np.bincount(idx[valid], weights=weights[valid], minlength=room.rir_length)


def room_rirs(room: RoomSpec, src, geometry: ArrayGeometry, max_order: int | None = None):
    images = image_sources(room, src, max_order)
    return np.stack([image_source_rir(room, src, m, images=images)
                     for m in geometry.mic_positions])


def render(source, rirs) -> np.ndarray:
    """Linear convolution of a mono source with each microphone RIR -> (M, N + L - 1)."""
    source = np.asarray(source, dtype=float).ravel()
    rirs = np.atleast_2d(np.asarray(rirs, dtype=float))
    return scipy.signal.fftconvolve(source[None, :], rirs, axes=-1)


def _power(x):
    return float(np.mean(np.square(x)))


def mix(target_reverb, dry_clean_ref, interferers, spec: MixtureSpec, rng=None,
        reference_channel: int = 0, metadata=None) -> MixtureBundle:
    """Scale interferers to ``spec.sir_db`` and add white noise at ``spec.snr_db``.

    Each interferer is scaled individually so that target/interferer power at
    the reference microphone equals the SIR. Components are stored in float32
    and the mixture is their float32 sum, so the bookkeeping is exact on disk.
    """
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    target_reverb = np.atleast_2d(np.asarray(target_reverb, dtype=float))
    n_mics, length = target_reverb.shape
    p_target = _power(target_reverb[reference_channel])
    if p_target <= 0:
        raise ValueError("target source is silent")
    interference = np.zeros_like(target_reverb)
    for k, interferer in enumerate(interferers):
        interferer = np.atleast_2d(np.asarray(interferer, dtype=float))[:, :length]
        if interferer.shape[1] < length:
            interferer = np.pad(interferer, ((0, 0), (0, length - interferer.shape[1])))
        p_int = _power(interferer[reference_channel])
        if p_int <= 0:
            raise ValueError(f"interferer {k} is silent")
        gain = math.sqrt(p_target / (p_int * 10.0 ** (spec.sir_db / 10.0)))
        interference += gain * interferer
    if math.isinf(spec.snr_db):
        noise = np.zeros_like(target_reverb)
    else:
        noise_std = math.sqrt(p_target / 10.0 ** (spec.snr_db / 10.0))
        noise = noise_std * rng.standard_normal(target_reverb.shape)
    dry = np.asarray(dry_clean_ref, dtype=float).ravel()[:length]
    dry = np.pad(dry, (0, length - dry.size))

    rev32 = target_reverb.astype(np.float32)
    int32 = interference.astype(np.float32)
    noise32 = noise.astype(np.float32)
    mixture = (rev32 + int32) + noise32
    return MixtureBundle(mixture, dry.astype(np.float32), rev32, int32, noise32,
                         sample_rate=0, spec=spec, metadata=dict(metadata or {}))


# -- synthetic speech-like sources ---------------------------------------------

def _resonator(freq, bandwidth, fs):
    r = math.exp(-math.pi * bandwidth / fs)
    theta = 2 * math.pi * freq / fs
    a = [1.0, -2 * r * math.cos(theta), r * r]
    b = [1.0 - r]
    return b, a


def synth_speech(duration_s: float, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    """Speech-like test signal: voiced syllables with formants, pauses, and aspiration."""
    n = int(round(duration_s * sample_rate))
    out = np.zeros(n)
    base_f0 = rng.uniform(90, 240)
    pos = int(rng.uniform(0.0, 0.2) * sample_rate)
    while pos < n:
        syl = int(rng.uniform(0.12, 0.32) * sample_rate)
        seg = min(syl, n - pos)
        if seg < 32:
            break
        t = np.arange(seg) / sample_rate
        f0 = base_f0 * (1 + rng.uniform(-0.15, 0.15) + rng.uniform(-0.2, 0.2) * t / max(t[-1], 1e-3))
        phase = 2 * np.pi * np.cumsum(f0) / sample_rate + rng.uniform(0, 2 * np.pi)
        n_harm = int((sample_rate / 2 - 200) // (f0.max()))
        h = np.arange(1, n_harm + 1)[:, None]
        voiced = np.sum(np.sin(h * phase[None, :]) / h, axis=0)
        excitation = voiced + 0.05 * rng.standard_normal(seg)
        sig = np.zeros(seg)
        for fc, bw in ((rng.uniform(300, 900), 80), (rng.uniform(900, 2400), 120),
                       (rng.uniform(2400, 3600), 200)):
            b, a = _resonator(fc, bw, sample_rate)
            sig += scipy.signal.lfilter(b, a, excitation)
        env = np.sin(np.pi * np.arange(seg) / seg) ** 2
        out[pos:pos + seg] += sig * env * rng.uniform(0.5, 1.0)
        pos += seg
        if rng.random() < 0.3:
            pos += int(rng.uniform(0.05, 0.3) * sample_rate)
    peak = np.max(np.abs(out))
    return out / peak * 0.5 if peak > 0 else out


def _load_source_pool(source_dir, sample_rate):
    files = sorted(Path(source_dir).glob("*.wav"))
    if not files:
        raise ValueError(f"no WAV files in {source_dir}")
    return files


def _source_from_dir(files, duration_s, sample_rate, rng):
    path = files[int(rng.integers(len(files)))]
    data, fs = read_wav(path)
    if fs != sample_rate:
        raise ValueError(f"{path} has sample rate {fs}, expected {sample_rate}")
    x = data[0]
    n = int(round(duration_s * sample_rate))
    if x.size >= n:
        start = int(rng.integers(x.size - n + 1))
        x = x[start:start + n]
    else:
        x = np.pad(x, (0, n - x.size))
    if not np.any(x):
        raise ValueError(f"{path} is silent")
    return x


# -- corpus generation -----------------------------------------------------------

@dataclass
class CorpusConfig:
    n_utterances: int = 20
    speaker_weights: dict = field(default_factory=lambda: {"2": 0.5, "3": 0.5})
    sir_db: tuple[float, float] = (-6.0, 6.0)
    snr_db: tuple[float, float] = (18.0, 30.0)
    room_min: tuple[float, float, float] = (4.0, 4.0, 2.7)
    room_max: tuple[float, float, float] = (8.0, 8.0, 3.5)
    absorption: tuple[float, float] = (0.2, 0.6)
    max_order: int = 20
    rir_length: int = 8000
    n_mics: int = 8
    duration_s: float = 4.0
    sample_rate: int = 16000
    speed_of_sound: float = 343.0
    source_distance: tuple[float, float] = (1.0, 2.5)
    reference_channel: int = 0
    source_dir: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown corpus config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self):
        if self.n_utterances < 1:
            raise ValueError("n_utterances must be >= 1")
        weights = {int(k): float(v) for k, v in self.speaker_weights.items()}
        if not weights or any(k not in (1, 2, 3) or v < 0 for k, v in weights.items()):
            raise ValueError("speaker_weights must map 1..3 to nonnegative weights")
        if sum(weights.values()) <= 0:
            raise ValueError("speaker_weights must not all be zero")
        lo, hi = self.sir_db
        if not -6.0 <= lo <= hi <= 6.0:
            raise ValueError("sir_db range must lie within [-6, 6]")
        lo, hi = self.snr_db
        if not 18.0 <= lo <= hi <= 30.0:
            raise ValueError("snr_db range must lie within [18, 30]")
        if self.n_mics not in ARRAY_PRESETS:
            raise ValueError(f"n_mics must be one of {sorted(ARRAY_PRESETS)}")

    def speaker_counts(self) -> list[int]:
        """Largest-remainder allocation of utterances to speaker counts."""
        weights = {int(k): float(v) for k, v in self.speaker_weights.items()}
        total = sum(weights.values())
        keys = sorted(weights)
        exact = [self.n_utterances * weights[k] / total for k in keys]
        counts = [int(math.floor(e)) for e in exact]
        rest = self.n_utterances - sum(counts)
        by_remainder = sorted(range(len(keys)), key=lambda i: (-(exact[i] - counts[i]), keys[i]))
        for i in by_remainder[:rest]:
            counts[i] += 1
        return [k for k, c in zip(keys, counts) for _ in range(c)]


def angle_bucket(angle_deg: float | None) -> str:
    """Bucket of the smallest target-interferer angle; "none" for single-speaker."""
    if angle_deg is None:
        return "none"
    for label in ANGLE_BUCKETS[:-1]:
        if angle_deg < float(label.split("-")[1]):
            return label
    return ANGLE_BUCKETS[-1]


def _azimuth(center, point):
    d = np.asarray(point) - center
    return math.degrees(math.atan2(d[1], d[0]))


def _angle_between(a, b):
    diff = abs(a - b) % 360.0
    return min(diff, 360.0 - diff)


def simulate_utterance(cfg: CorpusConfig, seed: int, index: int, n_speakers: int):
    """Simulate one utterance deterministically from (seed, index)."""
    rng = np.random.default_rng([seed, index])
    fs = cfg.sample_rate
    dims = rng.uniform(cfg.room_min, cfg.room_max)
    absorption = float(rng.uniform(*cfg.absorption))
    room = RoomSpec(tuple(dims), absorption, cfg.max_order, cfg.speed_of_sound, fs, cfg.rir_length)
    margin = 0.5
    max_dist = cfg.source_distance[1]
    center = np.array([
        rng.uniform(min(margin + 0.3, dims[0] / 2), max(dims[0] - margin - 0.3, dims[0] / 2)),
        rng.uniform(min(margin + 0.3, dims[1] / 2), max(dims[1] - margin - 0.3, dims[1] / 2)),
        rng.uniform(1.2, 1.6),
    ])
    geometry = ArrayGeometry.linear(cfg.n_mics, center)
    positions = []
    for _ in range(n_speakers):
        for _attempt in range(1000):
            az = rng.uniform(-math.pi, math.pi)
            dist = rng.uniform(cfg.source_distance[0], max_dist)
            p = center + np.array([dist * math.cos(az), dist * math.sin(az),
                                   rng.uniform(-0.3, 0.3)])
            if np.all(p > margin) and np.all(p < dims - margin):
                positions.append(p)
                break
        else:
            raise RuntimeError("could not place a source inside the room")
    spec = MixtureSpec(n_speakers, float(rng.uniform(*cfg.sir_db)),
                       float(rng.uniform(*cfg.snr_db)), int(seed), 0)

    pool = _load_source_pool(cfg.source_dir, fs) if cfg.source_dir else None
    signals = [(_source_from_dir(pool, cfg.duration_s, fs, rng) if pool
                else synth_speech(cfg.duration_s, fs, rng)) for _ in range(n_speakers)]

    n_out = signals[0].size
    rendered = []
    for sig, pos in zip(signals, positions):
        rendered.append(render(sig, room_rirs(room, pos, geometry))[:, :n_out])
    ref_mic = geometry.mic_positions[cfg.reference_channel]
    direct = image_source_rir(room, positions[0], ref_mic, max_order=0)
    dry = render(signals[0], direct[None])[0, :n_out]

    azimuths = [_azimuth(center, p) for p in positions]
    others = [_angle_between(azimuths[0], a) for a in azimuths[1:]]
    min_angle = min(others) if others else None
    metadata = {
        "room": {"dimensions": list(room.dimensions), "absorption": absorption,
                 "max_order": room.max_order, "speed_of_sound": room.speed_of_sound,
                 "sample_rate": fs, "rir_length": room.rir_length},
        "array": {"mic_positions": geometry.mic_positions.tolist(),
                  "reference_channel": cfg.reference_channel},
        "spec": asdict(spec),
        "source_positions": [p.tolist() for p in positions],
        "azimuths_deg": azimuths,
        "min_angle_deg": min_angle,
        "angle_bucket": angle_bucket(min_angle),
    }
    bundle = mix(rendered[0], dry, rendered[1:], spec, rng, cfg.reference_channel, metadata)
    bundle.sample_rate = fs
    return bundle


COMPONENT_FILES = {
    "mixture": "mixture.wav",
    "reverberant_clean": "reverberant_clean.wav",
    "dry_clean_ref": "dry_clean.wav",
    "interference": "interference.wav",
    "noise": "noise.wav",
}


def write_bundle(bundle: MixtureBundle, utt_dir) -> dict:
    utt_dir = Path(utt_dir)
    utt_dir.mkdir(parents=True, exist_ok=True)
    for attr, name in COMPONENT_FILES.items():
        write_wav(utt_dir / name, getattr(bundle, attr), bundle.sample_rate)
    meta = dict(bundle.metadata)
    meta["component_paths"] = dict(COMPONENT_FILES)
    (utt_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return meta


def load_bundle(utt_dir) -> MixtureBundle:
    utt_dir = Path(utt_dir)
    meta_path = utt_dir / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"missing {meta_path}")
    meta = json.loads(meta_path.read_text())
    parts = {}
    fs = None
    for attr, name in meta.get("component_paths", COMPONENT_FILES).items():
        path = utt_dir / name
        if not path.exists():
            raise FileNotFoundError(f"missing component {path}")
        data, fs = read_wav(path)
        parts[attr] = data[0] if attr == "dry_clean_ref" else data
    spec = MixtureSpec(**meta["spec"])
    return MixtureBundle(parts["mixture"], parts["dry_clean_ref"], parts["reverberant_clean"],
                         parts["interference"], parts["noise"], fs, spec, meta)


def _generate_one(args):
    cfg, seed, index, n_spk, out_dir = args
    utt_id = f"utt{index:05d}"
    bundle = simulate_utterance(cfg, seed, index, n_spk)
    write_bundle(bundle, Path(out_dir) / utt_id)
    return utt_id


def generate_corpus(cfg: CorpusConfig, out_dir, seed: int = 0, jobs: int = 1) -> dict:
    """Write a seeded corpus and its ``corpus.json`` index. Output ignores ``jobs``."""
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    counts = cfg.speaker_counts()
    order = np.random.default_rng([seed, 2**31 - 1]).permutation(len(counts))
    n_spk = [counts[i] for i in order]
    tasks = [(cfg, seed, i, n_spk[i], str(out_dir)) for i in range(cfg.n_utterances)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            ids = list(pool.map(_generate_one, tasks))
    else:
        ids = [_generate_one(t) for t in tasks]
    index = {"seed": seed, "config": asdict(cfg), "utterances": ids,
             "n_speakers": {uid: k for uid, k in zip(ids, n_spk)}}
    (out_dir / "corpus.json").write_text(json.dumps(index, indent=2, sort_keys=True))
    return index


def load_corpus(corpus_dir) -> dict:
    path = Path(corpus_dir) / "corpus.json"
    if not path.exists():
        raise FileNotFoundError(f"no corpus.json in {corpus_dir}")
    return json.loads(path.read_text())
