import csv
import io
import json
import math

import numpy as np
import pytest

from wpdpp import metrics, pipeline, simroom
from wpdpp.audio_io import write_wav
from wpdpp.simroom import ArrayGeometry, MixtureSpec, RoomSpec


def write_enhanced(tmp_path, corpus, method, label=None):
    out = tmp_path / (label or method)
    out.mkdir()
    index = simroom.load_corpus(corpus)
    utterances = {}
    for utt in index["utterances"]:
        b = simroom.load_bundle(corpus / utt)
        res = pipeline.enhance(b.mixture, None, method, dry_clean_ref=b.dry_clean_ref)
        write_wav(out / f"{utt}.wav", res.waveform, b.sample_rate)
        utterances[utt] = {"output": f"{utt}.wav"}
    taps = pipeline.DEFAULT_TAPS.get(method)
    (out / "manifest.json").write_text(json.dumps(
        {"label": label or method, "method": method, "taps": taps, "reference_channel": 0,
         "utterances": utterances}))
    return out


def test_si_snr_metric_examples(rng):
    s = rng.standard_normal(1000)
    assert metrics.si_snr_metric(s, s) == 60.0
    room = RoomSpec((20.0, 20.0, 6.0), absorption=1.0, max_order=0, rir_length=2000)
    geometry = ArrayGeometry.linear(2, (10.0, 10.0, 1.5))
    sources = [simroom.synth_speech(2.0, 16000, np.random.default_rng([3, k])) for k in range(2)]
    rendered = [simroom.render(x, simroom.room_rirs(room, p, geometry))[:, :32000]
                for x, p in zip(sources, ([12.0, 11.0, 1.5], [8.0, 12.0, 1.5]))]
    b = simroom.mix(rendered[0], rendered[0][0], [rendered[1]], MixtureSpec(2, 0.0, math.inf))
    assert abs(metrics.si_snr_metric(b.mixture[0], b.dry_clean_ref)) < 0.5


def test_passthrough_and_mask_only(tiny_corpus, tmp_path):
    mask_dir = write_enhanced(tmp_path, tiny_corpus, "mask-only")
    rows = metrics.evaluate_corpus(tiny_corpus, [mask_dir])
    passthrough = [r for r in rows if r["method"] == "passthrough"]
    masked = [r for r in rows if r["method"] == "mask-only"]
    assert len(passthrough) == len(masked) == 4
    assert all(r["si_snri"] == 0.0 for r in passthrough)
    assert all(r["si_snr_dry"] > 0 for r in masked)
    assert all(r["si_snri"] > 0 for r in masked)


def test_grouping_partitions_and_means(tiny_corpus, tmp_path):
    rows = metrics.evaluate_corpus(tiny_corpus, [write_enhanced(tmp_path, tiny_corpus, "mvdr")])
    agg = metrics.aggregate(rows)
    assert set(agg) == {"passthrough", "mvdr[0]"}
    for label, block in agg.items():
        sel = [r for r in rows if (f"{r['method']}[{r['taps']}]" if r["taps"] else r["method"]) == label]
        assert sum(v["n"] for v in block["by_angle"].values()) == len(sel)
        assert sum(v["n"] for v in block["by_n_spk"].values()) == len(sel)
        for key in ("si_snr_dry", "si_snr_reverb", "si_snri"):
            assert abs(block["overall"][key] - np.mean([r[key] for r in sel])) < 1e-9
            for bucket, stats in block["by_angle"].items():
                group = [r[key] for r in sel if r["angle_bucket"] == bucket]
                assert abs(stats[key] - np.mean(group)) < 1e-9
    buckets = {r["angle_bucket"] for r in rows}
    assert buckets <= set(simroom.ANGLE_BUCKETS) | {"none"}
    assert {r["n_spk"] for r in rows} == {1, 2, 3}


def test_csv_report_is_reproducible(tiny_corpus, tmp_path):
    enhanced = write_enhanced(tmp_path, tiny_corpus, "mask-only")
    a = metrics.rows_to_csv(metrics.evaluate_corpus(tiny_corpus, [enhanced]))
    b = metrics.rows_to_csv(metrics.evaluate_corpus(tiny_corpus, [enhanced]))
    assert a == b
    header = next(csv.reader(io.StringIO(a)))
    assert tuple(header) == metrics.REPORT_COLUMNS
    agg = metrics.write_report(metrics.evaluate_corpus(tiny_corpus, [enhanced]),
                               tmp_path / "r.csv", tmp_path / "r.json")
    assert (tmp_path / "r.csv").read_text() == a and "mask-only" in agg


def test_missing_inputs(tiny_corpus, tmp_path):
    with pytest.raises(FileNotFoundError):
        metrics.evaluate_corpus(tiny_corpus, [tmp_path])
    with pytest.raises(FileNotFoundError):
        metrics.evaluate_corpus(tmp_path, [])
