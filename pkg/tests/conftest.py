import sys

import numpy as np
import pytest

from wpdpp import simroom


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture(scope="session")
def small_bundle():
    """A short 4-mic, 2-speaker reverberant mixture."""
    cfg = simroom.CorpusConfig(n_mics=4, duration_s=1.5, rir_length=4000, max_order=12)
    return simroom.simulate_utterance(cfg, seed=3, index=0, n_speakers=2)


TINY_CONFIG = {"n_utterances": 4, "n_mics": 4, "duration_s": 1.0, "max_order": 6,
               "rir_length": 2000, "speaker_weights": {"1": 0.25, "2": 0.5, "3": 0.25}}


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """A 4-utterance corpus on disk (1, 2 and 3 speakers)."""
    out = tmp_path_factory.mktemp("corpus")
    simroom.generate_corpus(simroom.CorpusConfig.from_dict(TINY_CONFIG), out, seed=21)
    return out


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
