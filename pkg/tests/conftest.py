import os
import sys

import numpy as np
import pytest

ROOT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT_DIR not in sys.path:
    sys.path.insert(0, ROOT_DIR)

os.environ.setdefault("ENABLE_FILE_LOGS", "false")

from fedsim.audio_io import AudioClip, SynthCorpusSpec, synth_corpus, write_wav  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end training scenarios (deselect with -m 'not slow')")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_spec():
    return SynthCorpusSpec(n_classes=3, n_speakers=4, clips_per_speaker_per_class=2, clip_seconds=0.25, sample_rate=8000, seed=3)


@pytest.fixture
def tiny_corpus(tiny_spec):
    return synth_corpus(tiny_spec)


@pytest.fixture
def sine_clip():
    t = np.arange(16000) / 16000.0
    return AudioClip(0.5 * np.sin(2 * np.pi * 440.0 * t), 16000)


@pytest.fixture
def wav_writer(tmp_path):
    def _write(name, samples, sample_rate=16000):
        path = tmp_path / name
        write_wav(path, AudioClip(samples, sample_rate))
        return path

    return _write
