"""Shared fixtures: a small on-disk corpus and helper constructors."""

from __future__ import annotations

import numpy as np
import pytest

from pixkit.annotations import Annotation
from pixkit.corpus import load_manifest
from pixkit.synth import SynthScenario, generate_corpus, generate_session


@pytest.fixture(scope="session")
def small_corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    scenario = SynthScenario(
        num_speakers=2,
        session_length_s=30.0,
        sample_rate_hz=8000,
        seed=5,
    )
    manifest = generate_corpus(scenario, out, train_sessions=2, dev_sessions=1)
    return manifest


@pytest.fixture(scope="session")
def small_corpus(small_corpus_dir):
    return load_manifest(small_corpus_dir)


@pytest.fixture(scope="session")
def session_8k():
    scn = SynthScenario(
        num_speakers=2, session_length_s=30.0, sample_rate_hz=8000, seed=11
    )
    return generate_session(scn, "sess11")


def make_annotation(segments, recording_id="rec") -> Annotation:
    ann = Annotation(recording_id)
    for spk, start, end in segments:
        ann.add(spk, start, end)
    return ann


def tone(f0: float, duration_s: float, sample_rate: int, seed: int = 0) -> np.ndarray:
    """Harmonic complex test signal."""
    t = np.arange(int(duration_s * sample_rate)) / sample_rate
    rng = np.random.default_rng(seed)
    wave = np.zeros_like(t)
    h = 1
    while h * f0 < sample_rate / 2 - 50 and h <= 8:
        wave += rng.uniform(0.3, 1.0) / h * np.sin(2 * np.pi * h * f0 * t)
        h += 1
    return 0.3 * wave / np.max(np.abs(wave))
