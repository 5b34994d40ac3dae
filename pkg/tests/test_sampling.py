"""Chunk and mixture-of-mixtures sampling invariants."""

import numpy as np
import pytest

from pixkit.corpus import Recording
from pixkit.errors import ValidationError
from pixkit.sampling import (
    NULL_SPEAKER,
    MomSampler,
    build_mom,
    extract_chunk,
    rms_dbfs,
)

from conftest import make_annotation


def _recording(seed=0, duration_s=30.0, sample_rate=8000):
    rng = np.random.default_rng(seed)
    audio = 0.1 * rng.normal(size=int(duration_s * sample_rate))
    ann = make_annotation(
        [("A", 0.0, 10.0), ("B", 12.0, 20.0), ("C", 22.0, 28.0)], "rec"
    )
    return Recording("rec", audio, sample_rate, ann)


class TestBuildMom:
    def test_disjoint_chunks_accepted(self):
        rec = _recording()
        c1 = extract_chunk(rec, 2.0, 2.0, 20.0)  # speaker A
        c2 = extract_chunk(rec, 14.0, 2.0, 20.0)  # speaker B
        mom = build_mom(c1, c2, k_max=3)
        np.testing.assert_array_equal(mom.mom_audio, c1.audio + c2.audio)
        assert mom.mom_labels.values.shape[0] == 3
        named = [s for s in mom.mom_labels.speakers if s != NULL_SPEAKER]
        assert named == ["A", "B"]
        # every named row equals the corresponding chunk row
        np.testing.assert_array_equal(mom.mom_labels.values[0], c1.labels.values[0])
        np.testing.assert_array_equal(mom.mom_labels.values[1], c2.labels.values[0])

    def test_shared_speaker_rejected(self):
        rec = _recording()
        c1 = extract_chunk(rec, 2.0, 2.0, 20.0)
        c2 = extract_chunk(rec, 4.0, 2.0, 20.0)  # also speaker A
        with pytest.raises(ValidationError, match="overlap"):
            build_mom(c1, c2, k_max=3)

    def test_k_max_exceeded_rejected(self):
        rec = _recording()
        c1 = extract_chunk(rec, 2.0, 2.0, 20.0)
        c2 = extract_chunk(rec, 14.0, 2.0, 20.0)
        with pytest.raises(ValidationError, match="k_max"):
            build_mom(c1, c2, k_max=1)

    def test_cross_recording_rejected(self):
        rec1, rec2 = _recording(), _recording()
        rec2.recording_id = "other"
        c1 = extract_chunk(rec1, 2.0, 2.0, 20.0)
        c2 = extract_chunk(rec2, 14.0, 2.0, 20.0)
        c2.recording_id = "other"
        with pytest.raises(ValidationError, match="same recording"):
            build_mom(c1, c2, k_max=3)

    def test_silent_first_chunk(self):
        rec = _recording()
        c1 = extract_chunk(rec, 10.5, 1.0, 20.0)  # nobody active
        c2 = extract_chunk(rec, 14.0, 1.0, 20.0)
        assert c1.labels.values.shape[0] == 0
        mom = build_mom(c1, c2, k_max=3)
        named = [s for s in mom.mom_labels.speakers if s != NULL_SPEAKER]
        assert named == ["B"]


class TestExtractChunk:
    def test_out_of_bounds_rejected(self):
        with pytest.raises(ValidationError):
            extract_chunk(_recording(), 29.5, 2.0, 20.0)

    def test_active_speakers_only(self):
        chunk = extract_chunk(_recording(), 2.0, 2.0, 20.0)
        assert chunk.labels.speakers == ["A"]


class TestMomSampler:
    def test_reproducible(self, small_corpus):
        s1 = MomSampler(small_corpus.train, 2.0, 3, 20.0, seed=7)
        s2 = MomSampler(small_corpus.train, 2.0, 3, 20.0, seed=7)
        for _ in range(10):
            a, b = s1.sample_mom(), s2.sample_mom()
            assert a.chunk1.offset_s == b.chunk1.offset_s
            assert a.chunk2.offset_s == b.chunk2.offset_s
            np.testing.assert_array_equal(a.mom_audio, b.mom_audio)

    def test_invariant_audit(self, small_corpus):
        sampler = MomSampler(small_corpus.train, 2.0, 3, 20.0, seed=0)
        for _ in range(300):
            s = sampler.sample_mom()
            spk1 = set(s.chunk1.labels.speakers)
            spk2 = set(s.chunk2.labels.speakers)
            assert not spk1 & spk2
            assert len(spk1 | spk2) <= 3
            assert s.chunk1.recording_id == s.chunk2.recording_id
            np.testing.assert_array_equal(s.mom_audio, s.chunk1.audio + s.chunk2.audio)
            assert s.mom_labels.values.shape[0] == 3
            # padding rows are zero and carry the reserved null id
            for k, spk in enumerate(s.mom_labels.speakers):
                if spk == NULL_SPEAKER:
                    assert not s.mom_labels.values[k].any()

    def test_rms_floor_respected(self, small_corpus):
        sampler = MomSampler(small_corpus.train, 2.0, 3, 20.0, seed=1)
        for _ in range(50):
            chunk = sampler.sample_chunk()
            assert rms_dbfs(chunk.audio) >= -60.0

    def test_recording_choice_roughly_uniform(self, small_corpus):
        sampler = MomSampler(small_corpus.train, 2.0, 3, 20.0, seed=2)
        counts = {}
        n = 400
        for _ in range(n):
            chunk = sampler.sample_chunk()
            counts[chunk.recording_id] = counts.get(chunk.recording_id, 0) + 1
        assert len(counts) == len(small_corpus.train)
        for c in counts.values():
            assert abs(c / n - 0.5) < 0.1
