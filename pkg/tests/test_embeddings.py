"""Toy speaker embedder: discrimination, determinism, span-order invariance."""

import numpy as np
import pytest

from pixkit.embeddings import TOY_EMBEDDING_DIM, ToyEmbedder
from pixkit.errors import ValidationError

from conftest import tone


def _cos_dist(a, b):
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    return 1.0 - float(a @ b)


class TestToyEmbedder:
    def test_dimension(self):
        emb = ToyEmbedder(8000)
        vec = emb([tone(150.0, 1.0, 8000)], 8000)
        assert vec.shape == (TOY_EMBEDDING_DIM,)

    def test_distinct_pitches_separated(self):
        emb = ToyEmbedder(8000)
        a = emb([tone(120.0, 1.0, 8000, seed=1)], 8000)
        b = emb([tone(220.0, 1.0, 8000, seed=2)], 8000)
        assert _cos_dist(a, b) > 0.5

    def test_same_audio_identical(self):
        emb = ToyEmbedder(8000)
        x = tone(180.0, 1.0, 8000)
        np.testing.assert_array_equal(emb([x], 8000), emb([x], 8000))

    def test_span_order_invariance(self):
        emb = ToyEmbedder(8000)
        spans = [tone(150.0, d, 8000, seed=s) for s, d in enumerate((0.5, 0.8, 0.3))]
        fwd = emb(spans, 8000)
        rev = emb(spans[::-1], 8000)
        assert np.max(np.abs(fwd - rev)) < 1e-6

    def test_rate_mismatch_rejected(self):
        emb = ToyEmbedder(8000)
        with pytest.raises(ValidationError):
            emb([tone(150.0, 1.0, 16000)], 16000)

    def test_empty_input_rejected(self):
        emb = ToyEmbedder(8000)
        with pytest.raises(ValidationError):
            emb([], 8000)
        with pytest.raises(ValidationError):
            emb([np.zeros(0)], 8000)

    def test_corpus_speakers_separable(self, session_8k):
        """Embeddings of each speaker's own source audio cluster by speaker."""
        emb = ToyEmbedder(8000)
        sr = session_8k.sample_rate
        vecs = {}
        for spk, src in session_8k.sources.items():
            x = src.astype(np.float64) / 32768.0
            spans = [
                x[int(seg.start * sr) : int(seg.end * sr)]
                for seg in session_8k.annotation.segments
                if seg.speaker == spk
            ]
            first, second = spans[: len(spans) // 2], spans[len(spans) // 2 :]
            vecs[spk] = (emb(first, sr), emb(second, sr))
        speakers = sorted(vecs)
        within = [_cos_dist(*vecs[s]) for s in speakers]
        across = _cos_dist(vecs[speakers[0]][0], vecs[speakers[1]][0])
        assert max(within) < across
        assert across > 0.5
