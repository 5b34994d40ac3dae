"""Training-example construction: random chunks, speaker-disjoint chunk
pairs from the same recording, and their mixture of mixtures.

The sampler owns an explicit RNG; one sampler per worker, no global state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .annotations import ActivationMatrix, rasterize
from .corpus import Recording
from .errors import RuntimeFailure, ValidationError

NULL_SPEAKER = "<pad>"

DEFAULT_RMS_FLOOR_DBFS = -60.0
SECOND_CHUNK_RETRIES = 50
FIRST_CHUNK_RESTARTS = 10


@dataclass
class Chunk:
    recording_id: str
    offset_s: float
    duration_s: float
    audio: np.ndarray
    labels: ActivationMatrix


@dataclass
class MoMSample:
    """Two speaker-disjoint chunks, their sample-wise sum, and the merged
    label matrix padded with null-speaker rows to k_max."""

    chunk1: Chunk
    chunk2: Chunk
    mom_audio: np.ndarray
    mom_labels: ActivationMatrix


def extract_chunk(
    rec: Recording, offset_s: float, duration_s: float, frame_rate: float
) -> Chunk:
    """Cut a chunk and rasterize labels for the speakers active inside it,
    ordered by first-activity time."""
    a = int(round(offset_s * rec.sample_rate))
    b = a + int(round(duration_s * rec.sample_rate))
    if a < 0 or b > len(rec.audio):
        raise ValidationError(
            f"chunk [{offset_s}, {offset_s + duration_s}) outside {rec.recording_id}"
        )
    window = (offset_s, offset_s + duration_s)
    labels = rasterize(rec.annotation, window, frame_rate)
    return Chunk(rec.recording_id, offset_s, duration_s, rec.audio[a:b].copy(), labels)


def build_mom(chunk1: Chunk, chunk2: Chunk, k_max: int) -> MoMSample:
    """Merge two chunks into a MoM sample, enforcing every invariant:
    same recording, disjoint speaker sets, K1 + K2 <= k_max, exact audio
    additivity. Label rows are chunk1 speakers then chunk2 speakers, padded
    with zero rows carrying the reserved null speaker id."""
    if chunk1.recording_id != chunk2.recording_id:
        raise ValidationError("MoM chunks must come from the same recording")
    if len(chunk1.audio) != len(chunk2.audio):
        raise ValidationError("MoM chunks must have equal length")
    s1, s2 = set(chunk1.labels.speakers), set(chunk2.labels.speakers)
    if s1 & s2:
        raise ValidationError(f"speaker sets overlap: {sorted(s1 & s2)}")
    k_total = len(s1) + len(s2)
    if k_total > k_max:
        raise ValidationError(f"{k_total} speakers exceed k_max={k_max}")
    if chunk1.labels.frame_rate != chunk2.labels.frame_rate:
        raise ValidationError("label frame rates differ")
    t = chunk1.labels.num_frames
    rows = np.zeros((k_max, t))
    speakers: list[str] = []
    filled = 0
    for chunk in (chunk1, chunk2):
        for i, spk in enumerate(chunk.labels.speakers):
            rows[filled] = chunk.labels.values[i]
            speakers.append(spk)
            filled += 1
    speakers.extend(NULL_SPEAKER for _ in range(k_max - filled))
    labels = ActivationMatrix(speakers, chunk1.labels.frame_rate, rows)
    return MoMSample(chunk1, chunk2, chunk1.audio + chunk2.audio, labels)


def rms_dbfs(audio: np.ndarray) -> float:
    rms = float(np.sqrt(np.mean(np.square(audio)))) if len(audio) else 0.0
    return 20.0 * math.log10(max(rms, 1e-12))


class MomSampler:
    """Draws chunks and MoM samples from a list of recordings.

    Reproducible given (recordings, seed); near-silent chunks (RMS below the
    floor) are resampled during MoM construction because the SI-SDR target is
    ill-conditioned for silence.
    """

    def __init__(
        self,
        recordings: list[Recording],
        duration_s: float,
        k_max: int = 3,
        frame_rate: float = 20.0,
        seed: int = 0,
        rms_floor_dbfs: float = DEFAULT_RMS_FLOOR_DBFS,
    ):
        if k_max < 1:
            raise ValidationError("k_max must be >= 1")
        self.recordings = [r for r in recordings if r.duration_s >= duration_s]
        if not self.recordings:
            raise ValidationError(
                f"no recording is at least {duration_s} s long"
            )
        self.duration_s = duration_s
        self.k_max = k_max
        self.frame_rate = frame_rate
        self.rms_floor_dbfs = rms_floor_dbfs
        self.rng = np.random.default_rng(seed)
        slack = np.array([r.duration_s - duration_s for r in self.recordings])
        self._weights = (slack + 0.05) / np.sum(slack + 0.05)

    def _draw(self, rec: Recording | None = None) -> Chunk:
        if rec is None:
            idx = int(self.rng.choice(len(self.recordings), p=self._weights))
            rec = self.recordings[idx]
        max_off = int(round((rec.duration_s - self.duration_s) * rec.sample_rate))
        offset = int(self.rng.integers(0, max_off + 1))
        return extract_chunk(
            rec, offset / rec.sample_rate, self.duration_s, self.frame_rate
        )

    def sample_chunk(self, rec: Recording | None = None, max_tries: int = 100) -> Chunk:
        """Uniformly random (recording, offset) chunk with at most k_max
        active speakers."""
        for _ in range(max_tries):
            chunk = self._draw(rec)
            if len(chunk.labels.speakers) <= self.k_max:
                return chunk
        raise RuntimeFailure(
            f"no chunk with <= {self.k_max} speakers found in {max_tries} tries"
        )

    def sample_mom(self) -> MoMSample:
        """Draw a MoM: the second chunk comes from the same recording as the
        first, with disjoint speakers and K1 + K2 <= k_max."""
        by_id = {r.recording_id: r for r in self.recordings}
        for _ in range(FIRST_CHUNK_RESTARTS):
            # chunk1 must be non-silent and leave a speaker slot free: its
            # only partner otherwise would be silence, which the RMS floor
            # rejects
            chunk1 = None
            for _ in range(200):
                candidate = self._draw()
                cap = min(
                    self.k_max - 1,
                    len(by_id[candidate.recording_id].annotation.speakers) - 1,
                )
                if (
                    len(candidate.labels.speakers) <= cap
                    and rms_dbfs(candidate.audio) >= self.rms_floor_dbfs
                ):
                    chunk1 = candidate
                    break
            if chunk1 is None:
                continue
            rec = by_id[chunk1.recording_id]
            spk1 = set(chunk1.labels.speakers)
            for _ in range(SECOND_CHUNK_RETRIES):
                chunk2 = self._draw(rec)
                if rms_dbfs(chunk2.audio) < self.rms_floor_dbfs:
                    continue
                spk2 = set(chunk2.labels.speakers)
                if spk1 & spk2 or len(spk1) + len(spk2) > self.k_max:
                    continue
                return build_mom(chunk1, chunk2, self.k_max)
        raise RuntimeFailure(
            "failed to build a speaker-disjoint MoM within the retry budget"
        )
