"""Deterministic synthetic meeting corpus with known ground truth.

Speakers are harmonic tone complexes with distinct fundamentals plus a
little shaped noise, so oracle separation, toy embeddings, and metric
oracles all have clean targets. Sessions are built from speaker turns so
that long-form audio contains single-speaker stretches (needed by the
speaker-disjoint MoM sampler) with overlap injected at turn changes.

All utterance boundaries are snapped to a 50 ms grid, which matches the
default activation frame rate and keeps rasterization exactly invertible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .annotations import Annotation, Word, WordChannel, write_ctm, write_rttm
from .errors import RuntimeFailure, ValidationError

TIME_GRID_S = 0.05
SOURCE_PEAK = 0.29  # per-speaker peak; 3 concurrent speakers stay clear of full scale
TOKEN_PERIOD_S = 0.3


class GenerationError(RuntimeFailure):
    pass


@dataclass(frozen=True)
class SynthSpeakerProfile:
    speaker_id: str
    fundamental_hz: float
    timbre_seed: int
    level_db: float = 0.0
    band_hi_hz: float = 0.0  # harmonics stay below this; 0 means Nyquist - 50


@dataclass
class SynthScenario:
    num_speakers: int = 2
    session_length_s: float = 60.0
    overlap_ratio_target: float = 0.2
    utterance_length_s: tuple[float, float] = (1.0, 3.0)
    silence_ratio_target: float = 0.1
    sample_rate_hz: int = 16000
    seed: int = 0
    turn_length_s: float = 8.0

    def __post_init__(self):
        if self.num_speakers < 1:
            raise ValidationError("num_speakers must be >= 1")
        if self.sample_rate_hz not in (8000, 16000):
            raise ValidationError("sample_rate_hz must be 8000 or 16000")
        if not 0.0 <= self.overlap_ratio_target < 1.0:
            raise ValidationError("overlap_ratio_target must be in [0, 1)")
        if not 0.0 <= self.silence_ratio_target < 1.0:
            raise ValidationError("silence_ratio_target must be in [0, 1)")
        if self.num_speakers == 1 and self.overlap_ratio_target > 0.0:
            raise ValidationError("overlap is impossible with a single speaker")
        lo, hi = self.utterance_length_s
        if not 0.2 <= lo <= hi:
            raise ValidationError("utterance_length_s must satisfy 0.2 <= lo <= hi")

    @classmethod
    def from_dict(cls, data: dict) -> "SynthScenario":
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in data.items() if k in known}
        if "utterance_length_s" in kwargs:
            kwargs["utterance_length_s"] = tuple(kwargs["utterance_length_s"])
        return cls(**kwargs)


@dataclass
class Session:
    recording_id: str
    sample_rate: int
    mixture: np.ndarray  # int16
    sources: dict[str, np.ndarray]  # speaker_id -> int16
    annotation: Annotation
    word_channels: list[WordChannel] = field(default_factory=list)


LEXICON: list[str] = [
    c1 + v1 + c2 + "a"
    for c1 in ("b", "d", "k", "m", "n")
    for v1 in ("a", "e", "i", "o")
    for c2 in ("l", "r", "s", "t", "v")
][:100]


def _snap(t: float) -> float:
    return round(round(t / TIME_GRID_S) * TIME_GRID_S, 6)


def make_profiles(
    num_speakers: int, rng: np.random.Generator, sample_rate: int = 16000
) -> list[SynthSpeakerProfile]:
    """Distinct fundamentals at least 20 Hz apart, seeded timbre and level.

    Each speaker's harmonics occupy a disjoint frequency band (a geometric
    partition of [130 Hz, 0.92 * Nyquist]), so speakers never interleave
    spectrally; this keeps the corpus trivially separable even through a
    short analysis window whose mainlobe is wider than one harmonic spacing.
    """
    edges = np.geomspace(130.0, 0.92 * sample_rate / 2.0, num_speakers + 1)
    profiles = []
    for i in range(num_speakers):
        f0 = float(edges[i]) * (1.0 + float(rng.uniform(0.0, 0.08)))
        profiles.append(
            SynthSpeakerProfile(
                speaker_id=f"spk{i:02d}",
                fundamental_hz=f0,
                timbre_seed=int(rng.integers(0, 2**31 - 1)),
                level_db=float(rng.uniform(-2.0, 0.0)),
                band_hi_hz=float(edges[i + 1]),
            )
        )
    return profiles


@dataclass(frozen=True)
class _Utterance:
    speaker: str
    start: float
    end: float


def _plan_timeline(scn: SynthScenario, rng: np.random.Generator) -> list[_Utterance]:
    """Lay out sequential speaker turns on the time grid.

    Overlap comes from interjections: an utterance by another speaker placed
    strictly inside the current one, sized to steer the realized overlap
    ratio (overlapped / total speech) toward the target. Silence comes from
    steered gaps between utterances. Turns keep long single-speaker
    stretches, which the speaker-disjoint MoM sampler relies on.
    """
    lo, hi = scn.utterance_length_s
    utts: list[_Utterance] = []
    speech_union = 0.0
    overlap_time = 0.0
    cursor = 0.0  # end of the latest host utterance
    speaker_idx = 0
    rho = scn.overlap_ratio_target
    sigma = scn.silence_ratio_target

    while cursor < scn.session_length_s - lo:
        speaker = f"spk{speaker_idx % scn.num_speakers:02d}"
        turn_budget = scn.turn_length_s * float(rng.uniform(0.7, 1.3))
        turn_used = 0.0
        first_in_turn = True
        prev_dur = utts[-1].end - utts[-1].start if utts else 0.0
        while turn_used < turn_budget and cursor < scn.session_length_s - lo:
            dur = max(_snap(float(rng.uniform(lo, hi))), 4 * TIME_GRID_S)
            ov = 0.0
            if first_in_turn and utts and scn.num_speakers > 1 and rho > 0.0:
                # overlapped handover: start inside the previous speaker's tail
                want = rho * speech_union - overlap_time
                limit = min(dur, prev_dur) - TIME_GRID_S
                ov = _snap(min(max(want, 0.0), max(limit, 0.0)))
            if ov > 0.0:
                start = _snap(cursor - ov)
            else:
                # steer realized silence ratio ((elapsed - union) / elapsed)
                gap = 0.0
                if sigma > 0.0:
                    gap = (sigma * (cursor + dur) - (cursor - speech_union)) / (1.0 - sigma)
                gap = _snap(min(max(gap, 0.0), 3.0))
                start = _snap(cursor + gap)
            end = _snap(start + dur)
            if end > scn.session_length_s:
                break
            utts.append(_Utterance(speaker, start, end))
            overlap_time += ov
            speech_union += (end - start) - ov
            cursor = max(cursor, end)
            turn_used += dur
            first_in_turn = False
            # big interjection by another speaker once the overlap deficit has
            # accumulated; keeping them rare preserves single-speaker stretches
            if scn.num_speakers > 1 and rho > 0.0:
                want = rho * speech_union - overlap_time
                limit = (end - start) - 2 * TIME_GRID_S
                if want >= max(1.0, 4 * TIME_GRID_S) and limit >= 4 * TIME_GRID_S:
                    other = f"spk{(speaker_idx + 1) % scn.num_speakers:02d}"
                    i_start = _snap(start + TIME_GRID_S)
                    i_end = _snap(i_start + min(want, limit))
                    utts.append(_Utterance(other, i_start, i_end))
                    overlap_time += i_end - i_start
        speaker_idx += 1
    if not utts:
        raise GenerationError("session too short for the requested utterance lengths")
    return utts


def _utterance_wave(
    profile: SynthSpeakerProfile, duration_s: float, sample_rate: int, start_s: float
) -> np.ndarray:
    """Harmonic complex plus low-level lowpassed noise, raised-cosine edges."""
    n = int(round(duration_s * sample_rate))
    t = (np.arange(n) + round(start_s * sample_rate)) / sample_rate
    timbre = np.random.default_rng(profile.timbre_seed)
    band_hi = profile.band_hi_hz if profile.band_hi_hz > 0 else sample_rate / 2.0 - 50.0
    band_hi = min(band_hi, sample_rate / 2.0 - 50.0)
    max_h = max(1, min(8, int(band_hi / profile.fundamental_hz)))
    amps = timbre.uniform(0.4, 1.0, size=max_h)
    phases = timbre.uniform(0.0, 2 * np.pi, size=max_h)
    wave = np.zeros(n)
    for h in range(max_h):
        wave += amps[h] * np.sin(2 * np.pi * profile.fundamental_hz * (h + 1) * t + phases[h])
    # shaped noise ~ -26 dB below the tonal part, deterministic per utterance
    noise_rng = np.random.default_rng(
        (profile.timbre_seed * 1000003 + int(round(start_s / TIME_GRID_S))) % (2**63)
    )
    noise = noise_rng.standard_normal(n)
    spec = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    spec[(freqs < 0.8 * profile.fundamental_hz) | (freqs > band_hi)] = 0.0
    noise = np.fft.irfft(spec, n=n)
    noise_peak = max(float(np.max(np.abs(noise))), 1e-12)
    wave += 0.05 * np.max(np.abs(wave)) * noise / noise_peak
    # 4 Hz amplitude modulation keeps activity detection non-trivial but easy
    wave *= 0.8 + 0.2 * np.sin(2 * np.pi * 4.0 * t)
    ramp = max(1, int(0.01 * sample_rate))
    env = np.ones(n)
    env[:ramp] = 0.5 * (1 - np.cos(np.pi * np.arange(ramp) / ramp))
    env[-ramp:] = env[:ramp][::-1]
    wave *= env
    peak = np.max(np.abs(wave))
    if peak > 0:
        wave *= SOURCE_PEAK * 10 ** (profile.level_db / 20.0) / peak
    return wave


def _utterance_words(
    utt: _Utterance, rng: np.random.Generator
) -> list[Word]:
    dur = utt.end - utt.start
    count = max(1, int(math.floor(dur / TOKEN_PERIOD_S)))
    step = dur / count
    return [
        Word(LEXICON[int(rng.integers(0, len(LEXICON)))], round(utt.start + i * step, 6), round(step, 6))
        for i in range(count)
    ]


def generate_session(scn: SynthScenario, recording_id: str = "session0") -> Session:
    """Build one session: mixture, aligned per-speaker sources, annotation,
    per-speaker word channels. Deterministic from the scenario seed.

    Invariants: the mixture is the exact integer sum of the sources, each
    source is zero outside its speaker's annotated segments, and the realized
    overlap ratio is within +-0.1 of the target.
    """
    rng = np.random.default_rng(scn.seed)
    profiles = {p.speaker_id: p for p in make_profiles(scn.num_speakers, rng, scn.sample_rate_hz)}
    utts = _plan_timeline(scn, rng)

    sr = scn.sample_rate_hz
    n_total = int(round(scn.session_length_s * sr))
    sources_f = {spk: np.zeros(n_total) for spk in profiles}
    ann = Annotation(recording_id)
    words_by_spk: dict[str, list[Word]] = {spk: [] for spk in profiles}
    word_rng = np.random.default_rng(scn.seed + 1)
    for utt in utts:
        ann.add(utt.speaker, utt.start, utt.end)
        a = int(round(utt.start * sr))
        b = int(round(utt.end * sr))
        sources_f[utt.speaker][a:b] += _utterance_wave(
            profiles[utt.speaker], utt.end - utt.start, sr, utt.start
        )
        words_by_spk[utt.speaker].extend(_utterance_words(utt, word_rng))
    ann.segments.sort()

    realized = overlap_ratio(ann)
    if abs(realized - scn.overlap_ratio_target) > 0.1:
        raise GenerationError(
            f"realized overlap {realized:.3f} outside +-0.1 of target "
            f"{scn.overlap_ratio_target:.3f}; adjust utterance/turn lengths"
        )

    sources = {
        spk: np.clip(np.round(w * 32767.0), -32768, 32767).astype(np.int16)
        for spk, w in sources_f.items()
    }
    mixture = np.zeros(n_total, dtype=np.int64)
    for w in sources.values():
        mixture += w
    if np.max(np.abs(mixture)) > 32767:
        raise GenerationError("mixture clipped; lower per-speaker levels")
    channels = [
        WordChannel(spk, sorted(words_by_spk[spk], key=lambda w: w.start))
        for spk in sorted(words_by_spk)
        if words_by_spk[spk]
    ]
    return Session(recording_id, sr, mixture.astype(np.int16), sources, ann, channels)


def overlap_ratio(ann: Annotation) -> float:
    """Time with >= 2 active speakers over time with >= 1 active speaker."""
    bounds = sorted({t for s in ann.segments for t in (s.start, s.end)})
    speech = overlap = 0.0
    for a, b in zip(bounds, bounds[1:]):
        mid = 0.5 * (a + b)
        active = sum(1 for s in ann.segments if s.start <= mid < s.end)
        if active >= 1:
            speech += b - a
        if active >= 2:
            overlap += b - a
    return overlap / speech if speech > 0 else 0.0


def silence_ratio(ann: Annotation, session_length_s: float) -> float:
    bounds = sorted({t for s in ann.segments for t in (s.start, s.end)})
    speech = 0.0
    for a, b in zip(bounds, bounds[1:]):
        mid = 0.5 * (a + b)
        if any(s.start <= mid < s.end for s in ann.segments):
            speech += b - a
    return max(session_length_s - speech, 0.0) / session_length_s


# --- on-disk layout ----------------------------------------------------------


def write_session(session: Session, out_dir: Path) -> dict:
    """Write `<out>/<session>/mixture.wav`, `sources/<spk>.wav`, `ref.rttm`,
    `ref.ctm`; returns the manifest entry."""
    root = Path(out_dir) / session.recording_id
    (root / "sources").mkdir(parents=True, exist_ok=True)
    wavfile.write(root / "mixture.wav", session.sample_rate, session.mixture)
    for spk, wave in sorted(session.sources.items()):
        wavfile.write(root / "sources" / f"{spk}.wav", session.sample_rate, wave)
    (root / "ref.rttm").write_text(write_rttm(session.annotation), encoding="utf-8")
    (root / "ref.ctm").write_text(
        write_ctm(session.word_channels, session.recording_id), encoding="utf-8"
    )
    # paths are relative to the corpus root so the manifest is location-independent
    rel = Path(session.recording_id)
    return {
        "recording_id": session.recording_id,
        "audio": str(rel / "mixture.wav"),
        "rttm": str(rel / "ref.rttm"),
        "ctm": str(rel / "ref.ctm"),
        "sources_dir": str(rel / "sources"),
    }


def generate_corpus(
    scenario: SynthScenario,
    out_dir: Path,
    train_sessions: int = 2,
    dev_sessions: int = 1,
) -> Path:
    """Generate a train/dev corpus tree plus `manifest.json`; session i uses
    seed `scenario.seed + i` so the corpus is reproducible session-wise."""
    out_dir = Path(out_dir)
    manifest = {"sample_rate_hz": scenario.sample_rate_hz, "train": [], "dev": []}
    index = 0
    for split, count in (("train", train_sessions), ("dev", dev_sessions)):
        for _ in range(count):
            scn = SynthScenario(**{**scenario.__dict__, "seed": scenario.seed + index})
            session = generate_session(scn, recording_id=f"{split}{index:03d}")
            manifest[split].append(write_session(session, out_dir))
            index += 1
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
