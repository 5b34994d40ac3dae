"""Diarization annotations, activation matrices, and RTTM/CTM text formats.

Times are double-precision seconds throughout; RTTM/CTM files are written
with millisecond precision (3 decimals), which round-trips losslessly for
times produced by this toolkit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError


@dataclass(frozen=True, order=True)
class Segment:
    """One speech segment of a single speaker."""

    speaker: str
    start: float
    end: float

    def __post_init__(self):
        if not self.end > self.start:
            raise ValidationError(
                f"segment for {self.speaker!r}: end {self.end} must exceed start {self.start}"
            )

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass
class Annotation:
    """Set of (speaker, start, end) speech segments for one recording.

    Segments may overlap across speakers and need not be merged per speaker.
    """

    recording_id: str
    segments: list[Segment] = field(default_factory=list)

    def add(self, speaker: str, start: float, end: float) -> None:
        self.segments.append(Segment(speaker, start, end))

    @property
    def speakers(self) -> list[str]:
        """Speaker ids in order of first appearance by start time, ties by id."""
        firsts: dict[str, float] = {}
        for seg in self.segments:
            if seg.speaker not in firsts or seg.start < firsts[seg.speaker]:
                firsts[seg.speaker] = seg.start
        return sorted(firsts, key=lambda s: (firsts[s], s))

    def speaker_segments(self, speaker: str) -> list[Segment]:
        return sorted(s for s in self.segments if s.speaker == speaker)

    def speech_time(self, speaker: str | None = None) -> float:
        """Total annotated time, overlap counted once per speaker, merged per speaker."""
        speakers = [speaker] if speaker is not None else self.speakers
        total = 0.0
        for spk in speakers:
            for start, end in merge_intervals(
                [(s.start, s.end) for s in self.speaker_segments(spk)]
            ):
                total += end - start
        return total

    def crop(self, start: float, end: float) -> "Annotation":
        """Segments intersected with [start, end), times kept absolute."""
        out = Annotation(self.recording_id)
        for seg in self.segments:
            s, e = max(seg.start, start), min(seg.end, end)
            if e > s:
                out.add(seg.speaker, s, e)
        return out

    def active_speakers(self, start: float, end: float) -> list[str]:
        return [s for s in self.crop(start, end).speakers]

    def merge_adjacent(self, gap: float = 0.0) -> "Annotation":
        """Merge per-speaker segments that overlap or sit within `gap` seconds."""
        out = Annotation(self.recording_id)
        for spk in self.speakers:
            for start, end in merge_intervals(
                [(s.start, s.end) for s in self.speaker_segments(spk)], gap=gap
            ):
                out.add(spk, start, end)
        out.segments.sort()
        return out

    def extent(self) -> tuple[float, float]:
        if not self.segments:
            return (0.0, 0.0)
        return (min(s.start for s in self.segments), max(s.end for s in self.segments))


def merge_intervals(
    intervals: list[tuple[float, float]], gap: float = 0.0
) -> list[tuple[float, float]]:
    merged: list[tuple[float, float]] = []
    for start, end in sorted(intervals):
        if merged and start <= merged[-1][1] + gap:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


@dataclass
class ActivationMatrix:
    """K x T matrix of per-speaker per-frame speech scores.

    Reference rasterizations are exactly {0,1}; predictions live in [0,1].
    Frame t of a matrix anchored at time t0 covers [t0 + t/r, t0 + (t+1)/r).
    """

    speakers: list[str]
    frame_rate: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != len(self.speakers):
            raise ValidationError(
                f"values shape {self.values.shape} inconsistent with {len(self.speakers)} speakers"
            )
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise ValidationError("activation values must lie in [0, 1]")

    @property
    def num_frames(self) -> int:
        return self.values.shape[1]


def rasterize(
    ann: Annotation,
    window: tuple[float, float],
    frame_rate: float,
    speaker_order: list[str] | None = None,
) -> ActivationMatrix:
    """Rasterize an annotation over `window` at `frame_rate` frames/second.

    Frame t is active for a speaker iff its center time lies inside one of
    that speaker's segments (half-open [start, end) membership).
    T = floor((end - start) * frame_rate).
    """
    start, end = window
    if end < start:
        raise ValidationError(f"window end {end} before start {start}")
    if speaker_order is None:
        speaker_order = speaker_order_for_window(ann, window)
    active = set(ann.active_speakers(start, end))
    missing = active - set(speaker_order)
    if missing:
        raise ValidationError(
            f"speakers {sorted(missing)} active in window but missing from speaker_order"
        )
    num_frames = int(math.floor((end - start) * frame_rate + 1e-9))
    values = np.zeros((len(speaker_order), num_frames), dtype=np.float64)
    centers = start + (np.arange(num_frames) + 0.5) / frame_rate
    for k, spk in enumerate(speaker_order):
        for seg in ann.speaker_segments(spk):
            inside = (centers >= seg.start) & (centers < seg.end)
            values[k] = np.maximum(values[k], inside.astype(np.float64))
    return ActivationMatrix(list(speaker_order), frame_rate, values)


def speaker_order_for_window(ann: Annotation, window: tuple[float, float]) -> list[str]:
    """Speakers active in the window, ordered by first activity time, ties by id."""
    cropped = ann.crop(*window)
    return cropped.speakers


# --- RTTM ------------------------------------------------------------------


def parse_rttm(text: str, recording_id: str | None = None) -> Annotation:
    """Parse SPEAKER lines of an RTTM document into an Annotation.

    Lines starting with ';' or '#' and blank lines are ignored. The first
    SPEAKER line fixes the recording id unless one is given explicitly.
    """
    ann = Annotation(recording_id or "")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith((";", "#")):
            continue
        fields = line.split()
        if fields[0] != "SPEAKER":
            raise ParseError(f"expected SPEAKER record, got {fields[0]!r}", lineno)
        if len(fields) != 10:
            raise ParseError(f"expected 10 fields, got {len(fields)}", lineno)
        try:
            start = float(fields[3])
            duration = float(fields[4])
        except ValueError as exc:
            raise ParseError(f"bad numeric field: {exc}", lineno) from None
        if duration <= 0:
            raise ValidationError(f"line {lineno}: non-positive duration {duration}")
        if not ann.recording_id:
            ann.recording_id = fields[1]
        ann.add(fields[7], start, start + duration)
    ann.segments.sort()
    return ann


def write_rttm(ann: Annotation) -> str:
    lines = []
    for seg in sorted(ann.segments):
        lines.append(
            f"SPEAKER {ann.recording_id} 1 {seg.start:.3f} {seg.duration:.3f} "
            f"<NA> <NA> {seg.speaker} <NA> <NA>"
        )
    return "\n".join(lines) + ("\n" if lines else "")


# --- CTM -------------------------------------------------------------------


@dataclass(frozen=True)
class Word:
    token: str
    start: float
    duration: float


@dataclass
class WordChannel:
    """Time-ordered words of one speaker; the unit cpWER operates on."""

    speaker_id: str
    words: list[Word] = field(default_factory=list)

    def tokens(self) -> list[str]:
        return [w.token for w in self.words]


def parse_ctm(text: str) -> list[WordChannel]:
    """Parse a CTM document into per-speaker word channels.

    Layout per line: `<recording> <channel> <start> <duration> <token> [conf]`.
    The channel field carries the speaker id (diarization convention).
    Channels are returned sorted by speaker id, words sorted by start time.
    """
    by_speaker: dict[str, list[Word]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith((";", "#")):
            continue
        fields = line.split()
        if len(fields) not in (5, 6):
            raise ParseError(f"expected 5 or 6 fields, got {len(fields)}", lineno)
        try:
            start = float(fields[2])
            duration = float(fields[3])
        except ValueError as exc:
            raise ParseError(f"bad numeric field: {exc}", lineno) from None
        if duration < 0:
            raise ValidationError(f"line {lineno}: negative duration {duration}")
        token = fields[4]
        if not token:
            raise ParseError("empty token", lineno)
        by_speaker.setdefault(fields[1], []).append(Word(token, start, duration))
    channels = []
    for speaker in sorted(by_speaker):
        words = sorted(by_speaker[speaker], key=lambda w: (w.start, w.token))
        channels.append(WordChannel(speaker, words))
    return channels


def write_ctm(channels: list[WordChannel], recording_id: str) -> str:
    lines = []
    for channel in channels:
        for w in channel.words:
            lines.append(
                f"{recording_id} {channel.speaker_id} {w.start:.3f} {w.duration:.3f} {w.token}"
            )
    return "\n".join(lines) + ("\n" if lines else "")
