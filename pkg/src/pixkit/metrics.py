"""Evaluation metrics: DER (no collar, optimal speaker mapping), cpWER/cpCER
in two dummy-channel variants, and diarization-based utterance attribution.

All scoring is deterministic; the only randomness is the seeded tie-break in
utterance attribution.
"""

from __future__ import annotations

import string
import unicodedata
from dataclasses import dataclass

import numpy as np

from .annotations import Annotation, WordChannel
from .assignment import solve_assignment
from .errors import ValidationError

CPWER_VARIANTS = ("no_overestimation_penalty", "meeteval")


@dataclass
class DerReport:
    """Diarization error decomposition in seconds plus the derived rates."""

    false_alarm_s: float
    missed_s: float
    confusion_s: float
    total_ref_s: float
    mapping: dict[str, str]  # hyp speaker -> ref speaker

    @property
    def false_alarm_rate(self) -> float:
        return self.false_alarm_s / self.total_ref_s

    @property
    def missed_rate(self) -> float:
        return self.missed_s / self.total_ref_s

    @property
    def confusion_rate(self) -> float:
        return self.confusion_s / self.total_ref_s

    @property
    def der(self) -> float:
        return (self.false_alarm_s + self.missed_s + self.confusion_s) / self.total_ref_s

    def to_dict(self) -> dict:
        return {
            "false_alarm_s": self.false_alarm_s,
            "missed_s": self.missed_s,
            "confusion_s": self.confusion_s,
            "total_ref_s": self.total_ref_s,
            "false_alarm_rate": self.false_alarm_rate,
            "missed_rate": self.missed_rate,
            "confusion_rate": self.confusion_rate,
            "der": self.der,
            "mapping": dict(sorted(self.mapping.items())),
        }


@dataclass
class CpWerReport:
    """Edit counts over per-speaker concatenated transcripts, minimized over
    channel assignments."""

    substitutions: int
    deletions: int
    insertions: int
    ref_words: int
    mapping: dict[str, str]  # ref channel -> hyp channel (dummies excluded)
    variant: str

    @property
    def error_rate(self) -> float:
        return (self.substitutions + self.deletions + self.insertions) / self.ref_words

    def to_dict(self) -> dict:
        return {
            "substitutions": self.substitutions,
            "deletions": self.deletions,
            "insertions": self.insertions,
            "ref_words": self.ref_words,
            "error_rate": self.error_rate,
            "mapping": dict(sorted(self.mapping.items())),
            "variant": self.variant,
        }


# --- word-level edit distance ------------------------------------------------


def word_edit(ref: list[str], hyp: list[str]) -> tuple[int, int, int]:
    """Minimum-edit (substitutions, deletions, insertions) with unit costs;
    the backtrace prefers substitutions over delete+insert pairs at ties."""
    n, m = len(ref), len(hyp)
    # dp[i, j] = cost of aligning ref[:i] with hyp[:j]
    dp = np.zeros((n + 1, m + 1), dtype=np.int64)
    dp[:, 0] = np.arange(n + 1)
    dp[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = dp[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
            dp[i, j] = min(sub, dp[i - 1, j] + 1, dp[i, j - 1] + 1)
    subs = dels = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dp[i, j] == dp[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            subs += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and dp[i, j] == dp[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return subs, dels, ins


# --- text normalization -------------------------------------------------------

_PUNCT = set(string.punctuation)


def _is_punct(ch: str) -> bool:
    return ch in _PUNCT or unicodedata.category(ch).startswith("P")


def normalize_text(raw: str, lang: str = "en") -> list[str]:
    """en: lowercase, strip punctuation, split on whitespace.
    zh: strip punctuation and whitespace, one token per character
    (character-error-rate semantics)."""
    if lang not in ("en", "zh"):
        raise ValidationError(f"unsupported language {lang!r}")
    stripped = "".join(" " if _is_punct(ch) else ch for ch in raw)
    if lang == "en":
        return stripped.lower().split()
    return [ch for ch in stripped if not ch.isspace()]


# --- cpWER --------------------------------------------------------------------


def cpwer(
    ref_channels: dict[str, list[str]],
    hyp_channels: dict[str, list[str]],
    variant: str = "no_overestimation_penalty",
) -> CpWerReport:
    """Concatenated minimum-permutation WER over per-speaker channels.

    Variant `no_overestimation_penalty`: the hypothesis is padded with empty
    dummy channels up to the reference count and surplus hypothesis channels
    are discarded cost-free. Variant `meeteval`: the smaller side is padded
    so the assignment is a bijection and surplus hypothesis words all count
    as insertions.
    """
    if variant not in CPWER_VARIANTS:
        raise ValidationError(f"unknown cpwer variant {variant!r}")
    if not ref_channels:
        raise ValidationError("cpwer requires at least one reference channel")
    ref_words = sum(len(v) for v in ref_channels.values())
    if ref_words == 0:
        raise ValidationError("cpwer undefined: zero reference words")

    ref_ids = sorted(ref_channels)
    hyp_ids = sorted(hyp_channels)
    n = max(len(ref_ids), len(hyp_ids))

    # square the problem: missing hypothesis channels become empty channels
    # (pure deletions); extra hypothesis channels pair with dummy reference
    # rows that are free in variant 1 and empty (pure insertions) in
    # variant 2
    cols = [hyp_channels[h] for h in hyp_ids] + [[]] * (n - len(hyp_ids))
    counts: dict[tuple[int, int], tuple[int, int, int]] = {}
    cost = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i < len(ref_ids):
                counts[i, j] = word_edit(ref_channels[ref_ids[i]], cols[j])
            elif variant == "meeteval":
                counts[i, j] = (0, 0, len(cols[j]))
            else:
                counts[i, j] = (0, 0, 0)
            cost[i, j] = sum(counts[i, j])
    mapping_idx, _ = solve_assignment(cost)

    subs = dels = ins = 0
    mapping: dict[str, str] = {}
    for i in range(n):
        j = int(mapping_idx[i])
        s, d, k = counts[i, j]
        subs, dels, ins = subs + s, dels + d, ins + k
        if i < len(ref_ids) and j < len(hyp_ids):
            mapping[ref_ids[i]] = hyp_ids[j]
    return CpWerReport(int(subs), int(dels), int(ins), ref_words, mapping, variant)


def channels_from_words(word_channels: list[WordChannel], lang: str = "en") -> dict[str, list[str]]:
    """Per-speaker normalized token sequences in time order."""
    out: dict[str, list[str]] = {}
    for ch in word_channels:
        tokens: list[str] = []
        for w in sorted(ch.words, key=lambda w: (w.start, w.token)):
            tokens.extend(normalize_text(w.token, lang))
        out[ch.speaker_id] = tokens
    return out


# --- DER ----------------------------------------------------------------------


def _regions(ann_list: list[Annotation]) -> list[tuple[float, float]]:
    raw = sorted(
        {s.start for a in ann_list for s in a.segments}
        | {s.end for a in ann_list for s in a.segments}
    )
    # collapse boundaries closer than 1 ns: they are float noise, and the
    # vanishing regions they would create poison exact-zero scores
    bounds: list[float] = []
    for b in raw:
        if not bounds or b - bounds[-1] > 1e-9:
            bounds.append(b)
    return [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]


def der(ref: Annotation, hyp: Annotation) -> DerReport:
    """Diarization error rate with no collar and overlap scored per speaker.

    The timeline is partitioned at every segment boundary; a single global
    one-to-one speaker mapping maximizing matched speech time is chosen via
    the assignment solver; per region with R reference and H hypothesis
    speakers: missed max(0, R-H), false alarm max(0, H-R), confusion
    min(R, H) - matched pairs active there, each times the region length.
    """
    if not ref.segments:
        raise ValidationError("DER undefined: empty reference annotation")
    ref = ref.merge_adjacent()
    hyp = hyp.merge_adjacent()
    ref_speakers = ref.speakers
    hyp_speakers = hyp.speakers
    regions = _regions([ref, hyp])

    def active_at(ann: Annotation, t: float) -> set[str]:
        return {s.speaker for s in ann.segments if s.start <= t < s.end}

    # overlap seconds between every (ref, hyp) speaker pair; membership is
    # tested at region midpoints (regions are boundary-delimited, so a
    # segment covers a region either fully or not at all up to float noise)
    overlap = np.zeros((len(ref_speakers), len(hyp_speakers)))
    for start, end in regions:
        mid = 0.5 * (start + end)
        r_active = active_at(ref, mid)
        h_active = active_at(hyp, mid)
        for i, r in enumerate(ref_speakers):
            if r in r_active:
                for j, h in enumerate(hyp_speakers):
                    if h in h_active:
                        overlap[i, j] += end - start

    # optimal mapping: maximize matched time == minimize negated overlap on a
    # square matrix padded with zero-overlap dummies
    n = max(len(ref_speakers), len(hyp_speakers), 1)
    cost = np.zeros((n, n))
    cost[: len(ref_speakers), : len(hyp_speakers)] = -overlap
    mapping_idx, _ = solve_assignment(cost)
    hyp_to_ref: dict[str, str] = {}
    for i, r in enumerate(ref_speakers):
        j = int(mapping_idx[i])
        if j < len(hyp_speakers) and overlap[i, j] > 0:
            hyp_to_ref[hyp_speakers[j]] = r

    missed = false_alarm = confusion = 0.0
    for start, end in regions:
        length = end - start
        mid = 0.5 * (start + end)
        r_active = active_at(ref, mid)
        h_active = active_at(hyp, mid)
        r_count, h_count = len(r_active), len(h_active)
        if r_count == 0 and h_count == 0:
            continue
        matched = sum(
            1 for h in h_active if hyp_to_ref.get(h) in r_active
        )
        missed += max(0, r_count - h_count) * length
        false_alarm += max(0, h_count - r_count) * length
        confusion += (min(r_count, h_count) - matched) * length

    total_ref = ref.speech_time()
    return DerReport(false_alarm, missed, confusion, total_ref, hyp_to_ref)


# --- speaker attribution --------------------------------------------------------


@dataclass
class Utterance:
    words: list[str]
    start: float
    end: float

    def __post_init__(self):
        if self.end < self.start:
            raise ValidationError("utterance end before start")


def attribute_utterances(
    utterances: list[Utterance],
    diar: Annotation,
    rng: np.random.Generator,
) -> dict[str, list[str]]:
    """Attach each utterance to the diarized speaker with the largest
    overlapped duration; exact ties are broken by a seeded uniform choice and
    utterances overlapping nobody go to the speaker with the nearest-in-time
    segment. Returns hypothesis channels (speaker -> token list)."""
    speakers = diar.speakers
    if not speakers:
        channels = {"unattributed": []}
        for utt in sorted(utterances, key=lambda u: (u.start, u.end)):
            channels["unattributed"].extend(utt.words)
        return channels
    channels: dict[str, list[str]] = {s: [] for s in speakers}
    for utt in sorted(utterances, key=lambda u: (u.start, u.end)):
        overlaps = np.array(
            [
                sum(
                    max(0.0, min(utt.end, seg.end) - max(utt.start, seg.start))
                    for seg in diar.speaker_segments(s)
                )
                for s in speakers
            ]
        )
        if overlaps.max() > 0:
            best = overlaps.max()
            tied = [i for i, v in enumerate(overlaps) if v == best]
            pick = tied[0] if len(tied) == 1 else int(rng.choice(tied))
        else:
            # nearest segment in time; ties by segment order then speaker id
            def gap(s: str) -> float:
                return min(
                    max(seg.start - utt.end, utt.start - seg.end, 0.0)
                    for seg in diar.speaker_segments(s)
                )
            gaps = [gap(s) for s in speakers]
            pick = int(np.argmin(gaps))
        channels[speakers[pick]].extend(utt.words)
    return channels


def utterances_from_ctm(
    word_channels: list[WordChannel], gap_s: float = 0.5, lang: str = "en"
) -> list[Utterance]:
    """Group each channel's words into utterances split at silences longer
    than gap_s; the speaker identity is deliberately dropped (attribution is
    the job of `attribute_utterances`)."""
    utts: list[Utterance] = []
    for ch in word_channels:
        words = sorted(ch.words, key=lambda w: (w.start, w.token))
        current: list = []
        for w in words:
            if current and w.start - (current[-1].start + current[-1].duration) > gap_s:
                utts.append(_make_utt(current, lang))
                current = []
            current.append(w)
        if current:
            utts.append(_make_utt(current, lang))
    return sorted(utts, key=lambda u: (u.start, u.end))


def _make_utt(words: list, lang: str) -> Utterance:
    tokens: list[str] = []
    for w in words:
        tokens.extend(normalize_text(w.token, lang))
    return Utterance(tokens, words[0].start, words[-1].start + words[-1].duration)
