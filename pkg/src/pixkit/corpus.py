"""Corpus manifest loading: (audio, rttm[, ctm]) triples with train/dev splits."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .annotations import Annotation, WordChannel, parse_ctm, parse_rttm
from .errors import ValidationError

INT16_SCALE = 32768.0


def read_wav(path: Path) -> tuple[int, np.ndarray]:
    """Read a mono 16-bit WAV into float64 in [-1, 1)."""
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValidationError(f"{path}: expected mono audio")
    if data.dtype != np.int16:
        raise ValidationError(f"{path}: expected 16-bit PCM")
    return rate, data.astype(np.float64) / INT16_SCALE


def write_wav(path: Path, sample_rate: int, audio: np.ndarray) -> None:
    """Write float audio in [-1, 1) as 16-bit PCM."""
    pcm = np.clip(np.round(np.asarray(audio) * INT16_SCALE), -32768, 32767).astype(np.int16)
    wavfile.write(path, sample_rate, pcm)


@dataclass
class Recording:
    recording_id: str
    audio: np.ndarray  # float64 waveform
    sample_rate: int
    annotation: Annotation
    ctm_path: Path | None = None
    sources_dir: Path | None = None

    @property
    def duration_s(self) -> float:
        return len(self.audio) / self.sample_rate

    def word_channels(self) -> list[WordChannel]:
        if self.ctm_path is None:
            raise ValidationError(f"{self.recording_id}: no reference CTM available")
        return parse_ctm(Path(self.ctm_path).read_text(encoding="utf-8"))

    def source(self, speaker: str) -> np.ndarray:
        if self.sources_dir is None:
            raise ValidationError(f"{self.recording_id}: no oracle sources available")
        _, audio = read_wav(Path(self.sources_dir) / f"{speaker}.wav")
        return audio


@dataclass
class Corpus:
    train: list[Recording]
    dev: list[Recording]
    sample_rate: int


def _load_entry(entry: dict, base: Path) -> Recording:
    def _resolve(p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else base / path

    rate, audio = read_wav(_resolve(entry["audio"]))
    ann = parse_rttm(
        _resolve(entry["rttm"]).read_text(encoding="utf-8"),
        recording_id=entry.get("recording_id"),
    )
    return Recording(
        recording_id=entry.get("recording_id") or ann.recording_id,
        audio=audio,
        sample_rate=rate,
        annotation=ann,
        ctm_path=_resolve(entry["ctm"]) if entry.get("ctm") else None,
        sources_dir=_resolve(entry["sources_dir"]) if entry.get("sources_dir") else None,
    )


def load_manifest(path: Path) -> Corpus:
    """Load a manifest JSON: {"train": [...], "dev": [...]} entries of
    (recording_id, audio, rttm[, ctm, sources_dir]); a bare list counts as
    train-only."""
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    base = path.parent
    if isinstance(data, list):
        data = {"train": data, "dev": []}
    train = [_load_entry(e, base) for e in data.get("train", [])]
    dev = [_load_entry(e, base) for e in data.get("dev", [])]
    if not train and not dev:
        raise ValidationError(f"{path}: manifest lists no recordings")
    rates = {r.sample_rate for r in train + dev}
    if len(rates) != 1:
        raise ValidationError(f"{path}: mixed sample rates {sorted(rates)}")
    return Corpus(train=train, dev=dev, sample_rate=rates.pop())
