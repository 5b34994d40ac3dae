"""Pluggable speaker embedders.

An embedder maps a list of audio spans (the concatenated active regions of
one local speaker) to a fixed-dimension vector; the pipeline L2-normalizes
the result. The toy embedder combines 24 log-mel band means with 8
normalized autocorrelation band peaks (dimension 32), computed per span and
duration-averaged so the embedding does not depend on span order.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

TOY_EMBEDDING_DIM = 32
_NUM_MEL = 24
_NUM_ACF = 8
_PITCH_RANGE_HZ = (70.0, 420.0)
_MEL_WEIGHT = 0.5


def _mel_filterbank(num_bins: int, sample_rate: int, num_mel: int) -> np.ndarray:
    def to_mel(hz):
        return 2595.0 * np.log10(1.0 + hz / 700.0)

    def to_hz(mel):
        return 700.0 * (10.0 ** (mel / 2595.0) - 1.0)

    low, high = to_mel(50.0), to_mel(sample_rate / 2.0)
    points = to_hz(np.linspace(low, high, num_mel + 2))
    bins = np.floor((num_bins - 1) * 2 * points / sample_rate).astype(int)
    bins = np.clip(bins, 0, num_bins - 1)
    fb = np.zeros((num_mel, num_bins))
    for i in range(num_mel):
        a, b, c = bins[i], bins[i + 1], bins[i + 2]
        b = max(b, a + 1)
        c = max(c, b + 1)
        fb[i, a:b] = np.linspace(0.0, 1.0, b - a, endpoint=False)
        fb[i, b:c] = np.linspace(1.0, 0.0, c - b, endpoint=False)
    return fb


class ToyEmbedder:
    """Deterministic signal-statistics embedder for the synthetic corpus."""

    dim = TOY_EMBEDDING_DIM

    def __init__(self, sample_rate: int, win: int = 256, hop: int = 128):
        self.sample_rate = sample_rate
        self.win = win
        self.hop = hop
        self._window = np.hanning(win)
        self._fb = _mel_filterbank(win // 2 + 1, sample_rate, _NUM_MEL)
        lo, hi = _PITCH_RANGE_HZ
        lags = sample_rate / np.geomspace(hi, lo, _NUM_ACF + 1)
        self._lag_bands = [
            (int(np.floor(lags[i])), max(int(np.floor(lags[i + 1])), int(np.floor(lags[i])) + 1))
            for i in range(_NUM_ACF)
        ]

    def __call__(self, spans: list[np.ndarray], sample_rate: int) -> np.ndarray:
        if sample_rate != self.sample_rate:
            raise ValidationError(
                f"embedder built for {self.sample_rate} Hz, got {sample_rate} Hz"
            )
        spans = [np.asarray(s, dtype=np.float64) for s in spans if len(s) > 0]
        if not spans:
            raise ValidationError("cannot embed zero-length audio")
        feats = np.zeros(self.dim)
        total = 0.0
        for span in spans:
            weight = len(span)
            feats += weight * self._span_features(span)
            total += weight
        return feats / total

    def _span_features(self, span: np.ndarray) -> np.ndarray:
        mel = self._log_mel_mean(span)
        mel -= mel.mean()  # spectral shape only, level-invariant
        norm = np.linalg.norm(mel)
        if norm > 0:
            mel /= norm
        acf = self._acf_peaks(span)  # signed: dips between pitch peaks carry information
        norm = np.linalg.norm(acf)
        if norm > 0:
            acf /= norm
        # the pitch comb separates speakers far better than the broadband
        # mel shape, so the mel block gets less weight in the cosine
        return np.concatenate([_MEL_WEIGHT * mel, acf])

    def _log_mel_mean(self, span: np.ndarray) -> np.ndarray:
        win, hop = self.win, self.hop
        if len(span) < win:
            span = np.pad(span, (0, win - len(span)))
        frames = np.lib.stride_tricks.sliding_window_view(span, win)[::hop]
        mag = np.abs(np.fft.rfft(frames * self._window, axis=1))
        mel = mag @ self._fb.T
        return np.log(mel + 1e-8).mean(axis=0)

    def _acf_peaks(self, span: np.ndarray) -> np.ndarray:
        max_lag = self._lag_bands[-1][1] + 1
        if len(span) < 2 * max_lag:
            span = np.pad(span, (0, 2 * max_lag - len(span)))
        n = len(span)
        spec = np.fft.rfft(span, n=2 * n)
        acf = np.fft.irfft(spec * np.conj(spec))[:max_lag]
        r0 = acf[0] if acf[0] > 1e-12 else 1.0
        acf = acf / r0
        return np.array([float(acf[a:b].max()) for a, b in self._lag_bands])
