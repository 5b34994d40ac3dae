"""Long-form inference: sliding windows, activation binarization, local
speaker embeddings, agglomerative clustering into global speakers, triangular
overlap-add stitching of sources and activations, and leakage removal.

The window model is anything exposing `infer_window(audio, start_s) ->
(sources (M, N), activations (M, Ta), activation_rate)`; window inference is
embarrassingly parallel, clustering and stitching run single-threaded in
window order for determinism.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .annotations import ActivationMatrix, Annotation, rasterize
from .embeddings import ToyEmbedder
from .errors import ValidationError

DEFAULT_WINDOW_S = 5.0
DEFAULT_STEP_S = 0.5
DEFAULT_MIN_ACTIVITY_S = 0.25
WEIGHT_FLOOR = 1e-3  # keeps triangular weights strictly positive at edges


@dataclass
class WindowOutput:
    """Per-window model outputs; source row m and activation row m describe
    the same estimated speaker channel."""

    window_index: int
    start_s: float
    sources: np.ndarray  # (M, window_samples)
    activations: np.ndarray  # (M, Ta), values in [0, 1]
    activation_rate: float
    pad_samples: int = 0  # right zero-padding added for short recordings


@dataclass
class LocalSpeaker:
    """One active channel of one window: its binarized spans (seconds,
    window-relative) and, when total activity reaches min_activity, a
    unit-norm embedding."""

    window_index: int
    channel_index: int
    spans: list[tuple[float, float]]
    embedding: np.ndarray | None = None


@dataclass
class GlobalResult:
    """Stitched output for one recording: one long source waveform per
    global speaker plus the aggregated activations and the diarization
    annotation derived from them at threshold theta."""

    recording_id: str
    speakers: list[str]
    sources: dict[str, np.ndarray]
    activations: ActivationMatrix
    annotation: Annotation
    sample_rate: int


@dataclass
class PipelineParams:
    """Hyperparameters of the long-form pipeline."""

    theta: float
    delta: float
    delta_t: float
    window_s: float = DEFAULT_WINDOW_S
    step_s: float = DEFAULT_STEP_S
    min_activity_s: float = DEFAULT_MIN_ACTIVITY_S
    min_on_s: float = 0.0
    min_off_s: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValidationError("theta must be in [0, 1]")
        if self.delta < 0 or self.delta_t < 0:
            raise ValidationError("delta and delta_t must be >= 0")
        if self.step_s <= 0 or self.window_s <= 0:
            raise ValidationError("window_s and step_s must be > 0")

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineParams":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in known})


def run_windows(
    model,
    audio: np.ndarray,
    sample_rate: int,
    window_s: float = DEFAULT_WINDOW_S,
    step_s: float = DEFAULT_STEP_S,
    jobs: int = 1,
) -> list[WindowOutput]:
    """Slide a window over the recording at offsets 0, step, 2*step, ... and
    add a final window right-aligned to the signal end; audio shorter than
    one window becomes a single zero-padded window with the padding tracked.
    """
    audio = np.asarray(audio, dtype=np.float64)
    n = len(audio)
    w = int(round(window_s * sample_rate))
    s = int(round(step_s * sample_rate))
    if s <= 0 or w <= 0:
        raise ValidationError("window and step must be positive")

    offsets: list[int] = []
    k = 0
    while k * s + w < n:
        offsets.append(k * s)
        k += 1
    offsets.append(max(n - w, 0))

    def _one(item: tuple[int, int]) -> WindowOutput:
        index, offset = item
        chunk = audio[offset : offset + w]
        pad = w - len(chunk)
        if pad:
            chunk = np.pad(chunk, (0, pad))
        sources, act, rate = model.infer_window(chunk, start_s=offset / sample_rate)
        return WindowOutput(index, offset / sample_rate, sources, act, rate, pad)

    items = list(enumerate(offsets))
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_one, items))
    return [_one(item) for item in items]


def binarize_row(
    row: np.ndarray,
    theta: float,
    frame_rate: float,
    min_on_s: float = 0.0,
    min_off_s: float = 0.0,
) -> list[tuple[float, float]]:
    """Threshold one activation row into (start, end) spans in seconds:
    frames >= theta are active, then gaps shorter than min_off_s are filled,
    then spans shorter than min_on_s are dropped (in that order)."""
    active = np.asarray(row, dtype=np.float64) >= theta
    spans = _runs(active)
    if min_off_s > 0 and len(spans) > 1:
        merged = [spans[0]]
        for a, b in spans[1:]:
            if (a - merged[-1][1]) / frame_rate < min_off_s - 1e-12:
                merged[-1] = (merged[-1][0], b)
            else:
                merged.append((a, b))
        spans = merged
    if min_on_s > 0:
        spans = [(a, b) for a, b in spans if (b - a) / frame_rate >= min_on_s - 1e-12]
    return [(a / frame_rate, b / frame_rate) for a, b in spans]


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as half-open frame index pairs."""
    if not mask.any():
        return []
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [(int(edges[i]), int(edges[i + 1])) for i in range(0, len(edges), 2)]


def binarize(
    activations: ActivationMatrix,
    theta: float,
    min_on_s: float = 0.0,
    min_off_s: float = 0.0,
) -> list[list[tuple[float, float]]]:
    """Per-channel spans (seconds relative to the matrix origin)."""
    return [
        binarize_row(row, theta, activations.frame_rate, min_on_s, min_off_s)
        for row in activations.values
    ]


def embed(
    window_audio: np.ndarray,
    spans: list[tuple[float, float]],
    embedder,
    sample_rate: int,
    min_activity_s: float = DEFAULT_MIN_ACTIVITY_S,
) -> np.ndarray | None:
    """Embed the concatenated original-audio samples under the spans;
    returns None (absent embedding) when total activity < min_activity_s.
    The result is L2-normalized."""
    n = len(window_audio)
    pieces = []
    total = 0.0
    for start, end in spans:
        a = min(max(int(round(start * sample_rate)), 0), n)
        b = min(max(int(round(end * sample_rate)), 0), n)
        if b > a:
            pieces.append(window_audio[a:b])
            total += (b - a) / sample_rate
    if total < min_activity_s - 1e-12:
        return None
    vec = np.asarray(embedder(pieces, sample_rate), dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    return vec / norm if norm > 0 else vec


def cosine_distance_matrix(embeddings: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(embeddings, axis=1, keepdims=True)
    unit = embeddings / np.maximum(norms, 1e-12)
    return np.clip(1.0 - unit @ unit.T, 0.0, 2.0)


def cluster(embeddings: np.ndarray, delta: float) -> np.ndarray:
    """Average-linkage agglomerative clustering on cosine distance: merge
    while the smallest inter-cluster linkage is <= delta, ties broken by the
    smallest (i, j) index pair. Returns labels numbered by first member."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.ndim != 2 or len(embeddings) == 0:
        raise ValidationError("cluster requires a non-empty (n, d) array")
    n = len(embeddings)
    dist_sum = cosine_distance_matrix(embeddings)
    sizes = np.ones(n)
    active = list(range(n))
    members: dict[int, list[int]] = {i: [i] for i in range(n)}

    while len(active) > 1:
        best = None  # (linkage, i, j)
        for ai, i in enumerate(active):
            for j in active[ai + 1 :]:
                link = dist_sum[i, j] / (sizes[i] * sizes[j])
                if best is None or link < best[0] - 1e-15:
                    best = (link, i, j)
        link, i, j = best
        if link > delta:
            break
        dist_sum[i, :] += dist_sum[j, :]
        dist_sum[:, i] += dist_sum[:, j]
        sizes[i] += sizes[j]
        members[i].extend(members[j])
        active.remove(j)
        del members[j]

    labels = np.empty(n, dtype=np.int64)
    for rank, i in enumerate(sorted(members, key=lambda c: min(members[c]))):
        labels[list(members[i])] = rank
    return labels


def build_local_speakers(
    windows: list[WindowOutput],
    sample_rate: int,
    params: PipelineParams,
    embedder,
) -> list[LocalSpeaker]:
    """Binarize every window channel at theta and embed the active regions
    of that channel's separated source (cleaner speaker evidence than the
    mixture under overlap); channels with no active span yield no local
    speaker."""
    locals_: list[LocalSpeaker] = []
    for win in windows:
        n_eff = win.sources.shape[1] - win.pad_samples
        for c, row in enumerate(win.activations):
            spans = binarize_row(
                row, params.theta, win.activation_rate, params.min_on_s, params.min_off_s
            )
            spans = [
                (a, min(b, n_eff / sample_rate)) for a, b in spans if a < n_eff / sample_rate
            ]
            if not spans:
                continue
            vec = embed(
                win.sources[c, :n_eff], spans, embedder, sample_rate, params.min_activity_s
            )
            locals_.append(LocalSpeaker(win.window_index, c, spans, vec))
    return locals_


def _frame_offset(start_s: float, rate: float) -> int:
    return int(round(start_s * rate))


def _aggregate_activations(
    windows: list[WindowOutput],
    assignment: dict[tuple[int, int], int],
    num_globals: int,
    total_frames: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Triangular-weighted sums of assigned activations (numerator) and
    window weights over all covering windows (denominator); unassigned
    channels contribute zeros to the numerator only."""
    acc = np.zeros((num_globals, total_frames))
    wsum = np.zeros(total_frames)
    for win in windows:
        ta = win.activations.shape[1]
        tri = np.bartlett(ta) + WEIGHT_FLOOR
        f0 = _frame_offset(win.start_s, win.activation_rate)
        hi = min(f0 + ta, total_frames)
        if hi <= f0:
            continue
        cut = hi - f0
        wsum[f0:hi] += tri[:cut]
        for c in range(win.activations.shape[0]):
            g = assignment.get((win.window_index, c))
            if g is not None:
                acc[g, f0:hi] += tri[:cut] * win.activations[c, :cut]
    return acc, wsum


def _attach_orphans(
    windows: list[WindowOutput],
    locals_: list[LocalSpeaker],
    assignment: dict[tuple[int, int], int],
    num_globals: int,
    total_frames: int,
) -> dict[tuple[int, int], int]:
    """Attach embedding-less local speakers to the global speaker whose
    aggregated activation correlates best with theirs over the window;
    non-positive correlation everywhere drops the local."""
    orphans = [ls for ls in locals_ if ls.embedding is None]
    if not orphans or num_globals == 0:
        return assignment
    acc, _ = _aggregate_activations(windows, assignment, num_globals, total_frames)
    by_index = {w.window_index: w for w in windows}
    out = dict(assignment)
    for ls in orphans:
        win = by_index[ls.window_index]
        row = win.activations[ls.channel_index]
        f0 = _frame_offset(win.start_s, win.activation_rate)
        hi = min(f0 + len(row), total_frames)
        if hi <= f0:
            continue
        scores = acc[:, f0:hi] @ row[: hi - f0]
        best = int(np.argmax(scores))
        if scores[best] > 0:
            out[(ls.window_index, ls.channel_index)] = best
    return out


def stitch(
    windows: list[WindowOutput],
    assignment: dict[tuple[int, int], int],
    num_globals: int,
    audio_length: int,
    sample_rate: int,
    params: PipelineParams,
    recording_id: str,
) -> GlobalResult:
    """Overlap-add assigned sources and activations per global speaker with
    triangular window weights renormalized per sample/frame; re-binarize the
    aggregated activations at theta to obtain the diarization annotation."""
    if not windows:
        raise ValidationError("stitch requires at least one window")
    rate = windows[0].activation_rate
    total_frames = int(np.ceil(audio_length * rate / sample_rate - 1e-9))

    acc_act, wsum_act = _aggregate_activations(
        windows, assignment, num_globals, total_frames
    )
    glob_act = np.divide(
        acc_act,
        np.maximum(wsum_act, 1e-12)[None, :],
        out=np.zeros_like(acc_act),
        where=wsum_act[None, :] > 0,
    )
    glob_act = np.clip(glob_act, 0.0, 1.0)

    acc_src = np.zeros((num_globals, audio_length))
    wsum_src = np.zeros(audio_length)
    for win in windows:
        w = win.sources.shape[1]
        tri = np.bartlett(w) + WEIGHT_FLOOR
        a = int(round(win.start_s * sample_rate))
        hi = min(a + w, audio_length)
        cut = hi - a
        if cut <= 0:
            continue
        wsum_src[a:hi] += tri[:cut]
        for c in range(win.sources.shape[0]):
            g = assignment.get((win.window_index, c))
            if g is not None:
                acc_src[g, a:hi] += tri[:cut] * win.sources[c, :cut]
    glob_src = np.divide(
        acc_src,
        np.maximum(wsum_src, 1e-12)[None, :],
        out=np.zeros_like(acc_src),
        where=wsum_src[None, :] > 0,
    )

    speakers = [f"spk{g:02d}" for g in range(num_globals)]
    annotation = Annotation(recording_id)
    for g, spk in enumerate(speakers):
        for start, end in binarize_row(
            glob_act[g], params.theta, rate, params.min_on_s, params.min_off_s
        ):
            annotation.add(spk, start, end)
    annotation.segments.sort()
    return GlobalResult(
        recording_id=recording_id,
        speakers=speakers,
        sources={spk: glob_src[g] for g, spk in enumerate(speakers)},
        activations=ActivationMatrix(speakers, rate, glob_act),
        annotation=annotation,
        sample_rate=sample_rate,
    )


def remove_leakage(result: GlobalResult, theta: float, delta_t: float) -> GlobalResult:
    """Zero each stitched source at every sample with no binarized-active
    frame of its speaker within [t - delta_t, t + delta_t]; idempotent."""
    if delta_t < 0:
        raise ValidationError("delta_t must be >= 0")
    sr = result.sample_rate
    rate = result.activations.frame_rate
    sources: dict[str, np.ndarray] = {}
    for g, spk in enumerate(result.speakers):
        wave = result.sources[spk]
        keep = np.zeros(len(wave), dtype=bool)
        for start, end in binarize_row(result.activations.values[g], theta, rate):
            a = max(int(round((start - delta_t) * sr)), 0)
            b = min(int(round((end + delta_t) * sr)), len(wave))
            keep[a:b] = True
        sources[spk] = np.where(keep, wave, 0.0)
    return GlobalResult(
        recording_id=result.recording_id,
        speakers=list(result.speakers),
        sources=sources,
        activations=result.activations,
        annotation=result.annotation,
        sample_rate=sr,
    )


def diarize_and_separate(
    model,
    audio: np.ndarray,
    sample_rate: int,
    params: PipelineParams,
    embedder=None,
    recording_id: str = "recording",
    jobs: int = 1,
) -> GlobalResult:
    """Full long-form pipeline: windows -> binarize -> embed -> cluster ->
    orphan attachment -> stitch -> leakage removal."""
    audio = np.asarray(audio, dtype=np.float64)
    if embedder is None:
        embedder = ToyEmbedder(sample_rate)
    windows = run_windows(model, audio, sample_rate, params.window_s, params.step_s, jobs)
    locals_ = build_local_speakers(windows, sample_rate, params, embedder)

    embedded = [ls for ls in locals_ if ls.embedding is not None]
    rate = windows[0].activation_rate
    total_frames = int(np.ceil(len(audio) * rate / sample_rate - 1e-9))
    if embedded:
        labels = cluster(np.stack([ls.embedding for ls in embedded]), params.delta)
        num_globals = int(labels.max()) + 1
        assignment = {
            (ls.window_index, ls.channel_index): int(lab)
            for ls, lab in zip(embedded, labels)
        }
    else:
        num_globals = 0
        assignment = {}
    assignment = _attach_orphans(windows, locals_, assignment, num_globals, total_frames)
    result = stitch(
        windows, assignment, num_globals, len(audio), sample_rate, params, recording_id
    )
    return remove_leakage(result, params.theta, params.delta_t)


class OracleWindowModel:
    """Drop-in window model backed by reference sources and annotation.

    Each window returns exact source slices and rasterized {0,1} reference
    activations, with a seeded random channel permutation per window so
    stitching has to undo adversarial channel orderings.
    """

    def __init__(self, recording, num_channels: int = 3, activation_rate: float = 20.0, seed: int = 0):
        self.recording = recording
        self.speakers = recording.annotation.speakers
        if len(self.speakers) > num_channels:
            raise ValidationError(
                f"{len(self.speakers)} speakers exceed {num_channels} oracle channels"
            )
        self.num_channels = num_channels
        self.activation_rate = activation_rate
        self.seed = seed
        self._sources = {s: recording.source(s) for s in self.speakers}

    def infer_window(
        self, audio: np.ndarray, start_s: float = 0.0
    ) -> tuple[np.ndarray, np.ndarray, float]:
        n = len(audio)
        sr = self.recording.sample_rate
        a = int(round(start_s * sr))
        window = (start_s, start_s + n / sr)
        act = rasterize(
            self.recording.annotation, window, self.activation_rate, self.speakers
        )
        # per-window permutation keyed on the window position, not call order
        rng = np.random.default_rng(self.seed * 1_000_003 + a)
        perm = rng.permutation(self.num_channels)
        sources = np.zeros((self.num_channels, n))
        activations = np.zeros((self.num_channels, act.num_frames))
        for k, spk in enumerate(self.speakers):
            wave = self._sources[spk]
            piece = wave[a : a + n]
            if len(piece) < n:
                piece = np.pad(piece, (0, n - len(piece)))
            sources[perm[k]] = piece
            activations[perm[k]] = act.values[k]
        return sources, activations, self.activation_rate
