"""Grid search over the pipeline hyperparameters {theta, delta, delta_t}.

Window inference runs once per recording and is cached; every grid point
re-runs only binarization, embedding, clustering, stitching, leakage removal,
and scoring. The optimum is the argmin with a lexicographic (theta, delta,
delta_t) tie-break.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .annotations import Annotation
from .corpus import Recording
from .embeddings import ToyEmbedder
from .errors import ValidationError
from .inference import (
    PipelineParams,
    WindowOutput,
    _attach_orphans,
    build_local_speakers,
    cluster,
    remove_leakage,
    run_windows,
    stitch,
)
from .metrics import (
    attribute_utterances,
    channels_from_words,
    cpwer,
    der,
    utterances_from_ctm,
)

TUNING_TARGETS = ("der", "cpwer")


def _steps(lo: float, hi: float, step: float) -> list[float]:
    return [round(lo + i * step, 10) for i in range(int(round((hi - lo) / step)) + 1)]


@dataclass
class Grid:
    """Hyperparameter axes; with target 'der' the delta_t axis is forced to
    {0} because leakage removal does not affect the diarization output."""

    thetas: list[float] = field(default_factory=lambda: _steps(0.3, 0.9, 0.1))
    deltas: list[float] = field(default_factory=lambda: _steps(0.4, 1.2, 0.1))
    delta_ts: list[float] = field(default_factory=lambda: [0.0, 0.25, 0.5, 1.0])
    target: str = "der"

    def __post_init__(self):
        if self.target not in TUNING_TARGETS:
            raise ValidationError(f"unknown tuning target {self.target!r}")
        if not (self.thetas and self.deltas and self.delta_ts):
            raise ValidationError("every grid axis must be non-empty")
        if any(not 0.0 <= t <= 1.0 for t in self.thetas):
            raise ValidationError("theta values must lie in [0, 1]")
        if any(d < 0 for d in self.deltas) or any(t < 0 for t in self.delta_ts):
            raise ValidationError("delta and delta_t values must be >= 0")
        if self.target == "der":
            self.delta_ts = [0.0]

    def points(self) -> list[tuple[float, float, float]]:
        return [
            (th, de, dt)
            for th in sorted(self.thetas)
            for de in sorted(self.deltas)
            for dt in sorted(self.delta_ts)
        ]

    @classmethod
    def from_dict(cls, data: dict) -> "Grid":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in known})


def _models_by_recording(model, dev: list[Recording]) -> dict[str, object]:
    if isinstance(model, dict):
        return model
    return {rec.recording_id: model for rec in dev}


def _pipeline_at(
    windows: list[WindowOutput],
    locals_,
    rec: Recording,
    params: PipelineParams,
):
    embedded = [ls for ls in locals_ if ls.embedding is not None]
    rate = windows[0].activation_rate
    total_frames = int(np.ceil(len(rec.audio) * rate / rec.sample_rate - 1e-9))
    if embedded:
        labels = cluster(np.stack([ls.embedding for ls in embedded]), params.delta)
        num_globals = int(labels.max()) + 1
        assignment = {
            (ls.window_index, ls.channel_index): int(lab)
            for ls, lab in zip(embedded, labels)
        }
    else:
        num_globals, assignment = 0, {}
    assignment = _attach_orphans(windows, locals_, assignment, num_globals, total_frames)
    result = stitch(
        windows, assignment, num_globals, len(rec.audio), rec.sample_rate, params,
        rec.recording_id,
    )
    return remove_leakage(result, params.theta, params.delta_t)


def _score_der(rec: Recording, hyp: Annotation) -> tuple[float, float]:
    """(error seconds, reference seconds) so recordings aggregate by time."""
    if not hyp.segments:
        total = rec.annotation.speech_time()
        return total, total  # everything missed
    rep = der(rec.annotation, hyp)
    return rep.false_alarm_s + rep.missed_s + rep.confusion_s, rep.total_ref_s


def _score_cpwer(
    rec: Recording, hyp: Annotation, seed: int, variant: str, lang: str
) -> tuple[float, float]:
    """(error count, reference words); the hypothesis transcript comes from
    attributing the reference utterances to the diarized speakers."""
    word_channels = rec.word_channels()
    ref_ch = channels_from_words(word_channels, lang)
    utts = utterances_from_ctm(word_channels, lang=lang)
    rng = np.random.default_rng(seed)
    hyp_ch = attribute_utterances(utts, hyp, rng)
    rep = cpwer(ref_ch, hyp_ch, variant)
    return float(rep.substitutions + rep.deletions + rep.insertions), float(rep.ref_words)


def evaluate_point(
    model,
    dev: list[Recording],
    point: tuple[float, float, float],
    base: PipelineParams | None = None,
    grid_target: str = "der",
    embedder=None,
    seed: int = 0,
    variant: str = "meeteval",
    lang: str = "en",
    jobs: int = 1,
    _cache: dict | None = None,
) -> float:
    """Score one (theta, delta, delta_t) point from scratch (no cache unless
    one is passed in); used both by grid_search and as its independent
    cross-check."""
    if not dev:
        raise ValidationError("tuning requires a non-empty dev set")
    theta, delta, delta_t = point
    models = _models_by_recording(model, dev)
    err_total = 0.0
    ref_total = 0.0
    for rec in dev:
        params = _params_at(base, theta, delta, delta_t)
        if _cache is not None:
            windows = _cache.setdefault(
                ("windows", rec.recording_id),
                run_windows(models[rec.recording_id], rec.audio, rec.sample_rate,
                            params.window_s, params.step_s, jobs),
            )
            locals_ = _cache.setdefault(
                ("locals", rec.recording_id, theta),
                build_local_speakers(
                    windows, rec.sample_rate, params,
                    embedder or _cache.setdefault("embedder", ToyEmbedder(rec.sample_rate)),
                ),
            )
        else:
            windows = run_windows(models[rec.recording_id], rec.audio, rec.sample_rate,
                                  params.window_s, params.step_s, jobs)
            locals_ = build_local_speakers(
                windows, rec.sample_rate, params, embedder or ToyEmbedder(rec.sample_rate)
            )
        result = _pipeline_at(windows, locals_, rec, params)
        if grid_target == "der":
            err, ref = _score_der(rec, result.annotation)
        else:
            err, ref = _score_cpwer(rec, result.annotation, seed, variant, lang)
        err_total += err
        ref_total += ref
    return err_total / ref_total


def _params_at(base: PipelineParams | None, theta, delta, delta_t) -> PipelineParams:
    if base is None:
        return PipelineParams(theta=theta, delta=delta, delta_t=delta_t)
    return replace(base, theta=theta, delta=delta, delta_t=delta_t)


def grid_search(
    model,
    dev: list[Recording],
    grid: Grid,
    base: PipelineParams | None = None,
    embedder=None,
    seed: int = 0,
    variant: str = "meeteval",
    lang: str = "en",
    jobs: int = 1,
) -> tuple[dict, list[dict]]:
    """Exhaustive search; returns (best point, full table in grid order).
    Best is the argmin of the target with lexicographic (theta, delta,
    delta_t) tie-break."""
    if not dev:
        raise ValidationError("tuning requires a non-empty dev set")
    if grid.target == "cpwer":
        for rec in dev:
            if rec.ctm_path is None:
                raise ValidationError(
                    f"{rec.recording_id}: cpwer tuning needs a reference CTM"
                )
    cache: dict = {}
    table: list[dict] = []
    best: dict | None = None
    for point in grid.points():
        score = evaluate_point(
            model, dev, point, base, grid.target, embedder, seed, variant, lang,
            jobs, _cache=cache,
        )
        row = {
            "theta": point[0],
            "delta": point[1],
            "delta_t": point[2],
            grid.target: score,
        }
        table.append(row)
        if best is None or score < best[grid.target]:
            best = dict(row)
    return best, table


def write_tuning(path: Path, best: dict, table: list[dict], meta: dict | None = None) -> None:
    payload = {"best": best, "table": table}
    if meta:
        payload["meta"] = meta
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_tuning(path: Path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if "best" not in data:
        raise ValidationError(f"{path}: no 'best' entry in tuning file")
    return data
