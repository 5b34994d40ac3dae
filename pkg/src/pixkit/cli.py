"""Command-line entry point wiring all modules into reproducible pipelines.

Commands: synth | train | infer | tune | eval-der | eval-cpwer | attribute |
grad-check | sample-moms. Exit codes: 0 success, 2 validation error, 1
runtime error. Every randomized command takes --seed (the PIXKIT_SEED
environment variable supplies the default; an explicit flag wins), and
config precedence is CLI flag > config file > built-in default, with the
effective config echoed into the output directory for auditability.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from .annotations import write_rttm
from .corpus import Recording, load_manifest, read_wav, write_wav
from .embeddings import ToyEmbedder
from .errors import RuntimeFailure, ValidationError
from .inference import PipelineParams, diarize_and_separate
from .metrics import (
    CPWER_VARIANTS,
    attribute_utterances,
    channels_from_words,
    cpwer,
    der,
    utterances_from_ctm,
)
from .model import ToyModel, ToyModelConfig, gradient_check, load_checkpoint
from .sampling import MomSampler
from .synth import SynthScenario, generate_corpus, generate_session
from .training import TrainConfig, train
from .tuning import Grid, grid_search, read_tuning, write_tuning

GRAD_CHECK_TOLERANCE = 1e-4
_VARIANT_ALIASES = {"no-penalty": "no_overestimation_penalty", "meeteval": "meeteval"}


def _default_seed(fallback: int = 0) -> int:
    raw = os.environ.get("PIXKIT_SEED")
    if raw is None:
        return fallback
    try:
        return int(raw)
    except ValueError as exc:
        raise ValidationError(f"PIXKIT_SEED must be an integer, got {raw!r}") from exc


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{p}: invalid JSON config: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{p}: config must be a JSON object")
    return data


def _merge(defaults: dict, file_cfg: dict, flags: dict) -> dict:
    """Config precedence: CLI flag > config file > built-in default."""
    merged = dict(defaults)
    merged.update({k: v for k, v in file_cfg.items() if k in defaults})
    merged.update({k: v for k, v in flags.items() if v is not None})
    return merged


def _echo_config(out_dir: Path, command: str, effective: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, **effective}
    (out_dir / "effective_config.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n",
        encoding="utf-8",
    )


def _file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _variant(name: str) -> str:
    if name in CPWER_VARIANTS:
        return name
    if name in _VARIANT_ALIASES:
        return _VARIANT_ALIASES[name]
    raise ValidationError(
        f"unknown cpwer variant {name!r}; choose from "
        f"{sorted(set(CPWER_VARIANTS) | set(_VARIANT_ALIASES))}"
    )


# -- synth ---------------------------------------------------------------


def _cmd_synth(args) -> int:
    file_cfg = _load_config(args.config)
    defaults = {f.name: f.default for f in dataclasses.fields(SynthScenario)}
    flags = {
        "num_speakers": args.num_speakers,
        "session_length_s": args.session_length_s,
        "overlap_ratio_target": args.overlap_ratio,
        "silence_ratio_target": args.silence_ratio,
        "sample_rate_hz": args.sample_rate,
        "seed": args.seed,
    }
    if args.utterance_length is not None:
        lo, hi = (float(x) for x in args.utterance_length.split(","))
        flags["utterance_length_s"] = (lo, hi)
    effective = _merge(defaults, file_cfg, flags)
    if args.seed is None and "seed" not in file_cfg:
        effective["seed"] = _default_seed(effective["seed"])
    scenario = SynthScenario.from_dict(effective)
    train_sessions = args.train_sessions if args.train_sessions is not None else int(
        file_cfg.get("train_sessions", 2)
    )
    dev_sessions = args.dev_sessions if args.dev_sessions is not None else int(
        file_cfg.get("dev_sessions", 1)
    )
    out = Path(args.out)
    manifest = generate_corpus(scenario, out, train_sessions, dev_sessions)
    _echo_config(out, "synth", {
        **dataclasses.asdict(scenario),
        "train_sessions": train_sessions,
        "dev_sessions": dev_sessions,
    })
    _emit({"manifest": str(manifest),
           "train_sessions": train_sessions,
           "dev_sessions": dev_sessions})
    return 0


# -- train ---------------------------------------------------------------


def _cmd_train(args) -> int:
    file_cfg = _load_config(args.config)
    train_file = file_cfg.get("train", {k: v for k, v in file_cfg.items()
                                        if k not in ("train", "model")})
    model_file = file_cfg.get("model", {})
    defaults = {f.name: f.default for f in dataclasses.fields(TrainConfig)}
    flags = {
        "lam": args.lam,
        "lr_mask_net": args.lr_mask_net,
        "lr_diar_head": args.lr_diar_head,
        "grad_clip_norm": args.grad_clip_norm,
        "epochs": args.epochs,
        "steps_per_epoch": args.steps_per_epoch,
        "chunk_duration_s": args.chunk_duration_s,
        "num_sources": args.num_sources,
        "k_max": args.k_max,
        "seed": args.seed,
        "plateau_patience": args.plateau_patience,
        "dev_samples": args.dev_samples,
    }
    effective = _merge(defaults, train_file, flags)
    if args.seed is None and "seed" not in train_file:
        effective["seed"] = _default_seed(0)
    config = TrainConfig.from_dict(effective)

    corpus = load_manifest(Path(args.corpus))
    model_defaults = {f.name: f.default for f in dataclasses.fields(ToyModelConfig)}
    model_defaults["sample_rate"] = corpus.sample_rate
    model_flags = {
        "hidden": args.hidden,
        "win": args.win,
        "hop": args.hop,
        "context": args.context,
        "pool": args.pool,
        "num_sources": args.num_sources,
        "seed": args.seed,
    }
    model_effective = _merge(model_defaults, model_file, model_flags)
    if model_effective["num_sources"] is None:
        model_effective["num_sources"] = config.num_sources
    if model_effective["seed"] is None:
        model_effective["seed"] = config.seed
    model_config = ToyModelConfig(**model_effective)

    out = Path(args.out)
    resume = Path(args.resume) if args.resume else None
    ckpt = train(config, corpus, out, model_config=model_config, resume_from=resume)
    _echo_config(out, "train", {
        "train": dataclasses.asdict(config),
        "model": dataclasses.asdict(model_config),
        "corpus": str(Path(args.corpus)),
        "resume_from": str(resume) if resume else None,
    })
    _emit({"checkpoint": str(ckpt), "log": str(out / "train_log.jsonl")})
    return 0


# -- infer ---------------------------------------------------------------


def _pipeline_params(args) -> PipelineParams:
    theta, delta, delta_t = args.theta, args.delta, args.delta_t
    if args.tuning is not None:
        best = read_tuning(Path(args.tuning))["best"]
        theta = theta if theta is not None else best["theta"]
        delta = delta if delta is not None else best["delta"]
        delta_t = delta_t if delta_t is not None else best["delta_t"]
    if theta is None or delta is None or delta_t is None:
        raise ValidationError(
            "infer requires theta, delta, and delta_t -- pass --theta/--delta/"
            "--delta-t or --tuning tuning.json"
        )
    kwargs = {"theta": float(theta), "delta": float(delta), "delta_t": float(delta_t)}
    for name, value in (
        ("window_s", args.window_s),
        ("step_s", args.step_s),
        ("min_activity_s", args.min_activity_s),
        ("min_on_s", args.min_on_s),
        ("min_off_s", args.min_off_s),
    ):
        if value is not None:
            kwargs[name] = float(value)
    return PipelineParams(**kwargs)


def _select_recordings(corpus, split: str) -> list[Recording]:
    if split == "train":
        recs = corpus.train
    elif split == "dev":
        recs = corpus.dev
    else:
        recs = corpus.train + corpus.dev
    if not recs:
        raise ValidationError(f"corpus has no recordings in split {split!r}")
    return recs


def _cmd_infer(args) -> int:
    params = _pipeline_params(args)
    model, _ = load_checkpoint(Path(args.checkpoint))
    out = Path(args.out)

    if args.audio is not None:
        rate, audio = read_wav(Path(args.audio))
        targets = [(Path(args.audio).stem, audio, rate)]
    else:
        if args.corpus is None:
            raise ValidationError("infer needs either --corpus or --audio")
        corpus = load_manifest(Path(args.corpus))
        targets = [
            (rec.recording_id, rec.audio, rec.sample_rate)
            for rec in _select_recordings(corpus, args.split)
        ]

    embedders: dict[int, ToyEmbedder] = {}
    manifest = []
    for rec_id, audio, rate in targets:
        embedder = embedders.setdefault(rate, ToyEmbedder(rate))
        result = diarize_and_separate(
            model, audio, rate, params, embedder=embedder,
            recording_id=rec_id, jobs=args.jobs,
        )
        rec_dir = out / rec_id
        rec_dir.mkdir(parents=True, exist_ok=True)
        for spk in result.speakers:
            write_wav(rec_dir / f"{spk}.wav", rate, result.sources[spk])
        (rec_dir / "hyp.rttm").write_text(write_rttm(result.annotation), encoding="utf-8")
        manifest.append({
            "recording_id": rec_id,
            "speakers": result.speakers,
            "rttm": str(rec_dir / "hyp.rttm"),
        })

    pipeline = {
        "theta": params.theta,
        "delta": params.delta,
        "delta_t": params.delta_t,
        "window_s": params.window_s,
        "step_s": params.step_s,
        "min_activity_s": params.min_activity_s,
        "min_on_s": params.min_on_s,
        "min_off_s": params.min_off_s,
        "model_sha256": _file_sha256(Path(args.checkpoint)),
        "recordings": manifest,
    }
    (out / "pipeline.json").write_text(
        json.dumps(pipeline, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _echo_config(out, "infer", {
        "params": dataclasses.asdict(params),
        "checkpoint": str(Path(args.checkpoint)),
        "tuning": args.tuning,
        "jobs": args.jobs,
    })
    _emit({"pipeline": str(out / "pipeline.json"),
           "recordings": [m["recording_id"] for m in manifest]})
    return 0


# -- tune ----------------------------------------------------------------


def _axis(raw: str | None) -> list[float] | None:
    if raw is None:
        return None
    try:
        return [float(x) for x in raw.split(",") if x.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad grid axis {raw!r}: {exc}") from exc


def _cmd_tune(args) -> int:
    file_cfg = _load_config(args.config)
    grid_kwargs = {k: v for k, v in file_cfg.get("grid", file_cfg).items()
                   if k in Grid.__dataclass_fields__}
    for name, flag in (("thetas", args.thetas), ("deltas", args.deltas),
                       ("delta_ts", args.delta_ts)):
        axis = _axis(flag)
        if axis is not None:
            grid_kwargs[name] = axis
    if args.target is not None:
        grid_kwargs["target"] = args.target
    grid = Grid(**grid_kwargs)

    corpus = load_manifest(Path(args.corpus))
    dev = _select_recordings(corpus, args.split)
    model, _ = load_checkpoint(Path(args.checkpoint))
    seed = args.seed if args.seed is not None else _default_seed(0)
    best, table = grid_search(
        model, dev, grid, seed=seed, variant=_variant(args.variant),
        lang=args.lang, jobs=args.jobs,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tuning(out / "tuning.json", best, table, meta={
        "target": grid.target,
        "checkpoint_sha256": _file_sha256(Path(args.checkpoint)),
        "seed": seed,
        "variant": _variant(args.variant),
        "recordings": [r.recording_id for r in dev],
    })
    _echo_config(out, "tune", {
        "grid": {"thetas": grid.thetas, "deltas": grid.deltas,
                 "delta_ts": grid.delta_ts, "target": grid.target},
        "checkpoint": str(Path(args.checkpoint)),
        "seed": seed,
        "jobs": args.jobs,
    })
    _emit({"tuning": str(out / "tuning.json"), "best": best})
    return 0


# -- eval ----------------------------------------------------------------


def _read_rttm(path: Path):
    from .annotations import parse_rttm

    return parse_rttm(Path(path).read_text(encoding="utf-8"))


def _cmd_eval_der(args) -> int:
    if args.ref is not None and args.hyp is not None:
        report = der(_read_rttm(args.ref), _read_rttm(args.hyp)).to_dict()
        payload = {"der": report["der"], "reports": {"pair": report}}
    elif args.corpus is not None and args.hyp_dir is not None:
        corpus = load_manifest(Path(args.corpus))
        recs = _select_recordings(corpus, args.split)
        reports = {}
        err_s = ref_s = 0.0
        for rec in recs:
            hyp_path = Path(args.hyp_dir) / rec.recording_id / "hyp.rttm"
            if not hyp_path.exists():
                raise ValidationError(f"missing hypothesis RTTM: {hyp_path}")
            rep = der(rec.annotation, _read_rttm(hyp_path))
            reports[rec.recording_id] = rep.to_dict()
            err_s += rep.false_alarm_s + rep.missed_s + rep.confusion_s
            ref_s += rep.total_ref_s
        payload = {"der": err_s / ref_s if ref_s > 0 else 0.0, "reports": reports}
    else:
        raise ValidationError("eval-der needs --ref/--hyp or --corpus/--hyp-dir")
    if args.out is not None:
        Path(args.out).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    _emit(payload)
    return 0


def _cmd_eval_cpwer(args) -> int:
    from .annotations import parse_ctm

    ref = channels_from_words(
        parse_ctm(Path(args.ref).read_text(encoding="utf-8")), args.lang
    )
    hyp = channels_from_words(
        parse_ctm(Path(args.hyp).read_text(encoding="utf-8")), args.lang
    )
    report = cpwer(ref, hyp, _variant(args.variant)).to_dict()
    if args.out is not None:
        Path(args.out).write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    _emit(report)
    return 0


def _cmd_attribute(args) -> int:
    from .annotations import parse_ctm

    words = parse_ctm(Path(args.ctm).read_text(encoding="utf-8"))
    diar = _read_rttm(args.rttm)
    utts = utterances_from_ctm(words, gap_s=args.gap_s, lang=args.lang)
    seed = args.seed if args.seed is not None else _default_seed(0)
    channels = attribute_utterances(utts, diar, np.random.default_rng(seed))
    payload = {"seed": seed, "channels": channels}
    if args.out is not None:
        Path(args.out).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    _emit(payload)
    return 0


# -- grad-check ----------------------------------------------------------


def _grad_check_corpus(seed: int) -> list[Recording]:
    scn = SynthScenario(
        num_speakers=2, session_length_s=30.0, sample_rate_hz=8000, seed=seed
    )
    session = generate_session(scn, recording_id=f"gc{seed}")
    return [Recording(
        recording_id=session.recording_id,
        audio=session.mixture.astype(np.float64) / 32768.0,
        sample_rate=session.sample_rate,
        annotation=session.annotation,
    )]


def _cmd_grad_check(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed(7)
    lams = _axis(args.lams) or [0.0, 0.5, 1.0]
    worst = 0.0
    for s in range(seed, seed + args.seeds):
        cfg = ToyModelConfig(
            sample_rate=8000, win=256, hop=100, context=1, hidden=6,
            num_sources=3, pool=8, seed=s,
        )
        model = ToyModel(cfg)
        sampler = MomSampler(
            _grad_check_corpus(s), duration_s=0.5, k_max=3,
            frame_rate=cfg.activation_rate, seed=s,
        )
        sample = sampler.sample_mom()
        rng = np.random.default_rng(s + 99991)
        for lam in lams:
            worst = max(
                worst,
                gradient_check(model, sample, lam, h=args.h, coords=args.coords, rng=rng),
            )
    ok = worst < GRAD_CHECK_TOLERANCE
    _emit({"max_relative_error": worst, "tolerance": GRAD_CHECK_TOLERANCE,
           "seeds": args.seeds, "lams": lams, "pass": ok})
    return 0 if ok else 1


# -- sample-moms ---------------------------------------------------------


def _cmd_sample_moms(args) -> int:
    corpus = load_manifest(Path(args.corpus))
    recs = _select_recordings(corpus, args.split)
    seed = args.seed if args.seed is not None else _default_seed(0)
    sampler = MomSampler(
        recs, duration_s=args.duration_s, k_max=args.k_max,
        frame_rate=20.0, seed=seed,
    )
    violations = {"speaker_overlap": 0, "k_exceeded": 0,
                  "cross_recording": 0, "additivity": 0}
    for _ in range(args.count):
        s = sampler.sample_mom()
        spk1 = set(s.chunk1.labels.speakers)
        spk2 = set(s.chunk2.labels.speakers)
        if spk1 & spk2:
            violations["speaker_overlap"] += 1
        if len(spk1 | spk2) > args.k_max:
            violations["k_exceeded"] += 1
        if s.chunk1.recording_id != s.chunk2.recording_id:
            violations["cross_recording"] += 1
        if not np.array_equal(s.mom_audio, s.chunk1.audio + s.chunk2.audio):
            violations["additivity"] += 1
    payload = {"count": args.count, "seed": seed, "violations": violations,
               "pass": not any(violations.values())}
    if args.out is not None:
        Path(args.out).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    _emit(payload)
    return 0 if payload["pass"] else 1


# -- parser --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pixkit",
        description="Joint diarization + separation toolkit (synthetic-scale).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=None,
                       help="random seed (default: PIXKIT_SEED env or command default)")
        p.add_argument("--json-errors", action="store_true",
                       help="emit errors as machine-readable JSON on stderr")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    add_common(p)
    p.add_argument("--config", help="JSON scenario config")
    p.add_argument("--out", required=True)
    p.add_argument("--num-speakers", type=int, default=None)
    p.add_argument("--session-length-s", type=float, default=None)
    p.add_argument("--overlap-ratio", type=float, default=None)
    p.add_argument("--silence-ratio", type=float, default=None)
    p.add_argument("--sample-rate", type=int, default=None)
    p.add_argument("--utterance-length", default=None, metavar="LO,HI")
    p.add_argument("--train-sessions", type=int, default=None)
    p.add_argument("--dev-sessions", type=int, default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train the toy separation+diarization model")
    add_common(p)
    p.add_argument("--config", help="JSON config with 'train'/'model' sections")
    p.add_argument("--corpus", required=True, help="manifest.json path")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--lr-mask-net", type=float, default=None)
    p.add_argument("--lr-diar-head", type=float, default=None)
    p.add_argument("--grad-clip-norm", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--steps-per-epoch", type=int, default=None)
    p.add_argument("--chunk-duration-s", type=float, default=None)
    p.add_argument("--num-sources", type=int, default=None)
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--plateau-patience", type=int, default=None)
    p.add_argument("--dev-samples", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--win", type=int, default=None)
    p.add_argument("--hop", type=int, default=None)
    p.add_argument("--context", type=int, default=None)
    p.add_argument("--pool", type=int, default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("infer", help="long-form diarization + separation")
    add_common(p)
    p.add_argument("--corpus", default=None, help="manifest.json path")
    p.add_argument("--audio", default=None, help="single WAV instead of a corpus")
    p.add_argument("--split", choices=("train", "dev", "all"), default="dev")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--delta-t", type=float, default=None)
    p.add_argument("--tuning", default=None, help="tuning.json with the best point")
    p.add_argument("--window-s", type=float, default=None)
    p.add_argument("--step-s", type=float, default=None)
    p.add_argument("--min-activity-s", type=float, default=None)
    p.add_argument("--min-on-s", type=float, default=None)
    p.add_argument("--min-off-s", type=float, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("tune", help="grid search over theta/delta/delta_t")
    add_common(p)
    p.add_argument("--config", help="JSON config with a 'grid' section")
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", choices=("train", "dev", "all"), default="dev")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target", choices=("der", "cpwer"), default=None)
    p.add_argument("--thetas", default=None, metavar="A,B,...")
    p.add_argument("--deltas", default=None, metavar="A,B,...")
    p.add_argument("--delta-ts", default=None, metavar="A,B,...")
    p.add_argument("--variant", default="meeteval")
    p.add_argument("--lang", choices=("en", "zh"), default="en")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("eval-der", help="diarization error rate (no collar)")
    add_common(p)
    p.add_argument("--ref", default=None, help="reference RTTM")
    p.add_argument("--hyp", default=None, help="hypothesis RTTM")
    p.add_argument("--corpus", default=None)
    p.add_argument("--hyp-dir", default=None, help="directory with <rec>/hyp.rttm")
    p.add_argument("--split", choices=("train", "dev", "all"), default="dev")
    p.add_argument("--out", default=None, help="write the JSON report here too")
    p.set_defaults(func=_cmd_eval_der)

    p = sub.add_parser("eval-cpwer", help="concatenated minimum-permutation WER")
    add_common(p)
    p.add_argument("--ref", required=True, help="reference CTM")
    p.add_argument("--hyp", required=True, help="hypothesis CTM")
    p.add_argument("--variant", default="meeteval",
                   help="meeteval | no-penalty (alias no_overestimation_penalty)")
    p.add_argument("--lang", choices=("en", "zh"), default="en")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eval_cpwer)

    p = sub.add_parser("attribute", help="attach utterances to diarized speakers")
    add_common(p)
    p.add_argument("--ctm", required=True, help="word timings (CTM)")
    p.add_argument("--rttm", required=True, help="diarization output (RTTM)")
    p.add_argument("--gap-s", type=float, default=0.5)
    p.add_argument("--lang", choices=("en", "zh"), default="en")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_attribute)

    p = sub.add_parser("grad-check", help="finite-difference gradient check")
    add_common(p)
    p.add_argument("--seeds", type=int, default=3, help="number of seeds to test")
    p.add_argument("--lams", default=None, metavar="A,B,...",
                   help="lambda values (default 0,0.5,1)")
    p.add_argument("--h", type=float, default=1e-4)
    p.add_argument("--coords", type=int, default=30,
                   help="random parameter coordinates per case")
    p.set_defaults(func=_cmd_grad_check)

    p = sub.add_parser("sample-moms", help="audit the mixture-of-mixtures sampler")
    add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", choices=("train", "dev", "all"), default="train")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--duration-s", type=float, default=2.0)
    p.add_argument("--k-max", type=int, default=3)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_sample_moms)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        _report_error(args, "validation", str(exc))
        return 2
    except RuntimeFailure as exc:
        _report_error(args, "runtime", str(exc))
        return 1


def _report_error(args, kind: str, message: str) -> None:
    if getattr(args, "json_errors", False):
        print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    else:
        print(f"pixkit: {kind} error: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
