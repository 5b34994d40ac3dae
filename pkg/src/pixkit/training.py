"""Training loop: Adam with global-norm gradient clipping and
halve-on-plateau learning rates, deterministic under a fixed seed.

Two learning-rate groups are exposed (mask network vs diarization head),
both defaulting to 3e-4. Per-epoch means of the loss breakdown on train and
dev go to a JSON-lines log; checkpoints carry parameters, optimizer
moments, and the sampler RNG state so a resumed run reproduces an
uninterrupted one exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Corpus
from .errors import RuntimeFailure, ValidationError
from .losses import LossBreakdown
from .model import (
    DIAR_HEAD_PARAMS,
    PARAM_NAMES,
    ToyModel,
    ToyModelConfig,
    load_checkpoint,
    save_checkpoint,
)
from .sampling import MomSampler

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    lam: float = 0.5
    lr_mask_net: float = 3e-4
    lr_diar_head: float = 3e-4
    grad_clip_norm: float = 5.0
    epochs: int = 10
    steps_per_epoch: int = 50
    chunk_duration_s: float = 2.0
    num_sources: int = 3
    k_max: int = 3
    seed: int = 0
    plateau_patience: int = 5
    dev_samples: int = 16

    def __post_init__(self):
        if self.grad_clip_norm <= 0:
            raise ValidationError("grad_clip_norm must be > 0")
        if not 0.0 <= self.lam <= 1.0:
            raise ValidationError("lam must be in [0, 1]")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
        )


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so the global L2 norm is at most
    max_norm; returns the pre-clip norm."""
    sq = sum(float(np.sum(g * g)) for g in grads.values())
    norm = math.sqrt(sq)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-16)
        for g in grads.values():
            g *= scale
    return norm


def adam_update(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr_by_name: dict[str, float],
) -> None:
    state.step += 1
    t = state.step
    bias1 = 1.0 - ADAM_BETA1**t
    bias2 = 1.0 - ADAM_BETA2**t
    for name in PARAM_NAMES:
        g = grads[name]
        state.m[name] = ADAM_BETA1 * state.m[name] + (1.0 - ADAM_BETA1) * g
        state.v[name] = ADAM_BETA2 * state.v[name] + (1.0 - ADAM_BETA2) * g * g
        mhat = state.m[name] / bias1
        vhat = state.v[name] / bias2
        params[name] -= lr_by_name[name] * mhat / (np.sqrt(vhat) + ADAM_EPS)


def _lr_by_name(lr_mask: float, lr_diar: float) -> dict[str, float]:
    return {
        name: (lr_diar if name in DIAR_HEAD_PARAMS else lr_mask)
        for name in PARAM_NAMES
    }


def _mean_breakdown(items: list[LossBreakdown]) -> dict[str, float]:
    fields = ("pit_chunk1", "pit_chunk2", "pit_mom", "mixit", "total")
    return {f: float(np.mean([getattr(b, f) for b in items])) for f in fields}


def _flatten_state(state: AdamState) -> tuple[np.ndarray, np.ndarray]:
    m = np.concatenate([state.m[n].ravel() for n in PARAM_NAMES])
    v = np.concatenate([state.v[n].ravel() for n in PARAM_NAMES])
    return m, v


def _unflatten_state(params: dict[str, np.ndarray], m: np.ndarray, v: np.ndarray, step: int) -> AdamState:
    state = AdamState.zeros_like(params)
    pos = 0
    for name in PARAM_NAMES:
        size = params[name].size
        state.m[name] = m[pos : pos + size].reshape(params[name].shape).copy()
        state.v[name] = v[pos : pos + size].reshape(params[name].shape).copy()
        pos += size
    state.step = step
    return state


def train(
    config: TrainConfig,
    corpus: Corpus,
    out_dir: Path,
    model_config: ToyModelConfig | None = None,
    resume_from: Path | None = None,
) -> Path:
    """Train the toy model; writes `checkpoint.bin` and `train_log.jsonl`
    into out_dir and returns the checkpoint path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not corpus.train or not corpus.dev:
        raise ValidationError("training requires both train and dev splits")

    start_epoch = 0
    if resume_from is not None:
        model, extra = load_checkpoint(resume_from)
        cfg = model.cfg
        adam = _unflatten_state(
            model.params, extra["adam_m"], extra["adam_v"], extra["adam_step"]
        )
        lr_mask = extra["lr_mask_net"]
        lr_diar = extra["lr_diar_head"]
        start_epoch = extra["epoch"] + 1
        best_dev = extra["best_dev"]
        plateau = extra["plateau"]
        rng_state = extra["sampler_rng_state"]
    else:
        if model_config is None:
            model_config = ToyModelConfig(
                sample_rate=corpus.sample_rate,
                num_sources=config.num_sources,
                seed=config.seed,
            )
        cfg = model_config
        model = ToyModel(cfg)
        adam = AdamState.zeros_like(model.params)
        lr_mask, lr_diar = config.lr_mask_net, config.lr_diar_head
        best_dev = math.inf
        plateau = 0
        rng_state = None

    sampler = MomSampler(
        corpus.train,
        duration_s=config.chunk_duration_s,
        k_max=config.k_max,
        frame_rate=cfg.activation_rate,
        seed=config.seed,
    )
    if rng_state is not None:
        sampler.rng.bit_generator.state = rng_state
    dev_sampler = MomSampler(
        corpus.dev,
        duration_s=config.chunk_duration_s,
        k_max=config.k_max,
        frame_rate=cfg.activation_rate,
        seed=config.seed + 1000,
    )
    dev_set = [dev_sampler.sample_mom() for _ in range(config.dev_samples)]

    ckpt_path = out_dir / "checkpoint.bin"
    log_path = out_dir / "train_log.jsonl"
    log_mode = "a" if resume_from is not None else "w"
    log_fh = open(log_path, log_mode, encoding="utf-8")

    try:
        for epoch in range(start_epoch, config.epochs):
            train_breakdowns = []
            for _ in range(config.steps_per_epoch):
                sample = sampler.sample_mom()
                breakdown, grads = model.loss_and_grads(sample, config.lam)
                if not math.isfinite(breakdown.total):
                    raise RuntimeFailure(
                        f"training diverged at epoch {epoch}; last good checkpoint: {ckpt_path}"
                    )
                clip_gradients(grads, config.grad_clip_norm)
                adam_update(model.params, grads, adam, _lr_by_name(lr_mask, lr_diar))
                train_breakdowns.append(breakdown)

            dev_breakdowns = [
                model.loss_and_grads(s, config.lam)[0] for s in dev_set
            ]
            dev_mean = _mean_breakdown(dev_breakdowns)
            if dev_mean["total"] < best_dev - 1e-12:
                best_dev = dev_mean["total"]
                plateau = 0
            else:
                plateau += 1
                if plateau >= config.plateau_patience:
                    lr_mask *= 0.5
                    lr_diar *= 0.5
                    plateau = 0

            record = {
                "epoch": epoch,
                "train": _mean_breakdown(train_breakdowns),
                "dev": dev_mean,
                "lr_mask_net": lr_mask,
                "lr_diar_head": lr_diar,
            }
            log_fh.write(json.dumps(record, sort_keys=True) + "\n")
            log_fh.flush()

            m_flat, v_flat = _flatten_state(adam)
            save_checkpoint(
                ckpt_path,
                model,
                extra={
                    "adam_m": m_flat,
                    "adam_v": v_flat,
                    "adam_step": adam.step,
                    "epoch": epoch,
                    "lr_mask_net": lr_mask,
                    "lr_diar_head": lr_diar,
                    "best_dev": best_dev,
                    "plateau": plateau,
                    "sampler_rng_state": sampler.rng.bit_generator.state,
                    "train_config": asdict(config),
                },
            )
    finally:
        log_fh.close()
    return ckpt_path
