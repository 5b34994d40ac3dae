"""Toy joint separator + diarization network with hand-derived gradients.

Structure: log-magnitude frames of the mixture (with +-C frames of context)
feed a two-hidden-layer mask network that emits M sigmoid masks per
frequency bin. Sources are resynthesized from masked magnitude with the
mixture phase via weighted overlap-add. A diarization head consumes each
masked source independently: 8-fold average pooling over frames, then two
64-wide tanh layers and a sigmoid, so activation row m stays aligned with
source m.

Everything is float64 numpy. The analysis/synthesis transform uses explicit
cosine/sine basis matrices, which keeps every op a matmul or an elementwise
map and makes the manual backward pass straightforward.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ValidationError
from .losses import (
    PROB_EPS,
    LossBreakdown,
    MixingMatrix,
    Permutation,
    mixit_loss,
    pad_rows,
    pit_loss,
    si_sdr,
    si_sdr_grad,
)

DIAR_FEAT_EPS = 1e-5  # floor inside the diar head's log
MAG_EPS = 1e-10  # inside the magnitude sqrt, keeps it smooth at silence

# log-magnitude features span roughly [-11.5, 0]; this fixed affine brings
# them to order one so the tanh layers start in their linear range
FEAT_SHIFT = 6.0
FEAT_SCALE = 3.0


@dataclass
class ToyModelConfig:
    sample_rate: int = 16000
    win: int = 256
    hop: int = 100
    context: int = 2
    hidden: int = 48
    num_sources: int = 3
    pool: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.win % 2 != 0 or self.win <= self.hop:
            raise ValidationError("win must be even and larger than hop")
        if self.pool < 1 or self.context < 0:
            raise ValidationError("bad pool/context")

    @property
    def num_bins(self) -> int:
        return self.win // 2 + 1

    @property
    def feature_rate(self) -> float:
        return self.sample_rate / self.hop

    @property
    def activation_rate(self) -> float:
        return self.feature_rate / self.pool


PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "V1", "c1", "V2", "c2", "V3", "c3")

MASK_NET_PARAMS = ("W1", "b1", "W2", "b2", "W3", "b3")
DIAR_HEAD_PARAMS = ("V1", "c1", "V2", "c2", "V3", "c3")

DIAR_WIDTH = 64


def init_params(cfg: ToyModelConfig) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(cfg.seed)
    f = cfg.num_bins
    ctx_dim = f * (2 * cfg.context + 1)
    h = cfg.hidden
    m = cfg.num_sources

    def w(shape):
        return rng.standard_normal(shape) / np.sqrt(shape[0])

    return {
        "W1": w((ctx_dim, h)),
        "b1": np.zeros(h),
        "W2": w((h, h)),
        "b2": np.zeros(h),
        "W3": w((h, m * f)),
        "b3": np.zeros(m * f),
        "V1": w((f, DIAR_WIDTH)),
        "c1": np.zeros(DIAR_WIDTH),
        "V2": w((DIAR_WIDTH, DIAR_WIDTH)),
        "c2": np.zeros(DIAR_WIDTH),
        "V3": w((DIAR_WIDTH, 1)),
        "c3": np.zeros(1),
    }


class ToyModel:
    """Joint separator/diarizer; holds parameters plus fixed transform bases."""

    def __init__(self, cfg: ToyModelConfig, params: dict[str, np.ndarray] | None = None):
        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg)
        win, f = cfg.win, cfg.num_bins
        n = np.arange(win)
        freqs = np.arange(f)[:, None]
        theta = 2.0 * np.pi * freqs * n[None, :] / win
        self._cos = np.cos(theta)  # (F, win)
        self._sin = np.sin(theta)
        scale = np.full(f, 2.0 / win)
        scale[0] = 1.0 / win
        scale[-1] = 1.0 / win
        self._scale = scale  # per-bin inverse-transform weight
        self._window = np.hanning(win)
        self._pad = (win - cfg.hop) // 2

    # -- framing ---------------------------------------------------------

    def _frame_count(self, num_samples: int) -> int:
        if num_samples % self.cfg.hop != 0:
            raise ValidationError(
                f"chunk length {num_samples} not a multiple of hop {self.cfg.hop}"
            )
        return num_samples // self.cfg.hop

    def _frame(self, audio: np.ndarray) -> np.ndarray:
        t = self._frame_count(len(audio))
        win, hop = self.cfg.win, self.cfg.hop
        right = (t - 1) * hop + win - len(audio) - self._pad
        padded = np.pad(audio, (self._pad, max(right, 0)))
        idx = np.arange(win)[None, :] + hop * np.arange(t)[:, None]
        return padded[idx] * self._window

    def _overlap_add(self, rec: np.ndarray, num_samples: int) -> np.ndarray:
        """rec: (M, T, win) synthesis frames -> (M, num_samples) waveforms."""
        m, t, win = rec.shape
        hop = self.cfg.hop
        total = (t - 1) * hop + win
        out = np.zeros((m, total))
        weighted = rec * self._window
        for k in range(t):
            out[:, k * hop : k * hop + win] += weighted[:, k]
        norm = self._ola_norm(t)
        out = out / norm
        return out[:, self._pad : self._pad + num_samples]

    def _ola_norm(self, t: int) -> np.ndarray:
        win, hop = self.cfg.win, self.cfg.hop
        total = (t - 1) * hop + win
        norm = np.zeros(total)
        w2 = self._window * self._window
        for k in range(t):
            norm[k * hop : k * hop + win] += w2
        return np.maximum(norm, 1e-8)

    # -- forward ----------------------------------------------------------

    def forward(
        self,
        audio: np.ndarray,
        mask_override: np.ndarray | None = None,
        compute_sources: bool = True,
    ) -> dict:
        """Run the model on one chunk; returns a cache holding every
        intermediate needed by `backward`.

        `mask_override` (test hook) substitutes the mask-net output with
        fixed masks of shape (M, T, F).
        """
        cfg = self.cfg
        p = self.params
        for name in PARAM_NAMES:
            if not np.all(np.isfinite(p[name])):
                raise ValidationError(f"parameter {name} contains NaN/inf")
        audio = np.asarray(audio, dtype=np.float64)
        frames = self._frame(audio)
        t = frames.shape[0]
        r = frames @ self._cos.T  # (T, F)
        i = -(frames @ self._sin.T)
        mag = np.sqrt(r * r + i * i + MAG_EPS)
        logmag = (np.log(mag) + FEAT_SHIFT) / FEAT_SCALE
        z = self._stack_context(logmag)
        h1 = np.tanh(z @ p["W1"] + p["b1"])
        h2 = np.tanh(h1 @ p["W2"] + p["b2"])
        g = h2 @ p["W3"] + p["b3"]  # (T, M*F)
        m = cfg.num_sources
        f = cfg.num_bins
        if mask_override is not None:
            masks = np.asarray(mask_override, dtype=np.float64)
            if masks.shape != (m, t, f):
                raise ValidationError(f"mask_override shape {masks.shape} != {(m, t, f)}")
        else:
            masks = _sigmoid(g).reshape(t, m, f).transpose(1, 0, 2)  # (M, T, F)

        cache = {
            "audio": audio,
            "frames": frames,
            "r": r,
            "i": i,
            "mag": mag,
            "z": z,
            "h1": h1,
            "h2": h2,
            "g": g,
            "masks": masks,
            "override": mask_override is not None,
        }

        if compute_sources:
            rm = masks * r[None]
            im = masks * i[None]
            rec = (rm * self._scale) @ self._cos - (im * self._scale) @ self._sin
            cache["sources"] = self._overlap_add(rec, len(audio))
        else:
            cache["sources"] = None

        # diarization head, each masked source independently
        ta = t // cfg.pool
        y = masks * mag[None]
        dfeat = (np.log(y + DIAR_FEAT_EPS) + FEAT_SHIFT) / FEAT_SCALE  # (M, T, F)
        pooled = dfeat[:, : ta * cfg.pool].reshape(m, ta, cfg.pool, f).mean(axis=2)
        a1 = np.tanh(pooled @ p["V1"] + p["c1"])
        a2 = np.tanh(a1 @ p["V2"] + p["c2"])
        logits = (a2 @ p["V3"])[..., 0] + p["c3"][0]  # (M, Ta)
        act = _sigmoid(logits)
        cache.update(
            {"y": y, "pooled": pooled, "a1": a1, "a2": a2, "logits": logits, "act": act}
        )
        return cache

    def infer_window(
        self, audio: np.ndarray, start_s: float = 0.0
    ) -> tuple[np.ndarray, np.ndarray, float]:
        """Inference-facing forward: (sources (M, N), activations (M, Ta),
        activation frame rate). `start_s` is the window position within the
        recording; this model is position-independent and ignores it, but
        oracle models use it to slice reference material."""
        cache = self.forward(audio, compute_sources=True)
        return cache["sources"], cache["act"], self.cfg.activation_rate

    def _stack_context(self, logmag: np.ndarray) -> np.ndarray:
        c = self.cfg.context
        t, f = logmag.shape
        blocks = []
        for s in range(-c, c + 1):
            shifted = np.zeros_like(logmag)
            if s < 0:
                shifted[-s:] = logmag[: t + s]
            elif s > 0:
                shifted[: t - s] = logmag[s:]
            else:
                shifted = logmag
            blocks.append(shifted)
        return np.concatenate(blocks, axis=1)

    # -- backward ---------------------------------------------------------

    def backward(
        self,
        cache: dict,
        d_logits: np.ndarray | None,
        d_sources: np.ndarray | None,
        grads: dict[str, np.ndarray],
    ) -> None:
        """Accumulate parameter gradients for one forward pass given upstream
        gradients on the diarization logits and/or the source waveforms."""
        cfg = self.cfg
        p = self.params
        m, f = cfg.num_sources, cfg.num_bins
        t = cache["r"].shape[0]
        ta = t // cfg.pool
        d_masks = np.zeros_like(cache["masks"])

        if d_logits is not None:
            a1, a2, pooled = cache["a1"], cache["a2"], cache["pooled"]
            grads["V3"] += np.einsum("mth,mt->h", a2, d_logits)[:, None]
            grads["c3"] += np.array([d_logits.sum()])
            da2 = d_logits[..., None] * p["V3"][:, 0]
            dpre2 = da2 * (1.0 - a2 * a2)
            grads["V2"] += np.einsum("mti,mtj->ij", a1, dpre2)
            grads["c2"] += dpre2.sum(axis=(0, 1))
            da1 = dpre2 @ p["V2"].T
            dpre1 = da1 * (1.0 - a1 * a1)
            grads["V1"] += np.einsum("mtf,mtj->fj", pooled, dpre1)
            grads["c1"] += dpre1.sum(axis=(0, 1))
            dpooled = dpre1 @ p["V1"].T  # (M, Ta, F)
            ddfeat = np.zeros((m, t, f))
            ddfeat[:, : ta * cfg.pool] = np.repeat(dpooled / cfg.pool, cfg.pool, axis=1)
            dy = ddfeat / ((cache["y"] + DIAR_FEAT_EPS) * FEAT_SCALE)
            d_masks += dy * cache["mag"][None]

        if d_sources is not None:
            hop, win = cfg.hop, cfg.win
            n = len(cache["audio"])
            total = (t - 1) * hop + win
            norm = self._ola_norm(t)
            gp = np.zeros((m, total))
            gp[:, self._pad : self._pad + n] = d_sources
            gp = gp / norm
            d_rec = np.empty((m, t, win))
            for k in range(t):
                d_rec[:, k] = gp[:, k * hop : k * hop + win]
            d_rec *= self._window
            drm = (d_rec @ self._cos.T) * self._scale
            dim = -(d_rec @ self._sin.T) * self._scale
            d_masks += drm * cache["r"][None] + dim * cache["i"][None]

        if cache["override"]:
            return  # masks were injected; nothing upstream of them to train
        dg = d_masks.transpose(1, 0, 2).reshape(t, m * f)
        masks_flat = cache["masks"].transpose(1, 0, 2).reshape(t, m * f)
        dg = dg * masks_flat * (1.0 - masks_flat)
        h1, h2, z = cache["h1"], cache["h2"], cache["z"]
        grads["W3"] += h2.T @ dg
        grads["b3"] += dg.sum(axis=0)
        dh2 = dg @ p["W3"].T
        dpre2 = dh2 * (1.0 - h2 * h2)
        grads["W2"] += h1.T @ dpre2
        grads["b2"] += dpre2.sum(axis=0)
        dh1 = dpre2 @ p["W2"].T
        dpre1 = dh1 * (1.0 - h1 * h1)
        grads["W1"] += z.T @ dpre1
        grads["b1"] += dpre1.sum(axis=0)

    # -- joint loss -------------------------------------------------------

    def _aligned_labels(self, chunk_labels, rows: int, ta: int) -> np.ndarray:
        y = pad_rows(chunk_labels.values, rows)
        if y.shape[1] < ta:
            y = np.pad(y, ((0, 0), (0, ta - y.shape[1])))
        return y[:, :ta]

    def loss_and_grads(
        self, sample, lam: float
    ) -> tuple[LossBreakdown, dict[str, np.ndarray]]:
        """PixIT loss on one MoM sample and its gradients, with the chosen
        permutations and mixing matrix held fixed within the step."""
        if not 0.0 <= lam <= 1.0:
            raise ValidationError(f"lambda must be in [0, 1], got {lam}")
        m = self.cfg.num_sources
        fw1 = self.forward(sample.chunk1.audio, compute_sources=False)
        fw2 = self.forward(sample.chunk2.audio, compute_sources=False)
        fwm = self.forward(sample.mom_audio, compute_sources=True)
        ta = fw1["act"].shape[1]

        y1 = self._aligned_labels(sample.chunk1.labels, m, ta)
        y2 = self._aligned_labels(sample.chunk2.labels, m, ta)
        ym = self._aligned_labels(sample.mom_labels, m, ta)
        pit1, perm1 = pit_loss(y1, fw1["act"])
        pit2, perm2 = pit_loss(y2, fw2["act"])
        pitm, permm = pit_loss(ym, fwm["act"])
        mixit, mixing = mixit_loss(sample.chunk1.audio, sample.chunk2.audio, fwm["sources"])
        total = lam * (pit1 + pit2 + pitm) + (1.0 - lam) * mixit
        breakdown = LossBreakdown(
            pit_chunk1=pit1,
            pit_chunk2=pit2,
            pit_mom=pitm,
            mixit=mixit,
            total=total,
            perm_chunk1=perm1,
            perm_chunk2=perm2,
            perm_mom=permm,
            mixing=mixing,
            lam=lam,
        )

        grads = {name: np.zeros_like(self.params[name]) for name in PARAM_NAMES}
        for fw, y, perm in ((fw1, y1, perm1), (fw2, y2, perm2), (fwm, ym, permm)):
            d_logits = lam * _pit_logit_grad(y, fw["act"], perm) if lam > 0 else None
            self.backward(fw, d_logits, None, grads)
        if lam < 1.0:
            d_sources = (1.0 - lam) * _mixit_source_grad(
                sample.chunk1.audio, sample.chunk2.audio, fwm["sources"], mixing
            )
            self.backward(fwm, None, d_sources, grads)
        return breakdown, grads

    def loss_fixed_assignments(self, sample, lam: float, breakdown: LossBreakdown) -> float:
        """Total loss recomputed with the permutations/mixing matrix of a
        previous evaluation held fixed (finite-difference oracle hook)."""
        m = self.cfg.num_sources
        fw1 = self.forward(sample.chunk1.audio, compute_sources=False)
        fw2 = self.forward(sample.chunk2.audio, compute_sources=False)
        fwm = self.forward(sample.mom_audio, compute_sources=True)
        ta = fw1["act"].shape[1]
        total = 0.0
        for fw, labels, perm in (
            (fw1, sample.chunk1.labels, breakdown.perm_chunk1),
            (fw2, sample.chunk2.labels, breakdown.perm_chunk2),
            (fwm, sample.mom_labels, breakdown.perm_mom),
        ):
            y = self._aligned_labels(labels, m, ta)
            total += lam * _pit_fixed(y, fw["act"], perm)
        if lam < 1.0:
            total += (1.0 - lam) * _mixit_fixed(
                sample.chunk1.audio, sample.chunk2.audio, fwm["sources"], breakdown.mixing
            )
        return total


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _pit_fixed(y: np.ndarray, act: np.ndarray, perm: Permutation) -> float:
    total = 0.0
    ta = y.shape[1]
    for k, j in enumerate(perm.mapping):
        p = np.clip(act[j], PROB_EPS, 1.0 - PROB_EPS)
        total += float(np.mean(-(y[k] * np.log(p) + (1.0 - y[k]) * np.log1p(-p))))
    return total


def _pit_logit_grad(y: np.ndarray, act: np.ndarray, perm: Permutation) -> np.ndarray:
    """Gradient of the fixed-permutation PIT term w.r.t. the logits."""
    m, ta = act.shape
    grad = np.zeros_like(act)
    for k, j in enumerate(perm.mapping):
        s = act[j]
        p = np.clip(s, PROB_EPS, 1.0 - PROB_EPS)
        dp = (-(y[k] / p) + (1.0 - y[k]) / (1.0 - p)) / ta
        inside = (s > PROB_EPS) & (s < 1.0 - PROB_EPS)
        grad[j] += dp * inside * s * (1.0 - s)
    return grad


def _mixit_fixed(
    x1: np.ndarray, x2: np.ndarray, sources: np.ndarray, mixing: MixingMatrix
) -> float:
    mask = np.asarray(mixing.assignment)
    u1 = sources[mask == 0].sum(axis=0) if np.any(mask == 0) else np.zeros_like(x1)
    u2 = sources[mask == 1].sum(axis=0) if np.any(mask == 1) else np.zeros_like(x2)
    return -si_sdr(x1, u1) - si_sdr(x2, u2)


def _mixit_source_grad(
    x1: np.ndarray, x2: np.ndarray, sources: np.ndarray, mixing: MixingMatrix
) -> np.ndarray:
    mask = np.asarray(mixing.assignment)
    grads = np.zeros_like(sources)
    for n, x in ((0, x1), (1, x2)):
        group = mask == n
        u = sources[group].sum(axis=0) if np.any(group) else np.zeros_like(x)
        _, g = si_sdr_grad(x, u)
        grads[group] = -g
    return grads


def gradient_check(
    model: "ToyModel",
    sample,
    lam: float,
    h: float = 1e-4,
    coords: int = 30,
    rng: np.random.Generator | None = None,
) -> float:
    """Worst relative error between analytic gradients and central finite
    differences over `coords` randomly chosen parameter coordinates, with
    the permutations/mixing matrix held fixed at the analytic evaluation."""
    rng = rng if rng is not None else np.random.default_rng(0)
    breakdown, grads = model.loss_and_grads(sample, lam)
    worst = 0.0
    for _ in range(coords):
        name = PARAM_NAMES[int(rng.integers(len(PARAM_NAMES)))]
        idx = tuple(int(rng.integers(s)) for s in model.params[name].shape)
        orig = float(model.params[name][idx])
        model.params[name][idx] = orig + h
        plus = model.loss_fixed_assignments(sample, lam, breakdown)
        model.params[name][idx] = orig - h
        minus = model.loss_fixed_assignments(sample, lam, breakdown)
        model.params[name][idx] = orig
        fd = (plus - minus) / (2.0 * h)
        an = float(grads[name][idx])
        rel = abs(fd - an) / max(abs(fd) + abs(an), 1e-6)
        worst = max(worst, rel)
    return worst


# -- checkpoint container -----------------------------------------------------

CKPT_MAGIC = b"PXKT"
CKPT_VERSION = 1


def flatten_params(params: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([params[name].ravel() for name in PARAM_NAMES])


def unflatten_params(cfg: ToyModelConfig, blob: np.ndarray) -> dict[str, np.ndarray]:
    template = init_params(ToyModelConfig(**{**asdict(cfg), "seed": 0}))
    out = {}
    pos = 0
    for name in PARAM_NAMES:
        shape = template[name].shape
        size = int(np.prod(shape)) if shape else 1
        out[name] = blob[pos : pos + size].reshape(shape).copy()
        pos += size
    if pos != blob.size:
        raise ValidationError(f"parameter blob has {blob.size} values, expected {pos}")
    return out


def save_checkpoint(path, model: ToyModel, extra: dict | None = None) -> None:
    """Versioned binary container: magic, version, header JSON (config, array
    shapes, optimizer/RNG state), then a flat little-endian float64 blob
    holding the parameters followed by any optimizer moment vectors."""
    import struct

    extra = dict(extra or {})
    blobs = [flatten_params(model.params)]
    blob_names = ["params"]
    for key in ("adam_m", "adam_v"):
        if key in extra:
            blobs.append(np.asarray(extra.pop(key), dtype=np.float64))
            blob_names.append(key)
    header = {
        "config": asdict(model.cfg),
        "blobs": [[name, int(b.size)] for name, b in zip(blob_names, blobs)],
        **extra,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[ToyModel, dict]:
    import struct

    with open(path, "rb") as fh:
        if fh.read(4) != CKPT_MAGIC:
            raise ValidationError(f"{path}: not a pixkit checkpoint")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CKPT_VERSION:
            raise ValidationError(f"{path}: unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        cfg = ToyModelConfig(**header["config"])
        blobs = {}
        for name, size in header["blobs"]:
            blobs[name] = np.frombuffer(fh.read(8 * size), dtype="<f8").astype(np.float64)
    model = ToyModel(cfg, unflatten_params(cfg, blobs["params"]))
    extra = {k: v for k, v in header.items() if k not in ("config", "blobs")}
    for key in ("adam_m", "adam_v"):
        if key in blobs:
            extra[key] = blobs[key]
    return model, extra
