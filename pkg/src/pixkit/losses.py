"""Training losses: permutation-invariant BCE, mixture-invariant SI-SDR,
and their weighted combination.

All functions are pure and operate on plain float64 numpy arrays:
activation matrices are (K, T), waveforms are (N,), source sets are (M, N).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .assignment import solve_assignment
from .errors import ValidationError

PROB_EPS = 1e-7  # probability clip for BCE
SDR_EPS = 1e-8  # regularizer keeping SI-SDR finite for silence

MAX_EXHAUSTIVE_K = 8  # factorial search bound for PIT
MAX_MIXIT_SOURCES = 16  # 2^M search bound for MixIT


@dataclass(frozen=True)
class Permutation:
    """Bijection on row indices; mapping[k] is the predicted row matched to
    reference row k."""

    mapping: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.mapping) != list(range(len(self.mapping))):
            raise ValidationError(f"not a bijection: {self.mapping}")


@dataclass(frozen=True)
class MixingMatrix:
    """assignment[m] in {0, 1} routes estimated source m to mixture 1 or 2.

    Equivalent to the 2 x M binary matrix with one 1 per column.
    """

    assignment: tuple[int, ...]

    def __post_init__(self):
        if any(a not in (0, 1) for a in self.assignment):
            raise ValidationError(f"entries must be 0 or 1: {self.assignment}")


@dataclass(frozen=True)
class LossBreakdown:
    pit_chunk1: float
    pit_chunk2: float
    pit_mom: float
    mixit: float
    total: float
    perm_chunk1: Permutation
    perm_chunk2: Permutation
    perm_mom: Permutation
    mixing: MixingMatrix
    lam: float


def bce(y: np.ndarray, yhat: np.ndarray) -> float:
    """Mean binary cross entropy over all cells, predictions clipped to
    [PROB_EPS, 1 - PROB_EPS]."""
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ValidationError(f"shape mismatch: {y.shape} vs {yhat.shape}")
    p = np.clip(yhat, PROB_EPS, 1.0 - PROB_EPS)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def bce_cost_matrix(y: np.ndarray, yhat: np.ndarray) -> np.ndarray:
    """cost[k, j] = frame-mean BCE between reference row k and predicted row j."""
    y = np.asarray(y, dtype=np.float64)
    p = np.clip(np.asarray(yhat, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    if y.shape != p.shape:
        raise ValidationError(f"shape mismatch: {y.shape} vs {p.shape}")
    # cell-wise BCE expands into y-dependent and y-free parts, so the
    # K x K matrix reduces to two matmuls over frames
    log_p = np.log(p)
    log_q = np.log1p(-p)
    t = max(y.shape[1], 1)
    return (-(y @ log_p.T) - ((1.0 - y) @ log_q.T)) / t


def pit_loss(
    y: np.ndarray, yhat: np.ndarray, method: str = "auto"
) -> tuple[float, Permutation]:
    """Permutation-invariant BCE: min over row permutations of the summed
    per-row (frame-mean) BCE.

    Reference rows are expected zero-padded to the predicted row count.
    Ties resolve to the lexicographically smallest mapping.
    """
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ValidationError(f"shape mismatch: {y.shape} vs {yhat.shape}")
    k = y.shape[0]
    cost = bce_cost_matrix(y, yhat)
    if method == "auto":
        method = "exhaustive" if k <= MAX_EXHAUSTIVE_K else "assignment"
    if method == "exhaustive":
        if k > MAX_EXHAUSTIVE_K:
            raise ValidationError(
                f"K={k} too large for exhaustive PIT search (max {MAX_EXHAUSTIVE_K}); "
                "use method='assignment'"
            )
        best = None
        best_perm = None
        for perm in itertools.permutations(range(k)):
            total = float(sum(cost[i, perm[i]] for i in range(k)))
            if best is None or total < best:
                best, best_perm = total, perm
        return best if best is not None else 0.0, Permutation(best_perm or ())
    if method == "assignment":
        mapping, total = solve_assignment(cost)
        return total, Permutation(tuple(int(m) for m in mapping))
    raise ValidationError(f"unknown PIT method {method!r}")


def si_sdr(x: np.ndarray, shat: np.ndarray) -> float:
    """Scale-invariant signal-to-distortion ratio of estimate `shat` against
    reference `x`, in dB; finite for all inputs including silence."""
    return _si_sdr_parts(x, shat)[0]


def _si_sdr_parts(x: np.ndarray, shat: np.ndarray) -> tuple[float, float, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    shat = np.asarray(shat, dtype=np.float64)
    if x.shape != shat.shape:
        raise ValidationError(f"length mismatch: {x.shape} vs {shat.shape}")
    xx = float(np.dot(x, x))
    alpha = float(np.dot(shat, x)) / (xx + SDR_EPS)
    target = alpha * x
    num = alpha * alpha * xx + SDR_EPS
    err = target - shat
    den = float(np.dot(err, err)) + SDR_EPS
    return 10.0 * math.log10(num / den), alpha, err


def si_sdr_grad(x: np.ndarray, shat: np.ndarray) -> tuple[float, np.ndarray]:
    """SI-SDR value and its gradient with respect to the estimate."""
    value, alpha, err = _si_sdr_parts(x, shat)
    x = np.asarray(x, dtype=np.float64)
    xx = float(np.dot(x, x))
    num = alpha * alpha * xx + SDR_EPS
    den = float(np.dot(err, err)) + SDR_EPS
    dalpha_dshat = x / (xx + SDR_EPS)
    dnum = 2.0 * alpha * xx * dalpha_dshat
    # err = alpha * x - shat
    dden = 2.0 * float(np.dot(err, x)) * dalpha_dshat - 2.0 * err
    scale = 10.0 / math.log(10.0)
    grad = scale * (dnum / num - dden / den)
    return value, grad


def mixit_loss(
    x1: np.ndarray, x2: np.ndarray, shat: np.ndarray
) -> tuple[float, MixingMatrix]:
    """Mixture-invariant loss: minimum over binary source-to-mixture routings
    of the summed negative SI-SDR of the two remixes.

    Ties resolve to the lexicographically smallest assignment tuple.
    """
    shat = np.asarray(shat, dtype=np.float64)
    if shat.ndim != 2:
        raise ValidationError("shat must be a 2-D (M, N) source set")
    m = shat.shape[0]
    if m > MAX_MIXIT_SOURCES:
        raise ValidationError(
            f"M={m} exceeds exhaustive mixing-matrix search bound {MAX_MIXIT_SOURCES}"
        )
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    best = None
    best_assign = None
    for assign in itertools.product((0, 1), repeat=m):
        mask = np.asarray(assign)
        sum1 = shat[mask == 0].sum(axis=0) if np.any(mask == 0) else np.zeros_like(x1)
        sum2 = shat[mask == 1].sum(axis=0) if np.any(mask == 1) else np.zeros_like(x2)
        total = -si_sdr(x1, sum1) - si_sdr(x2, sum2)
        if best is None or total < best:
            best, best_assign = total, assign
    return float(best), MixingMatrix(best_assign or ())


def pad_rows(y: np.ndarray, rows: int) -> np.ndarray:
    """Zero-pad a (K, T) matrix to `rows` rows."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] > rows:
        raise ValidationError(f"matrix has {y.shape[0]} rows, more than target {rows}")
    if y.shape[0] == rows:
        return y
    return np.vstack([y, np.zeros((rows - y.shape[0], y.shape[1]))])


def pixit_loss(
    sample,
    yhat1: np.ndarray,
    yhat2: np.ndarray,
    yhat_mom: np.ndarray,
    shat: np.ndarray,
    lam: float = 0.5,
) -> LossBreakdown:
    """Combined objective: lam * (PIT on chunk1 + chunk2 + MoM) +
    (1 - lam) * MixIT on the MoM sources.

    `sample` supplies the two chunks (audio + label matrices) of the MoM.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"lambda must be in [0, 1], got {lam}")
    rows = yhat_mom.shape[0]
    y1 = pad_rows(sample.chunk1.labels.values, rows)
    y2 = pad_rows(sample.chunk2.labels.values, rows)
    y_mom = pad_rows(sample.mom_labels.values, rows)
    pit1, perm1 = pit_loss(y1, yhat1)
    pit2, perm2 = pit_loss(y2, yhat2)
    pit_m, perm_m = pit_loss(y_mom, yhat_mom)
    mixit, mixing = mixit_loss(sample.chunk1.audio, sample.chunk2.audio, shat)
    total = lam * (pit1 + pit2 + pit_m) + (1.0 - lam) * mixit
    return LossBreakdown(
        pit_chunk1=pit1,
        pit_chunk2=pit2,
        pit_mom=pit_m,
        mixit=mixit,
        total=total,
        perm_chunk1=perm1,
        perm_chunk2=perm2,
        perm_mom=perm_m,
        mixing=mixing,
        lam=lam,
    )
