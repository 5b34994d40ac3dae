"""Loss oracles: scalar-loop BCE, exhaustive PIT, brute-force MixIT,
analytic SI-SDR cases, and the combined objective's recombination."""

import itertools
import math

import numpy as np
import pytest

from pixkit.errors import ValidationError
from pixkit.losses import (
    PROB_EPS,
    SDR_EPS,
    LossBreakdown,
    bce,
    bce_cost_matrix,
    mixit_loss,
    pad_rows,
    pit_loss,
    pixit_loss,
    si_sdr,
    si_sdr_grad,
)
from pixkit.sampling import MomSampler
from pixkit.synth import SynthScenario, generate_session
from pixkit.corpus import Recording


def bce_scalar_loop(y: np.ndarray, yhat: np.ndarray) -> float:
    total = 0.0
    k, t = y.shape
    for i in range(k):
        for j in range(t):
            p = min(max(yhat[i, j], PROB_EPS), 1.0 - PROB_EPS)
            total += -(y[i, j] * math.log(p) + (1.0 - y[i, j]) * math.log(1.0 - p))
    return total / (k * t)


def pit_exhaustive(y: np.ndarray, yhat: np.ndarray) -> tuple[float, tuple]:
    """Factorial search over the same pairwise cost matrix the solver uses,
    so equal optima are bitwise identical."""
    k = y.shape[0]
    cost = bce_cost_matrix(y, yhat)
    best = (math.inf, None)
    for perm in itertools.permutations(range(k)):
        val = sum(cost[i, perm[i]] for i in range(k))
        if val < best[0]:
            best = (val, perm)
    return best


def mixit_brute_force(x1, x2, sources) -> float:
    m = sources.shape[0]
    best = math.inf
    for bits in itertools.product((0, 1), repeat=m):
        mask = np.array(bits)
        u1 = sources[mask == 0].sum(axis=0) if (mask == 0).any() else np.zeros_like(x1)
        u2 = sources[mask == 1].sum(axis=0) if (mask == 1).any() else np.zeros_like(x2)
        best = min(best, -si_sdr(x1, u1) - si_sdr(x2, u2))
    return best


class TestBce:
    def test_perfect_prediction_near_zero(self):
        assert bce(np.array([[1.0]]), np.array([[1.0]])) <= 1e-6

    def test_uniform_prediction_is_ln2(self):
        val = bce(np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]]))
        assert val == pytest.approx(math.log(2.0), abs=1e-12)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(0)
        y = (rng.random((3, 50)) > 0.5).astype(float)
        yhat = rng.random((3, 50))
        assert bce(y, yhat) == pytest.approx(bce_scalar_loop(y, yhat), abs=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            bce(np.zeros((2, 3)), np.zeros((2, 4)))


class TestPit:
    def test_row_swap_recovered(self):
        rng = np.random.default_rng(1)
        y = (rng.random((3, 40)) > 0.5).astype(float)
        yhat = np.clip(y[[1, 2, 0]], PROB_EPS, 1 - PROB_EPS)
        loss, perm = pit_loss(y, yhat)
        assert loss <= 1e-5
        # row k of y must map to the yhat row holding its (clipped) copy:
        # yhat = y[[1, 2, 0]] puts y[0] at yhat row 2, y[1] at 0, y[2] at 1
        assert list(perm.mapping) == [2, 0, 1]

    def test_identical_rows_tie_to_identity(self):
        y = (np.random.default_rng(2).random((3, 30)) > 0.5).astype(float)
        yhat = np.tile(np.random.default_rng(3).random(30), (3, 1))
        _, perm = pit_loss(y, yhat)
        assert list(perm.mapping) == [0, 1, 2]

    def test_matches_exhaustive_and_assignment(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            y = (rng.random((3, 25)) > 0.5).astype(float)
            yhat = rng.random((3, 25))
            loss, perm = pit_loss(y, yhat)
            ex_loss, ex_perm = pit_exhaustive(y, yhat)
            assert loss == ex_loss
            # independent check through the pairwise cost matrix
            cost = bce_cost_matrix(y, yhat)
            assert loss == pytest.approx(
                sum(cost[i, perm.mapping[i]] for i in range(3)), abs=1e-12
            )

    def test_value_invariant_under_reference_permutation(self):
        rng = np.random.default_rng(5)
        y = (rng.random((3, 25)) > 0.5).astype(float)
        yhat = rng.random((3, 25))
        base, _ = pit_loss(y, yhat)
        for p in itertools.permutations(range(3)):
            permuted, _ = pit_loss(y[list(p)], yhat)
            assert permuted == pytest.approx(base, abs=1e-12)


class TestSiSdr:
    def test_self_similarity_hits_epsilon_floor(self):
        x = np.random.default_rng(6).normal(size=800)
        x /= np.linalg.norm(x)  # unit energy
        expected = 10.0 * math.log10((1.0 + SDR_EPS) / SDR_EPS)
        assert si_sdr(x, x) == pytest.approx(expected, abs=0.1)
        assert si_sdr(x, x) == pytest.approx(80.0, abs=0.1)

    def test_orthogonal_estimate(self):
        val = si_sdr(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        assert val == pytest.approx(-80.0, abs=0.1)

    def test_scale_invariance(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=500)
        shat = x + 0.1 * rng.normal(size=500)
        base = si_sdr(x, shat)
        for a in (0.1, 10.0):
            assert si_sdr(x, a * shat) == pytest.approx(base, abs=1e-6)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=64)
        shat = rng.normal(size=64)
        val, grad = si_sdr_grad(x, shat)
        assert val == pytest.approx(si_sdr(x, shat))
        h = 1e-6
        for idx in rng.integers(0, 64, size=8):
            e = np.zeros(64)
            e[idx] = h
            fd = (si_sdr(x, shat + e) - si_sdr(x, shat - e)) / (2 * h)
            assert grad[idx] == pytest.approx(fd, rel=1e-4, abs=1e-6)


class TestMixit:
    def test_exact_sources_recovered(self):
        rng = np.random.default_rng(9)
        x1, x2 = rng.normal(size=(2, 400))
        sources = np.stack([x1, x2, np.zeros(400), np.zeros(400)])
        loss, mixing = mixit_loss(x1, x2, sources)
        assert loss < -150.0  # two epsilon-floored terms near +80 dB each
        assert mixing.assignment[0] == 0 and mixing.assignment[1] == 1

    def test_swapped_sources_get_antidiagonal(self):
        rng = np.random.default_rng(10)
        x1, x2 = rng.normal(size=(2, 400))
        _, mixing = mixit_loss(x1, x2, np.stack([x2, x1]))
        assert list(mixing.assignment) == [1, 0]

    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            x1, x2 = rng.normal(size=(2, 200))
            sources = rng.normal(size=(4, 200))
            loss, _ = mixit_loss(x1, x2, sources)
            assert loss == mixit_brute_force(x1, x2, sources)

    def test_value_invariant_under_source_permutation(self):
        rng = np.random.default_rng(12)
        x1, x2 = rng.normal(size=(2, 200))
        sources = rng.normal(size=(4, 200))
        base, _ = mixit_loss(x1, x2, sources)
        perm = [2, 0, 3, 1]
        permuted, _ = mixit_loss(x1, x2, sources[perm])
        assert permuted == pytest.approx(base, abs=1e-12)

    def test_minimality_over_feasible_assignments(self):
        rng = np.random.default_rng(13)
        x1, x2 = rng.normal(size=(2, 200))
        sources = rng.normal(size=(3, 200))
        loss, _ = mixit_loss(x1, x2, sources)
        for bits in itertools.product((0, 1), repeat=3):
            mask = np.array(bits)
            u1 = sources[mask == 0].sum(axis=0)
            u2 = sources[mask == 1].sum(axis=0)
            assert loss <= -si_sdr(x1, u1) - si_sdr(x2, u2) + 1e-12

    def test_too_many_sources_rejected(self):
        with pytest.raises(ValidationError):
            mixit_loss(np.zeros(8), np.zeros(8), np.zeros((17, 8)))


def _mom_sample(seed=0):
    scn = SynthScenario(
        num_speakers=2, session_length_s=30.0, sample_rate_hz=8000, seed=seed
    )
    sess = generate_session(scn, "rec")
    rec = Recording("rec", sess.mixture.astype(np.float64) / 32768.0, 8000, sess.annotation)
    sampler = MomSampler([rec], duration_s=1.0, k_max=3, frame_rate=20.0, seed=seed)
    return sampler.sample_mom()


class TestPixit:
    def _parts(self, seed):
        rng = np.random.default_rng(seed)
        sample = _mom_sample(seed)
        t = 20
        yhat1, yhat2, yhatm = rng.random((3, 3, t))
        shat = rng.normal(size=(3, len(sample.mom_audio)))
        return sample, yhat1, yhat2, yhatm, shat

    @pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
    def test_recombination(self, lam):
        sample, y1, y2, ym, shat = self._parts(20)
        breakdown = pixit_loss(sample, y1, y2, ym, shat, lam)
        expected = lam * (
            breakdown.pit_chunk1 + breakdown.pit_chunk2 + breakdown.pit_mom
        ) + (1.0 - lam) * breakdown.mixit
        assert breakdown.total == pytest.approx(expected, abs=1e-12)
        if lam == 1.0:
            assert breakdown.total == pytest.approx(
                breakdown.pit_chunk1 + breakdown.pit_chunk2 + breakdown.pit_mom
            )
        if lam == 0.0:
            assert breakdown.total == pytest.approx(breakdown.mixit)

    def test_bad_lambda_rejected(self):
        sample, y1, y2, ym, shat = self._parts(21)
        with pytest.raises(ValidationError):
            pixit_loss(sample, y1, y2, ym, shat, 1.5)


def test_pad_rows():
    y = np.ones((2, 5))
    padded = pad_rows(y, 4)
    assert padded.shape == (4, 5)
    np.testing.assert_array_equal(padded[2:], 0.0)
