"""Toy model structure, gradients, checkpointing, and training loop."""

import json
import math

import numpy as np
import pytest

from pixkit.corpus import Recording
from pixkit.errors import ValidationError
from pixkit.model import (
    DIAR_HEAD_PARAMS,
    MASK_NET_PARAMS,
    PARAM_NAMES,
    ToyModel,
    ToyModelConfig,
    flatten_params,
    gradient_check,
    load_checkpoint,
    save_checkpoint,
    unflatten_params,
)
from pixkit.sampling import MomSampler
from pixkit.synth import SynthScenario, generate_session
from pixkit.training import TrainConfig, clip_gradients, train

TINY = ToyModelConfig(
    sample_rate=8000, win=256, hop=100, context=1, hidden=6, num_sources=3, pool=8, seed=0
)


def _mom_sample(seed=0, duration_s=0.5):
    scn = SynthScenario(
        num_speakers=2, session_length_s=30.0, sample_rate_hz=8000, seed=seed
    )
    sess = generate_session(scn, f"rec{seed}")
    rec = Recording(
        f"rec{seed}", sess.mixture.astype(np.float64) / 32768.0, 8000, sess.annotation
    )
    sampler = MomSampler(
        [rec], duration_s=duration_s, k_max=3,
        frame_rate=TINY.activation_rate, seed=seed,
    )
    return sampler.sample_mom()


class TestForward:
    def test_deterministic(self):
        model = ToyModel(TINY)
        audio = np.random.default_rng(0).normal(size=4000) * 0.1
        a = model.forward(audio)
        b = model.forward(audio)
        np.testing.assert_array_equal(a["sources"], b["sources"])
        np.testing.assert_array_equal(a["act"], b["act"])

    def test_shapes_and_alignment(self):
        model = ToyModel(TINY)
        audio = np.random.default_rng(1).normal(size=4000) * 0.1
        sources, act, rate = model.infer_window(audio)
        assert sources.shape == (3, 4000)
        assert act.shape[0] == 3
        assert rate == pytest.approx(TINY.activation_rate)
        assert act.shape[1] == (4000 // TINY.hop) // TINY.pool

    def test_zero_audio(self):
        model = ToyModel(TINY)
        cache = model.forward(np.zeros(4000))
        assert np.max(np.abs(cache["sources"])) < 1e-3
        assert np.all(np.isfinite(cache["act"]))

    def test_oracle_mask_reconstruction(self):
        """All-ones masks must reconstruct the input through the
        mask->masked-magnitude->inverse-transform path."""
        model = ToyModel(TINY)
        audio = np.random.default_rng(2).normal(size=4000) * 0.1
        t = 4000 // TINY.hop
        ones = np.ones((3, t, TINY.num_bins))
        cache = model.forward(audio, mask_override=ones)
        err = np.max(np.abs(cache["sources"][0] - audio))
        assert err < 1e-6

    def test_channel_permutation_alignment(self):
        """Permuting the mask channels permutes sources and activation rows
        together (the diar head is shared across channels)."""
        model = ToyModel(TINY)
        audio = np.random.default_rng(3).normal(size=4000) * 0.1
        base = model.forward(audio)
        perm = [2, 0, 1]
        cache = model.forward(audio, mask_override=base["masks"][perm])
        np.testing.assert_allclose(cache["sources"], base["sources"][perm], atol=1e-12)
        np.testing.assert_allclose(cache["act"], base["act"][perm], atol=1e-12)

    def test_nan_parameters_rejected(self):
        model = ToyModel(TINY)
        model.params["W1"][0, 0] = np.nan
        with pytest.raises(ValidationError):
            model.forward(np.zeros(4000))

    def test_bad_chunk_length_rejected(self):
        with pytest.raises(ValidationError):
            ToyModel(TINY).forward(np.zeros(4001))


class TestGradients:
    @pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
    def test_finite_differences(self, lam):
        sample = _mom_sample(0)
        worst = 0.0
        for seed in range(3):
            model = ToyModel(
                ToyModelConfig(**{**TINY.__dict__, "seed": seed})
            )
            rng = np.random.default_rng(seed + 100)
            worst = max(worst, gradient_check(model, sample, lam, rng=rng))
        assert worst < 1e-4

    def test_lambda_zero_diar_head_untouched(self):
        model = ToyModel(TINY)
        _, grads = model.loss_and_grads(_mom_sample(1), 0.0)
        for name in DIAR_HEAD_PARAMS:
            assert not grads[name].any()
        assert any(grads[name].any() for name in MASK_NET_PARAMS)

    def test_lambda_one_equals_pit_only(self):
        """At lambda=1 the separation branch contributes no gradient: scaling
        the loss down to lambda=0.5 halves exactly the PIT part."""
        model = ToyModel(TINY)
        sample = _mom_sample(2)
        _, g1 = model.loss_and_grads(sample, 1.0)
        breakdown, _ = model.loss_and_grads(sample, 1.0)
        assert breakdown.total == pytest.approx(
            breakdown.pit_chunk1 + breakdown.pit_chunk2 + breakdown.pit_mom
        )
        for name in DIAR_HEAD_PARAMS:
            assert g1[name].any()

    def test_clipping_bounds_global_norm(self):
        model = ToyModel(TINY)
        _, grads = model.loss_and_grads(_mom_sample(3), 0.5)
        clip_gradients(grads, 0.01)
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        assert norm <= 0.01 + 1e-9


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        model = ToyModel(TINY)
        path = tmp_path / "ck.bin"
        save_checkpoint(
            path, model, extra={"note": 1.5, "adam_m": np.arange(3.0)}
        )
        loaded, extra = load_checkpoint(path)
        assert loaded.cfg == model.cfg
        np.testing.assert_array_equal(
            flatten_params(loaded.params), flatten_params(model.params)
        )
        assert extra["note"] == 1.5
        np.testing.assert_array_equal(extra["adam_m"], np.arange(3.0))

    def test_flatten_unflatten(self):
        model = ToyModel(TINY)
        blob = flatten_params(model.params)
        back = unflatten_params(TINY, blob)
        for name in PARAM_NAMES:
            np.testing.assert_array_equal(back[name], model.params[name])


@pytest.fixture(scope="module")
def tiny_train(small_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    cfg = TrainConfig(epochs=3, steps_per_epoch=8, seed=0)
    mc = ToyModelConfig(sample_rate=8000, hidden=12, num_sources=3, seed=0)
    ckpt = train(cfg, small_corpus, out, model_config=mc)
    return cfg, mc, out, ckpt


class TestTraining:
    def test_loss_decreases(self, tiny_train):
        _, _, out, _ = tiny_train
        records = [
            json.loads(line)
            for line in (out / "train_log.jsonl").read_text().splitlines()
        ]
        assert records[-1]["dev"]["total"] < records[0]["dev"]["total"]

    def test_resume_matches_uninterrupted(self, small_corpus, tiny_train, tmp_path):
        cfg, mc, full_out, full_ckpt = tiny_train
        # run the first 2 epochs, then resume for the third
        short = TrainConfig(**{**cfg.__dict__, "epochs": 2})
        part_out = tmp_path / "part"
        part_ckpt = train(short, small_corpus, part_out, model_config=mc)
        resumed = train(cfg, small_corpus, part_out, resume_from=part_ckpt)
        a, _ = load_checkpoint(full_ckpt)
        b, _ = load_checkpoint(resumed)
        np.testing.assert_array_equal(
            flatten_params(a.params), flatten_params(b.params)
        )

    def test_missing_dev_split_rejected(self, small_corpus, tmp_path):
        import dataclasses

        broken = dataclasses.replace(small_corpus, dev=[])
        with pytest.raises(ValidationError):
            train(TrainConfig(epochs=1), broken, tmp_path)
