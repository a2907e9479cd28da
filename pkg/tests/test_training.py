"""Tests for training orchestration, checkpoints and conversion."""

import math

import numpy as np
import pytest

from wavemorph import corpus as wc
from wavemorph import losses as wl
from wavemorph import training as tr
from wavemorph.errors import ContractError, PipelineError, TrainingDiverged
from wavemorph.networks import ArchConfig
from wavemorph.pipeline import prepare
from wavemorph.wavelets import ScaleBank, encode, reconstruct


def tiny_arch():
    return ArchConfig(
        n_scales=4,
        block_length=64,
        gen_channels=(4, 4, 4, 4),
        gen_kernel=3,
        disc_channels=(4, 4, 4, 4),
        disc_kernel=3,
        cls_filters=(2, 2, 2),
        cls_convs_per_block=1,
        cls_kernel=3,
        cls_dense_units=8,
        cls_time_pool=2,
    )


def tiny_cfg(**kw):
    base = dict(
        arch=tiny_arch(),
        scale_lo=3.0,
        scale_hi=40.0,
        s_min=1.0,
        steps_pretrain=3,
        steps_dualgan=2,
        seed=0,
    )
    base.update(kw)
    return tr.TrainConfig(**base)


def tiny_corpus(n=4, seed=0):
    rng = np.random.default_rng(seed)
    a, b = wc.toy_contrast_pair()
    pairs = []
    for i in range(n):
        sk = wc.random_skeleton(rng, 3, 4)
        pairs.append(
            wc.synth_pair(sk, a, b, int(rng.integers(2**31)), f"utt{i:03d}")
        )
    ids = [p.utterance_id for p in pairs]
    return wc.Corpus(
        pairs=pairs,
        train_ids=ids[: max(1, n - 1)],
        valid_ids=ids[max(1, n - 1) :],
        attitudes=(a.name, b.name),
    )


def arrays_snapshot(bundle):
    return {n: t.data.copy() for n, t in bundle.named_arrays()}


def snapshots_equal(a, b):
    return set(a) == set(b) and all(np.array_equal(a[k], b[k]) for k in a)


class TestTrainConfig:
    def test_weights_follow_config(self):
        assert tiny_cfg(config="A").weights == wl.config_A()
        assert tiny_cfg(config="B").weights == wl.config_B()

    def test_inconsistent_weights_rejected(self):
        with pytest.raises(ContractError):
            tiny_cfg(config="A", weights=wl.config_B())
        with pytest.raises(ContractError):
            tiny_cfg(config="C")
        with pytest.raises(ContractError):
            tiny_cfg(lr=0.0)

    def test_lambda_gamma_defaults(self):
        w = tiny_cfg().weights
        assert (w.lambda_, w.gamma) == (5.0, 15.0)


class TestBundle:
    def test_new_bundle_deterministic(self):
        cfg = tiny_cfg()
        a = tr.new_bundle(cfg, ("x", "y"))
        b = tr.new_bundle(cfg, ("x", "y"))
        assert snapshots_equal(arrays_snapshot(a), arrays_snapshot(b))

    def test_generators_initialized_independently(self):
        bundle = tr.new_bundle(tiny_cfg(), ("x", "y"))
        assert not np.array_equal(
            bundle.g_ab.down[0][0].data, bundle.g_ba.down[0][0].data
        )

    def test_direction_lookup(self):
        bundle = tr.new_bundle(tiny_cfg(), ("x", "y"))
        assert bundle.generator("ab") is bundle.g_ab
        assert bundle.generator("ba") is bundle.g_ba
        with pytest.raises(ContractError):
            bundle.generator("sideways")

    def test_attitudes_validated(self):
        with pytest.raises(ContractError):
            tr.new_bundle(tiny_cfg(), ("x", "x"))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        corpus = tiny_corpus()
        bundle = tr.pretrain(corpus, tiny_cfg(config="B", steps_pretrain=2))
        path = tmp_path / "model.bundle"
        tr.save_bundle(bundle, path)
        again = tr.load_bundle(path)
        assert snapshots_equal(arrays_snapshot(bundle), arrays_snapshot(again))
        assert again.attitudes == bundle.attitudes
        assert again.config == "B"
        assert again.steps_pretrain == 2
        assert again.sample_weights == bundle.sample_weights
        assert again.mean_shift == bundle.mean_shift
        assert np.array_equal(again.bank.scale_values(), bundle.bank.scale_values())

    def test_round_trip_preserves_conversion(self, tmp_path):
        corpus = tiny_corpus()
        bundle = tr.pretrain(corpus, tiny_cfg(steps_pretrain=1))
        path = tmp_path / "model.bundle"
        tr.save_bundle(bundle, path)
        again = tr.load_bundle(path)
        track = corpus.pairs[0].source
        out1 = tr.convert(track, bundle, "ab", rng_seed=5)
        out2 = tr.convert(track, again, "ab", rng_seed=5)
        assert np.array_equal(out1.f0_hz, out2.f0_hz)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bundle"
        path.write_bytes(b"NOTMODEL" + b"\x00" * 32)
        with pytest.raises(ContractError):
            tr.load_bundle(path)


class TestPretrain:
    def test_zero_steps_keeps_initial_scales(self):
        corpus = tiny_corpus()
        cfg = tiny_cfg(steps_pretrain=0)
        bundle = tr.pretrain(corpus, cfg)
        fresh = ScaleBank.log_spaced(4, cfg.scale_lo, cfg.scale_hi, s_min=cfg.s_min)
        assert np.array_equal(bundle.bank.scale_values(), fresh.scale_values())
        assert bundle.steps_pretrain == 0
        assert set(bundle.mean_shift) == {"ab", "ba"}
        assert bundle.mean_shift["ab"] == -bundle.mean_shift["ba"]

    def test_config_a_trains_only_scales(self):
        corpus = tiny_corpus()
        bundle = tr.pretrain(corpus, tiny_cfg(steps_pretrain=3))
        fresh = tr.new_bundle(tiny_cfg(), corpus.attitudes)
        assert not np.array_equal(bundle.bank.raw.data, fresh.bank.raw.data)
        assert np.array_equal(
            bundle.classifier.dense0_w.data, fresh.classifier.dense0_w.data
        )
        assert bundle.sample_weights == {}

    def test_config_b_trains_classifier_and_weights(self):
        corpus = tiny_corpus()
        bundle = tr.pretrain(corpus, tiny_cfg(config="B", steps_pretrain=3))
        fresh = tr.new_bundle(tiny_cfg(config="B"), corpus.attitudes)
        assert not np.array_equal(
            bundle.classifier.dense1_w.data, fresh.classifier.dense1_w.data
        )
        keys = set(bundle.sample_weights)
        expect = {
            f"{t.utterance_id}:{t.attitude}"
            for p in corpus.pairs
            for t in (p.source, p.target)
        }
        assert keys == expect
        assert all(0.0 <= v <= 1.0 for v in bundle.sample_weights.values())

    def test_loss_log_schema(self, tmp_path):
        corpus = tiny_corpus()
        log = tmp_path / "loss.csv"
        tr.pretrain(corpus, tiny_cfg(steps_pretrain=2), log_path=log)
        lines = log.read_text().splitlines()
        assert lines[0] == "step,phase,L_rec,L_cl,L_ab,L_adv_D,L_adv_G,L_dual,total"
        assert len(lines) == 3
        cells = lines[1].split(",")
        assert cells[0] == "0" and cells[1] == "pretrain"
        assert cells[2] != "" and cells[8] != ""
        assert cells[4] == "" and cells[5] == ""
        assert repr(float(cells[2])) == cells[2]

    def test_deterministic_logs(self, tmp_path):
        corpus = tiny_corpus()
        tr.pretrain(corpus, tiny_cfg(steps_pretrain=3), log_path=tmp_path / "a.csv")
        tr.pretrain(corpus, tiny_cfg(steps_pretrain=3), log_path=tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


class TestDualgan:
    def test_zero_steps_is_identity(self):
        corpus = tiny_corpus()
        bundle = tr.pretrain(corpus, tiny_cfg(steps_pretrain=1))
        before = arrays_snapshot(bundle)
        out = tr.train_dualgan(corpus, bundle, tiny_cfg(steps_dualgan=0))
        assert out is bundle
        assert snapshots_equal(before, arrays_snapshot(bundle))

    def test_joint_step_reaches_encoder_scales(self):
        corpus = tiny_corpus()
        cfg = tiny_cfg(steps_pretrain=1, steps_dualgan=2)
        bundle = tr.pretrain(corpus, cfg)
        before = arrays_snapshot(bundle)
        tr.train_dualgan(corpus, bundle, cfg)
        after = arrays_snapshot(bundle)
        assert not np.array_equal(before["bank.raw"], after["bank.raw"])
        assert not np.array_equal(before["g_ab.final.b"], after["g_ab.final.b"])
        assert not np.array_equal(before["d_a.dense.b"], after["d_a.dense.b"])
        assert np.array_equal(
            before["classifier.dense0.w"], after["classifier.dense0.w"]
        )
        assert bundle.steps_dualgan == 2

    def test_deterministic_logs(self, tmp_path):
        corpus = tiny_corpus()
        cfg = tiny_cfg(steps_pretrain=1, steps_dualgan=3)
        for name in ("a", "b"):
            bundle = tr.pretrain(corpus, cfg)
            tr.train_dualgan(corpus, bundle, cfg, log_path=tmp_path / f"{name}.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_dualgan_log_schema(self, tmp_path):
        corpus = tiny_corpus()
        cfg = tiny_cfg(steps_pretrain=1, steps_dualgan=1)
        bundle = tr.pretrain(corpus, cfg)
        log = tmp_path / "loss.csv"
        tr.train_dualgan(corpus, bundle, cfg, log_path=log)
        lines = log.read_text().splitlines()
        cells = lines[1].split(",")
        assert cells[1] == "dualgan"
        assert cells[2] == "" and cells[3] == ""
        assert all(cells[i] != "" for i in (4, 5, 6, 7, 8))

    def test_fresh_dualgan_trains_from_zero_output(self):
        corpus = tiny_corpus()
        cfg = tiny_cfg(steps_pretrain=0, steps_dualgan=1)
        bundle = tr.pretrain(corpus, cfg)
        assert np.all(bundle.g_ab.final_w.data == 0.0)
        tr.train_dualgan(corpus, bundle, cfg)
        moved = np.abs(bundle.g_ab.final_w.data)
        assert moved.max() > 0.0
        # optimizer steps stay small; no identity tap gets written
        assert moved.max() < 0.1

    def test_resumed_training_keeps_generator_state(self):
        corpus = tiny_corpus()
        cfg = tiny_cfg(steps_pretrain=0, steps_dualgan=1)
        bundle = tr.pretrain(corpus, cfg)
        tr.train_dualgan(corpus, bundle, cfg)
        marker = 0.37
        bundle.g_ab.final_w.data[0, 0, 0] = marker
        tr.train_dualgan(corpus, bundle, cfg)
        moved = abs(bundle.g_ab.final_w.data[0, 0, 0] - marker)
        assert moved < 0.01

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_aborts_with_diagnostics(self, tmp_path):
        corpus = tiny_corpus()
        cfg = tiny_cfg(steps_pretrain=0, steps_dualgan=2)
        bundle = tr.pretrain(corpus, cfg)
        bundle.d_a.dense_b.data[:] = np.inf
        with pytest.raises(TrainingDiverged):
            tr.train_dualgan(corpus, bundle, cfg, checkpoint_dir=tmp_path)
        assert (tmp_path / "diagnostics.json").exists()

    def test_checkpoints_written(self, tmp_path):
        corpus = tiny_corpus()
        cfg = tiny_cfg(steps_pretrain=1, steps_dualgan=2, checkpoint_every=1)
        bundle = tr.pretrain(corpus, cfg)
        tr.train_dualgan(corpus, bundle, cfg, checkpoint_dir=tmp_path)
        assert (tmp_path / "dualgan_000001.bundle").exists()
        assert (tmp_path / "dualgan_final.bundle").exists()


class TestConvert:
    def test_passthrough_generator_gives_round_trip(self):
        corpus = tiny_corpus()
        cfg = tiny_cfg(steps_pretrain=0)
        bundle = tr.pretrain(corpus, cfg)
        bundle.mean_shift = {}
        bundle.g_ab.set_passthrough()
        track = corpus.pairs[0].source
        out = tr.convert(track, bundle, "ab", rng_seed=3)
        mi = prepare(track)
        plane = encode(
            mi.signal[: mi.valid_length],
            bundle.bank,
            mean=mi.mean_logf0,
            valid_length=mi.valid_length,
        )
        rt = np.exp(reconstruct(plane, bundle.constants))
        expect = np.where(track.voicing, rt[: len(track.f0_hz)], 0.0)
        assert np.array_equal(out.f0_hz, expect)

    def test_deterministic_per_seed(self):
        corpus = tiny_corpus()
        bundle = tr.pretrain(corpus, tiny_cfg(steps_pretrain=0))
        rng = np.random.default_rng(0)
        bundle.g_ab.final_w.data[...] = 0.05 * rng.standard_normal(
            bundle.g_ab.final_w.data.shape
        )
        track = corpus.pairs[0].source
        a = tr.convert(track, bundle, "ab", rng_seed=1)
        b = tr.convert(track, bundle, "ab", rng_seed=1)
        c = tr.convert(track, bundle, "ab", rng_seed=2)
        assert np.array_equal(a.f0_hz, b.f0_hz)
        assert not np.array_equal(a.f0_hz, c.f0_hz)

    def test_voicing_and_labels_preserved(self):
        corpus = tiny_corpus()
        bundle = tr.pretrain(corpus, tiny_cfg(steps_pretrain=0))
        track = corpus.pairs[0].source
        out = tr.convert(track, bundle, "ab", rng_seed=0)
        assert np.array_equal(out.voicing, track.voicing)
        assert np.all(out.f0_hz[~track.voicing] == 0.0)
        assert out.attitude == bundle.attitudes[1]
        assert out.utterance_id == track.utterance_id
        back = tr.convert(track, bundle, "ba", rng_seed=0)
        assert back.attitude == bundle.attitudes[0]

    def test_overlong_track_rejected(self):
        corpus = tiny_corpus()
        bundle = tr.pretrain(corpus, tiny_cfg(steps_pretrain=0))
        n = 4100
        from wavemorph.pipeline import F0Track

        long_track = F0Track(
            f0_hz=np.full(n, 120.0),
            voicing=np.ones(n, dtype=bool),
            syllables=[(0, n)],
            attitude="neutral",
            utterance_id="long",
            speaker_id="s",
        )
        with pytest.raises(PipelineError):
            tr.convert(long_track, bundle, "ab", rng_seed=0)

    def test_mean_shift_applied(self):
        corpus = tiny_corpus()
        bundle = tr.pretrain(corpus, tiny_cfg(steps_pretrain=0))
        bundle.g_ab.set_passthrough()
        track = corpus.pairs[0].source
        bundle.mean_shift = {"ab": 0.0, "ba": 0.0}
        flat = tr.convert(track, bundle, "ab", rng_seed=0)
        bundle.mean_shift = {"ab": math.log(2.0), "ba": -math.log(2.0)}
        shifted = tr.convert(track, bundle, "ab", rng_seed=0)
        voiced = track.voicing
        assert np.allclose(shifted.f0_hz[voiced], 2.0 * flat.f0_hz[voiced], rtol=1e-12)
