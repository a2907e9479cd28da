import numpy as np
import pytest

import wavemorph.corpus as wc
import wavemorph.evaluation as we
import wavemorph.training as wt
from wavemorph.errors import EvalError
from wavemorph.networks import ArchConfig
from wavemorph.pipeline import F0Track, ParallelPair


def track(f0, voiced=None, syl=None, att="plain", uid="u0"):
    f0 = np.asarray(f0, dtype=np.float64)
    if voiced is None:
        voiced = f0 > 0
    return F0Track(
        f0_hz=f0,
        voicing=np.asarray(voiced, dtype=bool),
        syllables=syl if syl is not None else [(0.0, float(len(f0)))],
        attitude=att,
        utterance_id=uid,
    )


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
    base = dict(arch=tiny_arch(), scale_lo=3.0, scale_hi=40.0, s_min=1.0,
                steps_pretrain=2, steps_dualgan=2, seed=0)
    base.update(kw)
    return wt.TrainConfig(**base)


def tiny_corpus(n=3, seed=5):
    rng = np.random.default_rng(seed)
    prof_a, prof_b = wc.toy_contrast_pair()
    pairs = []
    for i in range(n):
        skel = wc.random_skeleton(rng, min_syllables=3, max_syllables=4)
        pairs.append(wc.synth_pair(skel, prof_a, prof_b,
                                   seed=int(rng.integers(2**31)),
                                   utterance_id=f"utt{i:03d}"))
    ids = [p.utterance_id for p in pairs]
    return wc.Corpus(pairs=pairs, train_ids=ids[:-1], valid_ids=ids[-1:],
                     attitudes=(prof_a.name, prof_b.name))


@pytest.fixture(scope="module")
def corpus():
    return tiny_corpus()


@pytest.fixture(scope="module")
def bundle(corpus):
    return wt.new_bundle(tiny_cfg(), attitudes=corpus.attitudes)


class TestRmse:
    def test_identical_tracks_zero(self):
        a = track([110.0, 111.0, 0.0, 113.0])
        assert we.rmse_hz(a, a) == 0.0

    def test_constant_offset(self):
        f0 = 100.0 + np.arange(50.0)
        ref = track(f0)
        pred = track(f0 + 1.0)
        assert we.rmse_hz(pred, ref) == pytest.approx(1.0, rel=1e-12)

    def test_two_frame_value(self):
        ref = track([100.0, 200.0])
        pred = track([103.0, 204.0])
        assert we.rmse_hz(pred, ref) == pytest.approx(np.sqrt(12.5), rel=1e-12)

    def test_only_mutually_voiced_frames_count(self):
        ref = track([100.0, 0.0, 100.0], voiced=[True, False, True])
        pred = track([101.0, 999.0, 101.0], voiced=[True, True, True])
        assert we.rmse_hz(pred, ref) == pytest.approx(1.0, rel=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(5, 40))
            voiced = rng.random(n) < 0.8
            voiced[0] = True
            fa = np.where(voiced, 80 + 100 * rng.random(n), 0.0)
            fb = np.where(voiced, 80 + 100 * rng.random(n), 0.0)
            a, b = track(fa, voiced), track(fb, voiced)
            assert we.rmse_hz(a, b) == we.rmse_hz(b, a)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(5, 40))
            voiced = rng.random(n) < 0.8
            voiced[0] = True
            mk = lambda: track(np.where(voiced, 80 + 100 * rng.random(n), 0.0), voiced)
            a, b, c = mk(), mk(), mk()
            lhs = we.rmse_hz(a, c)
            rhs = we.rmse_hz(a, b) + we.rmse_hz(b, c)
            assert lhs <= rhs + 1e-12

    def test_no_common_voiced_raises(self):
        a = track([100.0, 0.0], voiced=[True, False])
        b = track([0.0, 100.0], voiced=[False, True])
        with pytest.raises(EvalError):
            we.rmse_hz(a, b)

    def test_length_mismatch_raises(self):
        with pytest.raises(EvalError):
            we.rmse_hz(track([100.0]), track([100.0, 100.0]))


class TestReconstructTrack:
    def test_preserves_track_identity_fields(self, corpus, bundle):
        src = corpus.pairs[0].source
        rec = we.reconstruct_track(src, bundle)
        assert len(rec) == len(src)
        assert np.array_equal(rec.voicing, src.voicing)
        assert rec.syllables == src.syllables
        assert rec.attitude == src.attitude
        assert rec.utterance_id == src.utterance_id
        assert np.all(rec.f0_hz[~rec.voicing] == 0.0)
        assert np.all(rec.f0_hz[rec.voicing] > 0.0)

    def test_deterministic(self, corpus, bundle):
        src = corpus.pairs[0].source
        r1 = we.reconstruct_track(src, bundle)
        r2 = we.reconstruct_track(src, bundle)
        assert np.array_equal(r1.f0_hz, r2.f0_hz)


class TestCorpusMarkers:
    def test_hand_computed(self):
        syl = [(0.0, 100.0), (100.0, 300.0)]
        a = track(np.full(300, 120.0), syl=syl, uid="u0", att="x")
        b = track(np.full(300, 150.0), syl=syl, uid="u0", att="y")
        markers = we.corpus_markers([ParallelPair(source=a, target=b)])
        assert markers["SY"] == pytest.approx(150.0)
        assert markers["SE"] == pytest.approx(300.0)
        assert markers["P"] == pytest.approx(150.0 / 2.5)
        assert markers["W"] == pytest.approx(150.0 * 2.5)

    def test_empty_raises(self):
        with pytest.raises(EvalError):
            we.corpus_markers([])


class TestCwtAsScales:
    def test_selection_properties(self, corpus):
        scales = we.cwt_as_scales(corpus.pairs, top_m=4, d_j=0.25)
        assert scales.shape == (4,)
        assert np.all(scales >= 5.0) and np.all(scales <= 2000.0)
        assert len(np.unique(scales)) == 4
        again = we.cwt_as_scales(corpus.pairs, top_m=4, d_j=0.25)
        assert np.array_equal(scales, again)


class TestEvaluate:
    def test_perfect_stubs_make_transformation_match_identity(
        self, corpus, bundle, monkeypatch
    ):
        monkeypatch.setattr(we, "convert", lambda src, b, d, rng_seed=0: src)
        monkeypatch.setattr(we, "reconstruct_track", lambda t, b: t)
        report = we.evaluate(bundle, corpus, split="train")
        for r in report.rows:
            if r["metric"] == "reconstruction":
                assert r["rmse_hz"] == 0.0
        trans = {(r["utterance_id"], r["direction"]): r["rmse_hz"]
                 for r in report.rows if r["metric"] == "transformation"}
        ident = {(r["utterance_id"], r["direction"]): r["rmse_hz"]
                 for r in report.rows if r["metric"] == "identity"}
        assert trans.keys() == ident.keys() and len(trans) > 0
        for key in trans:
            assert trans[key] == ident[key]

    def test_untrained_bundle_warns_but_evaluates(self, corpus, bundle, caplog):
        with caplog.at_level("WARNING"):
            report = we.evaluate(bundle, corpus)
        assert any("untrained" in m for m in caplog.messages)
        assert all(np.isfinite(r["rmse_hz"]) for r in report.rows)

    def test_uses_validation_split(self, corpus, bundle):
        report = we.evaluate(bundle, corpus)
        ids = {r["utterance_id"] for r in report.rows}
        assert ids == set(corpus.valid_ids)

    def test_direction_filter(self, corpus, bundle):
        report = we.evaluate(bundle, corpus, directions=("ab",))
        dirs = {r["direction"] for r in report.rows if r["metric"] != "reconstruction"}
        assert dirs == {"ab"}

    def test_unknown_direction_raises(self, corpus, bundle):
        with pytest.raises(EvalError):
            we.evaluate(bundle, corpus, directions=("sideways",))

    def test_deterministic(self, corpus, bundle):
        r1 = we.evaluate(bundle, corpus, seed=3)
        r2 = we.evaluate(bundle, corpus, seed=3)
        assert r1.rows == r2.rows
        assert r1.summary == r2.summary

    def test_summary_means_match_rows(self, corpus, bundle):
        report = we.evaluate(bundle, corpus, split="train")
        for metric in ("reconstruction", "transformation", "identity"):
            vals = [r["rmse_hz"] for r in report.rows if r["metric"] == metric]
            assert report.mean(metric) == pytest.approx(np.mean(vals), rel=1e-12)
        with pytest.raises(EvalError):
            report.mean("reconstruction", "nonexistent")

    def test_markers_and_scales_attached(self, corpus, bundle):
        report = we.evaluate(bundle, corpus)
        assert set(report.markers) == {"P", "SY", "W", "SE"}
        assert report.scales_ms.shape == (tiny_arch().n_scales,)


class TestWriters:
    def test_report_files(self, corpus, bundle, tmp_path):
        report = we.evaluate(bundle, corpus)
        report_path, summary_path = we.write_report(report, tmp_path)
        lines = report_path.read_text().strip().split("\n")
        assert lines[0] == "utterance_id,metric,direction,rmse_hz"
        assert len(lines) == len(report.rows) + 1
        first = report.rows[0]
        cells = lines[1].split(",")
        assert cells[0] == first["utterance_id"]
        assert float(cells[3]) == first["rmse_hz"]
        slines = summary_path.read_text().strip().split("\n")
        assert slines[0] == "metric,direction,mean_rmse_hz,n"
        assert len(slines) == len(report.summary) + 1

    def test_scale_histogram_files(self, tmp_path):
        cfg = wt.TrainConfig(arch=ArchConfig(), steps_pretrain=0, steps_dualgan=0)
        full = wt.new_bundle(cfg, attitudes=("a", "b"))
        markers = {"P": 60.0, "SY": 150.0, "W": 375.0, "SE": 1200.0}
        csv_path, svg_path = we.scale_histogram(full, markers, tmp_path)
        lines = csv_path.read_text().strip().split("\n")
        assert lines[0] == "index,scale_ms"
        assert len(lines) == 33
        values = np.array([float(l.split(",")[1]) for l in lines[1:]])
        assert values[0] == pytest.approx(5.0)
        assert values[-1] == pytest.approx(2000.0)
        assert np.all(np.diff(values) > 0)
        svg = svg_path.read_text()
        assert svg.startswith("<svg")
        for name in ("P", "SY", "W", "SE"):
            assert f">{name}</text>" in svg
        assert svg.count('stroke="#1f4e6b"') == 32

    def test_histogram_deterministic(self, tmp_path, corpus, bundle):
        markers = we.corpus_markers(corpus.pairs)
        d1, d2 = tmp_path / "one", tmp_path / "two"
        for d in (d1, d2):
            we.scale_histogram(bundle, markers, d)
        assert (d1 / "scales.svg").read_bytes() == (d2 / "scales.svg").read_bytes()
        assert (d1 / "scales.csv").read_bytes() == (d2 / "scales.csv").read_bytes()
