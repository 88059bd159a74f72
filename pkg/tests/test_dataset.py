import dataclasses
import json
import math

import numpy as np
import pytest
from scipy.signal import butter, sosfiltfilt

from hoadoa import io
from hoadoa.baseline import pseudo_intensity_doa
from hoadoa.dataset import (
    ANECHOIC,
    InfeasibleBoundsError,
    SceneBounds,
    SceneSpec,
    SplitConfig,
    babble_noise,
    check_scene,
    dump_manifest,
    lint_manifest,
    manifest_scenes,
    read_manifest,
    sample_scene,
    scene_specs,
    speech_surrogate,
    synth_scene,
    synth_split,
)
from hoadoa.dsp import FS, snr_db, stft
from hoadoa.sh import angular_distance


def small_config(**kw):
    base = dict(room_count=1, sources_per_room=2, ambisonics_order=1, sentence_seconds=(1.0, 1.2), split="test")
    base.update(kw)
    return SplitConfig(**base)


def crest(x):
    return np.abs(x).max() / np.sqrt(np.mean(x * x))


class TestSampling:
    def test_constraints_hold_for_10k_scenes(self):
        bounds = SceneBounds()
        bad = [p for i in range(10_000) for p in check_scene(sample_scene(3, i, bounds, 8), bounds)]
        assert bad == []

    def test_deterministic(self):
        assert sample_scene(42, 17) == sample_scene(42, 17)
        assert sample_scene(42, 17) != sample_scene(43, 17)

    def test_labels_uniform_on_sphere(self):
        v = np.array([sample_scene(9, i).doa_label.to_vector() for i in range(50_000)])
        assert np.linalg.norm(v.mean(axis=0)) < 0.02

    def test_room_and_absorption_bounds(self):
        for i in range(500):
            s = sample_scene(1, i)
            assert all(lo <= d <= hi for d, lo, hi in zip(s.room.dims, (3, 3, 3), (20, 20, 5)))
            assert all(0.1 <= a <= 0.9 for a in s.room.absorption)
            assert 0.0 <= s.snr_db <= 20.0

    def test_sources_share_room(self):
        a, b, c = (sample_scene(5, i, sources_per_room=8) for i in (8, 15, 16))
        assert a.room == b.room and a.receiver == b.receiver
        assert a.room != c.room

    def test_labels_stored_at_six_decimals(self):
        s = sample_scene(0, 3)
        assert round(s.azimuth_deg, 6) == s.azimuth_deg
        assert round(s.elevation_deg, 6) == s.elevation_deg

    @pytest.mark.parametrize("bounds", [
        SceneBounds(room_min=(2.0, 3.0, 3.0)),
        SceneBounds(receiver_margin=1.4),
        SceneBounds(room_min=(21.0, 3.0, 3.0)),
        SceneBounds(absorption=(0.5, 1.2)),
    ])
    def test_infeasible_bounds(self, bounds):
        with pytest.raises(InfeasibleBoundsError):
            sample_scene(0, 0, bounds)

    def test_split_config_validation(self):
        with pytest.raises(ValueError):
            SplitConfig(room_count=0)
        with pytest.raises(ValueError):
            SplitConfig(split="dev")
        assert len(scene_specs(SplitConfig(room_count=20, split="test"))) == 160


class TestSpeech:
    def test_rms_and_length(self):
        x = speech_surrogate(1, 1.0)
        assert x.shape == (FS,)
        assert abs(np.sqrt(np.mean(x * x)) - 0.1) < 1e-6

    def test_deterministic(self):
        assert np.array_equal(speech_surrogate(7, 0.5), speech_surrogate(7, 0.5))

    def test_envelope_is_slow(self):
        for seed in range(5):
            x = speech_surrogate(seed, 4.0)
            env = sosfiltfilt(butter(4, 50, fs=FS, output="sos"), np.abs(x))
            p = np.abs(np.fft.rfft(env - env.mean())) ** 2
            f = np.fft.rfftfreq(len(env), 1 / FS)
            assert p[f < 10].sum() > 0.5 * p.sum()

    def test_duration_positive(self):
        with pytest.raises(ValueError):
            speech_surrogate(0, 0.0)


class TestBabble:
    def test_rms(self):
        for k in range(50):
            b = babble_noise(range(50 * k, 50 * k + 50), 0.5)
            assert abs(np.sqrt(np.mean(b * b)) - 0.1) < 1e-6

    def test_crest_below_components(self):
        seeds = list(range(100, 150))
        b = babble_noise(seeds, 2.0)
        assert crest(b) < np.median([crest(speech_surrogate(s, 2.0)) for s in seeds])

    def test_deterministic_and_seed_count(self):
        assert np.array_equal(babble_noise(range(50), 0.3), babble_noise(range(50), 0.3))
        with pytest.raises(ValueError):
            babble_noise(range(49), 0.3)


class TestSynthScene:
    def test_sequence_count_for_long_sentence(self):
        cfg = SplitConfig(ambisonics_order=1, sentence_seconds=(3.2, 3.2))
        sig = synth_scene(sample_scene(0, 0), cfg)
        assert len(sig.sequences) in (3, 4)
        assert all(s.shape == (4, FS) for s in sig.sequences)

    def test_anechoic_high_snr_recovers_label(self):
        bounds = dataclasses.replace(ANECHOIC, snr_range=(20.0, 20.0))
        cfg = SplitConfig(ambisonics_order=1, bounds=bounds, sentence_seconds=(1.5, 2.0))
        for i in range(4):
            spec = sample_scene(11, i, bounds)
            for seq in synth_scene(spec, cfg).sequences:
                err = math.degrees(angular_distance(pseudo_intensity_doa(stft(seq)), spec.doa_label))
                assert err < 2.0

    def test_mixture_snr(self):
        spec = sample_scene(2, 1)
        sig = synth_scene(spec, small_config())
        assert abs(snr_db(sig.speech, sig.noise) - spec.snr_db) < 1e-9

    def test_deterministic(self):
        spec = sample_scene(4, 4)
        a, b = synth_scene(spec, small_config()), synth_scene(spec, small_config())
        assert all(np.array_equal(x, y) for x, y in zip(a.sequences, b.sequences))


class TestSplit:
    def test_files_manifest_and_resume(self, tmp_path):
        cfg = small_config(debug_components=True, features=("intensity",))
        first = synth_split(cfg, tmp_path)
        assert first.errors == [] and first.changed
        doc = read_manifest(first.manifest_path)
        assert json.loads(dump_manifest(doc)) == doc
        assert len(doc["scenes"]) == 2
        assert lint_manifest(doc) == []
        for rec in doc["scenes"]:
            for seq in rec["files"]["sequences"]:
                data, rate = io.read_wav(tmp_path / seq["path"])
                assert rate == FS and data.shape == (4, FS)
            speech, _ = io.read_wav(tmp_path / rec["files"]["speech"]["path"])
            noise, _ = io.read_wav(tmp_path / rec["files"]["noise"]["path"])
            assert abs(snr_db(speech.astype(float), noise.astype(float)) - rec["snr_db"]) < 1e-6
            feats = rec["files"]["features"]["intensity"]
            assert io.read_hoat(tmp_path / feats[0]["path"]).shape == (50, 512, 6)
            assert rec["files"]["srir"] is None

        stamps = {p: p.stat().st_mtime_ns for p in tmp_path.rglob("*.wav")}
        again = synth_split(cfg, tmp_path)
        assert not again.changed
        assert {p: p.stat().st_mtime_ns for p in tmp_path.rglob("*.wav")} == stamps

    def test_damaged_scene_is_regenerated(self, tmp_path):
        cfg = small_config()
        doc = synth_split(cfg, tmp_path).manifest
        victim = tmp_path / doc["scenes"][0]["files"]["sequences"][0]["path"]
        original = victim.read_bytes()
        victim.write_bytes(b"junk")
        synth_split(cfg, tmp_path)
        assert victim.read_bytes() == original

    def test_same_seed_same_bytes(self, tmp_path):
        cfg = small_config(save_srir=True)
        synth_split(cfg, tmp_path / "a")
        synth_split(cfg, tmp_path / "b")
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        assert files
        for rel in files:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_scene_errors_do_not_abort(self, tmp_path):
        cfg = small_config(speech_dir=str(tmp_path / "empty"))
        (tmp_path / "empty").mkdir()
        result = synth_split(cfg, tmp_path / "out")
        assert len(result.errors) == 2 and result.manifest["scenes"] == []

    def test_lint_flags_violations(self, tmp_path):
        doc = synth_split(small_config(), tmp_path).manifest
        doc["scenes"][0]["receiver"] = [0.2, 0.2, 0.2]
        assert any("receiver" in p for p in lint_manifest(doc))

    def test_record_round_trip(self):
        spec = sample_scene(8, 2)
        assert SceneSpec.from_record(json.loads(json.dumps(spec.to_record()))) == spec
        assert manifest_scenes({"scenes": [spec.to_record()]}) == [spec]

    def test_config_round_trip(self):
        cfg = small_config(features=("intensity", "magphase"))
        assert SplitConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
        with pytest.raises(ValueError):
            SplitConfig.from_dict({"rooms": 3})
