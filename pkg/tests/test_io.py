import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from afua import io
from afua.core import ModelParams
from afua.dsp import FeatureScaler, FeatureSequence, Segment, SignalBuffer
from afua.netsim import Label, quantize

from conftest import toy_windows


def random_params(seed=0):
    rng = np.random.default_rng(seed)
    p = ModelParams.zeros()
    return ModelParams(**{k: rng.normal(0, 1.3, np.shape(v)) for k, v in p.as_dict().items()})


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


class TestWeights:
    def test_full_precision_bit_exact(self, tmp_path):
        p = random_params()
        scaler = FeatureScaler(lo=np.array([0.1, 2.0]), hi=np.array([1.0 / 3, 7.5]))
        io.save_weights(tmp_path / "w.json", p, scaler, "abc")
        back, sc = io.load_weights(tmp_path / "w.json")
        for k, v in p.as_dict().items():
            assert np.array_equal(back.as_dict()[k], v)
        np.testing.assert_array_equal(sc.lo, scaler.lo)
        np.testing.assert_array_equal(sc.hi, scaler.hi)

    @settings(max_examples=30, deadline=None)
    @given(arrays(float, (2, 2), elements=finite))
    def test_arbitrary_floats_round_trip(self, W):
        p = ModelParams.zeros()
        p.W = W
        back, _ = io.weights_from_dict(json.loads(json.dumps(io.weights_to_dict(p))))
        assert np.array_equal(back.W, W)

    def test_quantized_written_as_integers(self, tmp_path):
        q = quantize(random_params(1))
        io.save_weights(tmp_path / "q.json", q)
        doc = json.loads((tmp_path / "q.json").read_text())
        assert doc["kind"] == "quantized"
        assert all(isinstance(v, int) for t in doc["tensors"].values()
                   for v in np.ravel(t).tolist())
        back, sc = io.load_weights(tmp_path / "q.json")
        assert sc is None
        for k, v in q.as_dict().items():
            assert np.array_equal(back.as_dict()[k], v)

    def test_rejects_float_in_quantized_file(self):
        doc = io.weights_to_dict(quantize(random_params()))
        doc["tensors"]["b"] = [1.5, 0]
        with pytest.raises(io.FormatError):
            io.weights_from_dict(doc)

    @pytest.mark.parametrize("mutate", [
        lambda d: d.update(format_version=99),
        lambda d: d.update(kind="analog"),
        lambda d: d["tensors"].pop("Uz"),
        lambda d: d["tensors"].update(extra=[1]),
    ])
    def test_malformed(self, mutate):
        doc = io.weights_to_dict(random_params())
        mutate(doc)
        with pytest.raises(io.FormatError):
            io.weights_from_dict(doc)


class TestText:
    def test_signal_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        buf = SignalBuffer(rng.normal(size=500), 1000.0)
        io.save_signal(tmp_path / "s.txt", buf, "h1")
        back = io.load_signal(tmp_path / "s.txt")
        assert back.sample_rate == 1000.0
        assert np.array_equal(back.samples, buf.samples)

    def test_signal_needs_header(self, tmp_path):
        (tmp_path / "s.txt").write_text("0 1\n0.001 2\n")
        with pytest.raises(io.FormatError):
            io.load_signal(tmp_path / "s.txt")

    def test_features_round_trip(self, tmp_path):
        feats = FeatureSequence(np.random.default_rng(1).uniform(0, 5, (40, 2)), 10.0, t0=1.0)
        io.save_features(tmp_path / "f.txt", feats, "h2")
        back = io.load_features(tmp_path / "f.txt")
        assert np.array_equal(back.values, feats.values)
        assert back.rate == 10.0 and back.t0 == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(back.times(), feats.times(), atol=1e-12)

    def test_features_need_header(self, tmp_path):
        (tmp_path / "f.txt").write_text("0.1 1 2\n")
        with pytest.raises(io.FormatError):
            io.load_features(tmp_path / "f.txt")

    def test_manifest_round_trip(self, tmp_path):
        segs = [Segment(0.0, 24.0, Label.CHEWING, "chew"),
                Segment(24.0, 48.5, Label.NOT_CHEWING, "talk"),
                Segment(48.5, 60.0, Label.NOT_CHEWING, "")]
        io.save_manifest(tmp_path / "m.txt", segs, "h3")
        assert io.load_manifest(tmp_path / "m.txt") == segs

    def test_manifest_unknown_label(self, tmp_path):
        (tmp_path / "m.txt").write_text("0 1 snacking chew\n")
        with pytest.raises(io.FormatError):
            io.load_manifest(tmp_path / "m.txt")

    def test_windows_round_trip(self):
        ws = toy_windows(3)
        back = io.windows_from_dict(json.loads(json.dumps(io.windows_to_dict(ws))))
        assert len(back) == len(ws)
        for a, b in zip(ws, back):
            assert a.label == b.label and a.t0 == b.t0 and a.kind == b.kind
            assert np.array_equal(a.frames, b.frames)


class TestConfigHash:
    def test_order_independent(self):
        assert io.config_hash({"a": 1, "b": {"c": 2, "d": 3}}) == \
            io.config_hash({"b": {"d": 3, "c": 2}, "a": 1})
        assert io.config_hash({"a": 1}) != io.config_hash({"a": 2})
        assert len(io.config_hash({})) == 16

    def test_read_back_from_every_format(self, tmp_path):
        h = io.config_hash({"x": 1})
        io.save_signal(tmp_path / "s.txt", SignalBuffer(np.zeros(4), 10.0), h)
        io.save_features(tmp_path / "f.txt", FeatureSequence(np.zeros((3, 2)), 10.0), h)
        io.save_manifest(tmp_path / "m.txt", [Segment(0, 1, Label.CHEWING)], h)
        io.save_columns(tmp_path / "c.txt", "a b", np.arange(3), np.ones(3), config_hash=h)
        io.save_weights(tmp_path / "w.json", random_params(), None, h)
        for name in ("s.txt", "f.txt", "m.txt", "c.txt", "w.json"):
            assert io.read_config_hash(tmp_path / name) == h

    def test_absent(self, tmp_path):
        io.save_columns(tmp_path / "c.txt", "a", np.arange(3))
        io.dump_json({"a": 1}, tmp_path / "d.json")
        assert io.read_config_hash(tmp_path / "c.txt") == ""
        assert io.read_config_hash(tmp_path / "d.json") == ""

    def test_hash_does_not_break_loaders(self, tmp_path):
        buf = SignalBuffer(np.arange(5.0), 100.0)
        io.save_signal(tmp_path / "s.txt", buf, "deadbeef")
        assert np.array_equal(io.load_signal(tmp_path / "s.txt").samples, buf.samples)
