import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from mentalbci.dataio import (ClassLabel, DatasetFormatError, EpochedDataset, SynthSpec,
                              crop_window, header_size, read_dataset, select_pair,
                              stratified_split, synth_multiclass, synth_two_class, write_dataset)


def _ds(n_trials=4, n_channels=3, n_samples=10, fs=256.0, seed=0, labels=None):
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((n_trials, n_channels, n_samples)).astype(np.float32)
    if labels is None:
        labels = [1 + (i % 5) for i in range(n_trials)]
    return EpochedDataset(data, labels, fs)


def _expected_bytes(ds):
    # independent serializer, field by field
    out = b"EPO1" + struct.pack("<IIIId", 1, ds.n_trials, ds.n_channels, ds.n_samples, ds.fs_hz)
    for name in ds.channel_names:
        raw = name.encode()
        out += struct.pack("<H", len(raw)) + raw
    out += bytes(int(c) for c in ds.labels)
    for trial in ds.data:
        for channel in trial:
            for v in channel:
                out += struct.pack("<f", float(v))
    return out


class TestClassLabel:
    def test_codes(self):
        assert [c.value for c in ClassLabel] == [1, 2, 3, 4, 5]
        assert [c.name for c in ClassLabel] == ["WORD", "SUB", "NAV", "HAND", "FEET"]

    @pytest.mark.parametrize("raw", ["feet", "FEET", 5, ClassLabel.FEET, "5"])
    def test_parse(self, raw):
        assert ClassLabel.parse(raw) is ClassLabel.FEET

    @pytest.mark.parametrize("raw", [0, 6, "toes"])
    def test_parse_rejects(self, raw):
        with pytest.raises(ValueError):
            ClassLabel.parse(raw)


class TestEpochedDataset:
    def test_rejects_nonfinite(self):
        data = np.zeros((1, 1, 3))
        data[0, 0, 1] = np.nan
        with pytest.raises(ValueError):
            EpochedDataset(data, [1], 256.0)

    def test_rejects_label_mismatch(self):
        with pytest.raises(ValueError):
            EpochedDataset(np.zeros((2, 1, 3)), [1], 256.0)

    def test_rejects_bad_code_and_rate(self):
        with pytest.raises(ValueError):
            EpochedDataset(np.zeros((1, 1, 3)), [7], 256.0)
        with pytest.raises(ValueError):
            EpochedDataset(np.zeros((1, 1, 3)), [1], 0.0)

    def test_immutable(self):
        ds = _ds()
        with pytest.raises(ValueError):
            ds.data[0, 0, 0] = 1.0


class TestContainer:
    def test_byte_layout_matches_oracle(self, tmp_path):
        ds = _ds(3, 2, 5)
        write_dataset(ds, tmp_path / "a.epo")
        assert (tmp_path / "a.epo").read_bytes() == _expected_bytes(ds)

    def test_round_trip_large(self, tmp_path):
        mixing = np.random.default_rng(0).standard_normal((30, 4))
        ds = synth_two_class(SynthSpec(40, 30, 1792, 256.0, mixing), seed=9)
        assert ds.data.shape == (80, 30, 1792)
        path = tmp_path / "s.epo"
        write_dataset(ds, path)
        back = read_dataset(path)
        assert back == ds
        assert back.data.tobytes() == ds.data.astype("<f4").tobytes()

    def test_empty_dataset_is_header_only(self, tmp_path):
        ds = EpochedDataset(np.zeros((0, 2, 4), np.float32), [], 100.0, ("a", "b"))
        write_dataset(ds, tmp_path / "e.epo")
        assert (tmp_path / "e.epo").stat().st_size == header_size(("a", "b"))
        assert read_dataset(tmp_path / "e.epo") == ds

    def test_single_value_payload(self, tmp_path):
        ds = EpochedDataset(np.zeros((1, 1, 1), np.float32), [1], 256.0, ("c",))
        write_dataset(ds, tmp_path / "one.epo")
        raw = (tmp_path / "one.epo").read_bytes()
        assert len(raw) - header_size(("c",)) - 1 == 4
        assert raw[-4:] == b"\x00\x00\x00\x00"

    def test_truncated_payload(self, tmp_path):
        full = _ds(2, 2, 4)
        write_dataset(full, tmp_path / "t.epo")
        raw = (tmp_path / "t.epo").read_bytes()
        (tmp_path / "t.epo").write_bytes(raw[:-2 * 4 * 4])  # drop one trial
        with pytest.raises(DatasetFormatError, match="truncated"):
            read_dataset(tmp_path / "t.epo")

    def test_bad_magic_and_version(self, tmp_path):
        write_dataset(_ds(), tmp_path / "m.epo")
        raw = bytearray((tmp_path / "m.epo").read_bytes())
        bad = bytes(raw)
        (tmp_path / "x.epo").write_bytes(b"EPO2" + bad[4:])
        with pytest.raises(DatasetFormatError, match="magic"):
            read_dataset(tmp_path / "x.epo")
        raw[4] = 2
        (tmp_path / "v.epo").write_bytes(bytes(raw))
        with pytest.raises(DatasetFormatError, match="version"):
            read_dataset(tmp_path / "v.epo")

    def test_nonfinite_payload(self, tmp_path):
        ds = _ds(1, 1, 2)
        write_dataset(ds, tmp_path / "n.epo")
        raw = (tmp_path / "n.epo").read_bytes()
        (tmp_path / "n.epo").write_bytes(raw[:-4] + struct.pack("<f", float("inf")))
        with pytest.raises(DatasetFormatError, match="non-finite"):
            read_dataset(tmp_path / "n.epo")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_dataset(tmp_path / "absent.epo")

    @settings(max_examples=40, deadline=None)
    @given(hnp.arrays(np.float32, hnp.array_shapes(min_dims=3, max_dims=3, max_side=5),
                      elements=st.floats(-1e6, 1e6, width=32)),
           st.floats(1.0, 5000.0))
    def test_round_trip_property(self, tmp_path_factory, data, fs):
        labels = [1 + i % 5 for i in range(data.shape[0])]
        ds = EpochedDataset(data, labels, fs, tuple(f"é{i}" for i in range(data.shape[1])))
        path = tmp_path_factory.mktemp("rt") / "p.epo"
        write_dataset(ds, path)
        assert path.read_bytes() == _expected_bytes(ds)
        assert read_dataset(path) == ds


class TestSelectPair:
    def test_counts_and_order(self):
        labels = [1 + i % 5 for i in range(80)]
        ds = _ds(80, 2, 4, labels=labels)
        sub = select_pair(ds, ClassLabel.WORD, "feet")
        assert sub.n_trials == 32
        assert set(sub.labels) == {1, 5}
        keep = [i for i, c in enumerate(labels) if c in (1, 5)]
        assert np.array_equal(sub.data, ds.data[keep])

    def test_errors(self):
        ds = _ds(4, labels=[1, 1, 2, 2])
        with pytest.raises(ValueError):
            select_pair(ds, "WORD", "WORD")
        with pytest.raises(ValueError):
            select_pair(ds, "WORD", "FEET")


class TestCropWindow:
    def test_default_window(self):
        ds = _ds(1, 1, 2560)
        out = crop_window(ds, 4.0, 10.0)
        assert out.n_samples == 1536
        assert np.array_equal(out.data, ds.data[:, :, 1024:])

    def test_identity(self):
        ds = _ds(2, 2, 100, fs=50.0)
        assert crop_window(ds, 0.0, 2.0) == ds

    @pytest.mark.parametrize("t0,t1", [(3.0, 3.0), (-0.1, 1.0), (0.0, 2.5), (1.5, 1.0)])
    def test_errors(self, t0, t1):
        with pytest.raises(ValueError):
            crop_window(_ds(1, 1, 100, fs=50.0), t0, t1)


class TestStratifiedSplit:
    def test_counts(self):
        labels = np.repeat([1, 5], 40)
        for seed in range(20):
            sp = stratified_split(labels, 0.7, seed)
            assert len(sp.train) == 56 and len(sp.test) == 24
            assert np.sum(labels[sp.train] == 1) == 28
            assert np.sum(labels[sp.test] == 5) == 12
            assert np.array_equal(np.sort(np.r_[sp.train, sp.test]), np.arange(80))

    def test_half_up(self):
        labels = np.repeat([1, 2], 5)  # 0.7 * 5 = 3.5 -> 4
        sp = stratified_split(labels, 0.7, 0)
        assert np.sum(labels[sp.train] == 1) == 4

    def test_deterministic(self):
        labels = np.repeat([1, 2], 10)
        a, b = stratified_split(labels, 0.7, 42), stratified_split(labels, 0.7, 42)
        assert np.array_equal(a.train, b.train) and np.array_equal(a.test, b.test)

    def test_uniform_test_frequency(self):
        labels = np.repeat([1, 5], 40)
        hits = np.zeros(80)
        for seed in range(10_000):
            hits[stratified_split(labels, 0.7, seed).test] += 1
        freq = hits / 10_000
        assert np.all(np.abs(freq - 0.3) <= 0.02)

    def test_too_few(self):
        with pytest.raises(ValueError):
            stratified_split(np.array([1, 2, 2]), 0.7, 0)


class TestSynth:
    def test_deterministic(self):
        spec = SynthSpec(5, 4, 64, 128.0, np.eye(4)[:, :2])
        assert synth_two_class(spec, 3) == synth_two_class(spec, 3)
        assert not synth_two_class(spec, 3) == synth_two_class(spec, 4)

    def test_ratio_one_is_symmetric(self):
        mixing = np.random.default_rng(1).standard_normal((6, 3))
        ds = synth_two_class(SynthSpec(100, 6, 256, 128.0, mixing, variance_ratio=1.0), 0)
        covs = [np.mean([np.cov(t, bias=True) for t in ds.data[ds.labels == c]], axis=0)
                for c in (1, 5)]
        assert np.linalg.norm(covs[0] - covs[1]) / np.linalg.norm(covs[1]) < 0.1

    def test_single_source_mixing(self):
        ds = synth_two_class(SynthSpec(3, 2, 64, 128.0, np.array([[1.0], [0.0]])), 0)
        assert np.all(ds.data[:, 1, :] == 0)

    def test_unmixed_variance_ratio(self):
        mixing = np.random.default_rng(2).standard_normal((10, 4))
        ds = synth_two_class(SynthSpec(40, 10, 512, 256.0, mixing, variance_ratio=10.0), 5)
        src = np.einsum("sc,nct->nst", np.linalg.pinv(mixing), ds.data.astype(np.float64))
        v = src[:, 0, :].var(axis=-1)
        ratio = v[ds.labels == 1].mean() / v[ds.labels == 5].mean()
        assert 8 <= ratio <= 12

    def test_band_limited(self):
        ds = synth_two_class(SynthSpec(2, 1, 512, 256.0, np.ones((1, 1)), (8.0, 12.0)), 0)
        power = np.abs(np.fft.rfft(ds.data[0, 0].astype(np.float64))) ** 2
        freqs = np.fft.rfftfreq(512, 1 / 256)
        inside = (freqs >= 8) & (freqs <= 12)
        assert power[~inside].sum() < 1e-6 * power[inside].sum()

    def test_multiclass(self):
        mixing = np.random.default_rng(0).standard_normal((8, 5))
        ds = synth_multiclass(SynthSpec(16, 8, 64, 128.0, mixing), 0)
        assert ds.class_counts() == {c: 16 for c in ClassLabel}

    @pytest.mark.parametrize("kw", [dict(variance_ratio=0.0), dict(noise_std=-1.0),
                                    dict(source_band=(12.0, 8.0)), dict(source_band=(8.0, 80.0))])
    def test_invalid_spec(self, kw):
        with pytest.raises(ValueError):
            SynthSpec(5, 4, 64, 128.0, np.eye(4)[:, :2], **kw)

    def test_rank_deficient_mixing(self):
        with pytest.raises(ValueError):
            SynthSpec(5, 4, 64, 128.0, np.ones((4, 2)))
