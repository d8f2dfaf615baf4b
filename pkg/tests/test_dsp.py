import numpy as np
import pytest
from scipy import signal

from mentalbci.dataio import EpochedDataset
from mentalbci.dsp import (IIRFilter, apply_filter, apply_filtfilt, design_butterworth_bandpass,
                           filter_dataset, format_filter, frequency_response, make_filter_bank,
                           parse_filter)

FS = 256.0


def db(x):
    return 20 * np.log10(x)


@pytest.fixture(scope="module")
def bp():
    return design_butterworth_bandpass(8, 30, FS, 5)


class TestDesign:
    def test_edges_and_passband(self, bp):
        for edge in (8.0, 30.0):
            assert -3.5 <= db(frequency_response(bp, edge)[0]) <= -2.5
        assert db(frequency_response(bp, 15.5)[0]) >= -1.0
        assert db(frequency_response(bp, 50.0)[0]) <= -20.0

    def test_dc_exact_zero(self, bp):
        assert frequency_response(bp, 0.0)[0] == 0.0

    def test_stable(self, bp):
        assert bp.is_stable()
        assert np.all(np.abs(np.roots(bp.a)) < 1)

    @pytest.mark.parametrize("order", range(1, 11))
    def test_stable_every_order(self, order):
        for low, high in [(4, 8), (8, 12), (8, 30), (36, 40)]:
            assert design_butterworth_bandpass(low, high, FS, order).is_stable()

    def test_transfer_function_consistent(self, bp):
        # b/a and the section cascade describe the same response
        for x in (5.0, 8.0, 19.0, 30.0, 60.0):
            w = 2 * np.pi * x / FS
            z = np.exp(-1j * w * np.arange(bp.b.size))
            tf = abs(np.dot(bp.b, z) / np.dot(bp.a, z))
            assert tf == pytest.approx(frequency_response(bp, x)[0], rel=1e-8)

    def test_shape(self, bp):
        assert bp.b.size == bp.a.size == 11
        assert bp.a[0] == 1.0

    @pytest.mark.parametrize("low,high,fs,order", [
        (8, 30, 256, 5), (4, 8, 256, 5), (36, 40, 256, 5), (1, 40, 250, 3),
        (10, 100, 1000, 1), (20, 90, 250, 8), (8, 12, 256, 10)])
    def test_matches_reference_design(self, low, high, fs, order):
        f = design_butterworth_bandpass(low, high, fs, order)
        z, p, k = signal.butter(order, [low, high], btype="bandpass", fs=fs, output="zpk")
        assert np.allclose(np.sort_complex(f.poles), np.sort_complex(p), atol=1e-6)
        w, h_ref = signal.freqz_zpk(z, p, k, worN=[low, high, (low + high) / 2], fs=fs)
        ours = [frequency_response(f, x)[0] for x in (low, high, (low + high) / 2)]
        assert np.allclose(ours, np.abs(h_ref), rtol=1e-9, atol=1e-12)
        assert f.is_stable()

    @pytest.mark.parametrize("low,high,fs,order", [
        (4, 8, 256, 5), (8, 12, 256, 4), (2, 30, 100, 2), (10, 39, 100, 6), (40, 90, 256, 5)])
    def test_edge_attenuation(self, low, high, fs, order):
        f = design_butterworth_bandpass(low, high, fs, order)
        for edge in (low, high):
            assert abs(db(frequency_response(f, edge)[0]) + 3.0103) <= 0.5
        assert f.is_stable()

    @pytest.mark.parametrize("args", [(0, 30, 256, 5), (30, 8, 256, 5), (8, 128, 256, 5),
                                      (8, 30, 256, 0), (8, 30, 256, 11), (8, 30, 256, 2.5)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            design_butterworth_bandpass(*args)


class TestFrequencyResponse:
    def test_identity(self):
        f = IIRFilter(np.array([1.0]), np.array([1.0]), 0, 100.0)
        for x in (0.0, 13.0, 50.0):
            assert frequency_response(f, x) == (1.0, 0.0)

    def test_delay(self):
        f = IIRFilter(np.array([0.0, 1.0]), np.array([1.0]), 0, 100.0)
        mag, ph = frequency_response(f, 25.0)
        assert mag == pytest.approx(1.0, abs=1e-15)
        assert ph == pytest.approx(-np.pi / 2, abs=1e-15)

    def test_matches_freqz(self, bp):
        freqs = np.linspace(0.5, 127.5, 60)
        _, h = signal.freqz(bp.b, bp.a, worN=freqs, fs=FS)
        ours = np.array([frequency_response(bp, x) for x in freqs])
        assert np.allclose(ours[:, 0], np.abs(h), rtol=1e-9, atol=1e-12)

    def test_out_of_range(self, bp):
        with pytest.raises(ValueError):
            frequency_response(bp, 129.0)


class TestApplyFilter:
    def test_dc_rejected(self, bp):
        y = apply_filter(bp, np.ones(2048))
        assert np.all(np.abs(y[-256:]) < 1e-3)

    def test_geometric_impulse(self):
        f = IIRFilter(np.array([1.0]), np.array([1.0, -0.5]), 1, 1.0)
        x = np.zeros(8)
        x[0] = 1
        assert np.array_equal(apply_filter(f, x), 0.5 ** np.arange(8))

    def test_difference_equation(self, bp, rng):
        x = rng.standard_normal(200)
        y = np.zeros_like(x)
        for n in range(x.size):
            acc = sum(bp.b[k] * x[n - k] for k in range(bp.b.size) if n - k >= 0)
            acc -= sum(bp.a[k] * y[n - k] for k in range(1, bp.a.size) if n - k >= 0)
            y[n] = acc
        out = apply_filter(bp, x)
        assert np.linalg.norm(out - y) <= 1e-9 * np.linalg.norm(y)
        tf = IIRFilter(bp.b, bp.a, bp.order, bp.fs_hz)
        assert np.linalg.norm(apply_filter(tf, x) - y) <= 1e-9 * np.linalg.norm(y)

    def test_steady_state_gain(self, bp):
        t = np.arange(4096) / FS
        y = apply_filter(bp, np.sin(2 * np.pi * 15.5 * t))
        amp = np.sqrt(2) * np.std(y[2048:])
        assert amp == pytest.approx(frequency_response(bp, 15.5)[0], rel=0.01)

    def test_linearity(self, bp, rng):
        x, z = rng.standard_normal((2, 500))
        lhs = apply_filter(bp, 2.5 * x - 0.7 * z)
        rhs = 2.5 * apply_filter(bp, x) - 0.7 * apply_filter(bp, z)
        assert np.linalg.norm(lhs - rhs) <= 1e-9 * np.linalg.norm(rhs)

    def test_nonfinite(self, bp):
        with pytest.raises(ValueError):
            apply_filter(bp, np.array([1.0, np.nan]))


class TestFiltfilt:
    def test_symmetric_input(self, bp, rng):
        # finite edge padding leaves a short transient; away from it the output is symmetric
        half = rng.standard_normal(600)
        x = np.r_[half, half[::-1]]
        y = apply_filtfilt(bp, x)
        err = np.abs(y - y[::-1])
        scale = np.abs(y).max()
        assert err[300:-300].max() <= 1e-5 * scale
        assert err[550:-550].max() <= 1e-8 * scale

    def test_zero_lag(self, bp):
        t = np.arange(1024) / FS
        x = np.sin(2 * np.pi * 15.5 * t)
        y = apply_filtfilt(bp, x)
        mid = slice(256, 768)
        lags = np.arange(-20, 21)
        xc = [np.dot(x[mid], np.roll(y, -lag)[mid]) for lag in lags]
        assert lags[int(np.argmax(xc))] == 0

    def test_constant_decays(self, bp):
        y = apply_filtfilt(bp, np.ones(2048))
        assert np.all(np.abs(y[512:-512]) < 1e-3)

    def test_squared_magnitude(self, bp):
        t = np.arange(8192) / FS
        for freq in (8.0, 12.0, 20.0, 30.0, 35.0):
            y = apply_filtfilt(bp, np.sin(2 * np.pi * freq * t))
            amp = np.sqrt(2) * np.std(y[2048:-2048])
            assert amp == pytest.approx(frequency_response(bp, freq)[0] ** 2, rel=0.02)

    def test_too_short(self, bp):
        with pytest.raises(ValueError, match="too short"):
            apply_filtfilt(bp, np.ones(33))
        apply_filtfilt(bp, np.ones(34))


class TestFilterBank:
    def test_default_bank(self):
        bank = make_filter_bank(4, 40, 4, FS, 5)
        assert [(b.low_hz, b.high_hz) for b in bank.bands] == [(4 + 4 * i, 8 + 4 * i) for i in range(9)]
        assert len(bank.filters) == 9 and all(f.is_stable() for f in bank.filters)

    def test_single_band(self):
        bank = make_filter_bank(8, 30, 22, FS, 5)
        assert len(bank) == 1
        assert bank.filters[0] == design_butterworth_bandpass(8, 30, FS, 5)

    def test_non_divisible(self):
        with pytest.raises(ValueError):
            make_filter_bank(4, 40, 7, FS, 5)


class TestFilterDataset:
    def test_zeros(self, bp):
        ds = EpochedDataset(np.zeros((2, 3, 100)), [1, 2], FS)
        assert np.all(filter_dataset(ds, bp).data == 0)

    def test_per_channel(self, bp, rng):
        ds = EpochedDataset(rng.standard_normal((1, 3, 100)), [1], FS)
        out = filter_dataset(ds, bp, zero_phase=False)
        for c in range(3):
            assert np.array_equal(out.data[0, c], apply_filter(bp, ds.data[0, c]))

    def test_no_cross_trial_state(self, bp, rng):
        trial = rng.standard_normal((2, 200))
        ds = EpochedDataset(np.stack([trial, trial]), [1, 2], FS)
        for zp in (False, True):
            out = filter_dataset(ds, bp, zero_phase=zp)
            assert np.array_equal(out.data[0], out.data[1])

    def test_rate_mismatch(self, bp):
        with pytest.raises(ValueError):
            filter_dataset(EpochedDataset(np.zeros((1, 1, 100)), [1], 128.0), bp)


def test_export_round_trip(bp):
    text = format_filter(bp)
    assert text.startswith("b: ") and "\na: " in text
    assert parse_filter(text, 5, FS) == bp
