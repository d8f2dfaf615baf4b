"""Butterworth band-pass design and IIR filtering."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import signal

__all__ = [
    "BandSpec", "IIRFilter", "FilterBank", "design_butterworth_bandpass",
    "frequency_response", "apply_filter", "apply_filtfilt", "make_filter_bank",
    "filter_dataset", "format_filter", "parse_filter",
]


@dataclass(frozen=True)
class BandSpec:
    low_hz: float
    high_hz: float

    def validate(self, fs_hz: float) -> None:
        if not 0 < self.low_hz < self.high_hz < fs_hz / 2:
            raise ValueError(
                f"band ({self.low_hz}, {self.high_hz}) Hz invalid for fs={fs_hz} Hz; "
                "need 0 < low < high < fs/2")


@dataclass(frozen=True, eq=False)
class IIRFilter:
    """Rational transfer function ``B(z)/A(z)`` with ``a[0] == 1``.

    Designed filters also carry ``sos``, the same response as cascaded
    second-order sections built directly from the poles and zeros. Filtering
    and response evaluation use it when present: expanding ten or more poles
    near ``z = 1`` into one polynomial loses too much precision to be usable
    for narrow bands.
    """

    b: np.ndarray
    a: np.ndarray
    order: int
    fs_hz: float
    sos: Optional[np.ndarray] = None

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.b, dtype=np.float64))
        a = np.atleast_1d(np.asarray(self.a, dtype=np.float64))
        if a[0] == 0:
            raise ValueError("a[0] must be nonzero")
        if a[0] != 1.0:
            b, a = b / a[0], a / a[0]
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(a))):
            raise ValueError("filter coefficients must be finite")
        b.flags.writeable = False
        a.flags.writeable = False
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "a", a)
        if self.sos is not None:
            sos = np.array(self.sos, dtype=np.float64).reshape(-1, 6)
            sos.flags.writeable = False
            object.__setattr__(self, "sos", sos)

    @property
    def poles(self) -> np.ndarray:
        if self.sos is not None:
            return np.concatenate([np.roots(sec[3:]) for sec in self.sos])
        if self.a.size < 2:
            return np.empty(0, dtype=complex)
        return np.roots(self.a)

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles) < 1.0))

    def __eq__(self, other):
        if not isinstance(other, IIRFilter):
            return NotImplemented
        same_sos = (self.sos is None) == (other.sos is None) and (
            self.sos is None or np.array_equal(self.sos, other.sos))
        return (self.order == other.order and self.fs_hz == other.fs_hz and same_sos
                and np.array_equal(self.b, other.b) and np.array_equal(self.a, other.a))

    __hash__ = None


@dataclass(frozen=True)
class FilterBank:
    bands: tuple[BandSpec, ...]
    filters: tuple[IIRFilter, ...]

    def __len__(self):
        return len(self.bands)


def design_butterworth_bandpass(low_hz: float, high_hz: float, fs_hz: float,
                                order: int = 5) -> IIRFilter:
    """Digital Butterworth band-pass of analog prototype order ``order``.

    The normalised low-pass prototype is mapped to the pre-warped analog band,
    then discretised with the bilinear transform. The result has ``2*order``
    poles and its -3 dB points sit exactly at ``low_hz`` and ``high_hz``.
    """
    BandSpec(low_hz, high_hz).validate(fs_hz)
    if not (isinstance(order, (int, np.integer)) and 1 <= order <= 10):
        raise ValueError(f"order must be an integer in 1..10, got {order!r}")
    n = int(order)

    # prototype poles on the left half of the unit circle
    k = np.arange(1, n + 1)
    proto = np.exp(1j * np.pi * (2 * k + n - 1) / (2 * n))

    c = 2.0 * fs_hz
    w_lo = c * math.tan(math.pi * low_hz / fs_hz)
    w_hi = c * math.tan(math.pi * high_hz / fs_hz)
    bw = w_hi - w_lo
    w0_sq = w_lo * w_hi

    # low-pass -> band-pass: s -> (s^2 + w0^2) / (s * bw)
    half = proto * bw / 2.0
    root = np.sqrt(half ** 2 - w0_sq + 0j)
    poles_s = np.concatenate([half + root, half - root])
    # n zeros at s = 0 and n at infinity; gain bw^n keeps unit passband peak
    gain_s = bw ** n

    poles_z = (c + poles_s) / (c - poles_s)
    zeros_z = np.concatenate([np.ones(n), -np.ones(n)])
    gain_z = np.real(gain_s * c ** n / np.prod(c - poles_s))

    b = gain_z * np.real(np.poly(zeros_z))
    a = np.real(np.poly(poles_z))
    sos = signal.zpk2sos(zeros_z, poles_z, gain_z)
    return IIRFilter(b, a, n, float(fs_hz), sos)


def _poly_at(coeffs, omega):
    # sum c_k exp(-j k omega) with exactly rounded sums: the +/- coefficient
    # pairs of an odd-order band-pass numerator then cancel to exact zero at DC
    k = np.arange(coeffs.size)
    re = math.fsum(coeffs * np.cos(k * omega))
    im = math.fsum(-coeffs * np.sin(k * omega))
    return complex(re, im)


def frequency_response(f: IIRFilter, freq_hz: float) -> tuple[float, float]:
    """Magnitude (linear) and phase (radians) of ``f`` at ``freq_hz``."""
    if not 0 <= freq_hz <= f.fs_hz / 2:
        raise ValueError(f"frequency {freq_hz} Hz outside [0, {f.fs_hz / 2}]")
    omega = 2 * np.pi * freq_hz / f.fs_hz
    if f.sos is not None:
        h = math.prod(_poly_at(sec[:3], omega) / _poly_at(sec[3:], omega) for sec in f.sos)
    else:
        h = _poly_at(f.b, omega) / _poly_at(f.a, omega)
    return float(abs(h)), float(np.angle(h))


def _check_finite(x):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite samples")
    return x


def apply_filter(f: IIRFilter, x, axis: int = -1) -> np.ndarray:
    """Causal direct-form filtering from zero initial state.

    ``x`` may be multi-dimensional; every 1-D slice along ``axis`` is
    filtered independently.
    """
    x = _check_finite(x)
    if f.sos is not None:
        return signal.sosfilt(np.array(f.sos), x, axis=axis)
    return signal.lfilter(f.b, f.a, x, axis=axis)


def _padlen(f: IIRFilter) -> int:
    return 3 * max(f.a.size, f.b.size)  # 3 * (2 * order + 1) for a designed band-pass


def apply_filtfilt(f: IIRFilter, x, axis: int = -1) -> np.ndarray:
    """Zero-phase forward-backward filtering.

    Edges are extended by odd reflection over ``3 * len(a)`` samples; each
    pass starts from the steady-state response to its first padded sample.
    """
    x = _check_finite(x)
    padlen = _padlen(f)
    if x.shape[axis] <= padlen:
        raise ValueError(f"input of {x.shape[axis]} samples too short; need more than {padlen}")
    if f.sos is not None:
        return signal.sosfiltfilt(np.array(f.sos), x, axis=axis, padtype="odd", padlen=padlen)
    return signal.filtfilt(f.b, f.a, x, axis=axis, padtype="odd", padlen=padlen)


def make_filter_bank(low_hz: float, high_hz: float, width_hz: float, fs_hz: float,
                     order: int = 5) -> FilterBank:
    """Contiguous equal-width bands covering ``[low_hz, high_hz]``."""
    if width_hz <= 0:
        raise ValueError("band width must be positive")
    span = (high_hz - low_hz) / width_hz
    n_bands = round(span)
    if n_bands < 1 or abs(span - n_bands) * width_hz > 1e-9:
        raise ValueError(
            f"range {low_hz}-{high_hz} Hz is not a whole number of {width_hz} Hz bands")
    bands = tuple(BandSpec(low_hz + i * width_hz, low_hz + (i + 1) * width_hz)
                  for i in range(n_bands))
    for band in bands:
        band.validate(fs_hz)
    filters = tuple(design_butterworth_bandpass(bd.low_hz, bd.high_hz, fs_hz, order)
                    for bd in bands)
    return FilterBank(bands, filters)


def filter_dataset(ds, f: IIRFilter, zero_phase: bool = True):
    """Filter every (trial, channel) sequence independently; returns float64 data."""
    if ds.fs_hz != f.fs_hz:
        raise ValueError(f"filter designed for {f.fs_hz} Hz, dataset sampled at {ds.fs_hz} Hz")
    if ds.n_trials == 0:
        return ds.replace(np.zeros(ds.data.shape))
    apply = apply_filtfilt if zero_phase else apply_filter
    return ds.replace(apply(f, ds.data, axis=-1))


def format_filter(f: IIRFilter) -> str:
    """Debug text export: ``b: ...`` and ``a: ...`` lines, 17 significant digits.

    Designed filters add one ``sos: b0 b1 b2 a0 a1 a2`` line per section.
    """
    def row(tag, coeffs):
        return tag + ": " + " ".join(format(float(c), ".17g") for c in coeffs)
    lines = [row("b", f.b), row("a", f.a)]
    if f.sos is not None:
        lines += [row("sos", sec) for sec in f.sos]
    return "\n".join(lines) + "\n"


def parse_filter(text: str, order: int, fs_hz: float) -> IIRFilter:
    rows: dict[str, list] = {}
    for line in text.splitlines():
        if line.strip():
            tag, _, values = line.partition(":")
            rows.setdefault(tag.strip(), []).append([float(v) for v in values.split()])
    sos = np.array(rows["sos"]) if "sos" in rows else None
    return IIRFilter(np.array(rows["b"][0]), np.array(rows["a"][0]), order, fs_hz, sos)
