"""Epoched EEG containers, binary I/O, subsetting and synthetic data.

The ``.epo`` container is little-endian throughout::

    magic      4 bytes  b"EPO1"
    version    u32      (= 1)
    n_trials   u32
    n_channels u32
    n_samples  u32
    fs_hz      f64
    names      n_channels x (u16 length + UTF-8 bytes)
    labels     n_trials x u8 (1..5)
    data       n_trials * n_channels * n_samples x f32, trial-major,
               channel-major, sample-minor

No padding and no compression.
"""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "ClassLabel", "EpochedDataset", "SplitIndices", "SynthSpec",
    "DatasetFormatError", "read_dataset", "write_dataset", "select_pair",
    "crop_window", "stratified_split", "synth_two_class", "synth_multiclass",
    "MAGIC", "VERSION", "header_size",
]

MAGIC = b"EPO1"
VERSION = 1
_HEAD = struct.Struct("<4sIIIId")


class DatasetFormatError(ValueError):
    """Raised for malformed ``.epo`` content."""


class ClassLabel(enum.IntEnum):
    WORD = 1
    SUB = 2
    NAV = 3
    HAND = 4
    FEET = 5

    @classmethod
    def parse(cls, value) -> "ClassLabel":
        """Accept a ClassLabel, an integer code or a (case-insensitive) name."""
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            key = value.strip().upper()
            if key.isdigit():
                return cls(int(key))
            try:
                return cls[key]
            except KeyError:
                raise ValueError(f"unknown class name {value!r}") from None
        return cls(int(value))


@dataclass(frozen=True, eq=False)
class EpochedDataset:
    """Trials x channels x samples of EEG (microvolts) with metadata.

    ``data`` keeps whatever floating dtype it was built with; the file
    container always stores binary32.
    """

    data: np.ndarray
    labels: np.ndarray
    fs_hz: float
    channel_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype.kind != "f":
            data = data.astype(np.float64)
        if data.ndim != 3:
            raise ValueError(f"data must be 3-D (trials, channels, samples), got shape {data.shape}")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != data.shape[0]:
            raise ValueError(f"{labels.shape[0]} labels for {data.shape[0]} trials")
        if labels.size and (labels.min() < 1 or labels.max() > 5):
            raise ValueError("labels must be class codes in 1..5")
        if not (math.isfinite(self.fs_hz) and self.fs_hz > 0):
            raise ValueError(f"fs_hz must be positive, got {self.fs_hz}")
        if not np.all(np.isfinite(data)):
            raise ValueError("data contains non-finite values")
        names = tuple(self.channel_names) or tuple(f"ch{i + 1}" for i in range(data.shape[1]))
        if len(names) != data.shape[1]:
            raise ValueError(f"{len(names)} channel names for {data.shape[1]} channels")
        data.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "fs_hz", float(self.fs_hz))
        object.__setattr__(self, "channel_names", names)

    @property
    def n_trials(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def n_samples(self) -> int:
        return self.data.shape[2]

    def class_counts(self) -> dict[ClassLabel, int]:
        codes, counts = np.unique(self.labels, return_counts=True)
        return {ClassLabel(int(c)): int(n) for c, n in zip(codes, counts)}

    def subset(self, indices) -> "EpochedDataset":
        indices = np.asarray(indices, dtype=np.intp)
        return EpochedDataset(self.data[indices], self.labels[indices], self.fs_hz, self.channel_names)

    def replace(self, data: np.ndarray) -> "EpochedDataset":
        """Same metadata, new sample array."""
        return EpochedDataset(data, self.labels, self.fs_hz, self.channel_names)

    def __eq__(self, other):
        if not isinstance(other, EpochedDataset):
            return NotImplemented
        return (
            self.fs_hz == other.fs_hz
            and self.channel_names == other.channel_names
            and self.data.shape == other.data.shape
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the two-class ground-truth generator.

    Source 0 is the discriminative one. Every source is band-limited to
    ``source_band`` before mixing into channels.
    """

    n_trials_per_class: int
    n_channels: int
    n_samples: int
    fs_hz: float
    mixing: np.ndarray
    source_band: tuple[float, float] = (8.0, 12.0)
    variance_ratio: float = 10.0
    noise_std: float = 0.0

    def __post_init__(self):
        mixing = np.atleast_2d(np.asarray(self.mixing, dtype=np.float64))
        object.__setattr__(self, "mixing", mixing)
        if self.n_trials_per_class < 1 or self.n_channels < 1 or self.n_samples < 2:
            raise ValueError("trial, channel and sample counts must be positive")
        if mixing.shape[0] != self.n_channels:
            raise ValueError(f"mixing has {mixing.shape[0]} rows for {self.n_channels} channels")
        if np.linalg.matrix_rank(mixing) < mixing.shape[1]:
            raise ValueError("mixing must have full column rank")
        low, high = self.source_band
        if not 0 < low < high < self.fs_hz / 2:
            raise ValueError(f"source band {self.source_band} invalid for fs={self.fs_hz}")
        if not self.variance_ratio > 0:
            raise ValueError("variance_ratio must be positive")
        if not self.noise_std >= 0:
            raise ValueError("noise_std must be nonnegative")

    @property
    def n_sources(self) -> int:
        return self.mixing.shape[1]


def header_size(channel_names: Sequence[str]) -> int:
    """Byte count of everything before the labels block."""
    return _HEAD.size + sum(2 + len(name.encode("utf-8")) for name in channel_names)


def write_dataset(ds: EpochedDataset, path) -> None:
    parts = [_HEAD.pack(MAGIC, VERSION, ds.n_trials, ds.n_channels, ds.n_samples, ds.fs_hz)]
    for name in ds.channel_names:
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"channel name too long: {name[:20]!r}...")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
    parts.append(ds.labels.astype(np.uint8).tobytes())
    parts.append(np.ascontiguousarray(ds.data, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_dataset(path) -> EpochedDataset:
    buf = Path(path).read_bytes()
    if len(buf) < _HEAD.size:
        raise DatasetFormatError(f"{path}: file shorter than the fixed header")
    magic, version, n_trials, n_channels, n_samples, fs_hz = _HEAD.unpack_from(buf, 0)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    pos = _HEAD.size
    names = []
    for _ in range(n_channels):
        if pos + 2 > len(buf):
            raise DatasetFormatError(f"{path}: truncated channel-name table")
        (length,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        if pos + length > len(buf):
            raise DatasetFormatError(f"{path}: truncated channel-name table")
        names.append(buf[pos:pos + length].decode("utf-8"))
        pos += length
    n_values = n_trials * n_channels * n_samples
    expected = pos + n_trials + 4 * n_values
    if len(buf) < expected:
        raise DatasetFormatError(
            f"{path}: truncated payload ({len(buf)} bytes, header declares {expected})")
    if len(buf) > expected:
        raise DatasetFormatError(f"{path}: {len(buf) - expected} trailing bytes")
    labels = np.frombuffer(buf, dtype=np.uint8, count=n_trials, offset=pos).astype(np.int64)
    pos += n_trials
    data = np.frombuffer(buf, dtype="<f4", count=n_values, offset=pos)
    data = data.astype(np.float32).reshape(n_trials, n_channels, n_samples)
    if not np.all(np.isfinite(data)):
        raise DatasetFormatError(f"{path}: non-finite sample values")
    try:
        return EpochedDataset(data, labels, fs_hz, tuple(names))
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from None


def select_pair(ds: EpochedDataset, a, b) -> EpochedDataset:
    a, b = ClassLabel.parse(a), ClassLabel.parse(b)
    if a == b:
        raise ValueError(f"pair needs two distinct classes, got {a.name} twice")
    counts = ds.class_counts()
    for c in (a, b):
        if c not in counts:
            raise ValueError(f"class {c.name} absent from dataset")
    keep = np.flatnonzero((ds.labels == a) | (ds.labels == b))
    return ds.subset(keep)


def crop_window(ds: EpochedDataset, t_start_s: float, t_end_s: float) -> EpochedDataset:
    duration = ds.n_samples / ds.fs_hz
    if not t_start_s < t_end_s:
        raise ValueError(f"empty window [{t_start_s}, {t_end_s}]")
    if t_start_s < 0 or t_end_s > duration + 1e-12:
        raise ValueError(f"window [{t_start_s}, {t_end_s}] outside trial of {duration} s")
    start = math.floor(t_start_s * ds.fs_hz)
    length = math.floor((t_end_s - t_start_s) * ds.fs_hz)
    if length < 1:
        raise ValueError(f"window [{t_start_s}, {t_end_s}] holds no samples")
    stop = min(start + length, ds.n_samples)
    return ds.replace(ds.data[:, :, start:stop])


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def stratified_split(ds_or_labels, train_fraction: float, seed: int) -> SplitIndices:
    """Per-class random split; ``round_half_up(fraction * count)`` trials per class train.

    Accepts a dataset or a bare label vector.
    """
    labels = ds_or_labels.labels if isinstance(ds_or_labels, EpochedDataset) else np.asarray(ds_or_labels)
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for code in np.unique(labels):
        idx = np.flatnonzero(labels == code)
        if idx.size < 2:
            raise ValueError(f"class {int(code)} has {idx.size} trial(s); need at least 2")
        n_train = _round_half_up(train_fraction * idx.size)
        perm = rng.permutation(idx)
        train.append(perm[:n_train])
        test.append(perm[n_train:])
    return SplitIndices(np.sort(np.concatenate(train)), np.sort(np.concatenate(test)))


def _band_limited_sources(rng, n_trials, n_sources, n_samples, fs_hz, band):
    white = rng.standard_normal((n_trials, n_sources, n_samples))
    spec = np.fft.rfft(white, axis=-1)
    freqs = np.fft.rfftfreq(n_samples, d=1.0 / fs_hz)
    spec[..., (freqs < band[0]) | (freqs > band[1])] = 0.0
    src = np.fft.irfft(spec, n=n_samples, axis=-1)
    # pooled normalisation keeps trial-to-trial power fluctuations
    scale = np.sqrt(np.mean(src ** 2, axis=(0, 2), keepdims=True))
    return src / scale


def _synth(spec: SynthSpec, seed: int, class_codes, boosted_source) -> EpochedDataset:
    n_classes = len(class_codes)
    n_trials = n_classes * spec.n_trials_per_class
    rng = np.random.default_rng(seed)
    labels = np.tile(np.asarray(class_codes, dtype=np.int64), spec.n_trials_per_class)
    src = _band_limited_sources(rng, n_trials, spec.n_sources, spec.n_samples, spec.fs_hz,
                                spec.source_band)
    gain = math.sqrt(spec.variance_ratio)
    for k, s in enumerate(boosted_source):
        if s is not None:
            src[k::n_classes, s, :] *= gain
    data = np.einsum("cs,nst->nct", spec.mixing, src)
    if spec.noise_std > 0:
        data += spec.noise_std * rng.standard_normal(data.shape)
    names = tuple(f"ch{i + 1}" for i in range(spec.n_channels))
    return EpochedDataset(data.astype(np.float32), labels, spec.fs_hz, names)


def synth_two_class(spec: SynthSpec, seed: int,
                    classes=(ClassLabel.WORD, ClassLabel.FEET)) -> EpochedDataset:
    """Balanced two-class dataset; trials alternate ``classes[0]``, ``classes[1]``.

    Trials of ``classes[0]`` carry source 0 at ``variance_ratio`` times the
    power it has in ``classes[1]``.
    """
    a, b = (ClassLabel.parse(c) for c in classes)
    if a == b:
        raise ValueError("classes must differ")
    return _synth(spec, seed, (int(a), int(b)), (0, None))


def synth_multiclass(spec: SynthSpec, seed: int, classes=tuple(ClassLabel)) -> EpochedDataset:
    """One boosted source per class: class ``k`` amplifies source ``k mod n_sources``."""
    codes = tuple(int(ClassLabel.parse(c)) for c in classes)
    if len(set(codes)) != len(codes):
        raise ValueError("classes must be distinct")
    return _synth(spec, seed, codes, tuple(k % spec.n_sources for k in range(len(codes))))
