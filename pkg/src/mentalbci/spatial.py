"""Common spatial patterns, Tikhonov-regularised CSP and filter-bank CSP.

Covariances are plain ``(n_channels, n_channels)`` arrays. Most fitting code
works from per-trial covariances so that a repeated-subsampling harness can
compute them once per dataset and refit cheaply on each training subset.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .dataio import ClassLabel, EpochedDataset
from .dsp import FilterBank, apply_filtfilt, apply_filter

__all__ = [
    "SpatialFilters", "TRCSPParams", "FBCSPModel", "trial_covariance",
    "class_mean_covariance", "solve_csp", "solve_trcsp", "spatial_filter_trial",
    "log_variance_features", "build_feature_set", "mutual_information",
    "fit_fbcsp", "transform_fbcsp", "format_spatial_filters", "format_fbcsp_model",
    "RIDGE_EPS",
]

RIDGE_EPS = 1e-10


@dataclass(frozen=True, eq=False)
class SpatialFilters:
    """Filter columns ``W`` (n_channels x 2m) with their eigenvalues.

    The first ``m`` columns favour the first class (eigenvalues descending),
    the last ``m`` favour the second class.
    """

    W: np.ndarray
    eigenvalues: np.ndarray
    m: int

    def __eq__(self, other):
        if not isinstance(other, SpatialFilters):
            return NotImplemented
        return (self.m == other.m and np.array_equal(self.W, other.W)
                and np.array_equal(self.eigenvalues, other.eigenvalues))

    __hash__ = None


@dataclass(frozen=True)
class TRCSPParams:
    alpha: float = 1e-3

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")


@dataclass(frozen=True, eq=False)
class FBCSPModel:
    bank: FilterBank
    per_band: tuple[SpatialFilters, ...]
    selected: tuple[tuple[int, int], ...]
    mi_scores: np.ndarray
    m: int
    zero_phase: bool = True

    def __eq__(self, other):
        if not isinstance(other, FBCSPModel):
            return NotImplemented
        return (self.bank == other.bank and self.per_band == other.per_band
                and self.selected == other.selected and self.m == other.m
                and self.zero_phase == other.zero_phase
                and np.array_equal(self.mi_scores, other.mi_scores))

    __hash__ = None


# -- covariances -----------------------------------------------------------

def trial_covariance(trial, normalize: bool = True) -> np.ndarray:
    """Mean-centred spatial covariance ``X X^T / T``, optionally trace-normalised."""
    x = np.asarray(trial, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError(f"trial must be (n_channels, n_samples) with >= 2 samples, got {x.shape}")
    return _normalize(_trial_covs(x[None])[0], normalize)


def _trial_covs(data) -> np.ndarray:
    """Un-normalised covariances of a (N, C, T) stack."""
    x = np.asarray(data, dtype=np.float64)
    xc = x - x.mean(axis=-1, keepdims=True)
    covs = xc @ np.swapaxes(xc, -1, -2) / x.shape[-1]
    return (covs + np.swapaxes(covs, -1, -2)) / 2


def _normalize(covs, normalize=True):
    if not normalize:
        return covs
    tr = np.trace(covs, axis1=-2, axis2=-1)
    if np.any(tr <= 0):
        raise ValueError("zero-trace covariance cannot be normalised (constant trial)")
    return covs / tr[..., None, None]


def class_mean_covariance(ds: EpochedDataset, label, normalize: bool = True) -> np.ndarray:
    label = ClassLabel.parse(label)
    idx = np.flatnonzero(ds.labels == label)
    if idx.size == 0:
        raise ValueError(f"class {label.name} absent from dataset")
    return _normalize(_trial_covs(ds.data[idx]), normalize).mean(axis=0)


# -- generalised eigenproblems --------------------------------------------

def _ridge(c):
    n = c.shape[0]
    return c + (RIDGE_EPS * np.trace(c) / n) * np.eye(n)


def _check_pair(c1, c2):
    c1 = np.asarray(c1, dtype=np.float64)
    c2 = np.asarray(c2, dtype=np.float64)
    if c1.ndim != 2 or c1.shape[0] != c1.shape[1] or c1.shape != c2.shape:
        raise ValueError(f"covariances must be equal-size square matrices, got {c1.shape} and {c2.shape}")
    return c1, c2


def _check_m(m, n):
    if m < 1 or 2 * m > n:
        raise ValueError(f"need 1 <= m and 2m <= n_channels ({n}), got m={m}")


def _pencil_eigh(a, b):
    """Eigenpairs of ``a v = mu b v`` by whitening with the Cholesky factor of ``b``.

    Eigenvalues ascending; eigenvectors are ``b``-orthonormal.
    """
    try:
        low = np.linalg.cholesky(b)
    except np.linalg.LinAlgError:
        raise ValueError("covariance operand is numerically singular even after ridge loading") from None
    tmp = solve_triangular(low, a, lower=True)
    white = solve_triangular(low, tmp.T, lower=True).T
    white = (white + white.T) / 2
    mu, u = np.linalg.eigh(white)
    v = solve_triangular(low.T, u, lower=False)
    return mu, v


def _sign_fix(w):
    pivot = np.abs(w).argmax(axis=0)
    signs = np.sign(w[pivot, np.arange(w.shape[1])])
    signs[signs == 0] = 1.0
    return w * signs


def solve_csp(c1, c2, m: int = 2) -> SpatialFilters:
    """Extremal eigenvectors of the pencil ``c1 w = lambda c2 w``.

    Solved on ``(c1, c1 + c2)`` whose eigenvalues ``mu = lambda / (1 + lambda)``
    share eigenvectors with the original pencil. Columns are normalised to
    ``w^T (c1 + c2) w = 1``.
    """
    c1, c2 = _check_pair(c1, c2)
    _check_m(m, c1.shape[0])
    a, b = _ridge(c1), _ridge(c2)
    mu, v = _pencil_eigh(a, a + b)
    order = np.r_[np.arange(mu.size - 1, mu.size - 1 - m, -1), np.arange(m)]
    mu = mu[order]
    if np.any(mu >= 1.0):
        raise ValueError("second covariance is numerically singular")
    lam = mu / (1.0 - mu)
    return SpatialFilters(_sign_fix(v[:, order]), lam, m)


def solve_trcsp(c1, c2, params=TRCSPParams(), m: int = 2) -> SpatialFilters:
    """Tikhonov-regularised CSP with identity penalty.

    Class-1 filters maximise ``w^T c1 w / (w^T c2 w + alpha w^T w)`` and
    class-2 filters the mirrored ratio. Eigenvalues are those of the
    respective regularised pencils.
    """
    if not isinstance(params, TRCSPParams):
        params = TRCSPParams(float(params))
    c1, c2 = _check_pair(c1, c2)
    n = c1.shape[0]
    _check_m(m, n)
    a, b = _ridge(c1), _ridge(c2)
    reg = params.alpha * np.eye(n)
    mu1, v1 = _pencil_eigh(a, b + reg)
    mu2, v2 = _pencil_eigh(b, a + reg)
    top = np.arange(n - 1, n - 1 - m, -1)
    w = np.hstack([v1[:, top], v2[:, top]])
    scale = np.sqrt(np.einsum("ci,cd,di->i", w, a + b, w))
    w = _sign_fix(w / scale)
    return SpatialFilters(w, np.r_[mu1[top], mu2[top]], m)


# -- features --------------------------------------------------------------

def _filters_matrix(w):
    return w.W if isinstance(w, SpatialFilters) else np.asarray(w, dtype=np.float64)


def spatial_filter_trial(w, trial) -> np.ndarray:
    """``Z = W^T X``."""
    wm = _filters_matrix(w)
    x = np.asarray(trial, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != wm.shape[0]:
        raise ValueError(f"trial shape {x.shape} does not match {wm.shape[0]} filter channels")
    return wm.T @ x


def _log_ratio(variances):
    if np.any(variances <= 0):
        raise ValueError("zero-variance spatial component; log-variance feature undefined")
    return np.log(variances / variances.sum(axis=-1, keepdims=True))


def log_variance_features(z) -> np.ndarray:
    """Log of each row's variance over the summed row variances."""
    z = np.asarray(z, dtype=np.float64)
    return _log_ratio(z.var(axis=-1))


def build_feature_set(ds: EpochedDataset, w) -> np.ndarray:
    wm = _filters_matrix(w)
    if wm.shape[0] != ds.n_channels:
        raise ValueError(f"filters expect {wm.shape[0]} channels, dataset has {ds.n_channels}")
    rows = [log_variance_features(spatial_filter_trial(wm, trial)) for trial in ds.data]
    return np.array(rows).reshape(ds.n_trials, wm.shape[1])


def _features_from_covs(covs, wm):
    # var(w^T X) == w^T S w for the 1/T mean-centred covariance S
    return _log_ratio(np.einsum("ci,ncd,di->ni", wm, covs, wm))


def _class_pair(labels):
    classes = np.unique(labels)
    if classes.size != 2:
        raise ValueError(f"expected exactly two classes, found {classes.size}")
    return classes


def _fit_csp_covs(covs, labels, m, alpha=None, normalize=True):
    """CSP (alpha None) or TRCSP on per-trial covariances; lower class code is class 1."""
    lo, hi = _class_pair(labels)
    ncovs = _normalize(covs, normalize)
    c1 = ncovs[labels == lo].mean(axis=0)
    c2 = ncovs[labels == hi].mean(axis=0)
    if alpha is None:
        return solve_csp(c1, c2, m)
    return solve_trcsp(c1, c2, TRCSPParams(alpha), m)


# -- mutual information and FBCSP -----------------------------------------

def mutual_information(feature, labels, n_bins: int = 10) -> float:
    """Mutual information (bits) between a quantile-binned feature and binary labels."""
    x = np.asarray(feature, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if x.size != y.size:
        raise ValueError("feature and labels differ in length")
    classes, y_idx = np.unique(y, return_inverse=True)
    if classes.size != 2:
        raise ValueError("labels must contain exactly two classes")
    if n_bins < 1 or x.size < 2 * n_bins:
        raise ValueError(f"need at least {2 * n_bins} samples for {n_bins} bins, got {x.size}")
    edges = np.quantile(x, np.arange(1, n_bins) / n_bins)
    x_idx = np.searchsorted(edges, x, side="right")
    joint = np.zeros((n_bins, 2))
    np.add.at(joint, (x_idx, y_idx), 1.0)
    joint /= x.size
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log2(joint[nz] / (px @ py)[nz])))
    return max(mi, 0.0)


def _select_top(scores, k):
    """Indices into the flattened (band, feature) grid, best first."""
    flat = scores.reshape(-1)
    # lexsort: last key is primary; flat index order already encodes band then feature
    order = np.lexsort((np.arange(flat.size), -flat))
    return order[:k]


def _fit_fbcsp_covs(band_covs, labels, bank, m, k_select, n_bins, zero_phase=True):
    n_bands = len(band_covs)
    if not 1 <= k_select <= n_bands * 2 * m:
        raise ValueError(f"k_select={k_select} outside 1..{n_bands * 2 * m}")
    per_band, cands = [], []
    for covs in band_covs:
        sf = _fit_csp_covs(covs, labels, m)
        per_band.append(sf)
        cands.append(_features_from_covs(covs, sf.W))
    cands = np.hstack(cands)
    scores = np.array([mutual_information(cands[:, j], labels, n_bins)
                       for j in range(cands.shape[1])]).reshape(n_bands, 2 * m)
    top = _select_top(scores, k_select)
    selected = tuple((int(j // (2 * m)), int(j % (2 * m))) for j in top)
    return FBCSPModel(bank, tuple(per_band), selected, scores, m, zero_phase)


def _band_filter(f, data, zero_phase):
    return (apply_filtfilt if zero_phase else apply_filter)(f, data, axis=-1)


def _fbcsp_features_covs(model, band_covs):
    """``band_covs`` maps band index -> per-trial covariances."""
    cols = []
    cache = {}
    for band, feat in model.selected:
        if band not in cache:
            cache[band] = _features_from_covs(band_covs[band], model.per_band[band].W)
        cols.append(cache[band][:, feat])
    return np.column_stack(cols)


def fit_fbcsp(train: EpochedDataset, bank: FilterBank, m: int = 2, k_select: int = 4,
              n_bins: int = 10, zero_phase: bool = True) -> FBCSPModel:
    """Per-band CSP on ``train`` followed by mutual-information feature selection.

    Ties in MI go to the lower band index, then the lower feature index.
    """
    _check_m(m, train.n_channels)
    _class_pair(train.labels)
    if not 1 <= k_select <= len(bank) * 2 * m:
        raise ValueError(f"k_select={k_select} outside 1..{len(bank) * 2 * m}")
    band_covs = [_trial_covs(_band_filter(f, train.data, zero_phase)) for f in bank.filters]
    return _fit_fbcsp_covs(band_covs, train.labels, bank, m, k_select, n_bins, zero_phase)


def transform_fbcsp(model: FBCSPModel, ds: EpochedDataset) -> np.ndarray:
    n_ch = model.per_band[0].W.shape[0]
    if ds.n_channels != n_ch:
        raise ValueError(f"model trained on {n_ch} channels, dataset has {ds.n_channels}")
    bands = sorted({band for band, _ in model.selected})
    band_covs = {b: _trial_covs(_band_filter(model.bank.filters[b], ds.data, model.zero_phase))
                 for b in bands}
    return _fbcsp_features_covs(model, band_covs)


# -- debug dumps -----------------------------------------------------------

def _fmt(values):
    return " ".join(format(float(v), ".17g") for v in np.ravel(values))


def format_spatial_filters(sf: SpatialFilters) -> str:
    """Row-major ``W`` followed by the eigenvalues, 17 significant digits."""
    lines = [f"m: {sf.m}", f"shape: {sf.W.shape[0]} {sf.W.shape[1]}"]
    lines += ["W: " + _fmt(row) for row in sf.W]
    lines.append("eigenvalues: " + _fmt(sf.eigenvalues))
    return "\n".join(lines) + "\n"


def format_fbcsp_model(model: FBCSPModel) -> str:
    lines = ["bands: " + " ".join(f"{b.low_hz:g}-{b.high_hz:g}" for b in model.bank.bands),
             "selected: " + " ".join(f"{b}:{f}" for b, f in model.selected),
             "mi_scores: " + _fmt(model.mi_scores)]
    for i, sf in enumerate(model.per_band):
        lines.append(f"[band {i}]")
        lines.append(format_spatial_filters(sf).rstrip("\n"))
    return "\n".join(lines) + "\n"
