"""Binary classifiers on feature matrices: LDA, kernel SVM (SMO) and KNN.

Every ``predict_*`` accepts either one feature vector (returns a label) or a
2-D batch (returns a label array).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "TrainConfig", "LDAModel", "SVMModel", "KNNModel", "fit_lda", "predict_lda",
    "lda_discriminants", "fit_svm", "predict_svm", "svm_decision", "rbf_kernel",
    "fit_knn", "predict_knn", "SVMConvergenceWarning", "format_model",
]


class SVMConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Classifier hyperparameters.

    ``rbf_gamma=None`` selects ``1 / (d * var(F))`` from the training features.
    ``svm_alpha_eps`` is the smallest multiplier step SMO accepts as progress.
    """

    svm_C: float = 1.0
    svm_tol: float = 1e-3
    svm_max_passes: int = 5
    svm_max_sweeps: int = 10_000
    svm_alpha_eps: float = 1e-5
    rbf_gamma: Optional[float] = None
    knn_k: int = 1
    lda_ridge: float = 1e-9
    standardize: bool = False

    def __post_init__(self):
        for name in ("svm_C", "svm_tol", "svm_alpha_eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.svm_max_passes < 1 or self.svm_max_sweeps < 1 or self.knn_k < 1:
            raise ValueError("pass, sweep and neighbour counts must be >= 1")
        if self.rbf_gamma is not None and not self.rbf_gamma > 0:
            raise ValueError("rbf_gamma must be positive")
        if not self.lda_ridge >= 0:
            raise ValueError("lda_ridge must be nonnegative")


def _xy(F, y):
    F = np.asarray(F, dtype=np.float64)
    y = np.asarray(y).reshape(-1)
    if F.ndim != 2 or F.shape[0] != y.size:
        raise ValueError(f"feature matrix {F.shape} does not match {y.size} labels")
    if not np.all(np.isfinite(F)):
        raise ValueError("features must be finite")
    classes = np.unique(y)
    if classes.size != 2:
        raise ValueError(f"binary classifier needs exactly two classes, got {classes.size}")
    return F, y, classes


def _queries(x, d):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.ndim != 2 or x2.shape[1] != d:
        raise ValueError(f"expected {d} features, got shape {x.shape}")
    return x2, single


# -- LDA -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LDAModel:
    class_means: np.ndarray
    pooled_cov_inv: np.ndarray
    class_ids: np.ndarray
    priors: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, LDAModel):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f))
                   for f in ("class_means", "pooled_cov_inv", "class_ids", "priors"))

    __hash__ = None


def fit_lda(F, y, ridge: float = 1e-9) -> LDAModel:
    """Shared-covariance Gaussian classifier.

    The pooled covariance is the count-weighted mean of the per-class
    (1/n_c) covariances, plus ``ridge * trace / d`` on the diagonal.
    """
    F, y, classes = _xy(F, y)
    n, d = F.shape
    means = np.array([F[y == c].mean(axis=0) for c in classes])
    scatter = np.zeros((d, d))
    for c, mu in zip(classes, means):
        xc = F[y == c] - mu
        scatter += xc.T @ xc
    pooled = scatter / n
    pooled = pooled + (ridge * np.trace(pooled) / d) * np.eye(d)
    try:
        inv = np.linalg.inv(pooled)
    except np.linalg.LinAlgError:
        raise ValueError("pooled covariance is singular; increase lda_ridge") from None
    if not np.all(np.isfinite(inv)):
        raise ValueError("pooled covariance is singular; increase lda_ridge")
    inv = (inv + inv.T) / 2
    priors = np.array([np.count_nonzero(y == c) for c in classes]) / n
    return LDAModel(means, inv, classes, priors)


def lda_discriminants(model: LDAModel, x) -> np.ndarray:
    """``g_c(x) = x^T S^-1 m_c - m_c^T S^-1 m_c / 2`` (+ log prior when priors differ)."""
    x2, _ = _queries(x, model.class_means.shape[1])
    coef = model.class_means @ model.pooled_cov_inv
    offset = -0.5 * np.einsum("cd,cd->c", coef, model.class_means)
    if not np.all(model.priors == model.priors[0]):
        offset = offset + np.log(model.priors)
    return x2 @ coef.T + offset


def predict_lda(model: LDAModel, x):
    _, single = _queries(x, model.class_means.shape[1])
    # argmax keeps the first maximum: ties go to the lower class id
    labels = model.class_ids[np.argmax(lda_discriminants(model, x), axis=1)]
    return labels[0] if single else labels


# -- SVM -------------------------------------------------------------------

def rbf_kernel(x, xi, gamma: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    if x.shape != xi.shape:
        raise ValueError(f"dimension mismatch {x.shape} vs {xi.shape}")
    diff = x - xi
    return float(np.exp(-gamma * np.dot(diff, diff)))


def _gram(kernel, gamma, A, B):
    if kernel == "linear":
        return A @ B.T
    sq = (np.einsum("ij,ij->i", A, A)[:, None] + np.einsum("ij,ij->i", B, B)[None, :]
          - 2.0 * A @ B.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass(frozen=True, eq=False)
class SVMModel:
    support_vectors: np.ndarray
    alphas_signed: np.ndarray
    bias: float
    kernel: str
    gamma: Optional[float]
    class_ids: tuple
    converged: bool = True
    n_sweeps: int = 0
    support_index: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.intp))

    def __eq__(self, other):
        if not isinstance(other, SVMModel):
            return NotImplemented
        return (self.kernel == other.kernel and self.gamma == other.gamma
                and self.bias == other.bias and self.class_ids == other.class_ids
                and np.array_equal(self.support_vectors, other.support_vectors)
                and np.array_equal(self.alphas_signed, other.alphas_signed))

    __hash__ = None

    def label_of(self, sign: int):
        """Map ``+1`` / ``-1`` to the class label."""
        return self.class_ids[0] if sign > 0 else self.class_ids[1]


def _smo(K, y, C, tol, max_passes, max_sweeps, alpha_eps):
    n = y.size
    alpha = np.zeros(n)
    b = 0.0
    err = -y.astype(np.float64)  # f(x_i) - y_i with f = 0 initially
    passes = sweeps = 0
    while passes < max_passes and sweeps < max_sweeps:
        changed = 0
        for i in range(n):
            r = y[i] * err[i]
            if not ((r < -tol and alpha[i] < C) or (r > tol and alpha[i] > 0)):
                continue
            # partner with the largest error gap first, then the rest in that order
            for j in np.argsort(-np.abs(err[i] - err), kind="stable"):
                if j == i:
                    continue
                step = _take_step(i, j, alpha, y, err, K, b, C, alpha_eps)
                if step is not None:
                    b = step
                    changed += 1
                    break
        sweeps += 1
        passes = passes + 1 if changed == 0 else 0
    return alpha, b, passes >= max_passes, sweeps


def _take_step(i, j, alpha, y, err, K, b, C, alpha_eps):
    """Analytic two-multiplier update; returns the new bias or None if no progress."""
    ai, aj = alpha[i], alpha[j]
    yi, yj = y[i], y[j]
    if yi != yj:
        lo, hi = max(0.0, aj - ai), min(C, C + aj - ai)
    else:
        lo, hi = max(0.0, ai + aj - C), min(C, ai + aj)
    if hi - lo <= 0:
        return None
    eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
    if eta <= 1e-12:
        return None
    aj_new = min(hi, max(lo, aj + yj * (err[i] - err[j]) / eta))
    if abs(aj_new - aj) < alpha_eps:
        return None
    ai_new = ai + yi * yj * (aj - aj_new)
    dai, daj = ai_new - ai, aj_new - aj
    b1 = b - err[i] - yi * dai * K[i, i] - yj * daj * K[i, j]
    b2 = b - err[j] - yi * dai * K[i, j] - yj * daj * K[j, j]
    if 0 < ai_new < C:
        b_new = b1
    elif 0 < aj_new < C:
        b_new = b2
    else:
        b_new = (b1 + b2) / 2.0
    alpha[i], alpha[j] = ai_new, aj_new
    err += yi * dai * K[:, i] + yj * daj * K[:, j] + (b_new - b)
    return b_new


def fit_svm(F, y, cfg: TrainConfig = TrainConfig(), kernel: str = "linear") -> SVMModel:
    """Soft-margin SVM trained by sequential minimal optimisation.

    The lower class id maps to ``+1``. Training is deterministic: the outer
    loop sweeps samples in order and the partner choice depends only on the
    error cache.
    """
    F, y, classes = _xy(F, y)
    if kernel not in ("linear", "rbf"):
        raise ValueError(f"unknown kernel {kernel!r}")
    gamma = None
    if kernel == "rbf":
        gamma = cfg.rbf_gamma
        if gamma is None:
            var = F.var()
            gamma = 1.0 / (F.shape[1] * var) if var > 0 else 1.0
    ys = np.where(y == classes[0], 1.0, -1.0)
    K = _gram(kernel, gamma, F, F)
    alpha, b, converged, sweeps = _smo(K, ys, cfg.svm_C, cfg.svm_tol, cfg.svm_max_passes,
                                       cfg.svm_max_sweeps, cfg.svm_alpha_eps)
    if not converged:
        warnings.warn(f"SMO stopped after {sweeps} sweeps without converging",
                      SVMConvergenceWarning, stacklevel=2)
    keep = np.flatnonzero(alpha > 1e-8)
    if keep.size == 0:
        raise ValueError("SMO produced no support vectors")
    return SVMModel(F[keep].copy(), alpha[keep] * ys[keep], float(b), kernel, gamma,
                    (classes[0].item(), classes[1].item()), converged, sweeps, keep)


def svm_decision(model: SVMModel, x) -> np.ndarray:
    x2, _ = _queries(x, model.support_vectors.shape[1])
    return _gram(model.kernel, model.gamma, x2, model.support_vectors) @ model.alphas_signed + model.bias


def predict_svm(model: SVMModel, x):
    _, single = _queries(x, model.support_vectors.shape[1])
    pos = svm_decision(model, x) >= 0
    labels = np.where(pos, model.class_ids[0], model.class_ids[1])
    return labels[0] if single else labels


# -- KNN -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KNNModel:
    points: np.ndarray
    labels: np.ndarray
    k: int

    def __eq__(self, other):
        if not isinstance(other, KNNModel):
            return NotImplemented
        return (self.k == other.k and np.array_equal(self.points, other.points)
                and np.array_equal(self.labels, other.labels))

    __hash__ = None


def fit_knn(F, y, k: int = 1) -> KNNModel:
    F = np.asarray(F, dtype=np.float64)
    y = np.asarray(y).reshape(-1)
    if F.ndim != 2 or F.shape[0] != y.size:
        raise ValueError(f"feature matrix {F.shape} does not match {y.size} labels")
    if not 1 <= k <= F.shape[0]:
        raise ValueError(f"k must lie in 1..{F.shape[0]}, got {k}")
    return KNNModel(F.copy(), y.copy(), int(k))


def _vote(neigh_labels):
    values, first, counts = np.unique(neigh_labels, return_index=True, return_counts=True)
    best = counts == counts.max()
    # among tied winners, the one met first in distance order
    return values[best][np.argmin(first[best])]


def predict_knn(model: KNNModel, x):
    x2, single = _queries(x, model.points.shape[1])
    out = []
    for q in x2:
        dist = np.sqrt(np.sum((model.points - q) ** 2, axis=1))
        nearest = np.argsort(dist, kind="stable")[:model.k]
        out.append(_vote(model.labels[nearest]))
    out = np.array(out)
    return out[0] if single else out


# -- debug dumps -----------------------------------------------------------

def _fmt(values):
    return " ".join(format(float(v), ".17g") for v in np.ravel(values))


def format_model(model) -> str:
    """Plain-text parameter dump, 17 significant digits."""
    if isinstance(model, LDAModel):
        lines = ["type: lda", "class_ids: " + " ".join(str(c) for c in model.class_ids),
                 "priors: " + _fmt(model.priors)]
        lines += ["mean: " + _fmt(row) for row in model.class_means]
        lines += ["cov_inv: " + _fmt(row) for row in model.pooled_cov_inv]
    elif isinstance(model, SVMModel):
        lines = [f"type: svm-{model.kernel}",
                 "class_ids: " + " ".join(str(c) for c in model.class_ids),
                 "gamma: " + ("none" if model.gamma is None else format(model.gamma, ".17g")),
                 "bias: " + format(model.bias, ".17g"),
                 "alphas_signed: " + _fmt(model.alphas_signed)]
        lines += ["sv: " + _fmt(row) for row in model.support_vectors]
    elif isinstance(model, KNNModel):
        lines = ["type: knn", f"k: {model.k}", "labels: " + " ".join(str(c) for c in model.labels)]
        lines += ["point: " + _fmt(row) for row in model.points]
    else:
        raise TypeError(f"cannot dump {type(model).__name__}")
    return "\n".join(lines) + "\n"
