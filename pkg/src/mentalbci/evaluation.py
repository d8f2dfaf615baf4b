"""Repeated random-subsampling evaluation and result tables.

A pipeline is band-pass preprocessing, a spatial feature extractor (CSP,
TRCSP or FBCSP) and a binary classifier. :func:`prepare` does all per-trial
work once per dataset (filtering and per-trial covariances). Each repetition
then fits the extractor and classifier on its training indices only.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import classify
from .classify import TrainConfig
from .dataio import ClassLabel, EpochedDataset, SplitIndices, select_pair, stratified_split
from .dsp import FilterBank, design_butterworth_bandpass, make_filter_bank
from .spatial import (FBCSPModel, SpatialFilters, _band_filter, _fbcsp_features_covs,
                      _features_from_covs, _fit_csp_covs, _fit_fbcsp_covs, _trial_covs)

__all__ = [
    "PipelineStageError", "Preprocessing", "CSP", "TRCSP", "FBCSP", "Classifier", "PipelineSpec", "EvalConfig",
    "AccuracyResult", "ConfusionCounts", "ResultsTable", "Prepared", "FittedPipeline",
    "splitmix64", "rep_seed", "confusion_counts", "accuracy", "prepare", "fit_prepared",
    "run_repetition", "evaluate", "evaluate_all_pairs", "pair_name", "render_table",
    "render_raw_csv", "read_aggregate_csv", "CLASSIFIERS",
]

_MASK64 = (1 << 64) - 1


class PipelineStageError(RuntimeError):
    """A numerical failure inside one pipeline stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage} failed: {cause}")
        self.stage = stage


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except PipelineStageError:
        raise
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise PipelineStageError(name, exc) from exc


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def rep_seed(master_seed: int, rep: int) -> int:
    """Split seed of repetition ``rep``: ``splitmix64(master_seed XOR rep)``."""
    return splitmix64((master_seed ^ rep) & _MASK64)


# -- pipeline description --------------------------------------------------

@dataclass(frozen=True)
class Preprocessing:
    low_hz: float = 8.0
    high_hz: float = 30.0
    order: int = 5
    zero_phase: bool = True


@dataclass(frozen=True)
class CSP:
    m: int = 2
    label = "CSP"


@dataclass(frozen=True)
class TRCSP:
    """``alpha="auto"`` picks from ``alpha_grid`` by inner subsampling of the training set."""

    m: int = 2
    alpha: Union[float, str] = 1e-3
    alpha_grid: tuple = (0.0, 1e-4, 1e-3, 1e-2, 1e-1)
    inner_reps: int = 5
    label = "TRCSP"


@dataclass(frozen=True)
class FBCSP:
    low_hz: float = 4.0
    high_hz: float = 40.0
    width_hz: float = 4.0
    order: int = 5
    m: int = 2
    k_select: int = 4
    n_bins: int = 10
    label = "FBCSP"


# kind -> (fit(F, y, cfg), predict(model, F), display label)
CLASSIFIERS: dict[str, tuple[Callable, Callable, str]] = {
    "lda": (lambda F, y, cfg: classify.fit_lda(F, y, cfg.lda_ridge), classify.predict_lda, "LDA"),
    "svm-linear": (lambda F, y, cfg: classify.fit_svm(F, y, cfg, "linear"), classify.predict_svm, "SVM"),
    "svm-rbf": (lambda F, y, cfg: classify.fit_svm(F, y, cfg, "rbf"), classify.predict_svm, "Non-SVM"),
    "knn": (lambda F, y, cfg: classify.fit_knn(F, y, cfg.knn_k), classify.predict_knn, "KNN"),
}


@dataclass(frozen=True)
class Classifier:
    kind: str = "knn"
    config: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.kind not in CLASSIFIERS:
            raise ValueError(f"unknown classifier {self.kind!r}; choose from {sorted(CLASSIFIERS)}")

    @property
    def label(self) -> str:
        return CLASSIFIERS[self.kind][2]


@dataclass(frozen=True)
class PipelineSpec:
    name: str
    extractor: Union[CSP, TRCSP, FBCSP] = field(default_factory=CSP)
    classifier: Classifier = field(default_factory=Classifier)
    preproc: Optional[Preprocessing] = field(default_factory=Preprocessing)


@dataclass(frozen=True)
class EvalConfig:
    n_reps: int = 100
    train_fraction: float = 0.7
    master_seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.n_reps < 1:
            raise ValueError("n_reps must be >= 1")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


# -- accuracy --------------------------------------------------------------

@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion_counts(y_true, y_pred, positive) -> ConfusionCounts:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValueError("label vectors differ in length")
    t, p = y_true == positive, y_pred == positive
    return ConfusionCounts(int(np.sum(t & p)), int(np.sum(~t & ~p)),
                           int(np.sum(~t & p)), int(np.sum(t & ~p)))


def accuracy(counts: ConfusionCounts) -> float:
    if counts.total <= 0:
        raise ValueError("accuracy of an empty test set is undefined")
    return (counts.tp + counts.tn) / counts.total


@dataclass(frozen=True, eq=False)
class AccuracyResult:
    per_rep: np.ndarray
    mean: float
    std: float

    @classmethod
    def from_reps(cls, per_rep) -> "AccuracyResult":
        per_rep = np.asarray(per_rep, dtype=np.float64)
        return cls(per_rep, float(per_rep.mean()), float(per_rep.std()))

    def __eq__(self, other):
        if not isinstance(other, AccuracyResult):
            return NotImplemented
        return (np.array_equal(self.per_rep, other.per_rep) and self.mean == other.mean
                and self.std == other.std)

    __hash__ = None


# -- fitting ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Prepared:
    """Per-trial products of a dataset under one pipeline's filtering."""

    labels: np.ndarray
    band_covs: tuple
    bank: Optional[FilterBank] = None


def prepare(ds: EpochedDataset, pipe: PipelineSpec) -> Prepared:
    """Band-pass and (for FBCSP) sub-band filter every trial, keep per-trial covariances.

    Every step acts on one trial at a time, so nothing here depends on how the
    trials are later split.
    """
    return _stage("preprocessing", _prepare, ds, pipe)


def _prepare(ds, pipe):
    data = ds.data
    if pipe.preproc is not None:
        pp = pipe.preproc
        f = design_butterworth_bandpass(pp.low_hz, pp.high_hz, ds.fs_hz, pp.order)
        data = _band_filter(f, data, pp.zero_phase)
    ext = pipe.extractor
    if isinstance(ext, FBCSP):
        bank = make_filter_bank(ext.low_hz, ext.high_hz, ext.width_hz, ds.fs_hz, ext.order)
        covs = tuple(_trial_covs(_band_filter(f, data, True)) for f in bank.filters)
        return Prepared(ds.labels, covs, bank)
    return Prepared(ds.labels, (_trial_covs(data),))


@dataclass(frozen=True, eq=False)
class FittedPipeline:
    spec: PipelineSpec
    extractor: Union[SpatialFilters, FBCSPModel]
    classifier: object
    alpha: Optional[float] = None
    feature_mean: Optional[np.ndarray] = None
    feature_std: Optional[np.ndarray] = None

    def features(self, prepared: Prepared, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.intp)
        if isinstance(self.extractor, FBCSPModel):
            used = {b for b, _ in self.extractor.selected}
            F = _fbcsp_features_covs(self.extractor,
                                     {b: prepared.band_covs[b][idx] for b in used})
        else:
            F = _features_from_covs(prepared.band_covs[0][idx], self.extractor.W)
        if self.feature_mean is not None:
            F = (F - self.feature_mean) / self.feature_std
        return F

    def predict(self, prepared: Prepared, idx) -> np.ndarray:
        predict = CLASSIFIERS[self.spec.classifier.kind][1]
        F = _stage("feature extraction", self.features, prepared, idx)
        return np.asarray(_stage("classification", predict, self.classifier, F))


def _fit_extractor(ext, prepared, idx, alpha=None):
    covs = [c[idx] for c in prepared.band_covs]
    labels = prepared.labels[idx]
    if isinstance(ext, FBCSP):
        return _fit_fbcsp_covs(covs, labels, prepared.bank, ext.m, ext.k_select, ext.n_bins)
    if isinstance(ext, TRCSP):
        return _fit_csp_covs(covs[0], labels, ext.m, alpha=alpha)
    return _fit_csp_covs(covs[0], labels, ext.m)


def _fit_with(pipe, prepared, idx, alpha):
    idx = np.asarray(idx, dtype=np.intp)
    model = _stage("feature extraction", _fit_extractor, pipe.extractor, prepared, idx, alpha)
    partial = FittedPipeline(pipe, model, None, alpha)
    F = _stage("feature extraction", partial.features, prepared, idx)
    mean = std = None
    cfg = pipe.classifier.config
    if cfg.standardize:
        mean, std = F.mean(axis=0), F.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        F = (F - mean) / std
    fit = CLASSIFIERS[pipe.classifier.kind][0]
    clf = _stage("classification", fit, F, prepared.labels[idx], cfg)
    return FittedPipeline(pipe, model, clf, alpha, mean, std)


def _choose_alpha(pipe, prepared, idx):
    ext = pipe.extractor
    labels = prepared.labels[idx]
    scores = []
    for alpha in ext.alpha_grid:
        accs = []
        for r in range(ext.inner_reps):
            inner = stratified_split(labels, 0.7, rep_seed(0, r))
            fitted = _fit_with(pipe, prepared, idx[inner.train], float(alpha))
            pred = fitted.predict(prepared, idx[inner.test])
            accs.append(np.mean(pred == labels[inner.test]))
        scores.append(np.mean(accs))
    # first best in grid order
    return float(ext.alpha_grid[int(np.argmax(scores))])


def fit_prepared(pipe: PipelineSpec, prepared: Prepared, train_idx) -> FittedPipeline:
    """Fit extractor and classifier from the trials in ``train_idx`` only."""
    idx = np.asarray(train_idx, dtype=np.intp)
    alpha = None
    if isinstance(pipe.extractor, TRCSP):
        alpha = pipe.extractor.alpha
        alpha = _choose_alpha(pipe, prepared, idx) if alpha == "auto" else float(alpha)
    return _fit_with(pipe, prepared, idx, alpha)


def _score(pipe, prepared, split):
    fitted = fit_prepared(pipe, prepared, split.train)
    pred = fitted.predict(prepared, split.test)
    truth = prepared.labels[np.asarray(split.test, dtype=np.intp)]
    positive = np.unique(prepared.labels)[0]
    return accuracy(confusion_counts(truth, pred, positive))


def run_repetition(ds: EpochedDataset, pipe: PipelineSpec, split: SplitIndices) -> float:
    """Accuracy of one train/test split of a two-class dataset."""
    if np.unique(ds.labels).size != 2:
        raise ValueError("run_repetition expects a dataset reduced to two classes")
    return _score(pipe, prepare(ds, pipe), split)


def evaluate(ds: EpochedDataset, pipe: PipelineSpec, cfg: EvalConfig = EvalConfig()) -> AccuracyResult:
    """``cfg.n_reps`` stratified random splits; repetition ``r`` uses ``rep_seed(master, r)``.

    Repetitions may run on ``cfg.threads`` worker threads; results are
    collected by repetition index so they do not depend on scheduling.
    """
    if np.unique(ds.labels).size != 2:
        raise ValueError("evaluate expects a dataset reduced to two classes")
    prepared = prepare(ds, pipe)

    def one(r):
        split = stratified_split(ds.labels, cfg.train_fraction, rep_seed(cfg.master_seed, r))
        return _score(pipe, prepared, split)

    if cfg.threads == 1:
        per_rep = [one(r) for r in range(cfg.n_reps)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            per_rep = list(pool.map(one, range(cfg.n_reps)))
    return AccuracyResult.from_reps(per_rep)


def pair_name(a, b) -> str:
    """Canonical display name, lower class code first, e.g. ``"Word vs feet"``."""
    a, b = sorted((ClassLabel.parse(a), ClassLabel.parse(b)))
    return f"{a.name.capitalize()} vs {b.name.lower()}"


def evaluate_all_pairs(ds5: EpochedDataset, pipe: PipelineSpec,
                       cfg: EvalConfig = EvalConfig()) -> dict[tuple[ClassLabel, ClassLabel], AccuracyResult]:
    """All ten unordered class pairs, keyed ``(lower, higher)``."""
    present = set(ds5.class_counts())
    missing = [c.name for c in ClassLabel if c not in present]
    if missing:
        raise ValueError(f"classes missing from dataset: {', '.join(missing)}")
    return {(a, b): evaluate(select_pair(ds5, a, b), pipe, cfg)
            for a, b in itertools.combinations(ClassLabel, 2)}


# -- tables ----------------------------------------------------------------

def _half_up(x: float, digits: int = 0) -> float:
    scale = 10 ** digits
    return math.floor(x * scale + 0.5) / scale


@dataclass
class ResultsTable:
    """Cells keyed by ``(subject, pair, pipeline)``.

    ``groups`` maps a pipeline name to its (extractor label, classifier label).
    """

    cells: dict = field(default_factory=dict)
    groups: dict = field(default_factory=dict)

    def add(self, subject: str, pair: str, pipe: PipelineSpec, result: AccuracyResult) -> None:
        self.cells[(subject, pair, pipe.name)] = result
        self.groups[pipe.name] = (pipe.extractor.label, pipe.classifier.label)

    @property
    def subjects(self) -> list[str]:
        return list(dict.fromkeys(k[0] for k in self.cells))

    @property
    def pipelines(self) -> list[str]:
        return list(dict.fromkeys(k[2] for k in self.cells))

    def pairs(self, pipeline: str) -> list[str]:
        return list(dict.fromkeys(k[1] for k in self.cells if k[2] == pipeline))

    def across_subjects(self, pair: str, pipeline: str) -> tuple[list[float], float, float]:
        """Per-subject means, their mean and population std."""
        vals = [self.cells[(s, pair, pipeline)].mean for s in self.subjects
                if (s, pair, pipeline) in self.cells]
        arr = np.array(vals)
        return vals, float(arr.mean()), float(arr.std())

    def best_pair(self, pipeline: str) -> str:
        """Pair with the highest across-subject mean; ties to the lexicographically first name."""
        scored = [(-self.across_subjects(p, pipeline)[1], p) for p in self.pairs(pipeline)]
        return min(scored)[1]


def _g17(x: float) -> str:
    return format(x, ".17g")


def render_raw_csv(tbl: ResultsTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subject", "pair", "pipeline", "rep", "accuracy"])
    for (subject, pair, pipeline), res in tbl.cells.items():
        for r, acc in enumerate(res.per_rep):
            w.writerow([subject, pair, pipeline, r, _g17(float(acc))])
    return buf.getvalue()


def _aggregate_csv(tbl):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subject", "pair", "pipeline", "mean", "std"])
    for (subject, pair, pipeline), res in tbl.cells.items():
        w.writerow([subject, pair, pipeline, _g17(res.mean), _g17(res.std)])
    return buf.getvalue()


def read_aggregate_csv(text: str) -> dict[tuple[str, str, str], tuple[float, float]]:
    rows = csv.DictReader(io.StringIO(text))
    return {(r["subject"], r["pair"], r["pipeline"]): (float(r["mean"]), float(r["std"]))
            for r in rows}


def _text_tables(tbl):
    subjects = tbl.subjects
    by_extractor: dict[str, list[str]] = {}
    for name in tbl.pipelines:
        by_extractor.setdefault(tbl.groups.get(name, (name, name))[0], []).append(name)
    out = []
    for ext_label, names in by_extractor.items():
        rows = []
        for name in names:
            pair = tbl.best_pair(name)
            vals, mean, std = tbl.across_subjects(pair, name)
            cells = [f"{_half_up(100 * v):.0f}" for v in vals]
            summary = f"{_half_up(100 * mean):.0f}±{_half_up(100 * std, 1):.1f}"
            rows.append([tbl.groups.get(name, ("", name))[1], pair, *cells, summary])
        header = ["classifier", "action", *subjects, "MEAN±STD"]
        widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
        out.append(f"Best classification results: {ext_label}")
        for r in [header, *rows]:
            out.append("  ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip())
        out.append("")
    return "\n".join(out)


def render_table(tbl: ResultsTable, fmt: str = "text") -> str:
    """Best-pair summary tables (``text``) or the aggregate CSV (``csv``).

    Text rows show, per pipeline, the pair with the highest across-subject
    mean accuracy, the per-subject accuracies in percent rounded to integers
    and ``MEAN±STD`` where STD is the population std across subjects.
    """
    if not tbl.cells:
        raise ValueError("results table is empty")
    if fmt == "text":
        return _text_tables(tbl)
    if fmt == "csv":
        return _aggregate_csv(tbl)
    raise ValueError(f"unknown format {fmt!r}")
