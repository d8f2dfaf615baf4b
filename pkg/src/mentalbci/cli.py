"""Command-line front end: ``synth``, ``info``, ``eval`` and ``table``.

Exit codes: 0 success, 2 usage or config error, 3 I/O error, 4 pipeline failure.

Run configuration is a JSON document::

    {
      "subjects": {"A": "a.epo", "B": "b.epo"},
      "window": [4.0, 10.0],
      "eval": {"n_reps": 100, "train_fraction": 0.7, "master_seed": 0},
      "pipelines": [
        {"name": "CSP+KNN",
         "preproc": {"low_hz": 8, "high_hz": 30, "order": 5, "zero_phase": true},
         "extractor": {"kind": "csp", "m": 2},
         "classifier": {"kind": "knn", "knn_k": 1}}
      ],
      "output_dir": "results",
      "format": "text"
    }

Relative paths resolve against the config file's directory. ``"window": null``
keeps whole trials; ``"preproc": null`` skips band-pass filtering.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .classify import TrainConfig
from .dataio import (ClassLabel, DatasetFormatError, SynthSpec, crop_window, read_dataset,
                     select_pair, synth_multiclass, synth_two_class, write_dataset)
from .evaluation import (CSP, FBCSP, TRCSP, Classifier, EvalConfig, PipelineSpec,
                         PipelineStageError, Preprocessing, ResultsTable, evaluate,
                         evaluate_all_pairs, pair_name, render_raw_csv, render_table, rep_seed)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_PIPELINE = 0, 2, 3, 4
THREADS_ENV = "BCI_PIPELINE_THREADS"
DEFAULT_WINDOW = (4.0, 10.0)


class ConfigError(ValueError):
    pass


class CLIError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    subjects: dict
    pipelines: list
    eval: EvalConfig
    window: tuple | None
    output_dir: Path
    format: str
    raw: dict


# -- config ----------------------------------------------------------------

_EXTRACTORS = {"csp": CSP, "trcsp": TRCSP, "fbcsp": FBCSP}


def _build(cls, section, where):
    section = dict(section)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(sorted(unknown))}")
    for key, value in section.items():
        if isinstance(value, list):
            section[key] = tuple(value)
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _pipeline(entry, i):
    where = f"pipelines[{i}]"
    if not isinstance(entry, dict) or "name" not in entry:
        raise ConfigError(f"{where}: needs a 'name'")
    unknown = set(entry) - {"name", "preproc", "extractor", "classifier"}
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(sorted(unknown))}")
    pre = entry.get("preproc", {})
    preproc = None if pre is None else _build(Preprocessing, pre, f"{where}.preproc")
    ext = dict(entry.get("extractor", {"kind": "csp"}))
    kind = ext.pop("kind", "csp")
    if kind not in _EXTRACTORS:
        raise ConfigError(f"{where}.extractor: unknown kind {kind!r}")
    extractor = _build(_EXTRACTORS[kind], ext, f"{where}.extractor")
    clf = dict(entry.get("classifier", {"kind": "knn"}))
    ckind = clf.pop("kind", "knn")
    cfg = _build(TrainConfig, clf, f"{where}.classifier")
    try:
        classifier = Classifier(ckind, cfg)
    except ValueError as exc:
        raise ConfigError(f"{where}.classifier: {exc}") from None
    return PipelineSpec(str(entry["name"]), extractor, classifier, preproc)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CLIError(EXIT_IO, f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(raw) - {"subjects", "pipelines", "eval", "window", "output_dir", "format"}
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {', '.join(sorted(unknown))}")
    base = path.parent
    subjects = raw.get("subjects") or {}
    if not isinstance(subjects, dict) or not subjects:
        raise ConfigError("'subjects' must map subject ids to .epo paths")
    subjects = {str(k): base / v for k, v in subjects.items()}
    entries = raw.get("pipelines") or []
    if not isinstance(entries, list) or not entries:
        raise ConfigError("'pipelines' must be a non-empty list")
    pipelines = [_pipeline(e, i) for i, e in enumerate(entries)]
    names = [p.name for p in pipelines]
    if len(set(names)) != len(names):
        raise ConfigError("pipeline names must be unique")
    ev = _build(EvalConfig, raw.get("eval", {}), "eval")
    window = raw.get("window", list(DEFAULT_WINDOW))
    if window is not None:
        if not (isinstance(window, list) and len(window) == 2):
            raise ConfigError("'window' must be [start_s, end_s] or null")
        window = (float(window[0]), float(window[1]))
    fmt = raw.get("format", "text")
    if fmt not in ("text", "csv"):
        raise ConfigError("'format' must be 'text' or 'csv'")
    return RunConfig(subjects, pipelines, ev, window, base / raw.get("output_dir", "results"),
                     fmt, raw)


# -- helpers ---------------------------------------------------------------

def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CLIError(EXIT_USAGE, f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _load_subject(cfg: RunConfig, subject):
    path = cfg.subjects[subject]
    try:
        ds = read_dataset(path)
    except FileNotFoundError:
        raise CLIError(EXIT_IO, f"dataset for subject {subject} not found: {path}") from None
    except (OSError, DatasetFormatError) as exc:
        raise CLIError(EXIT_IO, f"cannot read {path}: {exc}") from None
    if cfg.window is not None:
        try:
            ds = crop_window(ds, *cfg.window)
        except ValueError as exc:
            raise CLIError(EXIT_USAGE, f"subject {subject}: {exc} "
                           "(set \"window\": null to keep whole trials)") from None
    return ds


def _eval_config(cfg: RunConfig, args) -> EvalConfig:
    seed = cfg.eval.master_seed if args.seed is None else args.seed
    return dataclasses.replace(cfg.eval, master_seed=seed, threads=_threads(args))


def _output_dir(cfg: RunConfig, args) -> Path:
    return Path(args.output_dir) if args.output_dir else cfg.output_dir


def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CLIError(EXIT_IO, f"cannot write {path}: {exc.strerror}") from None


def _parse_pair(text):
    for sep in ("/", ",", "-", ":"):
        if sep in text:
            a, _, b = text.partition(sep)
            break
    else:
        raise CLIError(EXIT_USAGE, f"pair must look like WORD/FEET, got {text!r}")
    try:
        a, b = ClassLabel.parse(a), ClassLabel.parse(b)
    except ValueError as exc:
        raise CLIError(EXIT_USAGE, str(exc)) from None
    if a == b:
        raise CLIError(EXIT_USAGE, "pair needs two distinct classes")
    return tuple(sorted((a, b)))


def _manifest(cfg: RunConfig, ev: EvalConfig, pipelines) -> str:
    doc = {
        "package": "mentalbci",
        "version": __version__,
        "numpy": np.__version__,
        "config": cfg.raw,
        "subjects": {k: str(v) for k, v in cfg.subjects.items()},
        "window": cfg.window,
        "eval": dataclasses.asdict(ev),
        "rep_seeds": [rep_seed(ev.master_seed, r) for r in range(ev.n_reps)],
        "pipelines": [dataclasses.asdict(p) | {"extractor_kind": type(p.extractor).__name__}
                      for p in pipelines],
    }
    return json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n"


# -- subcommands -----------------------------------------------------------

def cmd_synth(args) -> int:
    n_classes = args.classes
    if args.trials < n_classes or args.trials % n_classes:
        raise CLIError(EXIT_USAGE, f"--trials must be a positive multiple of --classes ({n_classes})")
    seed = 0 if args.seed is None else args.seed
    if seed < 0:
        raise CLIError(EXIT_USAGE, "--seed must be nonnegative")
    sources = args.sources or min(4 if n_classes == 2 else 5, args.channels)
    mixing = np.random.default_rng([seed, 1]).standard_normal((args.channels, sources))
    try:
        spec = SynthSpec(args.trials // n_classes, args.channels, args.samples, args.fs, mixing,
                         tuple(args.band), args.ratio, args.noise)
    except ValueError as exc:
        raise CLIError(EXIT_USAGE, f"invalid synthetic spec: {exc}") from None
    ds = synth_two_class(spec, seed) if n_classes == 2 else synth_multiclass(spec, seed)
    try:
        write_dataset(ds, args.output)
    except OSError as exc:
        raise CLIError(EXIT_IO, f"cannot write {args.output}: {exc.strerror}") from None
    print(f"wrote {args.output}: trials={ds.n_trials} channels={ds.n_channels} "
          f"samples={ds.n_samples} fs={ds.fs_hz:g} seed={seed}")
    return EXIT_OK


def cmd_info(args) -> int:
    try:
        ds = read_dataset(args.path)
    except (OSError, DatasetFormatError) as exc:
        raise CLIError(EXIT_IO, f"cannot read {args.path}: {exc}") from None
    print(f"file: {args.path}")
    print(f"trials: {ds.n_trials}")
    print(f"channels: {ds.n_channels}")
    print(f"samples: {ds.n_samples}")
    print(f"fs_hz: {ds.fs_hz:g}")
    for label, count in ds.class_counts().items():
        print(f"class {label.name}: {count}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    by_name = {p.name: p for p in cfg.pipelines}
    if args.pipeline not in by_name:
        raise CLIError(EXIT_USAGE, f"unknown pipeline {args.pipeline!r}; have {', '.join(by_name)}")
    subject = args.subject
    if subject is None:
        if len(cfg.subjects) != 1:
            raise CLIError(EXIT_USAGE, "--subject is required when the config lists several")
        subject = next(iter(cfg.subjects))
    if subject not in cfg.subjects:
        raise CLIError(EXIT_USAGE, f"unknown subject {subject!r}")
    a, b = _parse_pair(args.pair)
    pipe = by_name[args.pipeline]
    ds = _load_subject(cfg, subject)
    ev = _eval_config(cfg, args)
    try:
        pair_ds = select_pair(ds, a, b)
    except ValueError as exc:
        raise CLIError(EXIT_USAGE, f"subject {subject}: {exc}") from None
    result = evaluate(pair_ds, pipe, ev)
    print(f"{subject} {pair_name(a, b)} {pipe.name}: {result.mean:.4f}±{result.std:.4f}")
    if args.raw_csv or args.format == "csv":
        tbl = ResultsTable()
        tbl.add(subject, pair_name(a, b), pipe, result)
        raw = render_raw_csv(tbl)
        if args.raw_csv:
            _write(Path(args.raw_csv), raw)
        else:
            sys.stdout.write(raw)
    return EXIT_OK


def cmd_table(args) -> int:
    cfg = load_config(args.config)
    ev = _eval_config(cfg, args)
    tbl = ResultsTable()
    for subject in cfg.subjects:
        ds = _load_subject(cfg, subject)
        for pipe in cfg.pipelines:
            try:
                results = evaluate_all_pairs(ds, pipe, ev)
            except PipelineStageError:
                raise
            except ValueError as exc:
                raise CLIError(EXIT_USAGE, f"subject {subject}: {exc}") from None
            for (a, b), res in results.items():
                tbl.add(subject, pair_name(a, b), pipe, res)
    out = _output_dir(cfg, args)
    text = render_table(tbl, "text")
    aggregate = render_table(tbl, "csv")
    _write(out / "results.csv", aggregate)
    _write(out / "raw.csv", render_raw_csv(tbl))
    _write(out / "tables.txt", text)
    _write(out / "manifest.json", _manifest(cfg, ev, cfg.pipelines))
    fmt = args.format or cfg.format
    sys.stdout.write(text if fmt == "text" else aggregate)
    return EXIT_OK


# -- entry point -----------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CLIError(EXIT_USAGE, message)


_GLOBALS = ("seed", "threads", "output_dir", "format")


def _global_flags(prefix=""):
    # top-level copies use a prefixed dest so subparser defaults cannot mask them
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", dest=prefix + "seed", metavar="SEED", type=int, default=None,
                        help="generator seed (synth) or master seed override (eval, table)")
    common.add_argument("--threads", dest=prefix + "threads", metavar="N", type=int, default=None,
                        help=f"worker threads; falls back to ${THREADS_ENV}, then CPU count")
    common.add_argument("--output-dir", dest=prefix + "output_dir", metavar="DIR", default=None,
                        help="where table/eval outputs go")
    common.add_argument("--format", dest=prefix + "format", choices=("text", "csv"), default=None)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = _Parser(prog="mentalbci", description=__doc__.split("\n")[0],
                     parents=[_global_flags("top_")])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic .epo dataset")
    p.add_argument("--trials", type=int, default=80, help="total trial count")
    p.add_argument("--channels", type=int, default=30)
    p.add_argument("--samples", type=int, default=1792)
    p.add_argument("--fs", type=float, default=256.0)
    p.add_argument("--ratio", type=float, default=10.0, help="variance ratio of the boosted source")
    p.add_argument("--sources", type=int, default=None,
                   help="latent sources; default 4 (5 with --classes 5), capped at --channels")
    p.add_argument("--band", type=float, nargs=2, default=(8.0, 12.0), metavar=("LOW", "HIGH"))
    p.add_argument("--noise", type=float, default=1.0, help="white-noise std per channel")
    p.add_argument("--classes", type=int, choices=(2, 5), default=2)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("info", parents=[common], help="summarise an .epo file")
    p.add_argument("path")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("eval", parents=[common], help="evaluate one subject, pair and pipeline")
    p.add_argument("config")
    p.add_argument("--subject")
    p.add_argument("--pair", required=True, help="e.g. WORD/FEET")
    p.add_argument("--pipeline", required=True)
    p.add_argument("--raw-csv", help="write per-repetition accuracies here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("table", parents=[common], help="all subjects x pairs x pipelines")
    p.add_argument("config")
    p.set_defaults(func=cmd_table)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        for key in _GLOBALS:
            if getattr(args, key) is None:
                setattr(args, key, getattr(args, "top_" + key))
        if args.threads is not None and args.threads < 1:
            raise CLIError(EXIT_USAGE, "--threads must be >= 1")
        return args.func(args)
    except CLIError as exc:
        print(f"mentalbci: error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"mentalbci: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PipelineStageError as exc:
        print(f"mentalbci: pipeline error in {exc.stage}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
