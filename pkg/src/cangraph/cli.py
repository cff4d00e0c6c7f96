"""Command-line entry point.

Exit status: 0 on success, 1 on usage errors, 2 on data errors. Every file a
subcommand writes starts with ``#`` lines echoing the effective settings.
"""

from __future__ import annotations

import argparse
import io
import os
import re
import sys
import tempfile
from typing import Optional

from . import __version__
from .bayes import MODEL_KINDS, dumps_model, load_model, make_model
from .can_log import AttackKind, LogFormatError, dumps_dataset_csv, read_log
from .evaluation import (
    DEFAULT_GRID_MS,
    ConfusionMatrix,
    SplitSpec,
    benchmark,
    evaluate,
    resolve_features,
    split_indices,
    sweep_csv,
    sensitivity_sweep,
    timing_csv,
)
from .featurize import (
    FEATURE_NAMES,
    FeatureMatrix,
    class_spread,
    correlation_matrix,
    dumps_features_csv,
    feature_importance,
    featurize_log,
    read_features_csv,
)
from .graphing import WindowSpec
from .ranking import PageRankOptions
from .traffic_synth import load_scenario, mix_attacks, synthesize_corpus

SUBCOMMANDS = ("synth", "inject", "featurize", "train", "predict", "evaluate", "sweep", "bench", "report")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        _atomic_write(path, text)


def _echo(args, **extra) -> list:
    lines = [f"cangraph {__version__} {args.command}"]
    settings = dict(vars(args))
    settings.pop("command", None)
    settings.pop("func", None)
    settings.update(extra)
    for key in sorted(settings):
        value = settings[key]
        if value is None:
            continue
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key}={value}")
    return lines


def _comment(lines) -> str:
    return "".join(f"# {ln}\n" for ln in lines)


# ---------------------------------------------------------------- arguments

_SUBSET_RE = re.compile(r"^(all|top\d*)$")


def _is_subset(value: str) -> bool:
    if _SUBSET_RE.match(value):
        return True
    names = [v.strip() for v in value.split(",") if v.strip()]
    return bool(names) and all(n in FEATURE_NAMES for n in names)


def _feature_args(args):
    """``--features`` names both the input feature file and the subset
    (``all``, ``topK`` or a comma list); tell them apart by value."""
    path, subset = args.input, "all"
    for value in args.features or []:
        if _is_subset(value):
            subset = value
        else:
            path = value
    return path, subset


def _window_spec(args) -> WindowSpec:
    if args.window_frames is not None:
        return WindowSpec.frames(args.window_frames)
    return WindowSpec.time_ms(args.window_ms)


def _grid(text: str) -> tuple:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None
    if not values or min(values) <= 0:
        raise argparse.ArgumentTypeError("grid sizes must be positive")
    return values


def _fraction(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError("split must lie in (0, 1)")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cangraph", description="Graph-feature naive Bayes CAN intrusion detection")
    parser.add_argument("--version", action="version", version=f"cangraph {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    def common(p, window=False, model=False, split=False, features=False):
        p.add_argument("--in", dest="input", help="input file")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--seed", type=int, default=0)
        if window:
            g = p.add_mutually_exclusive_group()
            g.add_argument("--window-ms", type=float, default=23.0)
            g.add_argument("--window-frames", type=int)
            p.add_argument("--damping", type=float, default=0.85)
            p.add_argument("--multigraph", action="store_true",
                           help="count repeated transitions in degrees and PageRank")
        if model:
            p.add_argument("--model", choices=MODEL_KINDS, default="ggnb")
        if split:
            p.add_argument("--split", type=_fraction, default=0.67, help="train fraction")
        if features:
            p.add_argument("--features", action="append", metavar="FILE|all|topK|LIST")

    p = sub.add_parser("synth", help="generate a labeled synthetic log")
    common(p)
    p.add_argument("--scenario", help="scenario file (YAML or JSON)")
    p.add_argument("--attack", choices=[k.value for k in AttackKind] + ["Mixed"],
                   help="default single attack when no scenario is given")
    p.add_argument("--duration", type=float, default=60.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inject", help="apply a scenario's attacks to an existing log")
    common(p)
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("featurize", help="window a log and write the feature CSV")
    common(p, window=True)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="fit a detector on the train fold")
    common(p, model=True, split=True, features=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score feature rows with a saved model")
    common(p, split=True, features=True)
    p.add_argument("--model-file", required=True)
    p.add_argument("--fold", choices=("all", "train", "test"), default="all")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="split, fit, predict and report")
    common(p, window=True, model=True, split=True, features=True)
    p.add_argument("--csv", help="also write the machine-readable report here")
    p.add_argument("--timing", action="store_true", help="include wall-clock times")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="accuracy across window sizes")
    common(p, model=True, split=True)
    p.add_argument("--grid", type=_grid, default=DEFAULT_GRID_MS)
    p.add_argument("--damping", type=float, default=0.85)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="fit/predict timing per model")
    common(p, split=True, features=True)
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="correlation table, confusion matrix, importances")
    common(p, model=True, split=True, features=True)
    p.add_argument("--repeats", type=int, default=5, help="permutation repeats")
    p.set_defaults(func=cmd_report)
    return parser


# ---------------------------------------------------------------- commands

def _require(value, flag):
    if value is None:
        raise UsageError(f"{flag} is required")
    return value


def _load_features(args) -> tuple:
    path, subset = _feature_args(args)
    return read_features_from(_require(path, "--features FILE or --in")), subset


def read_features_from(path: str) -> FeatureMatrix:
    with open(path, "r", encoding="ascii") as fh:
        return read_features_csv(fh)


def cmd_synth(args):
    if args.scenario:
        log = load_scenario(args.scenario, seed=args.seed).build()
    else:
        log = synthesize_corpus(args.attack, duration=args.duration, seed=args.seed)
    _emit(args.out, dumps_dataset_csv(log, _echo(args)))


def cmd_inject(args):
    log = read_log(_require(args.input, "--in"))
    scenario = load_scenario(args.scenario, seed=args.seed)
    log = mix_attacks(log, scenario.attacks, seed=scenario.seed)
    _emit(args.out, dumps_dataset_csv(log, _echo(args)))


def cmd_featurize(args):
    log = read_log(_require(args.input, "--in"))
    matrix = featurize_log(log, _window_spec(args), PageRankOptions(damping=args.damping),
                           multigraph=args.multigraph)
    _emit(args.out, dumps_features_csv(matrix, _echo(args)))


def _fold_split(args, matrix):
    spec = SplitSpec(args.split, args.seed)
    return split_indices(matrix.y, spec)


def cmd_train(args):
    matrix, subset = _load_features(args)
    train_idx, _ = _fold_split(args, matrix)
    train = matrix.take(train_idx)
    names = resolve_features(subset, train)
    model = make_model(args.model).fit(train.columns(names), train.y, feature_names=names)
    _emit(args.out, _comment(_echo(args)) + dumps_model(model))


def cmd_predict(args):
    matrix, _ = _load_features(args)
    with open(args.model_file, "r", encoding="ascii") as fh:
        model = load_model(fh)
    if args.fold != "all":
        train_idx, test_idx = _fold_split(args, matrix)
        matrix = matrix.take(test_idx if args.fold == "test" else train_idx)
    X = matrix.columns(list(model.feature_names_in_))
    post = model.predict_proba(X)[:, 1]
    pred = model.predict(X)
    out = io.StringIO()
    out.write(_comment(_echo(args)))
    out.write("window_index,label,predicted,posterior_attacked\n")
    for i, y, p, q in zip(matrix.window_index, matrix.y, pred, post):
        out.write(f"{i},{y},{p},{q:.9g}\n")
    cm = ConfusionMatrix.from_labels(matrix.y, pred)
    out.write(f"# tp={cm.tp} fp={cm.fp} tn={cm.tn} fn={cm.fn}\n")
    _emit(args.out, out.getvalue())


def cmd_evaluate(args):
    path, subset = _feature_args(args)
    if path is None:
        raise UsageError("--features FILE or --in is required")
    if _looks_like_features(path):
        matrix = read_features_from(path)
    else:
        matrix = featurize_log(read_log(path), _window_spec(args),
                               PageRankOptions(damping=args.damping), args.multigraph)
    report = evaluate(args.model, matrix, SplitSpec(args.split, args.seed), subset)
    header = _comment(_echo(args))
    text = header + report.to_text(timing=args.timing)
    _emit(args.out, text)
    if args.csv:
        _atomic_write(args.csv, header + report.to_csv(timing=args.timing))


def _looks_like_features(path: str) -> bool:
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            if line.strip() and not line.startswith("#"):
                return line.startswith("window_index,")
    return False


def cmd_sweep(args):
    log = read_log(_require(args.input, "--in"))
    rows = sensitivity_sweep(log, args.grid, args.model, SplitSpec(args.split, args.seed),
                             PageRankOptions(damping=args.damping))
    _emit(args.out, _comment(_echo(args)) + sweep_csv(rows))


def cmd_bench(args):
    matrix, _ = _load_features(args)
    rows = benchmark(MODEL_KINDS, matrix, spec=SplitSpec(args.split, args.seed),
                     repeats=args.repeats)
    _emit(args.out, _comment(_echo(args)) + timing_csv(rows))


def cmd_report(args):
    matrix, subset = _load_features(args)
    spec = SplitSpec(args.split, args.seed)
    report = evaluate(args.model, matrix, spec, subset)
    corr = correlation_matrix(matrix)
    train_idx, test_idx = split_indices(matrix.y, spec)
    train, test = matrix.take(train_idx), matrix.take(test_idx)
    model = make_model(args.model).fit(train.columns(report.features), train.y,
                                       feature_names=report.features)
    importance = feature_importance(model, test, repeats=args.repeats, seed=args.seed)

    text = io.StringIO()
    text.write(_comment(_echo(args)))
    text.write("== detection ==\n")
    text.write(report.to_text())
    text.write("\n== correlation (features and label) ==\n")
    text.write(corr.to_text())
    text.write("\n== permutation importance (accuracy drop) ==\n")
    for name, score in sorted(importance.items(), key=lambda kv: -kv[1]):
        text.write(f"{name:16s} {score: .6f}\n")
    text.write("\n== quantile-transformed spread (mean, mean-3sd, mean+3sd) ==\n")
    for label, name, mu, lo, hi in class_spread(matrix, ("max_indegree", "max_outdegree")):
        cls = "attacked" if label else "attack-free"
        text.write(f"{cls:12s} {name:14s} {mu:.4f} {lo:.4f} {hi:.4f}\n")
    _emit(args.out, text.getvalue())
    if args.out and args.out != "-":
        stem = os.path.splitext(args.out)[0]
        _atomic_write(stem + ".correlation.csv", _comment(_echo(args)) + corr.to_csv())
        _atomic_write(stem + ".confusion.csv", _comment(_echo(args)) + report.to_csv())


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"cangraph: error: {exc}", file=sys.stderr)
        return 1
    except (LogFormatError, ValueError, OSError) as exc:
        print(f"cangraph: {exc}", file=sys.stderr)
        return 2
    return 0


def run(argv=None) -> int:
    """Like :func:`main` but returns the status instead of raising SystemExit
    for usage errors."""
    try:
        return main(argv)
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
