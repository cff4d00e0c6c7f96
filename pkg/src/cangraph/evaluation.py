"""Train/test splitting, confusion matrices and metrics, full evaluation
reports, window-size sweeps and timing benchmarks.

The positive class is "attacked" throughout. Any 0/0 metric is reported as 0
and flagged in the report.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from sklearn.model_selection import train_test_split

from .bayes import make_model
from .can_log import FrameLog
from .featurize import (
    FEATURE_NAMES,
    FeatureMatrix,
    correlation_matrix,
    featurize_log,
    select_features,
)
from .graphing import WindowSpec
from .ranking import PageRankOptions

DEFAULT_GRID_MS = (11.5, 23.0, 46.0, 115.0, 230.0)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.67
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")


def split_indices(y: np.ndarray, spec: SplitSpec) -> tuple:
    """Seeded shuffle split; returns sorted ``(train_idx, test_idx)``."""
    y = np.asarray(y)
    idx = np.arange(len(y))
    if spec.stratified:
        counts = np.bincount(y, minlength=2)
        if (counts[counts > 0] < 2).any():
            raise ValueError("stratified split needs at least 2 rows per class")
    train, test = train_test_split(
        idx,
        train_size=spec.train_fraction,
        random_state=spec.seed,
        shuffle=True,
        stratify=y if spec.stratified else None,
    )
    return np.sort(train), np.sort(test)


def split(matrix: FeatureMatrix, spec: SplitSpec = SplitSpec()) -> tuple:
    train, test = split_indices(matrix.y, spec)
    return matrix.take(train), matrix.take(test)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @classmethod
    def from_labels(cls, y_true, y_pred) -> "ConfusionMatrix":
        t = np.asarray(y_true).astype(bool)
        p = np.asarray(y_pred).astype(bool)
        return cls(int((t & p).sum()), int((~t & p).sum()), int((~t & ~p).sum()), int((t & ~p).sum()))

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_text(self) -> str:
        return (
            "                 pred attacked  pred free\n"
            f"  true attacked  {self.tp:13d}  {self.fn:9d}\n"
            f"  true free      {self.fp:13d}  {self.tn:9d}\n"
        )


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    zero_division: bool = False


def metrics(cm: ConfusionMatrix) -> Metrics:
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    undefined = False

    def ratio(num, den):
        nonlocal undefined
        if den == 0:
            undefined = True
            return 0.0
        return num / den

    precision = ratio(cm.tp, cm.tp + cm.fp)
    recall = ratio(cm.tp, cm.tp + cm.fn)
    f1 = ratio(2 * precision * recall, precision + recall)
    accuracy = (cm.tp + cm.tn) / cm.total
    return Metrics(accuracy, precision, recall, f1, undefined)


FeatureChoice = Union[str, Sequence[str], None]


def resolve_features(choice: FeatureChoice, train: FeatureMatrix) -> tuple:
    """``"all"``, ``"topK"`` (ranked on ``train``) or an explicit name list."""
    if choice is None or choice == "all":
        return tuple(train.feature_names)
    if isinstance(choice, str) and choice.startswith("top"):
        k = int(choice[3:] or 4)
        return select_features(correlation_matrix(train), k)
    if isinstance(choice, str):
        choice = [c.strip() for c in choice.split(",") if c.strip()]
    unknown = [c for c in choice if c not in train.feature_names]
    if unknown:
        raise ValueError(f"unknown feature(s): {', '.join(unknown)}")
    return tuple(choice)


@dataclass
class EvalReport:
    model_kind: str
    features: tuple
    n_train: int
    n_test: int
    confusion: ConfusionMatrix
    scores: Metrics
    per_attack: dict = field(default_factory=dict)
    fit_seconds: float = 0.0
    predict_seconds: float = 0.0
    config: dict = field(default_factory=dict)
    test_window_index: Optional[np.ndarray] = None
    predictions: Optional[np.ndarray] = None

    @property
    def accuracy(self) -> float:
        return self.scores.accuracy

    def to_text(self, timing: bool = False) -> str:
        m = self.scores
        out = [
            f"model: {self.model_kind}",
            f"features: {','.join(self.features)}",
            f"train rows: {self.n_train}   test rows: {self.n_test}",
            f"accuracy:  {m.accuracy:.6f}",
            f"precision: {m.precision:.6f}",
            f"recall:    {m.recall:.6f}",
            f"f1:        {m.f1:.6f}",
        ]
        if m.zero_division:
            out.append("note: a metric had a 0/0 ratio and is reported as 0")
        out.append("confusion matrix:")
        out.append(self.confusion.to_text().rstrip("\n"))
        for kind, cm in self.per_attack.items():
            km = metrics(cm)
            out.append(
                f"attack {kind}: accuracy {km.accuracy:.6f} recall {km.recall:.6f} "
                f"(tp={cm.tp} fp={cm.fp} tn={cm.tn} fn={cm.fn})"
            )
        if timing:
            out.append(f"fit seconds: {self.fit_seconds:.6f}")
            out.append(f"predict seconds: {self.predict_seconds:.6f}")
        return "\n".join(out) + "\n"

    def to_csv(self, timing: bool = False) -> str:
        cols = ["scope", "model", "n", "tp", "fp", "tn", "fn", "accuracy", "precision", "recall", "f1"]
        if timing:
            cols += ["fit_seconds", "predict_seconds"]
        lines = [",".join(cols)]

        def row(scope, cm, extra=()):
            m = metrics(cm)
            cells = [scope, self.model_kind, str(cm.total), str(cm.tp), str(cm.fp), str(cm.tn),
                     str(cm.fn)] + [f"{v:.9g}" for v in (m.accuracy, m.precision, m.recall, m.f1)]
            lines.append(",".join(cells + list(extra)))

        timing_cells = (f"{self.fit_seconds:.9g}", f"{self.predict_seconds:.9g}") if timing else ()
        row("overall", self.confusion, timing_cells)
        for kind, cm in self.per_attack.items():
            row(kind, cm, ("", "") if timing else ())
        return "\n".join(lines) + "\n"


def _per_attack(test: FeatureMatrix, pred: np.ndarray) -> dict:
    if test.attack_kinds is None:
        return {}
    tags = np.array(test.attack_kinds, dtype=object)
    kinds = sorted({k for t in tags if t for k in t.split("+")})
    free = test.y == 0
    out = {}
    for kind in kinds:
        hit = np.array([kind in t.split("+") if t else False for t in tags])
        mask = free | hit
        out[kind] = ConfusionMatrix.from_labels(test.y[mask], pred[mask])
    return out


def evaluate(model_kind: str, matrix: FeatureMatrix, spec: SplitSpec = SplitSpec(),
             features: FeatureChoice = "all", **model_params) -> EvalReport:
    """Fit on the train fold, predict the test fold, and report."""
    train, test = split(matrix, spec)
    names = resolve_features(features, train)
    model = make_model(model_kind, **model_params)
    Xtr, Xte = train.columns(names), test.columns(names)
    t0 = time.perf_counter()
    model.fit(Xtr, train.y, feature_names=names)
    t1 = time.perf_counter()
    pred = model.predict(Xte)
    t2 = time.perf_counter()
    cm = ConfusionMatrix.from_labels(test.y, pred)
    config = {
        "model": model_kind,
        "features": features if isinstance(features, str) else ",".join(features),
        "split": spec.train_fraction,
        "seed": spec.seed,
        "stratified": spec.stratified,
    }
    return EvalReport(
        model_kind, names, len(train), len(test), cm, metrics(cm),
        _per_attack(test, pred), t1 - t0, t2 - t1, config,
        test.window_index, pred,
    )


@dataclass(frozen=True)
class SweepRow:
    window_ms: float
    n_windows: int
    accuracy: float


def sensitivity_sweep(log: FrameLog, sizes: Sequence[float] = DEFAULT_GRID_MS,
                      model_kind: str = "ggnb", spec: SplitSpec = SplitSpec(),
                      options: PageRankOptions = PageRankOptions(),
                      features: FeatureChoice = "all") -> list:
    """Re-window, re-featurize, re-train and re-evaluate per window size."""
    rows = []
    for size in sorted(sizes):
        matrix = featurize_log(log, WindowSpec.time_ms(size), options)
        report = evaluate(model_kind, matrix, spec, features)
        rows.append(SweepRow(float(size), len(matrix), report.accuracy))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    lines = ["window_ms,n_windows,accuracy"]
    lines += [f"{r.window_ms:g},{r.n_windows},{r.accuracy:.9g}" for r in rows]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TimingRow:
    model: str
    features: str
    n_features: int
    fit_seconds: float
    predict_seconds: float
    relative_fit: float
    relative_predict: float


def _median_time(fn, repeats: int, inner: int) -> float:
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        samples.append((time.perf_counter() - t0) / inner)
    return statistics.median(samples)


def benchmark(model_kinds: Sequence[str], matrix: FeatureMatrix,
              feature_sets: Optional[dict] = None, spec: SplitSpec = SplitSpec(),
              repeats: int = 5, inner: int = 20) -> list:
    """Median-of-``repeats`` fit/predict wall times per model and feature set.

    Relative columns are normalized to the Gaussian model on all nine
    features. Each sample averages ``inner`` back-to-back calls.
    """
    train, test = split(matrix, spec)
    if feature_sets is None:
        feature_sets = {"all": FEATURE_NAMES, "top4": resolve_features("top4", train)}
    raw = []
    for kind in model_kinds:
        for label, names in feature_sets.items():
            names = tuple(names)
            Xtr, Xte = train.columns(names), test.columns(names)
            model = make_model(kind).fit(Xtr, train.y, feature_names=names)
            fit_t = _median_time(lambda: make_model(kind).fit(Xtr, train.y, feature_names=names),
                                 repeats, inner)
            pred_t = _median_time(lambda: model.predict(Xte), repeats, inner)
            raw.append((kind, label, len(names), fit_t, pred_t))
    ref = next((r for r in raw if r[0] == "ggnb" and r[2] == len(FEATURE_NAMES)), raw[0])
    return [TimingRow(k, lab, n, f, p, f / ref[3], p / ref[4]) for k, lab, n, f, p in raw]


def timing_csv(rows: Sequence[TimingRow], values: bool = True) -> str:
    """``values=False`` drops the measured columns, leaving a stable shape."""
    cols = ["model", "features", "n_features"]
    if values:
        cols += ["fit_seconds", "predict_seconds", "relative_fit", "relative_predict"]
    lines = [",".join(cols)]
    for r in rows:
        cells = [r.model, r.features, str(r.n_features)]
        if values:
            cells += [f"{v:.6g}" for v in (r.fit_seconds, r.predict_seconds,
                                           r.relative_fit, r.relative_predict)]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
