"""Window feature vectors and the analysis tools that go with them.

The nine features per window are node count, distinct edge count, max/min
in- and out-degree, and median/max/min PageRank. Analysis helpers cover a
rank-based quantile transform, Pearson correlation against the label,
correlation-ranked feature selection and permutation importance.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace
from typing import IO, Iterable, Optional, Sequence

import numpy as np
from scipy.stats import rankdata
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .can_log import FrameLog
from .graphing import MessageGraph, Window, WindowSpec, build_graph, window_stream
from .ranking import PageRankOptions, pr_summary

FEATURE_NAMES = (
    "nodes",
    "edges",
    "max_indegree",
    "max_outdegree",
    "min_indegree",
    "min_outdegree",
    "median_pagerank",
    "max_pagerank",
    "min_pagerank",
)
CSV_HEADER = ("window_index",) + FEATURE_NAMES + ("label",)

# fixed reduced set: two degree maxima plus two PageRank stats
REFERENCE_TOP4 = ("max_indegree", "max_outdegree", "median_pagerank", "max_pagerank")


class FeatureFileError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    nodes: float
    edges: float
    max_indegree: float
    max_outdegree: float
    min_indegree: float
    min_outdegree: float
    median_pagerank: float
    max_pagerank: float
    min_pagerank: float
    window_index: int = 0
    label: int = 0

    def values(self, names: Sequence[str] = FEATURE_NAMES) -> np.ndarray:
        return np.array([getattr(self, n) for n in names], dtype=float)


@dataclass
class FeatureMatrix:
    X: np.ndarray
    y: np.ndarray
    window_index: np.ndarray
    feature_names: tuple = FEATURE_NAMES
    attack_kinds: Optional[tuple] = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.y), -1)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.window_index = np.asarray(self.window_index, dtype=np.int64)
        self.feature_names = tuple(self.feature_names)
        if self.X.shape[1] != len(self.feature_names):
            raise ValueError("feature matrix width does not match its names")
        if not (len(self.X) == len(self.y) == len(self.window_index)):
            raise ValueError("feature matrix columns have different lengths")

    def __len__(self) -> int:
        return len(self.y)

    @classmethod
    def from_vectors(cls, vectors: Iterable[FeatureVector], attack_kinds=None) -> "FeatureMatrix":
        vectors = list(vectors)
        X = np.array([v.values() for v in vectors], dtype=float).reshape(len(vectors), len(FEATURE_NAMES))
        return cls(
            X,
            np.array([v.label for v in vectors], dtype=np.int64),
            np.array([v.window_index for v in vectors], dtype=np.int64),
            FEATURE_NAMES,
            tuple(attack_kinds) if attack_kinds is not None else None,
        )

    @property
    def rows(self) -> list:
        if self.feature_names != FEATURE_NAMES:
            raise ValueError("rows are only defined for the full feature set")
        return [
            FeatureVector(*x.tolist(), window_index=int(i), label=int(lab))
            for x, i, lab in zip(self.X, self.window_index, self.y)
        ]

    def columns(self, names: Sequence[str]) -> np.ndarray:
        idx = [self.feature_names.index(n) for n in names]
        return self.X[:, idx]

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        return replace(self, X=self.columns(names), feature_names=tuple(names))

    def take(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx)
        kinds = None if self.attack_kinds is None else tuple(self.attack_kinds[i] for i in idx)
        return FeatureMatrix(self.X[idx], self.y[idx], self.window_index[idx],
                             self.feature_names, kinds)


def graph_features(graph: MessageGraph, options: PageRankOptions = PageRankOptions(),
                   multigraph: bool = False) -> tuple:
    """The nine feature values of one graph, in ``FEATURE_NAMES`` order."""
    indeg = graph.in_degree(weighted=multigraph).values()
    outdeg = graph.out_degree(weighted=multigraph).values()
    if multigraph:
        options = replace(options, weighted=True)
        n_edges = sum(graph.edge_counts.values())
    else:
        n_edges = graph.n_edges
    lo, med, hi = pr_summary(graph, options)
    return (
        graph.n_vertices, n_edges,
        max(indeg), max(outdeg), min(indeg), min(outdeg),
        med, hi, lo,
    )


def extract_features(window: Window, options: PageRankOptions = PageRankOptions(),
                     multigraph: bool = False) -> FeatureVector:
    values = graph_features(build_graph(window), options, multigraph)
    return FeatureVector(*values, window_index=window.index, label=window.label)


def _kind_tag(window: Window) -> str:
    return "+".join(sorted(k.value for k in window.attack_kinds))


def featurize_log(log: FrameLog, spec: Optional[WindowSpec] = None,
                  options: PageRankOptions = PageRankOptions(),
                  multigraph: bool = False) -> FeatureMatrix:
    """Window ``log`` and extract one feature row per window."""
    vectors, kinds = [], []
    for window in window_stream(log, spec or WindowSpec()):
        vectors.append(extract_features(window, options, multigraph))
        kinds.append(_kind_tag(window))
    return FeatureMatrix.from_vectors(vectors, kinds)


class GraphFeaturizer(BaseEstimator, TransformerMixin):
    """Transformer from frame logs (or window lists) to feature arrays.

    Stateless: ``fit`` only validates parameters.
    """

    def __init__(self, window_ms=23.0, window_frames=None, damping=0.85,
                 tolerance=1e-10, max_iterations=200, multigraph=False):
        self.window_ms = window_ms
        self.window_frames = window_frames
        self.damping = damping
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        self.multigraph = multigraph

    def window_spec(self) -> WindowSpec:
        if self.window_frames is not None:
            return WindowSpec.frames(int(self.window_frames))
        return WindowSpec.time_ms(float(self.window_ms))

    def pagerank_options(self) -> PageRankOptions:
        return PageRankOptions(self.damping, self.tolerance, self.max_iterations)

    def fit(self, X=None, y=None):
        self.window_spec()
        self.pagerank_options()
        self.n_features_out_ = len(FEATURE_NAMES)
        return self

    def featurize(self, X) -> FeatureMatrix:
        if isinstance(X, FrameLog):
            return featurize_log(X, self.window_spec(), self.pagerank_options(), self.multigraph)
        vectors = [extract_features(w, self.pagerank_options(), self.multigraph) for w in X]
        return FeatureMatrix.from_vectors(vectors, [_kind_tag(w) for w in X])

    def transform(self, X):
        return self.featurize(X).X

    def get_feature_names_out(self, input_features=None):
        return np.array(FEATURE_NAMES, dtype=object)


# ---------------------------------------------------------------- analysis

def _plotting_positions(column: np.ndarray) -> np.ndarray:
    return (rankdata(column, method="average") - 0.5) / len(column)


class QuantileRankTransformer(BaseEstimator, TransformerMixin):
    """Per-column empirical CDF with midrank ties, mapped onto [0, 1].

    On the training data a value of midrank ``r`` among ``n`` maps to
    ``(r - 0.5) / n``; unseen values interpolate linearly between training
    values and clip at the ends. Constant columns map to 0.5.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        if X.shape[0] < 2:
            raise ValueError("quantile transform needs at least 2 rows")
        self.references_ = []
        for col in X.T:
            uniq = np.unique(col)
            pos = _plotting_positions(col)
            levels = np.array([pos[col == u][0] for u in uniq])
            self.references_.append((uniq, levels))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "references_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        out = np.empty_like(X)
        for j, (uniq, levels) in enumerate(self.references_):
            if len(uniq) == 1:
                out[:, j] = 0.5
            else:
                out[:, j] = np.interp(X[:, j], uniq, levels)
        return out


def quantile_transform(matrix: FeatureMatrix) -> FeatureMatrix:
    if len(matrix) < 2:
        raise ValueError("quantile transform needs at least 2 rows")
    return replace(matrix, X=QuantileRankTransformer().fit_transform(matrix.X))


@dataclass
class CorrelationMatrix:
    names: tuple
    values: np.ndarray

    def r(self, a: str, b: str) -> float:
        return float(self.values[self.names.index(a), self.names.index(b)])

    def with_label(self) -> np.ndarray:
        return self.values[:-1, -1]

    def to_text(self, digits: int = 2) -> str:
        short = [n[:8] for n in self.names]
        width = max(9, digits + 4)
        lines = [" " * 16 + "".join(s.rjust(width) for s in short)]
        for name, row in zip(self.names, self.values):
            lines.append(name.ljust(16) + "".join(f"{v:{width}.{digits}f}" for v in row))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["feature," + ",".join(self.names)]
        for name, row in zip(self.names, self.values):
            lines.append(name + "," + ",".join(f"{v:.9g}" for v in row))
        return "\n".join(lines) + "\n"


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Sample correlation; 0 when either side is constant."""
    dx = x - x.mean()
    dy = y - y.mean()
    den = np.sqrt((dx * dx).sum()) * np.sqrt((dy * dy).sum())
    if den == 0:
        return 0.0
    return float(np.clip((dx * dy).sum() / den, -1.0, 1.0))


def correlation_matrix(matrix: FeatureMatrix) -> CorrelationMatrix:
    """Pearson r between every pair of features and the 0/1 label."""
    if len(matrix) < 2:
        raise ValueError("correlation needs at least 2 rows")
    data = np.column_stack([matrix.X, matrix.y.astype(float)])
    k = data.shape[1]
    out = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            out[i, j] = out[j, i] = pearson(data[:, i], data[:, j])
    return CorrelationMatrix(matrix.feature_names + ("label",), out)


def select_features(corr: CorrelationMatrix, k: int = 4) -> tuple:
    """Top ``k`` features by ``|r(feature, label)|``; ties keep table order."""
    names = corr.names[:-1]
    if not 1 <= k <= len(names):
        raise ValueError(f"k must lie in 1..{len(names)}")
    strength = np.abs(corr.with_label())
    order = sorted(range(len(names)), key=lambda i: (-strength[i], i))
    return tuple(names[i] for i in order[:k])


def feature_importance(model, matrix: FeatureMatrix, repeats: int = 5, seed: int = 0) -> dict:
    """Mean accuracy drop when one feature column is shuffled.

    ``model`` is any fitted classifier exposing ``feature_names_in_`` (a
    subset of the matrix columns) and ``predict``.
    """
    if len(matrix) < 2:
        raise ValueError("feature importance needs at least 2 rows")
    names = tuple(getattr(model, "feature_names_in_", matrix.feature_names))
    X = matrix.columns(names)
    y = matrix.y
    base = float(np.mean(model.predict(X) == y))
    rng = np.random.default_rng(seed)
    scores = {}
    for j, name in enumerate(names):
        drops = []
        for _ in range(repeats):
            Xp = X.copy()
            Xp[:, j] = Xp[rng.permutation(len(Xp)), j]
            drops.append(base - float(np.mean(model.predict(Xp) == y)))
        scores[name] = float(np.mean(drops))
    return scores


# ---------------------------------------------------------------- CSV I/O

def iter_features_csv(matrix: FeatureMatrix, header: Sequence[str] = ()):
    if matrix.feature_names != FEATURE_NAMES:
        raise ValueError("the feature file always carries all nine features")
    for line in header:
        yield f"# {line}\n" if line else "#\n"
    yield ",".join(CSV_HEADER) + "\n"
    for x, idx, lab in zip(matrix.X, matrix.window_index, matrix.y):
        yield f"{int(idx)}," + ",".join(f"{v:.9g}" for v in x) + f",{int(lab)}\n"


def write_features_csv(matrix: FeatureMatrix, sink: IO[str], header: Sequence[str] = ()) -> None:
    for chunk in iter_features_csv(matrix, header):
        sink.write(chunk)


def dumps_features_csv(matrix: FeatureMatrix, header: Sequence[str] = ()) -> str:
    return "".join(iter_features_csv(matrix, header))


def read_features_csv(stream) -> FeatureMatrix:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    rows, labels, index = [], [], []
    saw_header = False
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cells = line.split(",")
        if not saw_header:
            if tuple(cells) != CSV_HEADER:
                raise FeatureFileError(f"unexpected header at line {lineno}: {line!r}")
            saw_header = True
            continue
        if len(cells) != len(CSV_HEADER):
            raise FeatureFileError(f"expected {len(CSV_HEADER)} fields at line {lineno}")
        try:
            index.append(int(cells[0]))
            rows.append([float(c) for c in cells[1:-1]])
            labels.append(int(cells[-1]))
        except ValueError as exc:
            raise FeatureFileError(f"bad value at line {lineno}: {exc}") from None
        if labels[-1] not in (0, 1):
            raise FeatureFileError(f"label must be 0 or 1 at line {lineno}")
    if not saw_header:
        raise FeatureFileError("missing header line")
    return FeatureMatrix(np.array(rows, dtype=float).reshape(len(rows), len(FEATURE_NAMES)),
                         labels, index)


def class_spread(matrix: FeatureMatrix, names: Sequence[str], sigmas: float = 3.0) -> list:
    """Per-class ``mean +- sigmas*std`` bands for the quantile-transformed
    ``names``; the data behind a two-feature separability plot."""
    q = quantile_transform(matrix)
    out = []
    for label in (0, 1):
        mask = q.y == label
        if not mask.any():
            continue
        cols = q.columns(names)[mask]
        for name, col in zip(names, cols.T):
            mu, sd = float(col.mean()), float(col.std())
            out.append((label, name, mu, mu - sigmas * sd, mu + sigmas * sd))
    return out
