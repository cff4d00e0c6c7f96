"""Binary naive Bayes detectors: Gaussian (the graph-feature detector) plus
multinomial and complement count models used as baselines.

Class 1 is "attacked", class 0 "attack free". All three models score a row by
``log prior + per-feature log terms`` and call it attacked only when the
attacked score is strictly larger.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass
from typing import IO, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .featurize import FEATURE_NAMES, FeatureMatrix, FeatureVector
from .graphing import ATTACK_FREE, ATTACKED

FORMAT_VERSION = 1
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Prediction:
    label: int
    log_score_att: float
    log_score_attfr: float
    posterior_att: float

    @property
    def attacked(self) -> bool:
        return self.label == ATTACKED


def _decide(jll: np.ndarray) -> np.ndarray:
    # ties go to attack free
    return (jll[:, 1] > jll[:, 0]).astype(np.int64)


def _posterior(jll: np.ndarray) -> np.ndarray:
    top = jll.max(axis=1, keepdims=True)
    e = np.exp(jll - top)
    return e / e.sum(axis=1, keepdims=True)


def _check_training(X, y):
    X, y = check_X_y(X, y, dtype=float)
    y = y.astype(np.int64)
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 (attack free) or 1 (attacked)")
    if len(np.unique(y)) < 2:
        raise ValueError("degenerate training labels: both classes are required")
    return X, y


class _BinaryNB(ClassifierMixin, BaseEstimator):
    def _names(self, feature_names, k):
        if feature_names is None:
            feature_names = FEATURE_NAMES if k == len(FEATURE_NAMES) else [f"x{i}" for i in range(k)]
        if len(feature_names) != k:
            raise ValueError("feature_names length does not match X")
        return np.array(feature_names, dtype=object)

    def _check_X(self, X):
        check_is_fitted(self, "class_prior_")
        X = check_array(X, dtype=float, ensure_2d=False)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"dimension mismatch: model has {self.n_features_in_} features, got {X.shape[1]}"
            )
        return X

    def joint_log_likelihood(self, X) -> np.ndarray:
        """``(n, 2)`` log scores; column 1 is the attacked class."""
        return self._jll(self._check_X(X))

    def predict(self, X) -> np.ndarray:
        return _decide(self.joint_log_likelihood(X))

    def predict_proba(self, X) -> np.ndarray:
        return _posterior(self.joint_log_likelihood(X))

    def predict_log_proba(self, X) -> np.ndarray:
        return np.log(self.predict_proba(X))

    def decide(self, x) -> Prediction:
        """Score one row (array or :class:`FeatureVector`)."""
        if isinstance(x, FeatureVector):
            x = x.values(list(self.feature_names_in_))
        jll = self.joint_log_likelihood(np.asarray(x, dtype=float).reshape(1, -1))
        post = _posterior(jll)[0]
        return Prediction(int(_decide(jll)[0]), float(jll[0, 1]), float(jll[0, 0]), float(post[1]))


class GaussianNaiveBayes(_BinaryNB):
    """Gaussian naive Bayes with per-class means and population variances.

    Every variance is inflated by ``var_smoothing`` times the largest pooled
    (class-agnostic) feature variance so constant features stay usable.
    """

    def __init__(self, var_smoothing=1e-9):
        self.var_smoothing = var_smoothing

    def fit(self, X, y, feature_names=None):
        X, y = _check_training(X, y)
        counts = np.bincount(y, minlength=2)
        if counts.min() < 2:
            raise ValueError("each class needs at least 2 training rows")
        pooled = X.var(axis=0).max()
        # an all-constant design has no scale; fall back to absolute smoothing
        self.epsilon_ = self.var_smoothing * pooled if pooled > 0 else max(self.var_smoothing, 1e-300)
        theta = np.empty((2, X.shape[1]))
        var = np.empty((2, X.shape[1]))
        for c in (0, 1):
            rows = X[y == c]
            theta[c] = rows.mean(axis=0)
            var[c] = rows.var(axis=0) + self.epsilon_
        self.classes_ = np.array([ATTACK_FREE, ATTACKED])
        self.class_count_ = counts.astype(float)
        self.class_prior_ = counts / counts.sum()
        self.theta_ = theta
        self.var_ = var
        self.n_features_in_ = X.shape[1]
        self.feature_names_in_ = self._names(feature_names, X.shape[1])
        return self

    def _jll(self, X):
        out = np.empty((X.shape[0], 2))
        for c in (0, 1):
            z = (X - self.theta_[c]) ** 2 / self.var_[c]
            out[:, c] = (np.log(self.class_prior_[c])
                         - X.shape[1] * _LOG_SQRT_2PI
                         - 0.5 * np.log(self.var_[c]).sum()
                         - 0.5 * z.sum(axis=1))
        return out

    def log_likelihood(self, x, cls: int) -> float:
        """``log P(cls) + sum_i log N(x_i; mean, var)`` for one row."""
        return float(self.joint_log_likelihood(np.asarray(x, dtype=float).reshape(1, -1))[0, cls])

    def direct_scores(self, X) -> np.ndarray:
        """Prior times the product of Gaussian densities, without logs.

        Underflows to 0 for far-off rows; kept to cross-check the log path.
        """
        X = self._check_X(X)
        out = np.empty((X.shape[0], 2))
        for c in (0, 1):
            dens = np.exp(-((X - self.theta_[c]) ** 2) / (2 * self.var_[c])) / np.sqrt(
                2 * np.pi * self.var_[c])
            out[:, c] = self.class_prior_[c] * dens.prod(axis=1)
        return out


class CountNaiveBayes(_BinaryNB):
    """Multinomial or complement naive Bayes over non-negative features.

    Features are used as fractional counts directly. ``alpha`` is additive
    smoothing. The complement variant weights each class by the feature mass
    of the other class and subtracts that term when scoring.
    """

    def __init__(self, variant="multinomial", alpha=1.0):
        self.variant = variant
        self.alpha = alpha

    def _check_nonneg(self, X):
        if (X < 0).any():
            raise ValueError("count models need non-negative features")

    def fit(self, X, y, feature_names=None):
        if self.variant not in ("multinomial", "complement"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        X, y = _check_training(X, y)
        self._check_nonneg(X)
        counts = np.bincount(y, minlength=2)
        self.classes_ = np.array([ATTACK_FREE, ATTACKED])
        self.class_count_ = counts.astype(float)
        self.class_prior_ = counts / counts.sum()
        self.feature_count_ = np.vstack([X[y == c].sum(axis=0) for c in (0, 1)])
        self.n_features_in_ = X.shape[1]
        self.feature_names_in_ = self._names(feature_names, X.shape[1])
        self._update_weights()
        return self

    def _update_weights(self):
        mass = self.feature_count_ if self.variant == "multinomial" else self.feature_count_[::-1]
        smoothed = mass + self.alpha
        total = smoothed.sum(axis=1, keepdims=True)
        if not np.all(total > 0):
            raise ValueError("zero feature mass with alpha=0; cannot form weights")
        with np.errstate(divide="ignore"):
            self.feature_log_prob_ = np.log(smoothed) - np.log(total)

    def _jll(self, X):
        self._check_nonneg(X)
        sign = 1.0 if self.variant == "multinomial" else -1.0
        with np.errstate(invalid="ignore"):
            terms = sign * (X @ self.feature_log_prob_.T)
        terms = np.nan_to_num(terms, nan=0.0)  # 0 * log 0 counts as 0
        return terms + np.log(self.class_prior_)


MODEL_KINDS = ("ggnb", "cnb", "mnb")


def make_model(kind: str, **params):
    if kind == "ggnb":
        return GaussianNaiveBayes(**params)
    if kind == "mnb":
        return CountNaiveBayes("multinomial", **params)
    if kind == "cnb":
        return CountNaiveBayes("complement", **params)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def model_kind(model) -> str:
    if isinstance(model, GaussianNaiveBayes):
        return "ggnb"
    return "mnb" if model.variant == "multinomial" else "cnb"


def fit_gnb(matrix: FeatureMatrix, var_smoothing: float = 1e-9) -> GaussianNaiveBayes:
    return GaussianNaiveBayes(var_smoothing).fit(matrix.X, matrix.y, matrix.feature_names)


def fit_count_nb(matrix: FeatureMatrix, variant: str = "multinomial",
                 alpha: float = 1.0) -> CountNaiveBayes:
    return CountNaiveBayes(variant, alpha).fit(matrix.X, matrix.y, matrix.feature_names)


def predict(model, vector) -> Prediction:
    return model.decide(vector)


# ---------------------------------------------------------------- persistence

_CLASS_SECTIONS = ((ATTACKED, "class.attacked"), (ATTACK_FREE, "class.attackfree"))


def dumps_model(model) -> str:
    check_is_fitted(model, "class_prior_")
    kind = model_kind(model)
    names = list(model.feature_names_in_)
    lines = [
        "# naive Bayes detector",
        "[meta]",
        f"format_version = {FORMAT_VERSION}",
        f"kind = {kind}",
        f"features = {','.join(names)}",
    ]
    if kind == "ggnb":
        lines += [f"var_smoothing = {float(model.var_smoothing)!r}", f"epsilon = {float(model.epsilon_)!r}"]
    else:
        lines.append(f"alpha = {float(model.alpha)!r}")
    lines += [
        "",
        "[priors]",
        f"attacked = {float(model.class_prior_[ATTACKED])!r}",
        f"attackfree = {float(model.class_prior_[ATTACK_FREE])!r}",
        f"count.attacked = {int(model.class_count_[ATTACKED])}",
        f"count.attackfree = {int(model.class_count_[ATTACK_FREE])}",
    ]
    for c, section in _CLASS_SECTIONS:
        lines += ["", f"[{section}]"]
        for j, name in enumerate(names):
            if kind == "ggnb":
                lines.append(f"mean.{name} = {float(model.theta_[c, j])!r}")
                lines.append(f"var.{name} = {float(model.var_[c, j])!r}")
            else:
                lines.append(f"count.{name} = {float(model.feature_count_[c, j])!r}")
    lines += ["", "[end]", ""]
    return "\n".join(lines)


def save_model(model, sink: IO[str]) -> None:
    sink.write(dumps_model(model))


def _get(cp, section: str, key: str, conv=str):
    if not cp.has_section(section):
        raise ModelFormatError(f"missing section [{section}]")
    if not cp.has_option(section, key):
        raise ModelFormatError(f"missing field [{section}] {key}")
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except ValueError:
        raise ModelFormatError(f"bad value for [{section}] {key}: {raw!r}") from None


def loads_model(text: str):
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from None
    if not cp.has_section("end"):
        nlines = text.count("\n") + 1
        raise ModelFormatError(f"truncated model document: no [end] section (ends at line {nlines})")
    version = _get(cp, "meta", "format_version", int)
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"field [meta] format_version: unsupported version {version} (expected {FORMAT_VERSION})"
        )
    kind = _get(cp, "meta", "kind")
    names = _get(cp, "meta", "features").split(",")
    prior = np.empty(2)
    count = np.empty(2)
    prior[ATTACKED] = _get(cp, "priors", "attacked", float)
    prior[ATTACK_FREE] = _get(cp, "priors", "attackfree", float)
    count[ATTACKED] = _get(cp, "priors", "count.attacked", int)
    count[ATTACK_FREE] = _get(cp, "priors", "count.attackfree", int)
    if kind == "ggnb":
        model = GaussianNaiveBayes(_get(cp, "meta", "var_smoothing", float))
        model.epsilon_ = _get(cp, "meta", "epsilon", float)
        model.theta_ = np.empty((2, len(names)))
        model.var_ = np.empty((2, len(names)))
        for c, section in _CLASS_SECTIONS:
            for j, name in enumerate(names):
                model.theta_[c, j] = _get(cp, section, f"mean.{name}", float)
                model.var_[c, j] = _get(cp, section, f"var.{name}", float)
        if not (model.var_ > 0).all():
            raise ModelFormatError("variances must be positive")
    elif kind in ("mnb", "cnb"):
        model = make_model(kind, alpha=_get(cp, "meta", "alpha", float))
        model.feature_count_ = np.empty((2, len(names)))
        for c, section in _CLASS_SECTIONS:
            for j, name in enumerate(names):
                model.feature_count_[c, j] = _get(cp, section, f"count.{name}", float)
    else:
        raise ModelFormatError(f"field [meta] kind: unknown model kind {kind!r}")
    model.classes_ = np.array([ATTACK_FREE, ATTACKED])
    model.class_prior_ = prior
    model.class_count_ = count
    model.n_features_in_ = len(names)
    model.feature_names_in_ = np.array(names, dtype=object)
    if kind != "ggnb":
        model._update_weights()
    return model


def load_model(stream) -> object:
    text = stream if isinstance(stream, str) else stream.read()
    return loads_model(text)
