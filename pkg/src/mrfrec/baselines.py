"""Per-candidate binary classifiers used as non-MRF baselines.

Each Y entity gets its own classifier over the task's X features. Training
sets are balanced by sampling as many negatives as positives, preferring
negatives that share a nonzero feature with some positive, and features
that are zero across the selected instances are dropped.
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import LogisticRegression
from sklearn.naive_bayes import CategoricalNB
from sklearn.neural_network import MLPClassifier

from .corpus import Entity, Instance
from .inference import RankedResult

logger = logging.getLogger(__name__)


class BaselineKind(str, enum.Enum):
    NAIVE_BAYES = "naive_bayes"
    LOGISTIC = "logistic"
    MLP = "mlp"

    @classmethod
    def parse(cls, text: str) -> "BaselineKind":
        t = text.strip().lower().replace("-", "_")
        return cls({"nb": "naive_bayes", "lr": "logistic", "nn": "mlp"}.get(t, t))


@dataclass(frozen=True)
class ClassifierDataset:
    y: Entity
    positives: tuple
    negatives: tuple
    kept_features: tuple  # sorted X entities

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        rows = list(self.positives) + list(self.negatives)
        X = features_matrix([r.x for r in rows], self.kept_features)
        labels = np.array([1] * len(self.positives) + [0] * len(self.negatives))
        return X, labels


def features_matrix(xs: Sequence[Mapping[Entity, float]], features: Sequence[Entity]) -> np.ndarray:
    col = {e: k for k, e in enumerate(features)}
    X = np.zeros((len(xs), len(features)))
    for r, x in enumerate(xs):
        for e, v in x.items():
            k = col.get(e)
            if k is not None:
                X[r, k] = v
    return X


def build_classifier_dataset(instances: Sequence[Instance], y: Entity, rng: np.random.Generator) -> ClassifierDataset:
    positives = [inst for inst in instances if y in inst.gold]
    if not positives:
        raise ValueError(f"no positive instance for {y}")
    candidates = [inst for inst in instances if y not in inst.gold]
    pos_features = set()
    for inst in positives:
        pos_features.update(e for e, v in inst.x.items() if v != 0)
    overlap = [c for c in candidates if any(v != 0 and e in pos_features for e, v in c.x.items())]
    others = [c for c in candidates if not any(v != 0 and e in pos_features for e, v in c.x.items())]
    need = len(positives)
    chosen = _draw(overlap, need, rng)
    if len(chosen) < need:
        chosen += _draw(others, need - len(chosen), rng)
    if len(chosen) < need:
        logger.info("%s: only %d negatives for %d positives", y, len(chosen), need)
    kept = set()
    for inst in positives + chosen:
        kept.update(e for e, v in inst.x.items() if v != 0)
    return ClassifierDataset(y, tuple(positives), tuple(chosen), tuple(sorted(kept)))


def _draw(pool: list, n: int, rng: np.random.Generator) -> list:
    if n <= 0 or not pool:
        return []
    if len(pool) <= n:
        return list(pool)
    idx = np.sort(rng.choice(len(pool), size=n, replace=False))
    return [pool[i] for i in idx]


def _categorize(X: np.ndarray) -> np.ndarray:
    # -1 / 0 / (0, 1) / 1  ->  0 / 1 / 2 / 3
    cat = np.ones(X.shape, dtype=int)
    cat[X < 0] = 0
    cat[(X > 0) & (X < 1)] = 2
    cat[X >= 1] = 3
    return cat


class BaselineScorer:
    """Positive-class probability of one Y entity, computed on its kept features only."""

    def __init__(self, kind: BaselineKind, kept_features: Sequence[Entity], clf=None, constant: float | None = None):
        self.kind = BaselineKind(kind)
        self.kept_features = tuple(kept_features)
        self.clf = clf
        self.constant = constant

    def predict_proba(self, xs: Sequence[Mapping[Entity, float]]) -> np.ndarray:
        if self.clf is None:
            return np.full(len(xs), self.constant)
        X = features_matrix(xs, self.kept_features)
        if self.kind is BaselineKind.NAIVE_BAYES:
            X = _categorize(X)
        proba = self.clf.predict_proba(X)
        return proba[:, list(self.clf.classes_).index(1)]

    def score(self, x: Mapping[Entity, float]) -> float:
        return float(self.predict_proba([x])[0])

    def logit(self, x: Mapping[Entity, float]) -> float:
        """Log-odds of the positive class, computed without going through a rounded probability."""
        if self.clf is None:
            p = self.constant
            return math.log(p) - math.log1p(-p) if 0 < p < 1 else (math.inf if p >= 1 else -math.inf)
        X = features_matrix([x], self.kept_features)
        pos = list(self.clf.classes_).index(1)
        if self.kind is BaselineKind.NAIVE_BAYES:
            jll = self.clf.predict_joint_log_proba(_categorize(X))[0]
            return float(jll[pos] - jll[1 - pos])
        if self.kind is BaselineKind.LOGISTIC:
            d = float(self.clf.decision_function(X)[0])
            return d if pos == 1 else -d
        logp = self.clf.predict_log_proba(X)[0]
        return float(logp[pos] - logp[1 - pos])


def train_baseline(
    kind: BaselineKind,
    dataset: ClassifierDataset,
    seed: int = 0,
    *,
    C: float = 1.0,
    tol: float = 1e-6,
    hidden: int = 16,
    mlp_epochs: int = 200,
) -> BaselineScorer:
    kind = BaselineKind(kind)
    if not dataset.positives:
        raise ValueError("empty dataset")
    X, labels = dataset.matrix()
    if len(set(labels)) < 2 or X.shape[1] == 0:
        # nothing to discriminate against
        return BaselineScorer(kind, dataset.kept_features, constant=0.5)
    if kind is BaselineKind.NAIVE_BAYES:
        clf = CategoricalNB(alpha=1.0, min_categories=4)
        clf.fit(_categorize(X), labels)
    elif kind is BaselineKind.LOGISTIC:
        clf = LogisticRegression(C=C, tol=tol, max_iter=10_000)
        clf.fit(X, labels)
    else:
        clf = MLPClassifier(
            hidden_layer_sizes=(hidden,),
            activation="logistic",
            max_iter=mlp_epochs,
            tol=0.0,
            n_iter_no_change=mlp_epochs + 1,
            random_state=seed,
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            clf.fit(X, labels)
    return BaselineScorer(kind, dataset.kept_features, clf)


def rank_candidates_baseline(
    scorers: Mapping[Entity, BaselineScorer], x: Mapping[Entity, float], task=None
) -> RankedResult:
    ys = sorted(scorers)
    scores = [scorers[y].score(x) for y in ys]
    return RankedResult.from_scores(ys, scores, task, rank_key=[scorers[y].logit(x) for y in ys])
