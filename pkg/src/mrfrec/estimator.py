"""scikit-learn style recommenders.

``fit`` takes training records (a :class:`~mrfrec.corpus.Corpus` or any
sequence of :class:`~mrfrec.corpus.Record`); ``predict_proba`` and
``rank`` take X assignments (mappings from entity to value, or
:class:`~mrfrec.corpus.Instance` objects); ``score`` is test-set MAP.
"""

from __future__ import annotations

import logging
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .baselines import (
    BaselineKind,
    BaselineScorer,
    build_classifier_dataset,
    train_baseline,
)
from .corpus import Corpus, DropSummary, Instance, Record, filter_test_instances, make_instances
from .energy import EnergyKind, EnergyModel, HyperParams, init_model, rng_stream
from .graph import Bigraph, TaskKind, build_emkn, extract_bigraph
from .inference import RankedResult, check_assignment, field_sums, prob_positive
from .learning import TrainReport, to_train_instances, train
from .metrics import EvalInstance, MetricReport, aggregate, score_instance

logger = logging.getLogger(__name__)


def check_records(X) -> list[Record]:
    if isinstance(X, Corpus):
        return list(X.records)
    records = list(X)
    if not records:
        raise ValueError("no records given")
    for r in records:
        if not isinstance(r, Record):
            raise TypeError(f"expected Record, got {type(r).__name__}")
    return records


def as_assignment(x) -> Mapping:
    if isinstance(x, Instance):
        return x.x
    if isinstance(x, Mapping):
        return x
    raise TypeError(f"expected a mapping of entity -> value or an Instance, got {type(x).__name__}")


class _RecommenderMixin:
    """Shared test-time plumbing: instance preparation, evaluation, scoring."""

    def prepare_test(self, X) -> tuple[list[Instance], DropSummary]:
        """Project test records onto the task and apply the unknown-X filter."""
        check_is_fitted(self, "graph_")
        instances, first = make_instances(check_records(X), self.graph_.task)
        kept, second = filter_test_instances(instances, self.graph_.x_index)
        summary = DropSummary(
            kept=second.kept,
            no_positive_x=first.no_positive_x,
            no_positive_y=first.no_positive_y,
            unknown_x=second.unknown_x,
        )
        return kept, summary

    def evaluate(self, X, k: int = 10) -> MetricReport:
        instances = X if _all_instances(X) else self.prepare_test(X)[0]
        return evaluate_ranker(self.rank, instances, k=k)

    def score(self, X, y=None) -> float:
        """Mean average precision on test records."""
        return self.evaluate(X).map

    def predict(self, X, n: int = 10) -> list[list]:
        """Top-``n`` Y entities per assignment."""
        return [self.rank(x).entities[:n] for x in X]


def _all_instances(X) -> bool:
    return isinstance(X, (list, tuple)) and len(X) > 0 and all(isinstance(x, Instance) for x in X)


def evaluate_ranker(rank_fn, instances: Sequence[Instance], k: int = 10) -> MetricReport:
    rows = [score_instance(EvalInstance(rank_fn(inst), inst.gold), inst.record_id, k) for inst in instances]
    return aggregate(rows)


class MRFRecommender(_RecommenderMixin, BaseEstimator):
    """Bipartite MRF over a task bigraph with one of six energy functions.

    Parameters
    ----------
    energy : {"weight", "log-weight", "tf-idf", "theta", "lfm", "trans"}
    task : {"sd", "dtr", "st"}
    dim, gamma : embedding size and Trans bias (embedding energies only)
    eta, lam : SGD step size and per-instance L2 coefficient
    epochs, k_neg : training epochs and neighbour-list size for negatives
    seed : seeds initialisation, shuffling and sampling substreams
    positive_only_edges : ignore absent mentions when counting co-occurrence
    resample_negatives : re-draw negatives every epoch rather than once
    """

    def __init__(
        self,
        energy="theta",
        task="sd",
        dim=100,
        gamma=-1.0,
        eta=0.01,
        lam=1e-4,
        epochs=30,
        k_neg=50,
        seed=0,
        positive_only_edges=False,
        resample_negatives=True,
    ):
        self.energy = energy
        self.task = task
        self.dim = dim
        self.gamma = gamma
        self.eta = eta
        self.lam = lam
        self.epochs = epochs
        self.k_neg = k_neg
        self.seed = seed
        self.positive_only_edges = positive_only_edges
        self.resample_negatives = resample_negatives

    def hyperparams(self) -> HyperParams:
        return HyperParams(
            dim=int(self.dim), gamma=float(self.gamma), eta=float(self.eta), lam=float(self.lam),
            epochs=int(self.epochs), k_neg=int(self.k_neg), seed=int(self.seed),
            resample_negatives=bool(self.resample_negatives),
        )

    def fit(self, X, y=None, on_epoch=None):
        records = check_records(X)
        task = TaskKind(self.task)
        kind = EnergyKind.parse(self.energy) if isinstance(self.energy, str) else EnergyKind(self.energy)
        h = self.hyperparams()
        self.graph_ = extract_bigraph(build_emkn(records, self.positive_only_edges), task)
        self.model_ = init_model(kind, self.graph_, h)
        instances, self.fit_summary_ = make_instances(records, task)
        self.train_instances_ = to_train_instances(instances, self.graph_)
        self.report_ = TrainReport(seed=h.seed)
        if kind.learnable and h.epochs > 0:
            self.report_ = train(self.model_, self.train_instances_, h, on_epoch=on_epoch)
        self.classes_ = self.graph_.y_part
        return self

    @classmethod
    def from_model(cls, model: EnergyModel, hyper: HyperParams | None = None) -> "MRFRecommender":
        """Wrap an already trained model (e.g. a loaded checkpoint) as a fitted estimator."""
        h = hyper or HyperParams(dim=model.dim, gamma=model.gamma, seed=model.seed)
        est = cls(
            energy=model.kind.value, task=model.graph.task.value, dim=h.dim, gamma=h.gamma, eta=h.eta,
            lam=h.lam, epochs=h.epochs, k_neg=h.k_neg, seed=h.seed, resample_negatives=h.resample_negatives,
        )
        est.graph_ = model.graph
        est.model_ = model
        est.classes_ = model.graph.y_part
        return est

    def predict_proba(self, X) -> np.ndarray:
        """P(Y_i = 1 | x) for every assignment (rows) and Y entity in ``classes_`` order."""
        check_is_fitted(self, "model_")
        out = np.empty((len(X), len(self.classes_)))
        for r, x in enumerate(X):
            xj, xv = check_assignment(as_assignment(x), self.model_, strict=False)
            out[r] = prob_positive(field_sums(self.model_, xj, xv))
        return out

    def rank(self, x) -> RankedResult:
        check_is_fitted(self, "model_")
        xj, xv = check_assignment(as_assignment(x), self.model_, strict=False)
        s = field_sums(self.model_, xj, xv)
        return RankedResult.from_scores(self.classes_, prob_positive(s), self.graph_.task, rank_key=-s)


class BaselineRecommender(_RecommenderMixin, BaseEstimator):
    """One binary classifier per Y entity over sparse X features."""

    def __init__(self, method="logistic", task="sd", seed=0, C=1.0, tol=1e-6, hidden=16, mlp_epochs=200):
        self.method = method
        self.task = task
        self.seed = seed
        self.C = C
        self.tol = tol
        self.hidden = hidden
        self.mlp_epochs = mlp_epochs

    def fit(self, X, y=None):
        records = check_records(X)
        task = TaskKind(self.task)
        kind = BaselineKind.parse(self.method) if isinstance(self.method, str) else BaselineKind(self.method)
        self.graph_ = extract_bigraph(build_emkn(records), task)
        instances, self.fit_summary_ = make_instances(records, task)
        rng = rng_stream(self.seed, "baseline")
        self.scorers_ = {}
        for yent in self.graph_.y_part:
            if not any(yent in inst.gold for inst in instances):
                # never a positive in training: rank last
                self.scorers_[yent] = BaselineScorer(kind, (), constant=0.0)
                continue
            ds = build_classifier_dataset(instances, yent, rng)
            self.scorers_[yent] = train_baseline(
                kind, ds, self.seed, C=self.C, tol=self.tol, hidden=self.hidden, mlp_epochs=self.mlp_epochs
            )
        self.classes_ = self.graph_.y_part
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "scorers_")
        xs = [as_assignment(x) for x in X]
        return np.column_stack([self.scorers_[yent].predict_proba(xs) for yent in self.classes_])

    def rank(self, x) -> RankedResult:
        check_is_fitted(self, "scorers_")
        x = as_assignment(x)
        probs = [self.scorers_[y].score(x) for y in self.classes_]
        logits = [self.scorers_[y].logit(x) for y in self.classes_]
        return RankedResult.from_scores(self.classes_, probs, self.graph_.task, rank_key=logits)


class RandomRecommender(_RecommenderMixin, BaseEstimator):
    """Uniformly random ranking of the Y vocabulary; a floor for the other methods."""

    def __init__(self, task="sd", seed=0):
        self.task = task
        self.seed = seed

    def fit(self, X, y=None):
        records = check_records(X)
        self.graph_ = extract_bigraph(build_emkn(records), TaskKind(self.task))
        self.classes_ = self.graph_.y_part
        self._rng = rng_stream(self.seed, "random-ranking")
        return self

    def rank(self, x) -> RankedResult:
        check_is_fitted(self, "graph_")
        scores = self._rng.random(len(self.classes_))
        return RankedResult.from_scores(self.classes_, scores, self.graph_.task)


def make_recommender(method: str, task: str = "sd", **params):
    """Build the recommender for a ``--method`` name (energy kind, baseline or ``random``)."""
    name = method.strip().lower()
    if name == "random":
        return RandomRecommender(task=task, seed=params.get("seed", 0))
    try:
        kind = BaselineKind.parse(name)
    except ValueError:
        kind = None
    if kind is not None:
        keep = {k: v for k, v in params.items() if k in ("seed", "C", "tol", "hidden", "mlp_epochs")}
        return BaselineRecommender(method=kind.value, task=task, **keep)
    energy = EnergyKind.parse(name)
    keep = {k: v for k, v in params.items() if k in MRFRecommender().get_params()}
    return MRFRecommender(energy=energy.value, task=task, **keep)
