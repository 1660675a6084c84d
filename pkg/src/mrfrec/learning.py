"""Regularised maximum-likelihood training by SGD with negative sampling."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import Entity, Instance
from .energy import EnergyModel, HyperParams, NonLearnableEnergyError, rng_stream
from .graph import Bigraph
from .inference import field_sums, prob_positive

logger = logging.getLogger(__name__)


class NoNegativesError(ValueError):
    pass


@dataclass
class TrainInstance:
    """Observed X (index, value) pairs, positive Y indices and sampled negatives.

    Positives take Y = +1 and negatives Y = -1 in the likelihood.
    """

    x_idx: np.ndarray
    x_val: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    record_id: str = ""

    def __post_init__(self):
        self.x_idx = np.asarray(self.x_idx, dtype=np.intp)
        self.x_val = np.asarray(self.x_val, dtype=float)
        self.positives = np.asarray(self.positives, dtype=np.intp)
        self.negatives = np.asarray(self.negatives, dtype=np.intp)
        if np.intersect1d(self.positives, self.negatives).size:
            raise ValueError("positives and negatives overlap")

    @property
    def y_idx(self) -> np.ndarray:
        return np.concatenate([self.positives, self.negatives])

    @property
    def y_val(self) -> np.ndarray:
        return np.concatenate([np.ones(len(self.positives)), -np.ones(len(self.negatives))])

    def with_negatives(self, negatives) -> "TrainInstance":
        return TrainInstance(self.x_idx, self.x_val, self.positives, negatives, self.record_id)


def to_train_instances(instances: Iterable[Instance], graph: Bigraph) -> list[TrainInstance]:
    """Index instances against ``graph``; entities outside it are ignored.

    Instances left without a positive X or a positive Y are skipped.
    """
    out = []
    for inst in instances:
        pairs = sorted((graph.x_index[e], v) for e, v in inst.x.items() if e in graph.x_index and v != 0)
        pos = sorted(graph.y_index[e] for e in inst.gold if e in graph.y_index)
        if not pos or not any(v > 0 for _, v in pairs):
            continue
        out.append(TrainInstance([j for j, _ in pairs], [v for _, v in pairs], pos, record_id=inst.record_id))
    return out


def with_all_negatives(t: TrainInstance, graph: Bigraph) -> TrainInstance:
    """Replace sampled negatives by every non-positive Y (the exact likelihood)."""
    neg = np.setdiff1d(np.arange(len(graph.y_part)), t.positives)
    return t.with_negatives(neg)


def data_loglik(m: EnergyModel, t: TrainInstance) -> float:
    """sum_i ln P(y_i | x) over the instance's positives (+1) and negatives (-1)."""
    yi = t.y_idx
    if len(yi) == 0:
        return 0.0
    s = field_sums(m, t.x_idx, t.x_val, yi)
    y = t.y_val
    return float(np.sum(-y * s - np.logaddexp(s, -s)))


def instance_loglik(m: EnergyModel, t: TrainInstance, lam: float) -> float:
    """Data log-likelihood minus (lam / 2) * sum of squared parameters.

    ``lam`` is the per-instance coefficient, i.e. 1 / (K sigma^2) for a
    Gaussian prior shared across K training records (see
    :func:`mrfrec.energy.lambda_from_sigma`).
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    penalty = 0.5 * lam * m.sq_norm() if lam else 0.0
    return data_loglik(m, t) - penalty


def expected_coef(y_val: np.ndarray, x_val: np.ndarray, p_pos: np.ndarray) -> np.ndarray:
    """Coefficient of d f / d p in g - E_P[g] for every (y, x) term.

    g(y, x) = -d eps / d p = -y x d f / d p, and the expectation runs over
    Y_i in {-1, +1} under P(Y_i | x).
    """
    g_obs = -np.outer(y_val, x_val)
    g_plus = -np.outer(np.ones_like(y_val), x_val)
    g_minus = -g_plus
    expect = p_pos[:, None] * g_plus + (1.0 - p_pos)[:, None] * g_minus
    return g_obs - expect


def instance_grad(m: EnergyModel, t: TrainInstance) -> dict:
    """Gradient of the instance data log-likelihood, grouped as in ``f_grad_sum``."""
    if not m.kind.learnable:
        raise NonLearnableEnergyError(f"non-learnable energy {m.kind.value!r}")
    yi = t.y_idx
    if len(yi) == 0 or len(t.x_idx) == 0:
        return {}
    p = prob_positive(field_sums(m, t.x_idx, t.x_val, yi))
    return m.f_grad_sum(yi, t.x_idx, expected_coef(t.y_val, t.x_val, p))


_NO_ROWS = np.empty(0, dtype=np.intp)


def sgd_step(m: EnergyModel, t: TrainInstance, eta: float, lam: float) -> None:
    """One ascent step on the instance objective, applied to all touched parameters at once.

    Embedding models are projected back to unit-norm entity vectors afterwards.
    """
    if not m.kind.learnable:
        raise NonLearnableEnergyError(f"non-learnable energy {m.kind.value!r}")
    if eta <= 0:
        raise ValueError("eta must be > 0")
    grads = instance_grad(m, t)
    if not grads:
        if lam:
            # no data term: every parameter just decays
            for p in m.parameters().values():
                p *= 1.0 - eta * lam
        return
    if "theta" in grads:
        idx, g = grads["theta"]
        m.theta[idx] += eta * (g - lam * m.theta[idx])
    for part, emb in (("y", m.y_emb), ("x", m.x_emb)):
        if part in grads:
            idx, g = grads[part]
            emb[idx] += eta * (g - lam * emb[idx])
    if "W" in grads:
        m.W += eta * (grads["W"] - lam * m.W)
    if "r" in grads:
        m.r += eta * (grads["r"] - lam * m.r)
    if m.kind.embedded:
        m.normalize_embeddings(
            y_rows=grads["y"][0] if "y" in grads else _NO_ROWS, x_rows=grads["x"][0] if "x" in grads else _NO_ROWS
        )


def neighbor_lists(m: EnergyModel, k_neg: int) -> list[np.ndarray]:
    """For each X node, its ``k_neg`` graph neighbours with the lowest f (ties by name)."""
    g = m.graph
    f = m.f_edges()
    order = np.lexsort((g.edge_y, f, g.edge_x))
    xs = g.edge_x[order]
    ys = g.edge_y[order]
    bounds = np.searchsorted(xs, np.arange(len(g.x_part) + 1))
    return [ys[bounds[j]:min(bounds[j] + k_neg, bounds[j + 1])] for j in range(len(g.x_part))]


def negative_sample(
    graph: Bigraph,
    t: TrainInstance,
    rng: np.random.Generator,
    *,
    model: EnergyModel | None = None,
    k_neg: int = 50,
    lists: Sequence[np.ndarray] | None = None,
) -> np.ndarray:
    """Draw ``len(positives)`` negative Y indices.

    The pool is the union of the top-``k_neg`` neighbour lists of the
    instance's positive X entities, minus its positives. Pass ``lists``
    (from :func:`neighbor_lists`) to reuse a ranking, otherwise ``model``
    is used to build one. A short pool is topped up uniformly from the
    remaining Y entities.
    """
    if k_neg < 1:
        raise ValueError("k_neg must be >= 1")
    n_y = len(graph.y_part)
    need = len(t.positives)
    is_pos = np.zeros(n_y, dtype=bool)
    is_pos[t.positives] = True
    if is_pos.all():
        raise NoNegativesError("no negatives available: every Y entity is positive")
    if lists is None:
        if model is None:
            raise ValueError("either model or lists is required")
        lists = neighbor_lists(model, k_neg)
    in_pool = np.zeros(n_y, dtype=bool)
    for j in t.x_idx[t.x_val > 0]:
        in_pool[lists[j][:k_neg]] = True
    in_pool &= ~is_pos
    pool = np.flatnonzero(in_pool)
    if pool.size >= need:
        return np.sort(rng.choice(pool, size=need, replace=False))
    extra = np.flatnonzero(~in_pool & ~is_pos)
    take = min(need - pool.size, extra.size)
    topup = rng.choice(extra, size=take, replace=False) if take else np.zeros(0, dtype=np.intp)
    return np.sort(np.concatenate([pool, topup]).astype(np.intp))


def _with_sampled(graph, t, rng, k_neg, lists) -> TrainInstance:
    try:
        return t.with_negatives(negative_sample(graph, t, rng, k_neg=k_neg, lists=lists))
    except NoNegativesError:
        return t.with_negatives([])


@dataclass
class TrainReport:
    trace: list = field(default_factory=list)  # objective after each epoch
    epochs: int = 0
    seed: int = 0
    param_norms: dict = field(default_factory=dict)


def objective(m: EnergyModel, instances: Sequence[TrainInstance], lam: float) -> float:
    """Sum of instance log-likelihoods: the sampled version of the full training objective."""
    data = sum(data_loglik(m, t) for t in instances)
    return data - len(instances) * 0.5 * lam * m.sq_norm()


def train(
    m: EnergyModel,
    instances: Sequence[TrainInstance],
    h: HyperParams,
    on_epoch: Callable[[int, EnergyModel, float], None] | None = None,
) -> TrainReport:
    """Run ``h.epochs`` epochs of shuffled SGD, mutating ``m`` in place.

    Negatives are re-drawn each epoch from neighbour lists ranked under the
    model as it stands at the start of that epoch (once only if
    ``h.resample_negatives`` is off). Deterministic given ``h.seed``.
    """
    if not m.kind.learnable:
        raise NonLearnableEnergyError(f"non-learnable energy {m.kind.value!r}")
    instances = list(instances)
    if not instances:
        raise ValueError("no training instances")
    shuffle_rng = rng_stream(h.seed, "shuffle")
    sample_rng = rng_stream(h.seed, "sampling")
    report = TrainReport(seed=h.seed)
    sampled = None
    for epoch in range(h.epochs):
        if sampled is None or h.resample_negatives:
            lists = neighbor_lists(m, h.k_neg)
            sampled = [_with_sampled(m.graph, t, sample_rng, h.k_neg, lists) for t in instances]
        for k in shuffle_rng.permutation(len(sampled)):
            sgd_step(m, sampled[k], h.eta, h.lam)
        obj = objective(m, sampled, h.lam)
        report.trace.append(obj)
        report.epochs = epoch + 1
        logger.debug("epoch %d objective %.6f", epoch + 1, obj)
        if on_epoch is not None:
            on_epoch(epoch + 1, m, obj)
    report.param_norms = {k: float(np.linalg.norm(v)) for k, v in m.parameters().items()}
    return report
