"""Exact conditional inference on the bipartite MRF and candidate ranking.

Given observed X values, the conditional over Y factorises into one
two-state (Y_i in {-1, +1}) problem per candidate, so

    P(Y_i = 1 | x) = exp(-S_i) / (exp(-S_i) + exp(S_i)),  S_i = sum_j f(Y_i, X_j) x_j
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import Entity
from .energy import EnergyModel
from .graph import TaskKind

MAX_BRUTE_FORCE_Y = 12


def check_assignment(a: Mapping[Entity, float], model: EnergyModel, strict: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Validate an assignment and return (X indices, values) of its nonzero entries.

    With ``strict=False`` entities outside the X part are silently skipped.
    """
    index = model.graph.x_index
    idx, vals = [], []
    for e, v in a.items():
        v = float(v)
        if not -1.0 <= v <= 1.0:
            raise ValueError(f"assignment value for {e} out of [-1, 1]: {v}")
        j = index.get(e)
        if j is None:
            if strict:
                raise KeyError(f"unknown X entity {e}")
            continue
        if v != 0.0:
            idx.append(j)
            vals.append(v)
    order = np.argsort(idx, kind="stable")
    return np.asarray(idx, dtype=np.intp)[order], np.asarray(vals, dtype=float)[order]


def prob_positive(s):
    """exp(-s) / (exp(-s) + exp(s)), overflow-free for any finite s."""
    s = np.asarray(s, dtype=float)
    t = np.exp(-2.0 * np.abs(s))
    return np.where(s > 0, t / (1.0 + t), 1.0 / (1.0 + t))


def field_sums(model: EnergyModel, xj: np.ndarray, xv: np.ndarray, yi=None) -> np.ndarray:
    """S_i for the requested Y indices (all of them by default)."""
    if yi is None:
        yi = np.arange(len(model.graph.y_part))
    if len(xj) == 0:
        return np.zeros(len(yi))
    return model.f_block(yi, xj) @ xv


def conditional_prob(model: EnergyModel, y: Entity, a: Mapping[Entity, float]) -> float:
    i = model._yi(y)
    xj, xv = check_assignment(a, model)
    return float(prob_positive(field_sums(model, xj, xv, [i])[0]))


@dataclass(frozen=True)
class RankedResult:
    items: tuple  # ((Entity, probability), ...) best first
    task: TaskKind | None = None

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @property
    def entities(self) -> list[Entity]:
        return [e for e, _ in self.items]

    def top(self, n: int) -> list[tuple[Entity, float]]:
        return list(self.items[:n])

    @classmethod
    def from_scores(cls, entities: Sequence[Entity], scores, task=None, rank_key=None) -> "RankedResult":
        """Sort descending by score, ties by entity name (then kind).

        ``rank_key`` (higher is better) overrides the sort order when given;
        pass a strictly monotone, unsaturated transform of the scores (a
        logit) so that probabilities rounding to 0 or 1 still rank correctly.
        """
        key = scores if rank_key is None else rank_key
        order = sorted(range(len(entities)), key=lambda k: (-float(key[k]), entities[k]))
        return cls(tuple((entities[k], float(scores[k])) for k in order), task)


def rank_candidates(model: EnergyModel, a: Mapping[Entity, float], strict: bool = True) -> RankedResult:
    xj, xv = check_assignment(a, model, strict=strict)
    s = field_sums(model, xj, xv)
    # P is strictly decreasing in S, and -S does not saturate
    return RankedResult.from_scores(model.graph.y_part, prob_positive(s), model.graph.task, rank_key=-s)


def brute_force_marginals(model: EnergyModel, a: Mapping[Entity, float]) -> np.ndarray:
    """P(Y_i = 1 | x) for every Y by enumerating all joint Y configurations.

    Test oracle: the unnormalised joint is the product of per-edge
    potentials, each edge energy evaluated pair by pair for both states
    of its Y node; the joint is normalised and the other Y's summed out.
    """
    ys = model.graph.y_part
    if len(ys) > MAX_BRUTE_FORCE_Y:
        raise ValueError(f"brute force needs |Y| <= {MAX_BRUTE_FORCE_Y}, got {len(ys)}")
    obs = [(x, float(v)) for x, v in a.items() if x in model.graph.x_index and v != 0]
    # node_energy[i, s]: summed edge energies of Y_i in state s (0 -> -1, 1 -> +1)
    node_energy = np.array(
        [[sum(model.energy(yy, state, x, v) for x, v in obs) for state in (-1.0, 1.0)] for yy in ys]
    ).reshape(len(ys), 2)
    configs = np.array(list(itertools.product((0, 1), repeat=len(ys))), dtype=np.intp).reshape(-1, len(ys))
    energies = node_energy[np.arange(len(ys)), configs].sum(axis=1)
    joint = np.exp(-(energies - energies.min()))
    joint /= joint.sum()
    return joint @ configs


def brute_force_conditional(model: EnergyModel, y: Entity, a: Mapping[Entity, float]) -> float:
    """P(Y_i = 1 | x) for one Y, via :func:`brute_force_marginals`."""
    return float(brute_force_marginals(model, a)[model.graph.y_part.index(y)])


def brute_force_joint(model: EnergyModel, a: Mapping[Entity, float]) -> dict:
    """Normalised P(y | x) for every configuration in {-1, +1}^|Y|."""
    ys = model.graph.y_part
    if len(ys) > MAX_BRUTE_FORCE_Y:
        raise ValueError(f"brute force needs |Y| <= {MAX_BRUTE_FORCE_Y}, got {len(ys)}")
    obs = [(x, float(v)) for x, v in a.items() if x in model.graph.x_index and v != 0]
    out = {}
    for config in itertools.product((-1, 1), repeat=len(ys)):
        e = sum(model.energy(yy, c, x, v) for yy, c in zip(ys, config) for x, v in obs)
        out[config] = math.exp(-e)
    z = sum(out.values())
    return {k: v / z for k, v in out.items()}
