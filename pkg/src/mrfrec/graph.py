"""Co-occurrence network over medical entities and its task bigraphs."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Iterable, TextIO

import numpy as np

from .corpus import Corpus, Entity, EntityType, Modifier, Record


class TaskKind(str, enum.Enum):
    SD = "sd"  # symptom / test result -> disease
    DTR = "dtr"  # disease -> treatment
    ST = "st"  # symptom -> test

    @property
    def x_kinds(self) -> frozenset[EntityType]:
        return _TASK_KINDS[self][0]

    @property
    def y_kind(self) -> EntityType:
        return _TASK_KINDS[self][1]

    @property
    def label(self) -> str:
        return {"sd": "SD-EMKN", "dtr": "DTr-EMKN", "st": "ST-EMKN"}[self.value]

    @classmethod
    def parse(cls, text: str) -> "TaskKind":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown task {text!r}; expected one of sd, dtr, st") from None


_TASK_KINDS = {
    TaskKind.SD: (frozenset({EntityType.SYMPTOM, EntityType.TEST_RESULT}), EntityType.DISEASE),
    TaskKind.DTR: (frozenset({EntityType.DISEASE}), EntityType.TREATMENT),
    TaskKind.ST: (frozenset({EntityType.SYMPTOM}), EntityType.TEST),
}


def _key(a: Entity, b: Entity) -> tuple[Entity, Entity]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class Emkn:
    """Undirected weighted co-occurrence graph; weights are record counts."""

    nodes: frozenset
    edges: dict  # (a, b) with a < b -> int

    def weight(self, a: Entity, b: Entity) -> int:
        return self.edges.get(_key(a, b), 0)

    def __len__(self):
        return len(self.nodes)


def build_emkn(train: Corpus | Iterable[Record], positive_only_edges: bool = False) -> Emkn:
    """Count, for every entity pair, the training records mentioning both.

    Modifiers are ignored unless ``positive_only_edges`` is set, in which
    case absent mentions neither create nodes nor edges.
    """
    nodes = set()
    counts: Counter = Counter()
    n = 0
    for record in train:
        n += 1
        ents = sorted(
            e for e, m in record.mentions if not (positive_only_edges and m is Modifier.ABSENT)
        )
        nodes.update(ents)
        counts.update(combinations(ents, 2))
    if n == 0:
        raise ValueError("cannot build a network from an empty corpus")
    return Emkn(frozenset(nodes), dict(counts))


class Bigraph:
    """Bipartite projection G = (X, Y) of the network for one task.

    Both parts are sorted by (name, kind) and every entity of a matching
    kind is kept, isolated or not, so the candidate set is the full Y
    vocabulary.
    """

    def __init__(self, task: TaskKind, x_part: Iterable[Entity], y_part: Iterable[Entity], edges: dict):
        self.task = TaskKind(task)
        self.x_part = tuple(sorted(set(x_part)))
        self.y_part = tuple(sorted(set(y_part)))
        self.x_index = {e: i for i, e in enumerate(self.x_part)}
        self.y_index = {e: i for i, e in enumerate(self.y_part)}
        if set(self.x_index) & set(self.y_index):
            raise ValueError("bigraph parts must be disjoint")
        items = sorted(edges.items(), key=lambda kv: (self.y_index[kv[0][0]], self.x_index[kv[0][1]]))
        self.edges = dict(items)  # (y, x) -> weight
        self.edge_y = np.array([self.y_index[y] for (y, _), _ in items], dtype=np.intp)
        self.edge_x = np.array([self.x_index[x] for (_, x), _ in items], dtype=np.intp)
        self.edge_w = np.array([w for _, w in items], dtype=float)
        self.y_degree = np.bincount(self.edge_y, minlength=len(self.y_part))
        self.x_degree = np.bincount(self.edge_x, minlength=len(self.x_part))
        self.edge_index = {(int(i), int(j)): k for k, (i, j) in enumerate(zip(self.edge_y, self.edge_x))}

    def __repr__(self):
        return (
            f"Bigraph(task={self.task.value}, |X|={len(self.x_part)}, "
            f"|Y|={len(self.y_part)}, |E|={len(self.edges)})"
        )

    @cached_property
    def weight_matrix(self) -> np.ndarray:
        w = np.zeros((len(self.y_part), len(self.x_part)))
        w[self.edge_y, self.edge_x] = self.edge_w
        return w

    @cached_property
    def x_neighbors(self) -> list[np.ndarray]:
        """Y indices adjacent to each X node."""
        order = np.argsort(self.edge_x, kind="stable")
        bounds = np.searchsorted(self.edge_x[order], np.arange(len(self.x_part) + 1))
        ys = self.edge_y[order]
        return [ys[bounds[j]:bounds[j + 1]] for j in range(len(self.x_part))]

    def weight(self, y: Entity, x: Entity) -> float:
        return self.edges.get((y, x), 0)

    def degree(self, entity: Entity) -> int:
        if entity in self.y_index:
            return int(self.y_degree[self.y_index[entity]])
        if entity in self.x_index:
            return int(self.x_degree[self.x_index[entity]])
        raise KeyError(entity)

    def write_edge_list(self, stream: TextIO) -> None:
        for (y, x), w in self.edges.items():
            stream.write(f"{y.name}\t{x.name}\t{int(w)}\n")


def extract_bigraph(g: Emkn, task: TaskKind) -> Bigraph:
    task = TaskKind(task)
    xs = [e for e in g.nodes if e.kind in task.x_kinds]
    ys = [e for e in g.nodes if e.kind == task.y_kind]
    edges = {}
    for (a, b), w in g.edges.items():
        if a.kind == task.y_kind and b.kind in task.x_kinds:
            edges[(a, b)] = w
        elif b.kind == task.y_kind and a.kind in task.x_kinds:
            edges[(b, a)] = w
    return Bigraph(task, xs, ys, edges)


@dataclass(frozen=True)
class DegreeStats:
    size: int
    degree_mean: float
    degree_median: float


def _stats(degrees: np.ndarray) -> DegreeStats:
    if len(degrees) == 0:
        return DegreeStats(0, 0.0, 0.0)
    # np.median averages the two central values for even sizes.
    return DegreeStats(len(degrees), float(np.mean(degrees)), float(np.median(degrees)))


def degree_stats(b: Bigraph) -> dict[str, DegreeStats]:
    """Size, mean and median degree of each part (isolated nodes included)."""
    return {"X": _stats(b.x_degree), "Y": _stats(b.y_degree)}


STATS_HEADER = ("subgraph", "part", "type", "size", "degree mean", "degree median")


def stats_rows(b: Bigraph) -> list[tuple[str, ...]]:
    s = degree_stats(b)
    x_types = " ".join(sorted(k.value for k in b.task.x_kinds))
    rows = []
    for part, types in (("X", x_types), ("Y", b.task.y_kind.value)):
        st = s[part]
        rows.append(
            (b.task.label, part, types, str(st.size), f"{st.degree_mean:.2f}", f"{st.degree_median:g}")
        )
    return rows
