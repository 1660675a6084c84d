"""Synthetic record corpora with planted disease associations.

Every record draws one or more diseases; each disease emits its associated
symptoms, test results, tests and treatments with per-pair probabilities.
Spurious mentions and absent flips add noise. The planted association
strengths double as a ranking oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Mapping, TextIO

import numpy as np

from .corpus import Corpus, Entity, EntityType, Modifier, Record
from .graph import TaskKind
from .inference import RankedResult

_PREFIX = {
    EntityType.DISEASE: "disease",
    EntityType.SYMPTOM: "symptom",
    EntityType.TEST: "test",
    EntityType.TEST_RESULT: "result",
    EntityType.TREATMENT: "treatment",
}

# (Y kind, X kind) orientation of each planted pair, keyed by the non-disease kind
_ORIENT = {
    EntityType.SYMPTOM: "disease_is_y",
    EntityType.TEST_RESULT: "disease_is_y",
    EntityType.TEST: "disease_is_x",
    EntityType.TREATMENT: "disease_is_x",
}


def entity_name(kind: EntityType, k: int) -> str:
    return f"{_PREFIX[kind]}_{k:03d}"


@dataclass
class SynthConfig:
    """Generator settings.

    ``associations`` maps disease index to a list of
    ``(kind, entity index, emission probability)``; leave it ``None`` to
    have :meth:`resolved` build it from ``layout``.
    """

    n_diseases: int = 20
    n_symptoms: int = 100
    n_tests: int = 40
    n_test_results: int = 40
    n_treatments: int = 30
    n_records: int = 500
    noise: float = 0.05
    absent_rate: float = 0.05
    possible_rate: float = 0.0
    diseases_per_record: tuple = (0.5, 0.35, 0.15)
    prevalence_skew: float = 1.0
    layout: str = "default"
    seed: int = 0
    associations: dict | None = None
    clusters: dict | None = None  # disease index -> cluster id (two_cluster layout)

    def count(self, kind: EntityType) -> int:
        return {
            EntityType.DISEASE: self.n_diseases,
            EntityType.SYMPTOM: self.n_symptoms,
            EntityType.TEST: self.n_tests,
            EntityType.TEST_RESULT: self.n_test_results,
            EntityType.TREATMENT: self.n_treatments,
        }[kind]

    def validate(self) -> None:
        for name in ("noise", "absent_rate", "possible_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.absent_rate + self.possible_rate > 1.0:
            raise ValueError("absent_rate + possible_rate must not exceed 1")
        if self.n_records < 1 or self.n_diseases < 1:
            raise ValueError("need at least one record and one disease")
        p = np.asarray(self.diseases_per_record, dtype=float)
        if p.size == 0 or (p < 0).any() or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
            raise ValueError("diseases_per_record must be a probability vector")
        if p.size > self.n_diseases:
            raise ValueError("diseases_per_record allows more diseases than exist")
        if self.associations is None:
            return
        for d in range(self.n_diseases):
            assoc = self.associations.get(d)
            if not assoc:
                raise ValueError(f"disease {d} has no associations")
            kinds = {k for k, _, _ in assoc}
            for need in (EntityType.SYMPTOM, EntityType.TEST, EntityType.TREATMENT):
                if need not in kinds:
                    raise ValueError(f"disease {d} has no associated {need.value}")
            for kind, idx, prob in assoc:
                if not 0.0 <= prob <= 1.0:
                    raise ValueError(f"emission probability out of range: {prob}")
                if not 0 <= idx < self.count(kind):
                    raise ValueError(f"{kind.value} index {idx} out of range")

    def resolved(self) -> "SynthConfig":
        """Copy with ``associations`` filled in from ``layout``."""
        if self.associations is not None:
            return self
        builders = {"default": _default_layout, "two_cluster": _two_cluster_layout, "two_disease": _two_disease_layout}
        try:
            build = builders[self.layout]
        except KeyError:
            raise ValueError(f"unknown layout {self.layout!r}") from None
        assoc, clusters = build(self)
        return replace(self, associations=assoc, clusters=clusters)

    @classmethod
    def from_mapping(cls, d: Mapping[str, str]) -> "SynthConfig":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in d.items():
            key = key.replace("-", "_")
            if key not in types or key in ("associations", "clusters"):
                raise ValueError(f"unknown synth config key {key!r}")
            if key == "diseases_per_record":
                kwargs[key] = tuple(float(v) for v in str(raw).split(","))
            elif key == "layout":
                kwargs[key] = str(raw)
            elif key.startswith("n_") or key == "seed":
                kwargs[key] = int(raw)
            else:
                kwargs[key] = float(raw)
        return cls(**kwargs)


def _layout_rng(cfg: SynthConfig) -> np.random.Generator:
    # association structure is fixed by the seed but drawn apart from the records
    return np.random.default_rng([cfg.seed, 7919])


def _default_layout(cfg: SynthConfig):
    """Sparse, partly overlapping association lists with a few hub symptoms and tests.

    Hub entities are linked to many diseases, which is what separates
    degree-aware or learned energies from raw co-occurrence counts.
    """
    rng = _layout_rng(cfg)
    n_hub_sym = min(5, cfg.n_symptoms // 4)
    n_hub_test = min(3, cfg.n_tests // 4)
    assoc = {}
    for d in range(cfg.n_diseases):
        rows = []

        def pick(kind, n, start=0):
            pool = np.arange(start, cfg.count(kind))
            n = min(n, pool.size)
            return sorted(rng.choice(pool, size=n, replace=False).tolist())

        for s in pick(EntityType.SYMPTOM, 5, n_hub_sym):
            rows.append((EntityType.SYMPTOM, s, float(rng.uniform(0.4, 0.9))))
        if n_hub_sym:
            rows.append((EntityType.SYMPTOM, int(rng.integers(n_hub_sym)), float(rng.uniform(0.3, 0.6))))
        for t in pick(EntityType.TEST_RESULT, 2):
            rows.append((EntityType.TEST_RESULT, t, float(rng.uniform(0.4, 0.9))))
        for t in pick(EntityType.TEST, 2, n_hub_test):
            rows.append((EntityType.TEST, t, float(rng.uniform(0.4, 0.9))))
        if n_hub_test:
            rows.append((EntityType.TEST, int(rng.integers(n_hub_test)), float(rng.uniform(0.5, 0.8))))
        for t in pick(EntityType.TREATMENT, 3):
            rows.append((EntityType.TREATMENT, t, float(rng.uniform(0.4, 0.9))))
        assoc[d] = rows
    return assoc, None


def _two_cluster_layout(cfg: SynthConfig):
    """Diseases split into two halves, each half drawing on its own entity pools."""
    rng = _layout_rng(cfg)
    half = cfg.n_diseases // 2
    clusters = {d: int(d >= half) for d in range(cfg.n_diseases)}
    assoc = {}
    for d in range(cfg.n_diseases):
        c = clusters[d]
        rows = []
        for kind, n in ((EntityType.SYMPTOM, 6), (EntityType.TEST_RESULT, 2), (EntityType.TEST, 2), (EntityType.TREATMENT, 2)):
            size = cfg.count(kind) // 2
            pool = np.arange(c * size, (c + 1) * size)
            for e in sorted(rng.choice(pool, size=min(n, size), replace=False).tolist()):
                rows.append((kind, e, 0.8))
        assoc[d] = rows
    return assoc, clusters


def _two_disease_layout(cfg: SynthConfig):
    """Two diseases with disjoint symptom sets, emission 0.9 throughout."""
    if cfg.n_diseases != 2:
        raise ValueError("two_disease layout needs n_diseases=2")
    assoc = {}
    for d in range(2):
        rows = [(EntityType.SYMPTOM, d * 5 + k, 0.9) for k in range(5)]
        rows.append((EntityType.TEST, d, 0.9))
        rows.append((EntityType.TEST_RESULT, d, 0.9))
        rows.append((EntityType.TREATMENT, d, 0.9))
        assoc[d] = rows
    return assoc, None


def default_config(**overrides) -> SynthConfig:
    """The pinned default corpus: 20 diseases, 100 symptoms, 40 tests, 30 treatments, 500 records."""
    return SynthConfig(**overrides)


def two_cluster_config(**overrides) -> SynthConfig:
    base = dict(
        n_diseases=10, n_symptoms=40, n_tests=10, n_test_results=10, n_treatments=10,
        n_records=600, noise=0.02, absent_rate=0.02, diseases_per_record=(1.0,),
        prevalence_skew=0.0, layout="two_cluster",
    )
    base.update(overrides)
    return SynthConfig(**base)


def two_disease_config(**overrides) -> SynthConfig:
    base = dict(
        n_diseases=2, n_symptoms=10, n_tests=2, n_test_results=2, n_treatments=2,
        n_records=400, noise=0.05, absent_rate=0.05, diseases_per_record=(1.0,),
        prevalence_skew=0.0, layout="two_disease",
    )
    base.update(overrides)
    return SynthConfig(**base)


@dataclass
class GroundTruth:
    strengths: dict = field(default_factory=dict)  # (Y entity, X entity) -> emission probability
    clusters: dict | None = None  # disease entity -> cluster id

    def strength(self, y: Entity, x: Entity) -> float:
        return self.strengths.get((y, x), 0.0)

    def write(self, stream: TextIO) -> None:
        for (y, x), s in self.strengths.items():
            stream.write(f"{y.name}\t{x.name}\t{s!r}\n")


def generate(cfg: SynthConfig) -> tuple[Corpus, GroundTruth]:
    """Sample ``cfg.n_records`` records; deterministic per ``cfg.seed``."""
    cfg = cfg.resolved()
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    diseases = [Entity(entity_name(EntityType.DISEASE, d), EntityType.DISEASE) for d in range(cfg.n_diseases)]
    prevalence = 1.0 / np.arange(1, cfg.n_diseases + 1) ** cfg.prevalence_skew
    prevalence /= prevalence.sum()
    per_record = np.asarray(cfg.diseases_per_record, dtype=float)

    gt = GroundTruth()
    resolved = {}
    for d, rows in cfg.associations.items():
        out = []
        for kind, idx, prob in rows:
            e = Entity(entity_name(kind, idx), kind)
            out.append((e, prob))
            key = (diseases[d], e) if _ORIENT[kind] == "disease_is_y" else (e, diseases[d])
            gt.strengths[key] = max(prob, gt.strengths.get(key, 0.0))
        resolved[d] = out
    if cfg.clusters is not None:
        gt.clusters = {diseases[d]: c for d, c in cfg.clusters.items()}

    width = len(str(cfg.n_records - 1))
    records = []
    for r in range(cfg.n_records):
        k = 1 + int(rng.choice(per_record.size, p=per_record))
        chosen = np.sort(rng.choice(cfg.n_diseases, size=k, replace=False, p=prevalence))
        mentions: dict[Entity, Modifier] = {}
        for d in chosen:
            mentions.setdefault(diseases[d], Modifier.PRESENT)
            for e, prob in resolved[d]:
                if rng.random() < prob:
                    mentions.setdefault(e, Modifier.PRESENT)
                    if rng.random() < cfg.noise:
                        kind = e.kind
                        spurious = Entity(entity_name(kind, int(rng.integers(cfg.count(kind)))), kind)
                        mentions.setdefault(spurious, Modifier.PRESENT)
        for e in mentions:
            u = rng.random()
            if u < cfg.absent_rate:
                mentions[e] = Modifier.ABSENT
            elif u < cfg.absent_rate + cfg.possible_rate:
                mentions[e] = Modifier.POSSIBLE
        records.append(Record(f"syn{r:0{width}d}", tuple(mentions.items())))
    return Corpus(tuple(records), f"synth(layout={cfg.layout}, seed={cfg.seed})"), gt


def oracle_rank(
    gt: GroundTruth,
    a: Mapping[Entity, float],
    task: TaskKind | None = None,
    candidates=None,
) -> RankedResult:
    """Rank candidates by sum_j strength(y, x_j) * x_j, ties alphabetical.

    Candidates default to every Y-side entity of the ground truth (of the
    task's Y kind when ``task`` is given). Only pairs planted directly
    carry strength, so for symptom -> test (linked through diseases) the
    oracle sees nothing and ranks alphabetically.
    """
    if candidates is None:
        candidates = sorted({y for y, _ in gt.strengths if task is None or y.kind == task.y_kind})
    else:
        candidates = list(candidates)
    scores = [sum(gt.strength(y, x) * v for x, v in a.items()) for y in candidates]
    return RankedResult.from_scores(candidates, scores, task)
