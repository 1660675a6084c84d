"""Record data model, the line-delimited record format, and instance building."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Iterator, Sequence, TextIO

import numpy as np

if TYPE_CHECKING:
    from .graph import TaskKind

logger = logging.getLogger(__name__)


class CorpusFormatError(ValueError):
    """Raised for malformed record files; carries the 1-based line number."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class EntityType(str, enum.Enum):
    SYMPTOM = "symptom"
    TEST = "test"
    TEST_RESULT = "test_result"
    DISEASE = "disease"
    TREATMENT = "treatment"


class Modifier(str, enum.Enum):
    PRESENT = "present"
    ABSENT = "absent"
    POSSIBLE = "possible"
    OTHER = "other"

    @classmethod
    def parse(cls, text: str) -> "Modifier":
        """Map a modifier string to its kind; anything unrecognised is OTHER."""
        try:
            return cls(text.strip().lower())
        except ValueError:
            return cls.OTHER


_ASSIGNMENT = {
    Modifier.PRESENT: 1.0,
    Modifier.ABSENT: -1.0,
    Modifier.POSSIBLE: 0.5,
    Modifier.OTHER: 0.5,
}


def assignment_value(modifier: Modifier) -> float:
    """Numeric node value of a mention: present 1, absent -1, anything else 0.5.

    Entities that are not mentioned in a record take the value 0; that is
    the caller's responsibility since there is no modifier to pass.
    """
    return _ASSIGNMENT[Modifier(modifier)]


def gold_label(modifier: Modifier) -> int:
    """Binary relevance: 0 for absent mentions, 1 otherwise."""
    return 0 if Modifier(modifier) is Modifier.ABSENT else 1


@dataclass(frozen=True, order=True)
class Entity:
    name: str
    kind: EntityType

    def __post_init__(self):
        if not self.name or "|" in self.name or "\t" in self.name or "\n" in self.name:
            raise ValueError(f"invalid entity name {self.name!r}")
        object.__setattr__(self, "kind", EntityType(self.kind))

    def __str__(self):
        return f"{self.name}|{self.kind.value}"


@dataclass(frozen=True)
class Record:
    id: str
    mentions: tuple[tuple[Entity, Modifier], ...] = ()

    def __post_init__(self):
        if not self.id or "\t" in self.id:
            raise ValueError(f"invalid record id {self.id!r}")
        object.__setattr__(self, "mentions", _dedup(self.mentions))

    @property
    def entities(self) -> frozenset[Entity]:
        return frozenset(e for e, _ in self.mentions)

    def modifier(self, entity: Entity) -> Modifier | None:
        for e, m in self.mentions:
            if e == entity:
                return m
        return None


def _dedup(mentions: Iterable[tuple[Entity, Modifier]]) -> tuple[tuple[Entity, Modifier], ...]:
    # Keep the strongest assertion per entity; first occurrence fixes the position.
    best: dict[Entity, Modifier] = {}
    for entity, modifier in mentions:
        modifier = Modifier(modifier)
        prev = best.get(entity)
        if prev is None or assignment_value(modifier) > assignment_value(prev):
            best[entity] = modifier
    return tuple(best.items())


@dataclass(frozen=True)
class Corpus:
    records: tuple[Record, ...]
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for r in self.records:
            if r.id in seen:
                raise CorpusFormatError(f"duplicate record id {r.id!r}")
            seen.add(r.id)

    def __len__(self):
        return len(self.records)

    def __iter__(self) -> Iterator[Record]:
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]


def _parse_mention(text: str, lineno: int) -> tuple[Entity, Modifier]:
    parts = text.split("|")
    if len(parts) != 3:
        raise CorpusFormatError(f"mention {text!r} must be name|kind|modifier", lineno)
    name, kind, modifier = (p.strip() for p in parts)
    if not name:
        raise CorpusFormatError(f"empty entity name in {text!r}", lineno)
    try:
        kind = EntityType(kind)
    except ValueError:
        raise CorpusFormatError(f"unknown entity kind {kind!r}", lineno) from None
    return Entity(name, kind), Modifier.parse(modifier)


def parse_corpus(stream: TextIO | Iterable[str], provenance: str = "") -> Corpus:
    """Read the tab-separated record format, one record per line.

    Blank lines and ``#`` comments are skipped. Raises
    :class:`CorpusFormatError` with the offending line number on malformed
    input or a repeated record id.
    """
    records = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(stream, start=1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        rid = fields[0].strip()
        if not rid:
            raise CorpusFormatError("empty record id", lineno)
        if rid in seen:
            raise CorpusFormatError(
                f"duplicate record id {rid!r} (first seen on line {seen[rid]})", lineno
            )
        seen[rid] = lineno
        mentions = [_parse_mention(f, lineno) for f in fields[1:] if f.strip()]
        records.append(Record(rid, tuple(mentions)))
    return Corpus(tuple(records), provenance)


def format_record(record: Record) -> str:
    cells = [record.id]
    cells.extend(f"{e.name}|{e.kind.value}|{m.value}" for e, m in record.mentions)
    return "\t".join(cells)


def write_corpus(corpus: Corpus, stream: TextIO) -> None:
    for record in corpus:
        stream.write(format_record(record) + "\n")


def read_corpus(path) -> Corpus:
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh, provenance=str(path))


def split_corpus(corpus: Corpus, seed: int, n_train: int) -> tuple[Corpus, Corpus]:
    """Uniformly random train/test partition with exactly ``n_train`` training records.

    Both parts keep the original record order.
    """
    n = len(corpus)
    if not 0 < n_train < n:
        raise ValueError(f"n_train must be in (0, {n}), got {n_train}")
    rng = np.random.default_rng(seed)
    chosen = np.zeros(n, dtype=bool)
    chosen[rng.permutation(n)[:n_train]] = True
    train = tuple(r for r, c in zip(corpus.records, chosen) if c)
    test = tuple(r for r, c in zip(corpus.records, chosen) if not c)
    return (
        Corpus(train, f"{corpus.provenance}[train seed={seed}]"),
        Corpus(test, f"{corpus.provenance}[test seed={seed}]"),
    )


@dataclass(frozen=True)
class Instance:
    """One record projected onto a task: X values in, gold Y set out."""

    record_id: str
    x: dict = field(hash=False)  # Entity -> float in [-1, 1], nonzero only
    gold: frozenset = frozenset()  # Y entities with gold label 1
    negatives: frozenset = frozenset()  # Y entities mentioned as absent

    def positive_x(self) -> list[Entity]:
        return [e for e, v in self.x.items() if v > 0]


@dataclass
class DropSummary:
    kept: int = 0
    no_positive_x: int = 0
    no_positive_y: int = 0
    unknown_x: int = 0

    @property
    def dropped(self) -> int:
        return self.no_positive_x + self.no_positive_y + self.unknown_x

    def __str__(self):
        return (
            f"kept={self.kept} dropped={self.dropped} "
            f"(no positive X: {self.no_positive_x}, no positive Y: {self.no_positive_y}, "
            f"mostly unknown X: {self.unknown_x})"
        )


def make_instances(corpus: Corpus | Sequence[Record], task: "TaskKind") -> tuple[list[Instance], DropSummary]:
    """Project records onto ``task``; records lacking a positive X or Y are dropped.

    Returns the instances and a :class:`DropSummary` with the counts.
    """
    summary = DropSummary()
    out = []
    for record in corpus:
        x = {}
        gold = set()
        neg = set()
        for entity, modifier in record.mentions:
            if entity.kind in task.x_kinds:
                x[entity] = assignment_value(modifier)
            elif entity.kind == task.y_kind:
                (gold if gold_label(modifier) else neg).add(entity)
        if not any(v > 0 for v in x.values()):
            summary.no_positive_x += 1
            continue
        if not gold:
            summary.no_positive_y += 1
            continue
        out.append(Instance(record.id, x, frozenset(gold), frozenset(neg)))
    summary.kept = len(out)
    if summary.dropped:
        logger.info("make_instances(%s): %s", task.value, summary)
    return out, summary


def filter_test_instances(
    instances: Iterable[Instance], known_x: Iterable[Entity]
) -> tuple[list[Instance], DropSummary]:
    """Drop instances where strictly more than half of the X entities are unknown.

    Survivors have their unknown X entities stripped.
    """
    known = known_x if isinstance(known_x, (set, frozenset)) else set(known_x)
    summary = DropSummary()
    out = []
    for inst in instances:
        unknown = [e for e in inst.x if e not in known]
        if 2 * len(unknown) > len(inst.x):
            summary.unknown_x += 1
            continue
        if unknown:
            x = {e: v for e, v in inst.x.items() if e in known}
            inst = Instance(inst.record_id, x, inst.gold, inst.negatives)
        out.append(inst)
    summary.kept = len(out)
    return out, summary
