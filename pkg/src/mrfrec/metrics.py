"""Ranking metrics: P@k, R@k, average precision and their test-set means."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .inference import RankedResult

REPORT_COLUMNS = ("method", "MP@R", "MAP", "MR@10", "R@10>0.1", "R@10>0.9")


@dataclass(frozen=True)
class EvalInstance:
    ranked: Sequence  # RankedResult or a plain list of entities, best first
    gold: frozenset

    def __post_init__(self):
        object.__setattr__(self, "gold", frozenset(self.gold))
        if not self.gold:
            raise ValueError("an evaluation instance needs at least one gold entity")

    @property
    def m(self) -> int:
        return len(self.gold)

    def ranking(self) -> list:
        if isinstance(self.ranked, RankedResult):
            return self.ranked.entities
        return list(self.ranked)


def _hits(e: EvalInstance, k: int) -> int:
    return sum(1 for x in e.ranking()[:k] if x in e.gold)


def precision_at_k(e: EvalInstance, k: int) -> float:
    """Gold entities among the top ``k`` divided by ``k`` (even when fewer are ranked)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return _hits(e, k) / k


def recall_at_k(e: EvalInstance, k: int = 10) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    return _hits(e, k) / e.m


def average_precision(e: EvalInstance) -> float:
    """(1/m) * sum_i i / r_i over the ranks r_1 < ... < r_n of returned gold entities.

    Summed in exact rationals so the result is the correctly rounded float.
    """
    total = Fraction(0)
    found = 0
    for rank, x in enumerate(e.ranking(), start=1):
        if x in e.gold:
            found += 1
            total += Fraction(found, rank)
    return float(total / e.m)


@dataclass(frozen=True)
class InstanceMetrics:
    p_at_r: float
    r_at_10: float
    ap: float
    record_id: str = ""


def score_instance(e: EvalInstance, record_id: str = "", k: int = 10) -> InstanceMetrics:
    return InstanceMetrics(precision_at_k(e, e.m), recall_at_k(e, k), average_precision(e), record_id)


@dataclass
class MetricReport:
    mp_at_r: float
    map: float
    mr_at_10: float
    frac_r10_above_01: float
    frac_r10_above_09: float
    rows: list = field(default_factory=list, repr=False)

    def as_row(self, method: str) -> list[str]:
        vals = (self.mp_at_r, self.map, self.mr_at_10, self.frac_r10_above_01, self.frac_r10_above_09)
        return [method] + [f"{v:.4f}" for v in vals]


def aggregate(rows: Iterable[InstanceMetrics]) -> MetricReport:
    """Means over instances; the R@10 fractions use strict ``>``."""
    rows = list(rows)
    if not rows:
        raise ValueError("cannot aggregate an empty set of instances")
    n = len(rows)
    return MetricReport(
        mp_at_r=sum(r.p_at_r for r in rows) / n,
        map=sum(r.ap for r in rows) / n,
        mr_at_10=sum(r.r_at_10 for r in rows) / n,
        frac_r10_above_01=sum(r.r_at_10 > 0.1 for r in rows) / n,
        frac_r10_above_09=sum(r.r_at_10 > 0.9 for r in rows) / n,
        rows=rows,
    )


def format_report(reports: Sequence[tuple[str, MetricReport]]) -> str:
    lines = ["\t".join(REPORT_COLUMNS)]
    lines.extend("\t".join(rep.as_row(name)) for name, rep in reports)
    return "\n".join(lines) + "\n"
