"""Corpus scoring: n-gram recall vs references (quality), vs the source
(inverse diversity), and anchor retention in generated output."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import markup
from .corpus import SchemaError
from .textcore import get_profile, ngrams, tokenize

MULTI_REF_MAX = "max"
MULTI_REF_MEAN = "mean"


@dataclass(frozen=True)
class EvalConfig:
    n: int = 2  # n-gram order
    multi_ref: str = MULTI_REF_MAX
    open_marker: str = markup.OPEN_MARKER
    close_marker: str = markup.CLOSE_MARKER

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.multi_ref not in (MULTI_REF_MAX, MULTI_REF_MEAN):
            raise ValueError(f"unknown multi_ref mode: {self.multi_ref!r}")


@dataclass(frozen=True)
class EvalRecord:
    id: str
    lang: str
    source_tagged: str
    generated: tuple[str, ...]
    references: tuple[str, ...]

    def __post_init__(self):
        if not self.generated:
            raise SchemaError(f"record {self.id!r}: empty 'generated' list")
        if not self.references:
            raise SchemaError(f"record {self.id!r}: empty 'references' list")

    @classmethod
    def from_dict(cls, d: Mapping, line: int | None = None) -> "EvalRecord":
        try:
            return cls(
                id=d["id"],
                lang=d["lang"],
                source_tagged=d["source_tagged"],
                generated=tuple(d["generated"]),
                references=tuple(d["references"]),
            )
        except KeyError as exc:
            raise SchemaError(f"missing field {exc.args[0]!r}", line) from exc


@dataclass
class RecordDiagnostics:
    id: str
    r: float
    r_vs_s: float
    anchors_total: int
    anchors_retained: int

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "r": self.r,
            "r_vs_s": self.r_vs_s,
            "anchors_total": self.anchors_total,
            "anchors_retained": self.anchors_retained,
        }


@dataclass
class EvalReport:
    """Corpus means, in percent. `t_pct` is None when no record carries
    anchors (retention is undefined, matching untagged baselines)."""

    r: float
    r_vs_s: float
    t_pct: float | None
    n: int
    records: int
    per_record: list[RecordDiagnostics] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "r_vs_s": self.r_vs_s,
            "t_pct": self.t_pct,
            "n": self.n,
            "records": self.records,
            "per_record": [d.to_dict() for d in self.per_record],
        }


def rouge_n_recall(
    candidate: Sequence[str],
    references: Iterable[Sequence[str]],
    n: int,
    multi_ref: str = MULTI_REF_MAX,
) -> float:
    """Clipped n-gram recall of `candidate` against each reference,
    aggregated by max (default) or mean. A reference shorter than n
    contributes recall 0."""
    cand_counts = Counter(ngrams(list(candidate), n))
    scores = []
    for reference in references:
        ref_counts = Counter(ngrams(list(reference), n))
        total = sum(ref_counts.values())
        if not total:
            scores.append(0.0)
            continue
        overlap = sum(min(count, cand_counts[gram]) for gram, count in ref_counts.items())
        scores.append(overlap / total)
    if not scores:
        return 0.0
    if multi_ref == MULTI_REF_MAX:
        return max(scores)
    return math.fsum(scores) / len(scores)


def diversity_score(candidate: Sequence[str], source: Sequence[str], n: int) -> float:
    """Recall against the tag-stripped source; lower means more diverse."""
    return rouge_n_recall(candidate, [source], n)


def _occurs(haystack: Sequence[str], needle: Sequence[str]) -> bool:
    k = len(needle)
    needle = tuple(needle)
    return any(tuple(haystack[i : i + k]) == needle for i in range(len(haystack) - k + 1))


def tag_retention(
    anchor_seqs: Sequence[Sequence[str]], generations: Sequence[Sequence[str]]
) -> tuple[int, int]:
    """(retained, total) anchor instances over all (anchor, generation)
    pairs; an anchor is retained iff its normalized tokens occur
    contiguously in the generation."""
    retained = 0
    total = 0
    for generation in generations:
        for anchor in anchor_seqs:
            total += 1
            if _occurs(generation, anchor):
                retained += 1
    return retained, total


def _strip_markers(text: str, cfg: EvalConfig) -> str:
    # generations may carry stray/unbalanced markers; remove textually
    return text.replace(cfg.open_marker, " ").replace(cfg.close_marker, " ")


def evaluate(records: Iterable[EvalRecord], cfg: EvalConfig = EvalConfig()) -> EvalReport:
    """Corpus-level scores. Per record, scores are averaged over its
    generations before corpus averaging; retention is micro-averaged
    over anchor instances."""
    r_scores: list[float] = []
    s_scores: list[float] = []
    retained_total = 0
    anchors_total = 0
    diagnostics: list[RecordDiagnostics] = []
    n_records = 0
    for record in records:
        n_records += 1
        profile = get_profile(record.lang)
        source = markup.parse_tagged(
            record.source_tagged, profile, cfg.open_marker, cfg.close_marker
        )
        source_norms = source.sentence.norms
        anchor_seqs = source.anchor_norms()
        references = [tokenize(_strip_markers(r, cfg), profile).norms for r in record.references]
        generations = [tokenize(_strip_markers(g, cfg), profile).norms for g in record.generated]

        per_gen_r = [rouge_n_recall(g, references, cfg.n, cfg.multi_ref) for g in generations]
        per_gen_s = [diversity_score(g, source_norms, cfg.n) for g in generations]
        record_r = math.fsum(per_gen_r) / len(per_gen_r)
        record_s = math.fsum(per_gen_s) / len(per_gen_s)
        r_scores.append(record_r)
        s_scores.append(record_s)

        retained, total = tag_retention(anchor_seqs, generations) if anchor_seqs else (0, 0)
        retained_total += retained
        anchors_total += total
        diagnostics.append(
            RecordDiagnostics(
                id=record.id,
                r=100.0 * record_r,
                r_vs_s=100.0 * record_s,
                anchors_total=total,
                anchors_retained=retained,
            )
        )
    if not n_records:
        raise ValueError("no records to evaluate")
    return EvalReport(
        r=100.0 * math.fsum(r_scores) / n_records,
        r_vs_s=100.0 * math.fsum(s_scores) / n_records,
        t_pct=(100.0 * retained_total / anchors_total) if anchors_total else None,
        n=cfg.n,
        records=n_records,
        per_record=diagnostics,
    )
