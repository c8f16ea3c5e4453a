"""Dataset ingestion, seeded pair construction, splitting, and emission.

All randomness is derived by hashing (seed, record id) so every output
is byte-stable regardless of iteration order or parallelism.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Iterable, Mapping, Sequence, TextIO

from . import markup
from .textcore import get_profile, tokenize


class SchemaError(ValueError):
    """A record that does not match the expected JSONL schema."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateIdError(SchemaError):
    pass


@dataclass(frozen=True)
class ParaphraseCluster:
    id: str
    lang: str
    sentences: tuple[str, ...]

    @property
    def degenerate(self) -> bool:
        # fewer than 2 sentences: no source/reference pair can be formed
        return len(self.sentences) < 2


@dataclass(frozen=True)
class ParaphrasePair:
    id: str
    lang: str
    source: str
    references: tuple[str, ...]


@dataclass
class DatasetManifest:
    """Everything needed to replay a pipeline run."""

    seed: int
    split_fraction: float
    tagger: str
    counts: dict[str, int] = field(default_factory=dict)
    config_hash: str = ""
    created_at: str = ""

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must be in (0, 1)")
        if not self.created_at:
            self.created_at = datetime.now(timezone.utc).isoformat()

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "split_fraction": self.split_fraction,
            "tagger": self.tagger,
            "counts": dict(sorted(self.counts.items())),
            "config_hash": self.config_hash,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DatasetManifest":
        return cls(
            seed=d["seed"],
            split_fraction=d["split_fraction"],
            tagger=d["tagger"],
            counts=dict(d.get("counts", {})),
            config_hash=d.get("config_hash", ""),
            created_at=d.get("created_at", ""),
        )


def canonical_json(obj) -> str:
    """Stable single-line JSON used for every emitted record."""
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def config_digest(config: Mapping) -> str:
    blob = json.dumps(config, ensure_ascii=False, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def derive_rng(seed: int, *parts: str) -> random.Random:
    """Independent RNG stream keyed by (seed, *parts)."""
    h = hashlib.sha256()
    h.update(str(seed).encode("utf-8"))
    for part in parts:
        h.update(b"\x00")
        h.update(part.encode("utf-8"))
    return random.Random(int.from_bytes(h.digest()[:8], "big"))


def _require(record: Mapping, key: str, kind, line: int):
    if key not in record:
        raise SchemaError(f"missing field {key!r}", line)
    value = record[key]
    if not isinstance(value, kind):
        raise SchemaError(f"field {key!r} must be {kind.__name__}", line)
    return value


def iter_jsonl(fp: TextIO):
    for line_no, line in enumerate(fp, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON ({exc.msg})", line_no) from exc
        if not isinstance(record, dict):
            raise SchemaError("record must be a JSON object", line_no)
        yield line_no, record


def ingest_clusters(fp: TextIO) -> list[ParaphraseCluster]:
    """Parse clusters.jsonl; single-sentence clusters are kept but are
    reported degenerate (unusable for reference-overlap tagging)."""
    clusters: list[ParaphraseCluster] = []
    seen: set[str] = set()
    for line_no, record in iter_jsonl(fp):
        cid = _require(record, "id", str, line_no)
        lang = _require(record, "lang", str, line_no)
        sentences = _require(record, "sentences", list, line_no)
        if not sentences or not all(isinstance(s, str) and s for s in sentences):
            raise SchemaError("'sentences' must be a non-empty list of non-empty strings", line_no)
        if cid in seen:
            raise DuplicateIdError(f"duplicate id {cid!r}", line_no)
        seen.add(cid)
        clusters.append(ParaphraseCluster(id=cid, lang=lang, sentences=tuple(sentences)))
    return clusters


def ingest_pairs(fp: TextIO) -> list[ParaphrasePair]:
    pairs: list[ParaphrasePair] = []
    seen: set[str] = set()
    for line_no, record in iter_jsonl(fp):
        pid = _require(record, "id", str, line_no)
        lang = _require(record, "lang", str, line_no)
        source = _require(record, "source", str, line_no)
        references = _require(record, "references", list, line_no)
        if not references or not all(isinstance(r, str) and r for r in references):
            raise SchemaError("'references' must be a non-empty list of non-empty strings", line_no)
        if pid in seen:
            raise DuplicateIdError(f"duplicate id {pid!r}", line_no)
        seen.add(pid)
        pairs.append(ParaphrasePair(id=pid, lang=lang, source=source, references=tuple(references)))
    return pairs


def cluster_to_dict(c: ParaphraseCluster) -> dict:
    return {"id": c.id, "lang": c.lang, "sentences": list(c.sentences)}


def pair_to_dict(p: ParaphrasePair) -> dict:
    return {"id": p.id, "lang": p.lang, "source": p.source, "references": list(p.references)}


def make_pairs(clusters: Iterable[ParaphraseCluster], seed: int) -> list[ParaphrasePair]:
    """One pair per usable cluster: a uniformly chosen source sentence,
    the rest references. The choice is keyed by (seed, cluster id), so
    the result does not depend on cluster order."""
    pairs = []
    for cluster in clusters:
        if cluster.degenerate:
            continue
        rng = derive_rng(seed, "source-choice", cluster.id)
        idx = rng.randrange(len(cluster.sentences))
        references = cluster.sentences[:idx] + cluster.sentences[idx + 1 :]
        pairs.append(
            ParaphrasePair(
                id=cluster.id,
                lang=cluster.lang,
                source=cluster.sentences[idx],
                references=references,
            )
        )
    return pairs


def _round_half_up(x: float) -> int:
    return int(x + 0.5)


def split_ids(ids: Sequence[str], fraction: float, seed: int) -> tuple[set[str], set[str]]:
    """Seeded shuffle partition of unique ids; |train| = round(fraction*N)."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    ordered = sorted(set(ids))
    derive_rng(seed, "split").shuffle(ordered)
    n_train = _round_half_up(fraction * len(ordered))
    return set(ordered[:n_train]), set(ordered[n_train:])


def split(items: Sequence, fraction: float, seed: int, key: Callable = None) -> tuple[list, list]:
    """Partition items into (train, test) by seeded shuffle of their ids.

    `key` extracts the split unit id (defaults to `.id`); items sharing
    a key always land on the same side, preventing same-meaning leakage.
    """
    key = key or (lambda item: item.id)
    train_ids, _ = split_ids([key(item) for item in items], fraction, seed)
    train = [item for item in items if key(item) in train_ids]
    test = [item for item in items if key(item) not in train_ids]
    return train, test


@dataclass
class EmissionReport:
    records: int = 0
    tagged_records: int = 0
    anchors_dropped: int = 0  # anchor/record combos absent on one side

    def to_dict(self) -> dict:
        return {
            "records": self.records,
            "tagged_records": self.tagged_records,
            "anchors_dropped": self.anchors_dropped,
        }


def emit_training_pairs(
    pairs: Iterable[ParaphrasePair],
    anchors_by_id: Mapping[str, Sequence[Sequence[str]]],
    open_marker: str = markup.OPEN_MARKER,
    close_marker: str = markup.CLOSE_MARKER,
) -> tuple[list[dict], EmissionReport]:
    """One record per (source, reference) combination, with each shared
    anchor marked on both sides. An anchor missing from either side is
    dropped from both (tags must point at the same text)."""
    report = EmissionReport()
    records: list[dict] = []
    for pair in pairs:
        profile = get_profile(pair.lang)
        anchors = [tuple(a) for a in anchors_by_id.get(pair.id, ())]
        source_tok = tokenize(pair.source, profile)
        for ref_index, reference in enumerate(pair.references):
            ref_tok = tokenize(reference, profile)
            src_ins = markup.insert_anchors(source_tok, anchors, pair.lang)
            ref_ins = markup.insert_anchors(ref_tok, anchors, pair.lang)
            unusable = set(src_ins.skipped) | set(ref_ins.skipped)
            shared = [a for a in anchors if tuple(a) not in unusable]
            report.anchors_dropped += len(set(map(tuple, anchors))) - len(set(map(tuple, shared)))
            src_tagged = markup.insert_anchors(source_tok, shared, pair.lang).tagged
            ref_tagged = markup.insert_anchors(ref_tok, shared, pair.lang).tagged
            records.append(
                {
                    "id": f"{pair.id}#{ref_index}",
                    "lang": pair.lang,
                    "source_tagged": markup.render_tagged(src_tagged, open_marker, close_marker),
                    "reference_tagged": markup.render_tagged(ref_tagged, open_marker, close_marker),
                    "anchors": [profile.join(a) for a in shared],
                }
            )
            report.records += 1
            report.tagged_records += 1 if shared else 0
    records.sort(key=lambda r: r["id"])
    return records, report


def base_id(record_id: str) -> str:
    """Pair/cluster id behind an emitted record id (strips the ``#k`` part)."""
    return record_id.split("#", 1)[0]


def write_jsonl(fp: TextIO, records: Iterable[Mapping]) -> int:
    n = 0
    for record in records:
        fp.write(canonical_json(record))
        fp.write("\n")
        n += 1
    return n
