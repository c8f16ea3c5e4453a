import io
import json

import pytest
from hypothesis import given, strategies as st

from paratag import markup
from paratag.corpus import (
    DatasetManifest,
    DuplicateIdError,
    ParaphrasePair,
    SchemaError,
    canonical_json,
    emit_training_pairs,
    ingest_clusters,
    ingest_pairs,
    iter_jsonl,
    make_pairs,
    split,
    split_ids,
)


def clusters_io(rows):
    return io.StringIO("\n".join(json.dumps(r) for r in rows) + "\n")


def test_ingest_single_cluster_five_captions():
    rows = [{"id": "img1", "lang": "en", "sentences": [f"caption {i}" for i in range(5)]}]
    clusters = ingest_clusters(clusters_io(rows))
    assert len(clusters) == 1
    assert len(clusters[0].sentences) == 5
    assert not clusters[0].degenerate


def test_ingest_degenerate_cluster_flagged():
    rows = [{"id": "x", "lang": "en", "sentences": ["only one"]}]
    clusters = ingest_clusters(clusters_io(rows))
    assert clusters[0].degenerate


def test_ingest_malformed_line_reports_number():
    text = '{"id": "a", "lang": "en", "sentences": ["x", "y"]}\n\n{"id": "b", "lang": "en"'
    with pytest.raises(SchemaError) as err:
        ingest_clusters(io.StringIO(text))
    assert err.value.line == 3


def test_ingest_duplicate_id():
    rows = [
        {"id": "a", "lang": "en", "sentences": ["x", "y"]},
        {"id": "a", "lang": "en", "sentences": ["z", "w"]},
    ]
    with pytest.raises(DuplicateIdError):
        ingest_clusters(clusters_io(rows))


def test_ingest_rejects_bad_fields():
    with pytest.raises(SchemaError):
        ingest_clusters(clusters_io([{"id": "a", "lang": "en", "sentences": []}]))
    with pytest.raises(SchemaError):
        ingest_clusters(clusters_io([{"id": "a", "lang": "en", "sentences": ["ok", 3]}]))
    with pytest.raises(SchemaError):
        ingest_clusters(clusters_io([{"id": 7, "lang": "en", "sentences": ["x", "y"]}]))
    with pytest.raises(SchemaError):
        iter_jsonl(io.StringIO("[1, 2]\n")).__next__()


def test_ingest_pairs():
    rows = [{"id": "p", "lang": "en", "source": "s", "references": ["r1", "r2"]}]
    pairs = ingest_pairs(io.StringIO("\n".join(json.dumps(r) for r in rows)))
    assert pairs[0].references == ("r1", "r2")
    with pytest.raises(SchemaError):
        ingest_pairs(io.StringIO('{"id": "p", "lang": "en", "source": "s", "references": []}'))


def make_clusters(sizes):
    rows = []
    for i, size in enumerate(sizes):
        rows.append(
            {"id": f"c{i}", "lang": "en", "sentences": [f"c{i} s{j}" for j in range(size)]}
        )
    return ingest_clusters(clusters_io(rows))


def test_make_pairs_cardinality():
    clusters = make_clusters([2, 5])
    pairs = make_pairs(clusters, seed=7)
    assert len(pairs[0].references) == 1
    assert len(pairs[1].references) == 4
    # the chosen source never appears among the references
    for pair, cluster in zip(pairs, clusters):
        assert pair.source not in pair.references
        assert set(pair.references) | {pair.source} == set(cluster.sentences)


def test_make_pairs_deterministic_and_order_free():
    clusters = make_clusters([4, 4, 4])
    first = make_pairs(clusters, seed=13)
    second = make_pairs(list(reversed(clusters)), seed=13)
    assert {p.id: p.source for p in first} == {p.id: p.source for p in second}
    assert first == make_pairs(clusters, seed=13)


def test_make_pairs_skips_degenerate():
    clusters = make_clusters([1, 3])
    pairs = make_pairs(clusters, seed=1)
    assert [p.id for p in pairs] == ["c1"]


def test_make_pairs_seed_sensitivity():
    clusters = make_clusters([5])
    sources = {make_pairs(clusters, seed=s)[0].source for s in range(40)}
    assert len(sources) > 1  # different seeds reach different choices
    for s in range(40):
        assert len(make_pairs(clusters, seed=s)[0].references) == 4


def test_split_80_20():
    pairs = [ParaphrasePair(id=f"p{i}", lang="en", source="s", references=("r",)) for i in range(10)]
    train, test = split(pairs, 0.8, seed=13)
    assert len(train) == 8 and len(test) == 2
    assert {p.id for p in train} | {p.id for p in test} == {p.id for p in pairs}


def test_split_degenerate_single_item():
    pairs = [ParaphrasePair(id="only", lang="en", source="s", references=("r",))]
    train, test = split(pairs, 0.8, seed=13)
    assert len(train) == 1 and len(test) == 0


def test_split_deterministic():
    ids = [f"p{i}" for i in range(50)]
    assert split_ids(ids, 0.8, 13) == split_ids(list(reversed(ids)), 0.8, 13)
    assert split_ids(ids, 0.8, 13) != split_ids(ids, 0.8, 14)


def test_split_rejects_bad_fraction():
    with pytest.raises(ValueError):
        split_ids(["a"], 0.0, 1)
    with pytest.raises(ValueError):
        split_ids(["a"], 1.0, 1)


@given(
    st.integers(min_value=0, max_value=60),
    st.floats(min_value=0.05, max_value=0.95),
    st.integers(min_value=0, max_value=2**32),
)
def test_split_partition_property(n, fraction, seed):
    ids = [f"i{k}" for k in range(n)]
    train, test = split_ids(ids, fraction, seed)
    assert train | test == set(ids)
    assert not (train & test)
    assert len(train) == int(fraction * n + 0.5)


def pair(pid, source, refs, lang="en"):
    return ParaphrasePair(id=pid, lang=lang, source=source, references=tuple(refs))


def test_emit_shared_anchor_both_sides():
    p = pair("q1", "What are cheap lodging options in Beijing?",
             ["I'm looking for cheap hotels in Beijing?"])
    records, report = emit_training_pairs([p], {"q1": [("beijing",)]})
    assert len(records) == 1
    rec = records[0]
    assert "<tag> Beijing </tag>" in rec["source_tagged"]
    assert "<tag> Beijing </tag>" in rec["reference_tagged"]
    assert rec["anchors"] == ["beijing"]
    assert report.tagged_records == 1 and report.anchors_dropped == 0


def test_emit_drops_anchor_absent_in_reference():
    p = pair("q1", "hotels in beijing", ["lodging somewhere else"])
    records, report = emit_training_pairs([p], {"q1": [("beijing",)]})
    rec = records[0]
    assert "<tag>" not in rec["source_tagged"]
    assert "<tag>" not in rec["reference_tagged"]
    assert rec["anchors"] == []
    assert report.anchors_dropped == 1


def test_emit_no_anchors_plain_pair():
    p = pair("q1", "a b", ["c d"])
    records, report = emit_training_pairs([p], {})
    assert records[0]["source_tagged"] == "a b"
    assert records[0]["reference_tagged"] == "c d"
    assert report.tagged_records == 0


def test_emit_all_reference_combinations_sorted():
    p = pair("q1", "src here", ["ref one", "ref two", "ref three"])
    records, _ = emit_training_pairs([p], {})
    assert [r["id"] for r in records] == ["q1#0", "q1#1", "q1#2"]


def test_emitted_records_parse_back_with_identical_anchors(en):
    p = pair("q1", "the red bicycle rides in beijing",
             ["a red bicycle tour of beijing"])
    records, _ = emit_training_pairs([p], {"q1": [("red", "bicycle"), ("beijing",)]})
    rec = records[0]
    src = markup.parse_tagged(rec["source_tagged"], en)
    ref = markup.parse_tagged(rec["reference_tagged"], en)
    assert set(src.anchor_norms()) == set(ref.anchor_norms()) == {("red", "bicycle"), ("beijing",)}


def test_manifest_round_trip_and_validation():
    m = DatasetManifest(seed=13, split_fraction=0.8, tagger="oracle",
                        counts={"train": 8, "test": 2}, config_hash="deadbeef")
    d = m.to_dict()
    assert d["created_at"]
    again = DatasetManifest.from_dict(d)
    assert again.to_dict() == d
    with pytest.raises(ValueError):
        DatasetManifest(seed=1, split_fraction=1.5, tagger="none")


def test_canonical_json_stable_and_unicode():
    rec = {"id": "a", "text": "补肾"}
    assert canonical_json(rec) == '{"id": "a", "text": "补肾"}'
