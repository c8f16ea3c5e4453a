import json
import urllib.error
import urllib.request

import pytest

from pipeline_util import run_pipeline
from paratrainer.serve import TaggingService
from paratrainer.tagger import (
    DataFloorError,
    TaggerBundle,
    TokenTagger,
    anchor_f1,
    parse_labeled_tokens,
    read_tagged_sources,
    train_auto_tagger,
)
from paratrainer.toycorpus import ORACLE_MIN_REF_SUPPORT, write_clusters
from paratrainer.vocab import Vocab


def test_parse_labeled_tokens():
    tokens, labels = parse_labeled_tokens("go to <tag> green harbor </tag> now")
    assert tokens == ["go", "to", "green", "harbor", "now"]
    assert labels == ["O", "O", "ANCHOR", "ANCHOR", "O"]
    tokens, labels = parse_labeled_tokens("no markers here")
    assert labels == ["O", "O", "O"]


def test_anchor_f1():
    gold = [["O", "ANCHOR", "ANCHOR"]]
    assert anchor_f1(gold, gold) == 1.0
    assert anchor_f1(gold, [["O", "O", "O"]]) == 0.0
    assert anchor_f1(gold, [["ANCHOR", "ANCHOR", "ANCHOR"]]) == pytest.approx(0.8)


def test_data_floor_refusal():
    sources = [f"<tag> w{i} </tag> fixed tail" for i in range(50)]
    with pytest.raises(DataFloorError, match="50 distinct"):
        train_auto_tagger(sources, min_sources=200)


@pytest.fixture(scope="module")
def learnable_corpus(tmp_path_factory):
    """Oracle-tagged pairs over the deterministic-slots corpus, where
    anchor-hood is perfectly predictable from the neighboring words."""
    root = tmp_path_factory.mktemp("tagger_corpus")
    clusters = root / "clusters.jsonl"
    write_clusters(clusters, 800, seed=23, deterministic_slots=True)
    tagged = root / "tagged.jsonl"
    run_pipeline("tag", "--tagger", "oracle", "--seed", 13,
                 "--min-ref-support", ORACLE_MIN_REF_SUPPORT,
                 "-i", clusters, "-o", tagged, "-q")
    return tagged


def test_learned_tagger_f1_on_learnable_scheme(learnable_corpus):
    sources = read_tagged_sources(learnable_corpus)
    outcome = train_auto_tagger(sources, min_sources=200, epochs=40, lr=2e-3, seed=13)
    assert outcome.sources >= 700
    assert outcome.heldout_f1 >= 0.99
    print(f"ACCEPTANCE PASS: learned tagger F1 {outcome.heldout_f1:.4f} "
          f"on {outcome.sources} sources")


def test_bundle_save_load_round_trip(tmp_path):
    vocab = Vocab.build(["alpha beta gamma"])
    bundle = TaggerBundle(model=TokenTagger(len(vocab)), vocab=vocab)
    labels = bundle.predict(["alpha", "beta"])
    bundle.save(tmp_path)
    again = TaggerBundle.load(tmp_path)
    assert again.predict(["alpha", "beta"]) == labels
    assert bundle.predict([]) == []


@pytest.fixture()
def service():
    vocab = Vocab.build(["some words to tag"])
    bundle = TaggerBundle(model=TokenTagger(len(vocab)), vocab=vocab)
    svc = TaggingService(bundle).start()
    yield svc
    svc.stop()


def post(url, payload):
    req = urllib.request.Request(
        url, data=json.dumps(payload).encode(), method="POST",
        headers={"Content-Type": "application/json"},
    )
    with urllib.request.urlopen(req, timeout=5) as resp:
        return resp.status, json.loads(resp.read())


def test_service_speaks_the_protocol(service):
    status, body = post(service.url, {"lang": "en", "tokens": ["some", "words", "to", "tag"]})
    assert status == 200
    assert set(body) == {"labels"}
    assert len(body["labels"]) == 4
    assert all(label in ("O", "ANCHOR") for label in body["labels"])
    status, body = post(service.url, {"lang": "en", "tokens": []})
    assert status == 200 and body["labels"] == []


def test_service_rejects_malformed_requests(service):
    with pytest.raises(urllib.error.HTTPError) as err:
        post(service.url, {"lang": "en"})
    assert err.value.code == 400
    with pytest.raises(urllib.error.HTTPError) as err:
        post(service.url, {"lang": "en", "tokens": "not a list"})
    assert err.value.code == 400


def test_service_health_endpoint(service):
    with urllib.request.urlopen(service.url, timeout=5) as resp:
        assert resp.status == 200


def test_trained_service_tags_anchors(learnable_corpus):
    sources = read_tagged_sources(learnable_corpus)
    outcome = train_auto_tagger(sources, min_sources=200, epochs=12, lr=2e-3, seed=5)
    svc = TaggingService(outcome.bundle).start()
    try:
        tokens, gold = parse_labeled_tokens(sources[0])
        status, body = post(svc.url, {"lang": "en", "tokens": tokens})
        assert status == 200
        assert len(body["labels"]) == len(tokens)
        f1 = anchor_f1([gold], [body["labels"]])
        assert f1 >= 0.5  # a trained bundle tags real anchors over HTTP
    finally:
        svc.stop()


def test_pipeline_consumes_service_as_auto_backend(learnable_corpus, tmp_path):
    """The data pipeline's `--tagger auto --endpoint` must be able to use
    a served model directly."""
    sources = read_tagged_sources(learnable_corpus)
    outcome = train_auto_tagger(sources, min_sources=200, epochs=12, lr=2e-3, seed=5)
    svc = TaggingService(outcome.bundle).start()
    try:
        plain, _ = parse_labeled_tokens(sources[0])
        pairs = tmp_path / "pairs.jsonl"
        pairs.write_text(json.dumps({
            "id": "p0", "lang": "en",
            "source": " ".join(plain),
            "references": [" ".join(plain)],
        }) + "\n")
        tagged_out = tmp_path / "tagged.jsonl"
        run_pipeline("tag", "--tagger", "auto", "--endpoint", svc.url,
                     "-i", pairs, "-o", tagged_out, "-q")
        record = json.loads(tagged_out.read_text().splitlines()[0])
        assert record["anchors"], "served tagger produced no anchors"
        assert "<tag>" in record["source_tagged"]
    finally:
        svc.stop()
