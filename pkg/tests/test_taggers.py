import json
import random
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from helpers import brute_force_oracle, oracle_result_key
from paratag.corpus import ParaphrasePair
from paratag.taggers import (
    AnchorCandidate,
    AutoTagStub,
    BackendUnavailableError,
    GazetteerBackend,
    HttpTagBackend,
    InsufficientReferencesError,
    OracleConfig,
    OracleRejection,
    ProtocolError,
    REJECT_OVERLAP,
    TaggerReport,
    auto_tag,
    build_common_ngram_set,
    label_runs,
    ner_anchors,
    oracle_anchors,
    tag_many,
)
from paratag.textcore import tokenize


def pair(source, refs, pid="p", lang="en"):
    return ParaphrasePair(id=pid, lang=lang, source=source, references=tuple(refs))


# --------------------------------------------------------------------------- common n-grams


def test_common_ngrams_uniform_corpus_empty():
    corpus = [("a", "b"), ("c", "d"), ("e", "f")]  # every n-gram appears once
    assert build_common_ngram_set(corpus, n_max=2, quantile=0.001) == frozenset()


def test_common_ngrams_repeated_phrase_captured():
    corpus = [("how", "do", "i")] * 50
    got = build_common_ngram_set(corpus, n_max=3, quantile=1.0)
    assert {("how", "do"), ("do", "i"), ("how", "do", "i")} <= got


def test_common_ngrams_unigrams_only():
    corpus = [("how", "do", "i")] * 50
    got = build_common_ngram_set(corpus, n_max=1, quantile=1.0)
    assert got == frozenset({("how",), ("do",), ("i",)})


def test_common_ngrams_tie_at_cutoff_excluded():
    # counts: x:3, y:2, z:2 -> with quantile allowing one gram, the tied
    # pair below must not slip in
    corpus = [("x",)] * 3 + [("y",)] * 2 + [("z",)] * 2
    got = build_common_ngram_set(corpus, n_max=1, quantile=0.34)
    assert got == frozenset({("x",)})


def test_common_ngrams_empty_corpus():
    assert build_common_ngram_set([], 3, 0.5) == frozenset()


# --------------------------------------------------------------------------- oracle mining


def test_oracle_bicycle_cluster(en):
    # expected set derived with the brute-force miner below
    p = pair(
        "a man riding a red bicycle in beijing",
        [
            "a person rides his red bicycle through beijing",
            "someone on a red bicycle in beijing",
        ],
    )
    cfg = OracleConfig(min_ref_support=2)
    got = oracle_anchors(p, cfg, en)
    assert {c.tokens for c in got} == {("red", "bicycle"), ("beijing",)}
    assert all(c.support == 2 for c in got)
    assert oracle_result_key(got) == oracle_result_key(
        brute_force_oracle(p.source, list(p.references), cfg, en)
    )


def test_oracle_single_reference_rejected(en):
    with pytest.raises(InsufficientReferencesError):
        oracle_anchors(pair("what is this", ["what is this"]), OracleConfig(), en)


def test_oracle_near_duplicates_rejected(en):
    p = pair(
        "how do i cook fluffy rice",
        ["how do i cook fluffy rice", "how do i cook fluffy rice ?"],
    )
    got = oracle_anchors(p, OracleConfig(), en)
    assert isinstance(got, OracleRejection)
    assert got.reason == REJECT_OVERLAP
    assert got.coverage > 0.5


def test_oracle_common_ngram_filter(en):
    p = pair(
        "visit the great wall today",
        ["see the great wall today", "walk the great wall today"],
    )
    plain = oracle_anchors(p, OracleConfig(max_coverage=1.0), en)
    assert ("great", "wall") in {c.tokens for c in plain} or any(
        "wall" in c.tokens for c in plain
    )
    common = frozenset({("today",)})
    filtered = oracle_anchors(p, OracleConfig(max_coverage=1.0), en, common)
    assert ("today",) not in {c.tokens for c in filtered}


def test_oracle_stopword_only_candidates_dropped(en):
    p = pair("in the house", ["in the garden", "in the car"])
    got = oracle_anchors(p, OracleConfig(), en)
    assert got == []  # "in the" is shared but carries no content


def test_oracle_support_threshold(en):
    p = pair("blue whale swims", ["blue whale dives", "a whale sleeps", "whale blue skies"])
    got2 = oracle_anchors(p, OracleConfig(min_ref_support=2, max_coverage=1.0), en)
    assert {c.tokens for c in got2} == {("blue",), ("whale",)}
    got3 = oracle_anchors(p, OracleConfig(min_ref_support=3, max_coverage=1.0), en)
    assert {c.tokens for c in got3} == {("whale",)}


def test_oracle_anchor_invariants_random(en):
    rng = random.Random(99)
    vocab = ["the", "a", "of", "in", "and"] + [f"w{i}" for i in range(25)]
    cfg = OracleConfig()
    for _ in range(150):
        from helpers import random_cluster

        source, refs = random_cluster(rng, vocab)
        if len(refs) < 2:
            continue
        p = pair(source, refs)
        got = oracle_anchors(p, cfg, en)
        if isinstance(got, OracleRejection):
            continue
        src_norms = tokenize(source, en).norms
        ref_norms = [tokenize(r, en).norms for r in refs]
        for cand in got:
            # verbatim in source and in >= min_ref_support references
            from helpers import contains

            assert contains(src_norms, cand.tokens)
            assert sum(1 for r in ref_norms if contains(r, cand.tokens)) >= cfg.min_ref_support
        for cand in got:
            for other in got:
                if cand.tokens != other.tokens:
                    from helpers import contains

                    assert not (
                        len(other.tokens) > len(cand.tokens)
                        and contains(other.tokens, cand.tokens)
                    )


def test_oracle_matches_brute_force_random(en):
    rng = random.Random(4242)
    vocab = ["the", "a", "of", "in", "and"] + [f"w{i}" for i in range(25)]
    cfg = OracleConfig()
    corpus = []
    cases = []
    for _ in range(120):
        from helpers import random_cluster

        source, refs = random_cluster(rng, vocab)
        cases.append((source, refs))
        corpus.append(tokenize(source, en).norms)
        corpus.extend(tokenize(r, en).norms for r in refs)
    common = build_common_ngram_set(corpus, cfg.common_ngram_max_n, 0.01)
    for source, refs in cases:
        p = pair(source, refs)
        got = oracle_anchors(p, cfg, en, common)
        want = brute_force_oracle(source, refs, cfg, en, common)
        assert oracle_result_key(got) == oracle_result_key(want)


# --------------------------------------------------------------------------- gazetteer


def test_gazetteer_basic_match(en):
    backend = GazetteerBackend(["New York"], en)
    sent = tokenize("cheap hotels in new york", en)
    got = ner_anchors(sent, backend, "en")
    assert got == [AnchorCandidate(tokens=("new", "york"), support=0)]


def test_gazetteer_no_hits(en):
    backend = GazetteerBackend(["paris"], en)
    assert ner_anchors(tokenize("nothing to see", en), backend, "en") == []


def test_gazetteer_longest_match_wins(en):
    backend = GazetteerBackend(["new york", "york"], en)
    got = ner_anchors(tokenize("i love new york", en), backend, "en")
    assert [c.tokens for c in got] == [("new", "york")]
    got = ner_anchors(tokenize("york is old", en), backend, "en")
    assert [c.tokens for c in got] == [("york",)]


def test_gazetteer_empty_returns_nothing(en):
    backend = GazetteerBackend([], en)
    for text in ("a b c", "new york", ""):
        assert ner_anchors(tokenize(text, en), backend, "en") == []


def test_gazetteer_from_file(tmp_path, en):
    path = tmp_path / "entities.txt"
    path.write_text("# places\nNew York\nBeijing\n\n", encoding="utf-8")
    backend = GazetteerBackend.from_file(path, en)
    assert len(backend) == 2


def test_gazetteer_repeated_mentions(en):
    backend = GazetteerBackend(["beijing"], en)
    got = ner_anchors(tokenize("beijing loves beijing", en), backend, "en")
    assert len(got) == 2


# --------------------------------------------------------------------------- wire protocol


class _Handler(BaseHTTPRequestHandler):
    behavior = "anchor-all"
    fail_remaining = 0

    def do_POST(self):
        cls = type(self)
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if cls.fail_remaining > 0:
            cls.fail_remaining -= 1
            self.send_response(503)
            self.end_headers()
            return
        if cls.behavior == "malformed":
            payload = {"labels": ["O"]}  # wrong length
        elif cls.behavior == "garbage":
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.end_headers()
            self.wfile.write(b"not json")
            return
        elif cls.behavior == "first-token":
            labels = ["ANCHOR"] + ["O"] * (len(body["tokens"]) - 1)
            payload = {"labels": labels}
        else:
            payload = {"labels": ["ANCHOR"] * len(body["tokens"])}
        data = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture()
def tag_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _Handler.behavior = "anchor-all"
    _Handler.fail_remaining = 0
    yield f"http://127.0.0.1:{server.server_port}/tag"
    server.shutdown()


def test_http_backend_echo(tag_server, en):
    backend = HttpTagBackend(tag_server)
    got = ner_anchors(tokenize("hello brave world", en), backend, "en")
    assert [c.tokens for c in got] == [("hello", "brave", "world")]


def test_http_backend_partial_run(tag_server, en):
    _Handler.behavior = "first-token"
    backend = HttpTagBackend(tag_server)
    got = ner_anchors(tokenize("paris is nice", en), backend, "en")
    assert [c.tokens for c in got] == [("paris",)]


def test_http_backend_malformed_reply(tag_server, en):
    _Handler.behavior = "malformed"
    backend = HttpTagBackend(tag_server)
    with pytest.raises(ProtocolError):
        ner_anchors(tokenize("a b c", en), backend, "en")
    _Handler.behavior = "garbage"
    with pytest.raises(ProtocolError):
        ner_anchors(tokenize("a b c", en), backend, "en")


def test_http_backend_retries_then_succeeds(tag_server, en):
    _Handler.fail_remaining = 2
    backend = HttpTagBackend(tag_server, retries=3, backoff=0.01)
    got = ner_anchors(tokenize("a b", en), backend, "en")
    assert len(got) == 1


def test_http_backend_unavailable_after_retries(tag_server, en):
    _Handler.fail_remaining = 99
    backend = HttpTagBackend(tag_server, retries=3, backoff=0.01)
    with pytest.raises(BackendUnavailableError):
        ner_anchors(tokenize("a b", en), backend, "en")


def test_http_backend_unreachable(en):
    backend = HttpTagBackend("http://127.0.0.1:1/tag", retries=2, backoff=0.01, timeout=0.2)
    with pytest.raises(BackendUnavailableError):
        ner_anchors(tokenize("a", en), backend, "en")


def test_tag_many_preserves_order(tag_server, en):
    _Handler.behavior = "first-token"
    backend = HttpTagBackend(tag_server)
    sentences = [tokenize(f"word{i} trailing bits", en) for i in range(20)]
    results = tag_many(sentences, backend, "en", max_in_flight=4)
    assert [r[0].tokens for r in results] == [(f"word{i}",) for i in range(20)]


def test_label_runs():
    assert label_runs([]) == []
    assert label_runs(["O", "O"]) == []
    assert label_runs(["ANCHOR", "ANCHOR", "O", "ANCHOR"]) == [(0, 2), (3, 4)]
    assert label_runs(["ANCHOR"]) == [(0, 1)]


def test_auto_tag_stub(en):
    assert auto_tag(tokenize("anything at all", en), "en") == []
    assert AutoTagStub().spans(("a", "b"), "en") == []


def test_tagger_report_counts():
    report = TaggerReport()
    report.record_anchors([AnchorCandidate(("a",), 2), AnchorCandidate(("b", "c"), 3)])
    report.record_rejection(REJECT_OVERLAP)
    assert report.clusters_tagged + report.clusters_rejected == 2
    d = report.to_dict()
    assert d["rejection_reasons"] == {REJECT_OVERLAP: 1}
    assert d["anchor_length_histogram"] == {"1": 1, "2": 1}


def test_oracle_config_validation():
    with pytest.raises(ValueError):
        OracleConfig(min_ref_support=1)
    with pytest.raises(ValueError):
        OracleConfig(max_coverage=0.0)
    with pytest.raises(ValueError):
        OracleConfig(common_ngram_quantile=1.5)
