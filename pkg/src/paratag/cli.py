"""Command-line pipeline: ingest -> tag -> prepare -> eval, plus loss
utilities. Data flows over stdin/stdout (``-``) or files; logs go to
stderr. Exit codes: 0 success, 1 validation error, 2 I/O error."""

from __future__ import annotations

import argparse
import contextlib
import io
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import corpus, evaluate, losskernel, markup, taggers
from .textcore import get_profile, tokenize

log = logging.getLogger("paratag")

TAGGER_KINDS = ("none", "oracle", "ner", "auto")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    """All knobs for a reproducible run, loadable from one JSON file."""

    seed: int = 13
    split_fraction: float = 0.8
    lang: str | None = None  # overrides per-record language when set
    tagger: str = "none"
    oracle: taggers.OracleConfig = field(default_factory=taggers.OracleConfig)
    loss: losskernel.LossConfig = field(default_factory=lambda: losskernel.LossConfig(vocab_size=16))
    open_marker: str = markup.OPEN_MARKER
    close_marker: str = markup.CLOSE_MARKER
    gazetteer: str | None = None
    endpoint: str | None = None
    rouge_n: int = 2

    _SECTIONS = {
        "seed", "split_fraction", "lang", "tagger", "oracle", "loss",
        "markers", "gazetteer", "endpoint", "rouge_n",
    }

    @classmethod
    def from_file(cls, path: str) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fp:
            try:
                raw = json.load(fp)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        unknown = set(raw) - cls._SECTIONS
        if unknown:
            raise ConfigError(f"{path}: unknown config keys: {sorted(unknown)}")
        cfg = cls()
        for key in ("seed", "split_fraction", "lang", "tagger", "gazetteer", "endpoint", "rouge_n"):
            if key in raw:
                setattr(cfg, key, raw[key])
        try:
            if "oracle" in raw:
                cfg.oracle = taggers.OracleConfig(**raw["oracle"])
            if "loss" in raw:
                cfg.loss = losskernel.LossConfig(**raw["loss"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        markers = raw.get("markers", {})
        if markers:
            extra = set(markers) - {"open", "close"}
            if extra:
                raise ConfigError(f"{path}: unknown marker keys: {sorted(extra)}")
            cfg.open_marker = markers.get("open", cfg.open_marker)
            cfg.close_marker = markers.get("close", cfg.close_marker)
        if cfg.tagger not in TAGGER_KINDS:
            raise ConfigError(f"{path}: unknown tagger {cfg.tagger!r}")
        return cfg

    def tagger_loss_digest(self) -> str:
        """Hash over everything that shapes tagging and loss semantics."""
        return corpus.config_digest(
            {
                "tagger": self.tagger,
                "oracle": {
                    "min_ref_support": self.oracle.min_ref_support,
                    "max_coverage": self.oracle.max_coverage,
                    "common_ngram_quantile": self.oracle.common_ngram_quantile,
                    "common_ngram_max_n": self.oracle.common_ngram_max_n,
                },
                "loss": self.loss.to_dict(),
                "markers": {"open": self.open_marker, "close": self.close_marker},
            }
        )


def _apply_flag_overrides(cfg: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "split", None) is not None:
        cfg.split_fraction = args.split
    if getattr(args, "lang", None) is not None:
        cfg.lang = args.lang
    if getattr(args, "tagger", None) is not None:
        cfg.tagger = args.tagger
    if getattr(args, "gazetteer", None) is not None:
        cfg.gazetteer = args.gazetteer
    if getattr(args, "endpoint", None) is not None:
        cfg.endpoint = args.endpoint
    if getattr(args, "n", None) is not None:
        cfg.rouge_n = args.n
    oracle_updates = {}
    if getattr(args, "min_ref_support", None) is not None:
        oracle_updates["min_ref_support"] = args.min_ref_support
    if getattr(args, "max_coverage", None) is not None:
        oracle_updates["max_coverage"] = args.max_coverage
    if oracle_updates:
        cfg.oracle = replace(cfg.oracle, **oracle_updates)
    loss_updates = {}
    for flag, key in (
        ("w", "w"), ("epsilon", "epsilon"), ("vocab_size", "vocab_size"),
        ("indicator_mode", "indicator_mode"), ("smoothing_mode", "smoothing_mode"),
    ):
        if getattr(args, flag, None) is not None:
            loss_updates[key] = getattr(args, flag)
    if getattr(args, "exclude_anchor_positions", False):
        loss_updates["exclude_anchor_positions"] = True
    if loss_updates:
        cfg.loss = replace(cfg.loss, **loss_updates)
    return cfg


@contextlib.contextmanager
def _open_in(spec: str):
    if spec == "-":
        yield sys.stdin
    else:
        with open(spec, encoding="utf-8") as fp:
            yield fp


@contextlib.contextmanager
def _open_out(spec: str):
    if spec == "-":
        yield sys.stdout
    else:
        with open(spec, "w", encoding="utf-8") as fp:
            yield fp


def _write_json(path: str | None, payload: dict):
    text = json.dumps(payload, ensure_ascii=False, indent=2) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _manifest(cfg: PipelineConfig, counts: dict[str, int]) -> dict:
    return corpus.DatasetManifest(
        seed=cfg.seed,
        split_fraction=cfg.split_fraction,
        tagger=cfg.tagger,
        counts=counts,
        config_hash=cfg.tagger_loss_digest(),
    ).to_dict()


# --------------------------------------------------------------------------- commands


def cmd_ingest(cfg: PipelineConfig, args) -> int:
    with _open_in(args.input) as fp:
        if args.kind == "clusters":
            items = corpus.ingest_clusters(fp)
            records = [corpus.cluster_to_dict(c) for c in items]
            degenerate = sum(1 for c in items if c.degenerate)
            if degenerate:
                log.warning("%d degenerate cluster(s) with < 2 sentences", degenerate)
        else:
            items = corpus.ingest_pairs(fp)
            records = [corpus.pair_to_dict(p) for p in items]
    records.sort(key=lambda r: r["id"])
    with _open_out(args.output) as fp:
        corpus.write_jsonl(fp, records)
    if args.manifest:
        _write_json(args.manifest, _manifest(cfg, {args.kind: len(records)}))
    log.info("ingested %d %s", len(records), args.kind)
    return EXIT_OK


def _detect_and_load_pairs(fp, cfg: PipelineConfig) -> list[corpus.ParaphrasePair]:
    """Accept clusters.jsonl or pairs.jsonl; clusters get a seeded
    source choice first."""
    lines = fp.read().splitlines()
    probe = next((line for line in lines if line.strip()), None)
    if probe is None:
        return []
    try:
        head = json.loads(probe)
    except json.JSONDecodeError as exc:
        raise corpus.SchemaError(f"invalid JSON ({exc.msg})", 1) from exc
    text = "\n".join(lines)
    if isinstance(head, dict) and "sentences" in head:
        clusters = corpus.ingest_clusters(io.StringIO(text))
        skipped = [c.id for c in clusters if c.degenerate]
        if skipped:
            log.warning("skipping %d degenerate cluster(s)", len(skipped))
        return corpus.make_pairs(clusters, cfg.seed)
    return corpus.ingest_pairs(io.StringIO(text))


def _anchors_for_pairs(
    pairs: list[corpus.ParaphrasePair], cfg: PipelineConfig
) -> tuple[dict[str, list[tuple[str, ...]]], taggers.TaggerReport]:
    report = taggers.TaggerReport()
    anchors_by_id: dict[str, list[tuple[str, ...]]] = {}

    if cfg.tagger == "none":
        for pair in pairs:
            anchors_by_id[pair.id] = []
            report.record_anchors([])
        return anchors_by_id, report

    if cfg.tagger == "oracle":
        sentences = []
        for pair in pairs:
            profile = get_profile(cfg.lang or pair.lang)
            sentences.append(tokenize(pair.source, profile).norms)
            sentences.extend(tokenize(r, profile).norms for r in pair.references)
        common = taggers.build_common_ngram_set(
            sentences, cfg.oracle.common_ngram_max_n, cfg.oracle.common_ngram_quantile
        )
        for pair in pairs:
            profile = get_profile(cfg.lang or pair.lang)
            try:
                outcome = taggers.oracle_anchors(pair, cfg.oracle, profile, common)
            except taggers.InsufficientReferencesError:
                report.record_rejection(taggers.REJECT_INSUFFICIENT_REFERENCES)
                anchors_by_id[pair.id] = []
                continue
            if isinstance(outcome, taggers.OracleRejection):
                report.record_rejection(outcome.reason)
                anchors_by_id[pair.id] = []
            else:
                report.record_anchors(outcome)
                anchors_by_id[pair.id] = [c.tokens for c in outcome]
        return anchors_by_id, report

    if cfg.tagger == "ner":
        if not cfg.gazetteer and not cfg.endpoint:
            raise ConfigError("ner tagging needs --gazetteer or --endpoint")
        if cfg.endpoint:
            backend = taggers.HttpTagBackend(cfg.endpoint)
        else:
            any_lang = cfg.lang or (pairs[0].lang if pairs else "en")
            backend = taggers.GazetteerBackend.from_file(cfg.gazetteer, get_profile(any_lang))
    else:  # auto
        backend = taggers.HttpTagBackend(cfg.endpoint) if cfg.endpoint else taggers.AutoTagStub()

    for pair in pairs:
        lang = cfg.lang or pair.lang
        sentence = tokenize(pair.source, get_profile(lang))
        candidates = taggers.ner_anchors(sentence, backend, lang)
        report.record_anchors(candidates)
        anchors_by_id[pair.id] = [c.tokens for c in candidates]
    return anchors_by_id, report


def cmd_tag(cfg: PipelineConfig, args) -> int:
    with _open_in(args.input) as fp:
        pairs = _detect_and_load_pairs(fp, cfg)
    anchors_by_id, report = _anchors_for_pairs(pairs, cfg)
    records, emission = corpus.emit_training_pairs(
        pairs, anchors_by_id, cfg.open_marker, cfg.close_marker
    )
    with _open_out(args.output) as fp:
        corpus.write_jsonl(fp, records)
    payload = {"tagger": cfg.tagger, **report.to_dict(), "emission": emission.to_dict()}
    if args.report:
        _write_json(args.report, payload)
    if args.manifest:
        _write_json(args.manifest, _manifest(cfg, {"tagged_pairs": len(records)}))
    log.info(
        "tagged %d pair(s) -> %d record(s), %d rejected",
        report.clusters_tagged, len(records), report.clusters_rejected,
    )
    return EXIT_OK


def cmd_prepare(cfg: PipelineConfig, args) -> int:
    with _open_in(args.input) as fp:
        records = [record for _, record in corpus.iter_jsonl(fp)]
    for record in records:
        if "id" not in record:
            raise corpus.SchemaError("record missing 'id'")
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    # split on the pair id so all references of a pair stay together
    train, test = corpus.split(
        records, cfg.split_fraction, cfg.seed, key=lambda r: corpus.base_id(r["id"])
    )
    train.sort(key=lambda r: r["id"])
    test.sort(key=lambda r: r["id"])
    with open(outdir / "train.jsonl", "w", encoding="utf-8") as fp:
        corpus.write_jsonl(fp, train)
    with open(outdir / "test.jsonl", "w", encoding="utf-8") as fp:
        corpus.write_jsonl(fp, test)
    counts = {"train": len(train), "test": len(test)}
    _write_json(str(outdir / "manifest.json"), _manifest(cfg, counts))
    log.info("prepared %(train)d train / %(test)d test records", counts)
    return EXIT_OK


def cmd_eval(cfg: PipelineConfig, args) -> int:
    records = []
    with _open_in(args.input) as fp:
        for line_no, raw in corpus.iter_jsonl(fp):
            records.append(evaluate.EvalRecord.from_dict(raw, line_no))
    eval_cfg = evaluate.EvalConfig(
        n=cfg.rouge_n, open_marker=cfg.open_marker, close_marker=cfg.close_marker
    )
    report = evaluate.evaluate(records, eval_cfg)
    _write_json(args.output, report.to_dict())
    log.info("evaluated %d record(s)", report.records)
    return EXIT_OK


def cmd_loss_golden(cfg: PipelineConfig, args) -> int:
    losskernel.emit_golden_vectors(args.output, cfg.seed, args.count, cfg.loss)
    log.info("wrote %d golden case(s) to %s", args.count, args.output)
    return EXIT_OK


def cmd_loss_check(cfg: PipelineConfig, args) -> int:
    result = losskernel.check_golden(args.golden)
    _write_json(args.output, result.to_dict())
    if not result.ok:
        log.error("golden check failed on %d case(s)", len(result.failures))
        return EXIT_VALIDATION
    return EXIT_OK


# --------------------------------------------------------------------------- wiring


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit(2); 2 means I/O here
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _add_common(parser):
    parser.add_argument("--config", help="pipeline config JSON")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--lang", help="override per-record language")
    parser.add_argument("-q", "--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="paratag", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and canonicalize a dataset")
    _add_common(p)
    p.add_argument("--kind", choices=("clusters", "pairs"), required=True)
    p.add_argument("-i", "--input", default="-")
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("tag", help="mine anchors and emit tagged training pairs")
    _add_common(p)
    p.add_argument("--tagger", choices=TAGGER_KINDS)
    p.add_argument("-i", "--input", default="-")
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--report", help="tagger report JSON path")
    p.add_argument("--manifest")
    p.add_argument("--min-ref-support", type=int, dest="min_ref_support")
    p.add_argument("--max-coverage", type=float, dest="max_coverage")
    p.add_argument("--gazetteer", help="entity list file for the ner tagger")
    p.add_argument("--endpoint", help="token-tagging service URL")
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("prepare", help="seeded train/test split of tagged pairs")
    _add_common(p)
    p.add_argument("-i", "--input", default="-")
    p.add_argument("-o", "--outdir", required=True)
    p.add_argument("--split", type=float, help="train fraction in (0,1)")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("eval", help="score generated paraphrases")
    _add_common(p)
    p.add_argument("-i", "--input", default="-")
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--n", type=int, help="n-gram order (default 2)")
    p.set_defaults(func=cmd_eval)

    p_loss = sub.add_parser("loss", help="loss-kernel utilities")
    loss_sub = p_loss.add_subparsers(dest="loss_command", required=True)

    p = loss_sub.add_parser("golden", help="emit golden loss/gradient vectors")
    _add_common(p)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--vocab-size", type=int, dest="vocab_size")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--w", type=float)
    p.add_argument("--indicator-mode", choices=(losskernel.INDICATOR_SOURCE_POSITION,
                                                losskernel.INDICATOR_EQUAL_TOKEN),
                   dest="indicator_mode")
    p.add_argument("--smoothing-mode", choices=(losskernel.SMOOTHING_FULL_VOCAB,
                                                losskernel.SMOOTHING_KL_UNIFORM),
                   dest="smoothing_mode")
    p.add_argument("--exclude-anchor-positions", action="store_true",
                   dest="exclude_anchor_positions")
    p.set_defaults(func=cmd_loss_golden)

    p = loss_sub.add_parser("check", help="verify a golden vector file")
    _add_common(p)
    p.add_argument("--golden", required=True)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_loss_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits for usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_VALIDATION
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
        cfg = _apply_flag_overrides(cfg, args)
        return args.func(cfg, args)
    except (ConfigError, corpus.SchemaError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
