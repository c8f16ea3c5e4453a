"""Trainer command line: toy-corpus generation, loss parity checks,
paraphraser training, decoding, and the token-tagging service."""

from __future__ import annotations

import argparse
import json
import logging
import sys

log = logging.getLogger("paratrainer")


def cmd_toy_corpus(args) -> int:
    from .toycorpus import write_clusters

    count = write_clusters(args.output, args.clusters, args.seed)
    log.info("wrote %d clusters to %s", count, args.output)
    return 0


def cmd_check_loss(args) -> int:
    from .lossfn import check_golden_file

    report = check_golden_file(args.golden)
    payload = {
        "cases": report.cases,
        "max_total_abs_err": report.max_total_err,
        "max_grad_abs_err": report.max_grad_err,
        "ok": report.ok,
        "failures": report.failures,
    }
    print(json.dumps(payload, indent=2))
    return 0 if report.ok else 1


def cmd_train(args) -> int:
    from .train import TrainRun, train_paraphraser

    model_config = {}
    if args.d_model:
        model_config["d_model"] = args.d_model
    run = TrainRun(
        train_path=args.train,
        test_path=args.test,
        outdir=args.outdir,
        model=args.model,
        epsilon=args.epsilon,
        w=args.w,
        indicator_mode=args.indicator_mode,
        seed=args.seed,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        model_config=model_config,
        golden_path=args.golden,
        manifest_path=args.manifest,
        eval_anchor_source=args.eval_anchor_source,
        tagger=args.tagger,
    )
    result = train_paraphraser(run)
    log.info("checkpoint: %s", result.checkpoint)
    log.info("eval input: %s", result.eval_input_path)
    for sample in result.samples:
        log.info("sample %s -> %s", sample["source_tagged"], sample["generated"][0])
    return 0


def cmd_generate(args) -> int:
    from .train import generate_from_checkpoint

    if args.input == "-":
        sources = [line.strip() for line in sys.stdin if line.strip()]
    else:
        with open(args.input, encoding="utf-8") as fp:
            sources = [line.strip() for line in fp if line.strip()]
    for text in generate_from_checkpoint(args.checkpoint, args.vocab, sources,
                                         max_len=args.max_len):
        print(text)
    return 0


def cmd_train_tagger(args) -> int:
    from .tagger import DataFloorError, read_tagged_sources, train_auto_tagger

    sources = read_tagged_sources(args.input)
    try:
        outcome = train_auto_tagger(
            sources, min_sources=args.min_sources, epochs=args.epochs, seed=args.seed
        )
    except DataFloorError as exc:
        log.error("%s", exc)
        return 1
    outcome.bundle.save(args.outdir)
    log.info("trained on %d sources, held-out anchor F1 %.4f",
             outcome.sources, outcome.heldout_f1)
    print(json.dumps({"sources": outcome.sources, "heldout_f1": outcome.heldout_f1}))
    return 0


def cmd_serve_tagger(args) -> int:
    from .serve import TaggingService
    from .tagger import TaggerBundle

    service = TaggingService(TaggerBundle.load(args.model_dir), port=args.port)
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        service.stop()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paratrainer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toy-corpus", help="write the synthetic cluster corpus")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--clusters", type=int, default=1250)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_toy_corpus)

    p = sub.add_parser("check-loss", help="verify loss parity against golden vectors")
    p.add_argument("--golden", required=True)
    p.set_defaults(func=cmd_check_loss)

    p = sub.add_parser("train", help="train a paraphraser on tagged pairs")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("-o", "--outdir", required=True)
    p.add_argument("--model", default="toy")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--w", type=float, default=0.3)
    p.add_argument("--indicator-mode", default="source-position",
                   choices=("source-position", "equal-token"), dest="indicator_mode")
    p.add_argument("--seed", type=int, default=13)
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--batch-size", type=int, default=64, dest="batch_size")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--d-model", type=int, dest="d_model")
    p.add_argument("--golden", help="golden vectors; loss parity gate")
    p.add_argument("--manifest", help="pipeline manifest; config-hash gate")
    p.add_argument("--eval-anchor-source", dest="eval_anchor_source",
                   help="tagged test.jsonl whose sources carry the anchors to score against")
    p.add_argument("--tagger", default="oracle",
                   help="tagger recorded in the manifest being consumed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="decode tagged sources with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("-i", "--input", default="-")
    p.add_argument("--max-len", type=int, default=24, dest="max_len")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train-tagger", help="train the token classifier on tagged pairs")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--outdir", required=True)
    p.add_argument("--min-sources", type=int, default=200, dest="min_sources")
    p.add_argument("--epochs", type=int, default=8)
    p.add_argument("--seed", type=int, default=13)
    p.set_defaults(func=cmd_train_tagger)

    p = sub.add_parser("serve-tagger", help="serve a trained tagger over HTTP")
    p.add_argument("--model-dir", required=True, dest="model_dir")
    p.add_argument("--port", type=int, default=8317)
    p.set_defaults(func=cmd_serve_tagger)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
