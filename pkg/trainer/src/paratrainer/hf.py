"""Optional adapter for fine-tuning a pretrained seq2seq model (e.g. a
multilingual BART/T5 family checkpoint) with the copy-penalized loss.

Kept behind a lazy import: it needs the `transformers` package and the
checkpoint weights to be available locally. The toy path covers all
desk-scale verification; this adapter exists so the same loss and data
plumbing scale up unchanged.
"""

from __future__ import annotations

import json
import logging
import random
from pathlib import Path

import torch

from .data import group_references, read_tagged_pairs
from .lossfn import LossSettings, copy_penalized_loss
from .vocab import CLOSE_MARKER, OPEN_MARKER

log = logging.getLogger(__name__)


def _load_pretrained(identifier: str):
    try:
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer
    except ImportError as exc:  # pragma: no cover
        raise RuntimeError("fine-tuning a pretrained model requires 'transformers'") from exc
    try:
        tokenizer = AutoTokenizer.from_pretrained(identifier)
        model = AutoModelForSeq2SeqLM.from_pretrained(identifier)
    except OSError as exc:
        raise RuntimeError(
            f"pretrained weights for {identifier!r} are not available locally: {exc}"
        ) from exc
    # markers must stay atomic; subword-splitting them breaks span semantics
    tokenizer.add_special_tokens(
        {"additional_special_tokens": [OPEN_MARKER, CLOSE_MARKER]}
    )
    model.resize_token_embeddings(len(tokenizer))
    return tokenizer, model


def finetune_pretrained(run):
    """Same contract as the toy path of `train_paraphraser`."""
    tokenizer, model = _load_pretrained(run.model)
    torch.manual_seed(run.seed)
    rng = random.Random(run.seed)
    outdir = Path(run.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    train_pairs = read_tagged_pairs(run.train_path)
    test_pairs = read_tagged_pairs(run.test_path)
    settings = LossSettings(
        vocab_size=len(tokenizer), epsilon=run.epsilon, w=run.w,
        indicator_mode=run.indicator_mode,
    )
    optimizer = torch.optim.AdamW(model.parameters(), lr=run.lr)
    device = "cuda" if torch.cuda.is_available() else "cpu"
    model.to(device)

    def encode_batch(pairs):
        enc = tokenizer([p.source for p in pairs], padding=True, return_tensors="pt")
        dec = tokenizer([p.reference for p in pairs], padding=True, return_tensors="pt")
        ref_ids = dec.input_ids
        S = enc.input_ids.shape[1]
        T = ref_ids.shape[1]
        overlap = min(S, T)
        aligned = torch.full_like(ref_ids, -1)
        match = torch.zeros_like(ref_ids)
        aligned[:, :overlap] = enc.input_ids[:, :overlap]
        match[:, :overlap] = enc.attention_mask[:, :overlap]
        return enc.to(device), dec.to(device), aligned.to(device), match.to(device)

    epoch_losses = []
    model.train()
    for epoch in range(run.epochs):
        order = list(range(len(train_pairs)))
        rng.shuffle(order)
        running, batches = 0.0, 0
        for start in range(0, len(order), run.batch_size):
            chunk = [train_pairs[i] for i in order[start : start + run.batch_size]]
            enc, dec, aligned, match = encode_batch(chunk)
            position_mask = dec.attention_mask
            outputs = model(
                input_ids=enc.input_ids,
                attention_mask=enc.attention_mask,
                labels=dec.input_ids,
            )
            total = copy_penalized_loss(
                outputs.logits, dec.input_ids, aligned, match, settings,
                position_mask=position_mask,
            )
            loss = total / position_mask.sum().clamp_min(1)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            running += float(loss.detach())
            batches += 1
        epoch_losses.append(running / max(batches, 1))
        log.info("epoch %d/%d: loss %.4f", epoch + 1, run.epochs, epoch_losses[-1])

    model.save_pretrained(outdir / "model")
    tokenizer.save_pretrained(outdir / "model")

    grouped = group_references(test_pairs)
    records = []
    model.eval()
    for record_id in sorted(grouped):
        entry = grouped[record_id]
        inputs = tokenizer([entry["source"]], return_tensors="pt").to(device)
        with torch.no_grad():
            generated = model.generate(**inputs, max_new_tokens=run.max_decode_len,
                                       num_beams=4)
        text = tokenizer.decode(generated[0], skip_special_tokens=False)
        records.append(
            {
                "id": record_id,
                "lang": entry["lang"],
                "source_tagged": entry["source"],
                "generated": [text],
                "references": entry["references"],
            }
        )
    eval_path = outdir / "eval_input.jsonl"
    with open(eval_path, "w", encoding="utf-8") as fp:
        for record in records:
            fp.write(json.dumps(record, ensure_ascii=False) + "\n")

    from .train import TrainResult

    return TrainResult(
        checkpoint=str(outdir / "model"),
        vocab_path=str(outdir / "model"),
        eval_input_path=str(eval_path),
        epoch_losses=epoch_losses,
        samples=records[:5],
    )
