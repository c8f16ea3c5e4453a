"""Desk-scale seq2seq with an explicit copy path.

BiLSTM encoder, LSTM decoder, additive attention, and a pointer mixture
over the source tokens:

    q = gate * copy(attention) + (1 - gate) * softmax(W [state; context])

The pointer is what makes span copying learnable at this scale; the
decoder only has to decide where to attend, and the tag markers give it
an unambiguous cue. The forward pass returns log-probabilities, which
feed the loss's log-prob entry point directly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn


@dataclass(frozen=True)
class ToyModelConfig:
    vocab_size: int
    d_model: int = 128


class CopySeq2Seq(nn.Module):
    def __init__(self, cfg: ToyModelConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.d_model
        self.embed = nn.Embedding(cfg.vocab_size, d)
        self.encoder = nn.LSTM(d, d, batch_first=True, bidirectional=True)
        self.enc_proj = nn.Linear(2 * d, d)
        self.bridge_h = nn.Linear(2 * d, d)
        self.bridge_c = nn.Linear(2 * d, d)
        self.decoder = nn.LSTM(d, d, batch_first=True)
        self.attn_query = nn.Linear(d, d)
        self.attn_score = nn.Linear(d, 1, bias=False)
        self.generate = nn.Linear(2 * d, cfg.vocab_size)
        self.copy_gate = nn.Linear(2 * d, 1)

    def encode(self, src, src_pad):
        memory, (h, c) = self.encoder(self.embed(src))
        B = src.shape[0]
        h = self.bridge_h(h.view(1, 2, B, -1).permute(0, 2, 1, 3).reshape(1, B, -1))
        c = self.bridge_c(c.view(1, 2, B, -1).permute(0, 2, 1, 3).reshape(1, B, -1))
        return self.enc_proj(memory), (h.contiguous(), c.contiguous())

    def _log_probs(self, dec_states, memory, src, src_pad):
        # additive attention: (B, T, S)
        scores = self.attn_score(
            torch.tanh(memory.unsqueeze(1) + self.attn_query(dec_states).unsqueeze(2))
        ).squeeze(-1)
        scores = scores.masked_fill(src_pad.unsqueeze(1), -1e9)
        attention = torch.softmax(scores, dim=-1)
        context = torch.bmm(attention, memory)
        features = torch.cat([dec_states, context], dim=-1)
        generated = torch.softmax(self.generate(features), dim=-1)
        gate = torch.sigmoid(self.copy_gate(features))
        copied = torch.zeros_like(generated)
        copied.scatter_add_(-1, src.unsqueeze(1).expand(-1, attention.shape[1], -1), attention)
        q = gate * copied + (1.0 - gate) * generated
        return torch.log(q + 1e-20)

    def forward(self, src, src_pad, dec_in):
        """Log-probabilities over the vocabulary, shape (B, T, V)."""
        memory, state = self.encode(src, src_pad)
        dec_states, _ = self.decoder(self.embed(dec_in), state)
        return self._log_probs(dec_states, memory, src, src_pad)

    @torch.no_grad()
    def greedy_decode(self, src, src_pad, bos_id, eos_id, max_len=28):
        """Deterministic decoding; returns token id lists without bos/eos."""
        self.eval()
        B = src.shape[0]
        memory, state = self.encode(src, src_pad)
        token = torch.full((B, 1), bos_id, dtype=torch.long, device=src.device)
        finished = torch.zeros(B, dtype=torch.bool, device=src.device)
        rows = [[] for _ in range(B)]
        for _ in range(max_len):
            dec_states, state = self.decoder(self.embed(token), state)
            log_probs = self._log_probs(dec_states, memory, src, src_pad)
            token = log_probs[:, -1].argmax(dim=-1, keepdim=True)
            for b in range(B):
                if not finished[b] and int(token[b]) != eos_id:
                    rows[b].append(int(token[b]))
            finished = finished | (token.squeeze(1) == eos_id)
            if bool(finished.all()):
                break
        return rows


def save_checkpoint(path, model: CopySeq2Seq):
    torch.save({"config": asdict(model.cfg), "state": model.state_dict()}, path)


def load_checkpoint(path) -> CopySeq2Seq:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model = CopySeq2Seq(ToyModelConfig(**payload["config"]))
    model.load_state_dict(payload["state"])
    model.eval()
    return model
