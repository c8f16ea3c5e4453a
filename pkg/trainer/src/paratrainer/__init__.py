"""Trainer for tag-preserving paraphrase models.

Consumes the data-pipeline package only through its file formats and
wire protocol: tagged-pair JSONL for training, golden loss vectors for
numeric parity, eval-input JSONL for scoring, and the token-tagging
HTTP protocol for serving a learned tagger.
"""

__version__ = "0.1.0"
