"""Toolkit for building and scoring tag-constrained paraphrase data.

Modules cover the full pipeline: language-aware tokenization
(`textcore`), the ``<tag>...</tag>`` annotation format (`markup`),
dataset ingestion and seeded splitting (`corpus`), distant-supervision
anchor miners (`taggers`), the diversity-penalized training loss
(`losskernel`), and quality/diversity/retention scoring (`evaluate`).
"""

__version__ = "0.1.0"
