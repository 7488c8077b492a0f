"""Deterministic pooled text features.

The model heads only need a fixed-width pooled representation of a text, so
tokens are hashed into a bag-of-words vector with a keyed blake2b digest:
stable across runs, platforms, and processes, with no pretrained weights and
no vocabulary file. Sequences truncate at the configured length before
pooling; the result is L2-normalized.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

HASH_KEY = b"georag-trainer/1"


def tokenize(text: str) -> list[str]:
    return text.lower().split()


@dataclass(frozen=True)
class FeatureConfig:
    n_features: int = 1024
    max_seq_len: int = 128

    def __post_init__(self):
        if self.n_features < 8:
            raise ConfigError("n_features must be >= 8")
        if self.max_seq_len < 1:
            raise ConfigError("max_seq_len must be >= 1")


def _bucket(token: str, n_features: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8,
                             key=HASH_KEY).digest()
    return int.from_bytes(digest, "little") % n_features


def encode(text: str, cfg: FeatureConfig) -> np.ndarray:
    """Hashed token counts over the first max_seq_len tokens, L2-normalized."""
    vec = np.zeros(cfg.n_features, dtype=np.float32)
    for token in tokenize(text)[:cfg.max_seq_len]:
        vec[_bucket(token, cfg.n_features)] += 1.0
    norm = float(np.linalg.norm(vec))
    if norm:
        vec /= norm
    return vec


def encode_batch(texts, cfg: FeatureConfig) -> np.ndarray:
    if not len(texts):
        return np.zeros((0, cfg.n_features), dtype=np.float32)
    return np.stack([encode(t, cfg) for t in texts])
