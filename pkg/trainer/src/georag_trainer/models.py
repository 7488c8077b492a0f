"""Model heads over pooled text features."""

from __future__ import annotations

import torch
from torch import nn

from .data import NUM_DIMENSIONS


class QuestionTagger(nn.Module):
    """Pooled question features to seven dimension logits.

    Sigmoid over the logits gives per-dimension probabilities in [0, 1].
    """

    def __init__(self, n_features: int, hidden_dim: int, dropout: float):
        super().__init__()
        self.body = nn.Sequential(
            nn.Linear(n_features, hidden_dim), nn.GELU(), nn.Dropout(dropout))
        self.head = nn.Linear(hidden_dim, NUM_DIMENSIONS)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.body(x))

    def layer_groups(self) -> list[nn.Module]:
        # input-most first; the optimizer decays learning rates toward the input
        return [self.body, self.head]


class PairScorer(nn.Module):
    """(question, document) feature pair to seven scores in [-1, 1].

    The two inputs stay separate until the combine step [q; d; q*d]; the
    elementwise product exposes shared vocabulary directly. Output passes
    through tanh, so every score is inside [-1, 1] for any input.
    """

    def __init__(self, n_features: int, hidden_dim: int, dropout: float):
        super().__init__()
        self.body = nn.Sequential(
            nn.Linear(3 * n_features, hidden_dim), nn.GELU(), nn.Dropout(dropout))
        self.head = nn.Linear(hidden_dim, NUM_DIMENSIONS)

    def forward(self, q: torch.Tensor, d: torch.Tensor) -> torch.Tensor:
        x = torch.cat([q, d, q * d], dim=-1)
        return torch.tanh(self.head(self.body(x)))

    def layer_groups(self) -> list[nn.Module]:
        return [self.body, self.head]
