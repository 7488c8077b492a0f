"""Seeded CPU training for the two model heads.

Both trainers share the same mechanics: AdamW with layer-wise learning-rate
decay toward the input, linear warmup then linear decay over the total step
count, gradient clipping by global norm, per-dimension loss weights, and a
deterministic train/validation split. Runs are reproducible bit-for-bit on
the same machine: fixed torch seed, single-threaded math, and Python-RNG
batch order.
"""

from __future__ import annotations

import json
import random
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .data import (DIMENSIONS, NUM_DIMENSIONS, load_pair_dataset,
                   load_question_dataset)
from .errors import ConfigError, DatasetError
from .features import FeatureConfig, encode_batch
from .metrics import macro_f1, mann_whitney_auc
from .models import PairScorer, QuestionTagger

ARTIFACT_SCHEMA = "georag-trainer-artifact/1"
CONFIG_SCHEMA = "georag-trainer-config/1"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-5
    batch_size: int = 512
    max_seq_len: int = 128
    dropout: float = 0.1
    epochs: int = 10
    warmup_fraction: float = 0.10
    grad_clip_norm: float = 1.0
    layer_decay: float = 0.95
    alpha: tuple[float, ...] = (1.0,) * NUM_DIMENSIONS
    n_features: int = 1024
    hidden_dim: int = 256
    seed: int = 42
    val_fraction: float = 0.2

    def __post_init__(self):
        for name in ("learning_rate", "grad_clip_norm", "layer_decay"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("batch_size", "epochs", "n_features", "hidden_dim",
                     "max_seq_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not (0 <= self.warmup_fraction < 1):
            raise ConfigError("warmup_fraction must be in [0, 1)")
        if not (0 <= self.dropout < 1):
            raise ConfigError("dropout must be in [0, 1)")
        if not (0 < self.val_fraction < 1):
            raise ConfigError("val_fraction must be in (0, 1)")
        alpha = tuple(float(a) for a in self.alpha)
        if len(alpha) != NUM_DIMENSIONS or any(a <= 0 for a in alpha):
            raise ConfigError(f"alpha needs {NUM_DIMENSIONS} positive weights")
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def for_classifier(cls, **overrides) -> "TrainConfig":
        return replace(cls(), **overrides) if overrides else cls()

    @classmethod
    def for_evaluator(cls, **overrides) -> "TrainConfig":
        base = cls(batch_size=128, max_seq_len=256)
        return replace(base, **overrides) if overrides else base

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(n_features=self.n_features,
                             max_seq_len=self.max_seq_len)

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate, "batch_size": self.batch_size,
            "max_seq_len": self.max_seq_len, "dropout": self.dropout,
            "epochs": self.epochs, "warmup_fraction": self.warmup_fraction,
            "grad_clip_norm": self.grad_clip_norm,
            "layer_decay": self.layer_decay, "alpha": list(self.alpha),
            "n_features": self.n_features, "hidden_dim": self.hidden_dim,
            "seed": self.seed, "val_fraction": self.val_fraction,
        }


@dataclass(frozen=True)
class TrainResult:
    artifact_dir: Path
    history: list[dict] = field(default_factory=list)

    @property
    def final(self) -> dict:
        return self.history[-1]


@contextmanager
def _single_thread():
    old = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        yield
    finally:
        torch.set_num_threads(old)


def _param_groups(model, cfg: TrainConfig) -> list[dict]:
    """Head keeps the base rate; each group toward the input decays once more."""
    groups = model.layer_groups()
    out = []
    for depth, module in enumerate(groups):
        scale = cfg.layer_decay ** (len(groups) - 1 - depth)
        out.append({"params": list(module.parameters()),
                    "lr": cfg.learning_rate * scale})
    return out


def _lr_schedule(total_steps: int, warmup_fraction: float):
    warmup = int(total_steps * warmup_fraction)

    def factor(step: int) -> float:
        if step < warmup:
            return (step + 1) / max(1, warmup)
        remaining = total_steps - step
        return max(0.0, remaining / max(1, total_steps - warmup))

    return factor


def _split(n: int, cfg: TrainConfig) -> tuple[list[int], list[int]]:
    order = list(range(n))
    random.Random(cfg.seed).shuffle(order)
    n_val = min(n - 1, max(1, round(n * cfg.val_fraction)))
    return order[n_val:], order[:n_val]


def _stratified_split(ys: list[int], cfg: TrainConfig) -> tuple[list[int], list[int]]:
    """Both partitions keep both classes so ranking metrics stay defined."""
    rng = random.Random(cfg.seed)
    train_idx, val_idx = [], []
    for wanted in (1, 0):
        members = [i for i, y in enumerate(ys) if y == wanted]
        rng.shuffle(members)
        n_val = min(len(members) - 1, max(1, round(len(members) * cfg.val_fraction)))
        val_idx.extend(members[:n_val])
        train_idx.extend(members[n_val:])
    rng.shuffle(train_idx)
    rng.shuffle(val_idx)
    return train_idx, val_idx


def _epoch_order(n: int, cfg: TrainConfig, epoch: int) -> list[int]:
    order = list(range(n))
    random.Random((cfg.seed << 16) + epoch + 1).shuffle(order)
    return order


def _fit(model, step_loss, eval_epoch, n_train: int, cfg: TrainConfig) -> list[dict]:
    """Shared loop: batches, clip, AdamW, warmup/decay; one history row per epoch."""
    optimizer = torch.optim.AdamW(_param_groups(model, cfg), lr=cfg.learning_rate)
    steps_per_epoch = max(1, (n_train + cfg.batch_size - 1) // cfg.batch_size)
    schedule = _lr_schedule(cfg.epochs * steps_per_epoch, cfg.warmup_fraction)
    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, schedule)

    history = []
    for epoch in range(cfg.epochs):
        model.train()
        order = _epoch_order(n_train, cfg, epoch)
        total, seen = 0.0, 0
        for start in range(0, n_train, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            optimizer.zero_grad()
            loss = step_loss(batch)
            loss.backward()
            nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip_norm)
            optimizer.step()
            scheduler.step()
            total += float(loss.item()) * len(batch)
            seen += len(batch)
        model.eval()
        row = {"epoch": epoch, "train_loss": total / seen}
        row.update(eval_epoch())
        history.append(row)
    return history


def _write_artifact(out_dir: str | Path, model, cfg: TrainConfig, kind: str,
                    history: list[dict]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), out / "weights.pt")
    (out / "config.json").write_text(json.dumps(
        {"schema": CONFIG_SCHEMA, "kind": kind, "config": cfg.to_dict()},
        indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "manifest.json").write_text(json.dumps({
        "schema": ARTIFACT_SCHEMA, "kind": kind, "dimensions": list(DIMENSIONS),
        "n_features": cfg.n_features, "hidden_dim": cfg.hidden_dim,
        "max_seq_len": cfg.max_seq_len, "dropout": cfg.dropout,
    }, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with open(out / "metrics.jsonl", "w", encoding="utf-8") as fh:
        for row in history:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return out


def train_classifier(dataset_path: str | Path, cfg: TrainConfig,
                     out_dir: str | Path) -> TrainResult:
    """Fit the question tagger on labeled questions; artifacts land in out_dir."""
    examples = load_question_dataset(dataset_path)
    if len(examples) < 2:
        raise DatasetError(
            f"dataset needs at least 2 labeled questions, got {len(examples)}")
    degenerate = [DIMENSIONS[col] for col in range(NUM_DIMENSIONS)
                  if len({ex.labels[col] for ex in examples}) < 2]
    if degenerate:
        raise DatasetError(
            "single label class for dimension(s) "
            f"{', '.join(degenerate)}; training would be degenerate")

    with _single_thread():
        torch.manual_seed(cfg.seed)
        feats = torch.from_numpy(encode_batch([ex.question for ex in examples],
                                              cfg.feature_config()))
        labels = torch.tensor([ex.labels for ex in examples], dtype=torch.float32)
        train_idx, val_idx = _split(len(examples), cfg)
        alpha = torch.tensor(cfg.alpha, dtype=torch.float32)

        model = QuestionTagger(cfg.n_features, cfg.hidden_dim, cfg.dropout)
        bce = nn.BCEWithLogitsLoss(reduction="none")

        def step_loss(batch):
            rows = [train_idx[i] for i in batch]
            logits = model(feats[rows])
            return (bce(logits, labels[rows]) * alpha).mean()

        def eval_epoch():
            with torch.no_grad():
                probs = torch.sigmoid(model(feats[val_idx]))
            preds = (probs >= 0.5).int().tolist()
            truth = labels[val_idx].int().tolist()
            return {"val_macro_f1": macro_f1(truth, preds)}

        history = _fit(model, step_loss, eval_epoch, len(train_idx), cfg)
        artifact_dir = _write_artifact(out_dir, model, cfg, "classifier", history)
    return TrainResult(artifact_dir=artifact_dir, history=history)


def train_evaluator(mrc_path: str | Path, chunks_path: str | Path,
                    cfg: TrainConfig, out_dir: str | Path) -> TrainResult:
    """Fit the pair scorer on reading-comprehension instances.

    Active dimensions train toward +1 (relevant) or -1 (irrelevant); inactive
    dimensions are masked out of the loss. Validation ranks instances by the
    mean score over their active dimensions.
    """
    pairs = load_pair_dataset(mrc_path, chunks_path)
    if len(pairs) < 2:
        raise DatasetError(f"dataset needs at least 2 instances, got {len(pairs)}")
    for i, pair in enumerate(pairs):
        if not any(pair.active):
            raise DatasetError(f"instance {i} has no active dimensions")
    n_pos = sum(p.label for p in pairs)
    if n_pos < 2 or len(pairs) - n_pos < 2:
        raise DatasetError(
            "dataset needs at least 2 relevant and 2 irrelevant instances, "
            f"got {n_pos} relevant of {len(pairs)}")

    with _single_thread():
        torch.manual_seed(cfg.seed)
        fcfg = cfg.feature_config()
        q_feats = torch.from_numpy(encode_batch([p.question for p in pairs], fcfg))
        d_feats = torch.from_numpy(encode_batch([p.document for p in pairs], fcfg))
        mask = torch.tensor([p.active for p in pairs], dtype=torch.float32)
        targets = torch.tensor([[1.0 if p.label else -1.0] * NUM_DIMENSIONS
                                for p in pairs]) * mask
        ys = [p.label for p in pairs]
        train_idx, val_idx = _stratified_split(ys, cfg)
        alpha = torch.tensor(cfg.alpha, dtype=torch.float32)

        model = PairScorer(cfg.n_features, cfg.hidden_dim, cfg.dropout)

        def step_loss(batch):
            rows = [train_idx[i] for i in batch]
            scores = model(q_feats[rows], d_feats[rows])
            weight = mask[rows] * alpha
            sq = (scores - targets[rows]) ** 2
            return (sq * weight).sum() / weight.sum().clamp_min(1e-9)

        def eval_epoch():
            with torch.no_grad():
                scores = model(q_feats[val_idx], d_feats[val_idx])
            m = mask[val_idx]
            pooled = (scores * m).sum(dim=-1) / m.sum(dim=-1)
            labels = [ys[i] for i in val_idx]
            return {"val_auc": mann_whitney_auc(labels, pooled.tolist())}

        history = _fit(model, step_loss, eval_epoch, len(train_idx), cfg)
        artifact_dir = _write_artifact(out_dir, model, cfg, "evaluator", history)
    return TrainResult(artifact_dir=artifact_dir, history=history)
