"""Load trained artifact directories back into inference-ready models."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch

from .data import DIMENSIONS
from .errors import ConfigError, MissingArtifactError
from .features import FeatureConfig, encode
from .models import PairScorer, QuestionTagger
from .train import ARTIFACT_SCHEMA

KINDS = ("classifier", "evaluator")


@dataclass
class TrainedModel:
    """A restored model plus the manifest it was built from."""

    kind: str
    module: torch.nn.Module
    feature_config: FeatureConfig
    manifest: dict

    def classify(self, question: str) -> list[float]:
        """Per-dimension probabilities in [0, 1]. Classifier artifacts only."""
        if self.kind != "classifier":
            raise ConfigError(f"artifact is a {self.kind}, not a classifier")
        x = torch.from_numpy(encode(question, self.feature_config)).unsqueeze(0)
        with torch.no_grad():
            probs = torch.sigmoid(self.module(x))
        return [float(p) for p in probs.squeeze(0)]

    def score(self, question: str, document: str) -> list[float]:
        """Per-dimension relevance scores in [-1, 1]. Evaluator artifacts only."""
        if self.kind != "evaluator":
            raise ConfigError(f"artifact is a {self.kind}, not an evaluator")
        q = torch.from_numpy(encode(question, self.feature_config)).unsqueeze(0)
        d = torch.from_numpy(encode(document, self.feature_config)).unsqueeze(0)
        with torch.no_grad():
            scores = self.module(q, d)
        return [float(s) for s in scores.squeeze(0)]

    @property
    def metadata(self) -> dict:
        return {"kind": self.kind,
                "n_features": self.manifest["n_features"],
                "hidden_dim": self.manifest["hidden_dim"],
                "max_seq_len": self.manifest["max_seq_len"]}


def _read_manifest(artifact_dir: Path) -> dict:
    path = artifact_dir / "manifest.json"
    if not path.is_file():
        raise MissingArtifactError(f"no manifest at {path}")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    if manifest.get("schema") != ARTIFACT_SCHEMA:
        raise ConfigError(f"unsupported artifact schema {manifest.get('schema')!r}")
    if manifest.get("kind") not in KINDS:
        raise ConfigError(f"unknown artifact kind {manifest.get('kind')!r}")
    if tuple(manifest.get("dimensions", ())) != DIMENSIONS:
        raise ConfigError("artifact dimension order does not match this build")
    return manifest


def load_artifact(artifact_dir: str | Path) -> TrainedModel:
    """Restore a model from a training output directory."""
    artifact_dir = Path(artifact_dir)
    manifest = _read_manifest(artifact_dir)
    weights_path = artifact_dir / "weights.pt"
    if not weights_path.is_file():
        raise MissingArtifactError(f"no weights at {weights_path}")

    kind = manifest["kind"]
    cls = QuestionTagger if kind == "classifier" else PairScorer
    module = cls(manifest["n_features"], manifest["hidden_dim"],
                 manifest["dropout"])
    state = torch.load(weights_path, map_location="cpu", weights_only=True)
    try:
        module.load_state_dict(state)
    except RuntimeError as exc:
        raise ConfigError(f"weights do not fit the manifest shape: {exc}") from exc
    module.eval()
    fcfg = FeatureConfig(n_features=manifest["n_features"],
                         max_seq_len=manifest["max_seq_len"])
    return TrainedModel(kind=kind, module=module, feature_config=fcfg,
                        manifest=manifest)
