"""Engine configuration: one JSON document drives every command.

The file is schema-validated with unknown keys rejected, defaults are applied
afterwards, and the effective document is hashed so traces and reports can
state exactly which configuration produced them.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .classify import (DEFAULT_CLASSIFIER_THRESHOLDS, GatewayClassifier, LexicalClassifier)
from .corpus import CleaningPolicy, DedupConfig
from .errors import ConfigurationError, MissingArtifactError, SchemaError
from .evaluate import (DEFAULT_RELEVANCE_THRESHOLDS, DimensionWeights, GatewayEvaluator,
                       HeuristicEvaluator, ThresholdVector)
from .index import ThemeGraph, VectorIndex
from .modelgw import BackendConfig, Gateway, StubScript, build_backend
from .pipeline import EngineDeps, PipelineConfig
from .prompt import DomainContext, TemperatureSchedule, load_template

CONFIG_SCHEMA_ID = "georag-config/1"
ENV_CONFIG = "GEORAG_CONFIG"

_BACKEND_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["stub", "remote", "lexical", "heuristic"]},
        "base_url": {"type": "string"},
        "timeout": {"type": "number", "exclusiveMinimum": 0},
        "max_retries": {"type": "integer", "minimum": 0},
        "parallelism_bound": {"type": "integer", "minimum": 1},
        "bearer_token": {"type": "string"},
        "script": {"type": ["string", "null"]},
    },
}

_SEVEN = {"type": "array", "items": {"type": "number"}, "minItems": 7, "maxItems": 7}

CONFIG_JSON_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "schema": {"const": CONFIG_SCHEMA_ID},
        "seed": {"type": "integer", "minimum": 0},
        "paths": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "corpus_dir": {"type": ["string", "null"]},
                "index": {"type": ["string", "null"]},
                "lexicon": {"type": ["string", "null"]},
                "template": {"type": ["string", "null"]},
                "themes": {"type": ["string", "null"]},
            },
        },
        "backends": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "generate": _BACKEND_SCHEMA,
                "embed": _BACKEND_SCHEMA,
                "classify": _BACKEND_SCHEMA,
                "score": _BACKEND_SCHEMA,
            },
        },
        "pipeline": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k": {"type": "integer", "minimum": 1},
                "max_iterations": {"type": "integer", "minimum": 1},
                "recursion_trigger_threshold": {"type": "number"},
                "weights": {"anyOf": [_SEVEN, {"type": "null"}]},
                "relevance_thresholds": _SEVEN,
                "classifier_thresholds": _SEVEN,
                "temperature_start": {"type": "number", "minimum": 0},
                "temperature_end": {"type": "number", "minimum": 0},
                "max_tokens": {"type": "integer", "minimum": 1},
                "beam_width": {"type": "integer", "minimum": 1},
                "length_penalty": {"type": "number", "minimum": 0},
                "require_all": {"type": "boolean"},
                "single_prompt": {"type": "boolean"},
                "retrieval_char_budget": {"type": "integer", "minimum": 1},
                "generation_char_budget": {"type": "integer", "minimum": 1},
                "discipline": {"type": "string"},
                "subfield": {"type": "string"},
            },
        },
        "cleaning": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "min_sentences": {"type": "integer", "minimum": 1},
                "min_words_per_sentence": {"type": "integer", "minimum": 1},
                "language": {"type": ["string", "null"], "enum": ["en", "zh", None]},
                "min_language_ratio": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "dedup": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "threshold": {"type": "number", "minimum": 0, "maximum": 1},
                "num_hashes": {"type": "integer", "minimum": 1},
                "shingle_width": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "chunking": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_sentences": {"type": "integer", "minimum": 1},
                "overlap": {"type": "integer", "minimum": 0},
            },
        },
        "metrics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "correctness_bar": {"type": "number", "minimum": -1, "maximum": 1},
            },
        },
        "datagen": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "negatives_per_positive": {"type": "integer", "minimum": 0},
            },
        },
    },
}

DEFAULT_CONFIG: dict = {
    "schema": CONFIG_SCHEMA_ID,
    "seed": 42,
    "paths": {"corpus_dir": None, "index": None, "lexicon": None,
              "template": None, "themes": None},
    "backends": {
        "generate": {"kind": "stub", "script": None},
        "embed": {"kind": "stub", "script": None},
        "classify": {"kind": "lexical"},
        "score": {"kind": "heuristic"},
    },
    "pipeline": {
        "k": 5,
        "max_iterations": 3,
        "recursion_trigger_threshold": 0.5,
        "weights": None,
        "relevance_thresholds": list(DEFAULT_RELEVANCE_THRESHOLDS),
        "classifier_thresholds": list(DEFAULT_CLASSIFIER_THRESHOLDS),
        "temperature_start": 0.3,
        "temperature_end": 0.7,
        "max_tokens": 512,
        "beam_width": 5,
        "length_penalty": 0.6,
        "require_all": True,
        "single_prompt": False,
        "retrieval_char_budget": 16384,
        "generation_char_budget": 32768,
        "discipline": "geography",
        "subfield": "general",
    },
    "cleaning": {"min_sentences": 5, "min_words_per_sentence": 4,
                 "language": None, "min_language_ratio": 0.5},
    "dedup": {"threshold": 0.85, "num_hashes": 256, "shingle_width": 3, "seed": 42},
    "chunking": {"max_sentences": 5, "overlap": 1},
    "metrics": {"correctness_bar": 0.7},
    "datagen": {"negatives_per_positive": 1},
}


def _merge(defaults: dict, overrides: dict) -> dict:
    out = {}
    for key, dval in defaults.items():
        if key in overrides and isinstance(dval, dict) and isinstance(overrides[key], dict):
            out[key] = _merge(dval, overrides[key])
        elif key in overrides:
            out[key] = overrides[key]
        else:
            out[key] = dval
    for key in overrides:
        if key not in defaults:
            out[key] = overrides[key]
    return out


@dataclass(frozen=True)
class EngineConfig:
    doc: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "EngineConfig":
        try:
            jsonschema.validate(raw, CONFIG_JSON_SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "(root)"
            raise SchemaError(f"config invalid at {path}: {exc.message}") from exc
        doc = _merge(DEFAULT_CONFIG, raw)
        doc["schema"] = CONFIG_SCHEMA_ID
        return cls(doc=doc)

    @classmethod
    def default(cls) -> "EngineConfig":
        return cls.from_dict({})

    @classmethod
    def load(cls, path: str | Path | None = None) -> "EngineConfig":
        """Explicit path, else $GEORAG_CONFIG, else built-in defaults."""
        if path is None:
            path = os.environ.get(ENV_CONFIG) or None
        if path is None:
            return cls.default()
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def __getitem__(self, key: str):
        return self.doc[key]

    def with_seed(self, seed: int) -> "EngineConfig":
        doc = json.loads(json.dumps(self.doc))
        doc["seed"] = seed
        doc["dedup"]["seed"] = seed
        return EngineConfig(doc=doc)

    def canonical_json(self) -> str:
        return json.dumps(self.doc, sort_keys=True, ensure_ascii=False,
                          separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    # -- derived settings ---------------------------------------------------

    def cleaning_policy(self) -> CleaningPolicy:
        c = self.doc["cleaning"]
        return CleaningPolicy(min_sentences=c["min_sentences"],
                              min_words_per_sentence=c["min_words_per_sentence"],
                              language=c["language"],
                              min_language_ratio=c["min_language_ratio"])

    def dedup_config(self) -> DedupConfig:
        d = self.doc["dedup"]
        return DedupConfig(threshold=d["threshold"], num_hashes=d["num_hashes"],
                           shingle_width=d["shingle_width"], seed=d["seed"])

    def pipeline_config(self) -> PipelineConfig:
        p = self.doc["pipeline"]
        template = None
        if self.doc["paths"]["template"]:
            template = load_template(self.doc["paths"]["template"])
        return PipelineConfig(
            k=p["k"],
            max_iterations=p["max_iterations"],
            recursion_trigger_threshold=p["recursion_trigger_threshold"],
            weights=DimensionWeights(tuple(p["weights"])) if p["weights"] else None,
            thresholds=ThresholdVector(tuple(p["relevance_thresholds"])),
            classifier_thresholds=tuple(p["classifier_thresholds"]),
            schedule=TemperatureSchedule(start=p["temperature_start"],
                                         end=p["temperature_end"]),
            max_tokens=p["max_tokens"],
            beam_width=p["beam_width"],
            length_penalty=p["length_penalty"],
            require_all=p["require_all"],
            single_prompt=p["single_prompt"],
            retrieval_char_budget=p["retrieval_char_budget"],
            generation_char_budget=p["generation_char_budget"],
            domain=DomainContext(discipline=p["discipline"], subfield=p["subfield"]),
            template=template,
        )

    def _backend(self, capability: str):
        spec = self.doc["backends"][capability]
        kind = spec.get("kind", "stub")
        if kind in ("lexical", "heuristic"):
            raise ConfigurationError(f"{kind} is not a gateway backend kind")
        script = None
        if spec.get("script"):
            script_path = Path(spec["script"])
            if not script_path.exists():
                raise MissingArtifactError(f"stub script not found: {script_path}")
            script = StubScript.from_dict(
                json.loads(script_path.read_text(encoding="utf-8")))
        cfg = BackendConfig(kind=kind, base_url=spec.get("base_url", ""),
                            timeout=spec.get("timeout", 30.0),
                            max_retries=spec.get("max_retries", 3),
                            parallelism_bound=spec.get("parallelism_bound", 4),
                            bearer_token=spec.get("bearer_token", ""))
        return build_backend(cfg, script)

    def gateway(self) -> Gateway:
        generate = self._backend("generate")
        embed = self._backend("embed")
        classify_kind = self.doc["backends"]["classify"]["kind"]
        score_kind = self.doc["backends"]["score"]["kind"]
        classify = self._backend("classify") if classify_kind in ("stub", "remote") else None
        score = self._backend("score") if score_kind in ("stub", "remote") else None
        bound = self.doc["backends"]["generate"].get("parallelism_bound", 4)
        return Gateway(generate, embed, classify, score, parallelism_bound=bound)

    def classifier(self, gateway: Gateway):
        kind = self.doc["backends"]["classify"]["kind"]
        if kind in ("stub", "remote"):
            return GatewayClassifier(gateway)
        lexicon = self.doc["paths"]["lexicon"]
        if lexicon:
            if not Path(lexicon).exists():
                raise MissingArtifactError(f"lexicon file not found: {lexicon}")
            return LexicalClassifier.from_file(lexicon)
        return LexicalClassifier.default()

    def evaluator(self, gateway: Gateway):
        kind = self.doc["backends"]["score"]["kind"]
        if kind in ("stub", "remote"):
            return GatewayEvaluator(gateway)
        return HeuristicEvaluator(gateway.embed)

    def load_index(self) -> VectorIndex:
        path = self.doc["paths"]["index"]
        if not path:
            raise MissingArtifactError(
                "no index path configured; set paths.index or run the index command")
        if not Path(path).exists():
            raise MissingArtifactError(
                f"index not found at {path}; build one with the index command")
        return VectorIndex.load(path)

    def theme_graph(self) -> ThemeGraph | None:
        path = self.doc["paths"]["themes"]
        if not path:
            return None
        if not Path(path).exists():
            raise MissingArtifactError(f"theme graph not found: {path}")
        return ThemeGraph.from_json(Path(path).read_text(encoding="utf-8"))

    def deps(self, index: VectorIndex | None = None) -> EngineDeps:
        gateway = self.gateway()
        return EngineDeps(index=index if index is not None else self.load_index(),
                          gateway=gateway,
                          classifier=self.classifier(gateway),
                          evaluator=self.evaluator(gateway),
                          theme_graph=self.theme_graph())
