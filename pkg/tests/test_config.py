"""Config loading: schema validation, defaults, hashing, derived objects."""

import json

import pytest

from georag.classify import GatewayClassifier, LexicalClassifier
from georag.config import DEFAULT_CONFIG, ENV_CONFIG, EngineConfig
from georag.errors import ConfigurationError, MissingArtifactError, SchemaError
from georag.evaluate import GatewayEvaluator, HeuristicEvaluator
from georag.modelgw import StubBackend


class TestValidation:
    def test_empty_document_gets_defaults(self):
        cfg = EngineConfig.default()
        assert cfg["seed"] == 42
        assert cfg["pipeline"]["k"] == 5
        assert cfg["backends"]["classify"]["kind"] == "lexical"

    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(SchemaError, match="config invalid"):
            EngineConfig.from_dict({"retreival": {}})

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(SchemaError, match="pipeline"):
            EngineConfig.from_dict({"pipeline": {"topk": 3}})

    def test_wrong_type_rejected_with_path(self):
        with pytest.raises(SchemaError, match="pipeline/k"):
            EngineConfig.from_dict({"pipeline": {"k": "five"}})

    def test_seven_vector_arity_enforced(self):
        with pytest.raises(SchemaError):
            EngineConfig.from_dict({"pipeline": {"weights": [0.5, 0.5]}})

    def test_partial_override_merges_with_defaults(self):
        cfg = EngineConfig.from_dict({"pipeline": {"k": 9}})
        assert cfg["pipeline"]["k"] == 9
        assert cfg["pipeline"]["max_iterations"] == DEFAULT_CONFIG["pipeline"]["max_iterations"]
        assert cfg["cleaning"] == DEFAULT_CONFIG["cleaning"]

    def test_defaults_document_is_self_valid(self):
        cfg = EngineConfig.from_dict(DEFAULT_CONFIG)
        assert cfg.doc == EngineConfig.default().doc


class TestHashing:
    def test_hash_is_stable(self):
        assert EngineConfig.default().hash() == EngineConfig.default().hash()

    def test_hash_tracks_content(self):
        base = EngineConfig.default()
        changed = EngineConfig.from_dict({"pipeline": {"k": 9}})
        assert base.hash() != changed.hash()

    def test_canonical_json_is_sorted_and_compact(self):
        text = EngineConfig.default().canonical_json()
        assert ": " not in text and ", " not in text
        assert json.loads(text) == EngineConfig.default().doc

    def test_with_seed_updates_both_seeds(self):
        cfg = EngineConfig.default().with_seed(7)
        assert cfg["seed"] == 7
        assert cfg["dedup"]["seed"] == 7
        assert cfg.hash() != EngineConfig.default().hash()

    def test_with_seed_leaves_original_untouched(self):
        base = EngineConfig.default()
        base.with_seed(7)
        assert base["seed"] == 42


class TestLoad:
    def test_explicit_path(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"seed": 5}), encoding="utf-8")
        assert EngineConfig.load(path)["seed"] == 5

    def test_missing_explicit_path(self, tmp_path):
        with pytest.raises(MissingArtifactError, match="not found"):
            EngineConfig.load(tmp_path / "absent.json")

    def test_env_var_fallback(self, tmp_path, monkeypatch):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"seed": 11}), encoding="utf-8")
        monkeypatch.setenv(ENV_CONFIG, str(path))
        assert EngineConfig.load()["seed"] == 11

    def test_explicit_path_beats_env_var(self, tmp_path, monkeypatch):
        env_path = tmp_path / "env.json"
        env_path.write_text(json.dumps({"seed": 11}), encoding="utf-8")
        monkeypatch.setenv(ENV_CONFIG, str(env_path))
        direct = tmp_path / "direct.json"
        direct.write_text(json.dumps({"seed": 5}), encoding="utf-8")
        assert EngineConfig.load(direct)["seed"] == 5

    def test_defaults_without_path_or_env(self, monkeypatch):
        monkeypatch.delenv(ENV_CONFIG, raising=False)
        assert EngineConfig.load().doc == EngineConfig.default().doc

    def test_bad_json_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{broken", encoding="utf-8")
        with pytest.raises(SchemaError, match="not valid JSON"):
            EngineConfig.load(path)


class TestDerived:
    def test_cleaning_policy(self):
        policy = EngineConfig.from_dict({"cleaning": {"language": "en"}}).cleaning_policy()
        assert policy.min_sentences == 5
        assert policy.language == "en"

    def test_dedup_config(self):
        dedup = EngineConfig.default().dedup_config()
        assert (dedup.threshold, dedup.num_hashes) == (0.85, 256)
        assert (dedup.shingle_width, dedup.seed) == (3, 42)

    def test_pipeline_config(self):
        pc = EngineConfig.from_dict({"pipeline": {"k": 2, "subfield": "karst"}}
                                    ).pipeline_config()
        assert pc.k == 2
        assert pc.domain.subfield == "karst"
        assert pc.weights is None
        assert pc.schedule.start == 0.3 and pc.schedule.end == 0.7

    def test_pipeline_weights_override(self):
        pc = EngineConfig.from_dict(
            {"pipeline": {"weights": [1, 0, 0, 0, 0, 0, 0]}}).pipeline_config()
        assert pc.weights.w == (1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


class TestBackendWiring:
    def test_default_gateway_is_stubbed(self):
        gateway = EngineConfig.default().gateway()
        assert gateway._generate.__class__ is StubBackend

    def test_lexical_classifier_by_default(self):
        cfg = EngineConfig.default()
        assert isinstance(cfg.classifier(cfg.gateway()), LexicalClassifier)

    def test_stub_classify_backend_gives_gateway_classifier(self):
        cfg = EngineConfig.from_dict({"backends": {"classify": {"kind": "stub"}}})
        assert isinstance(cfg.classifier(cfg.gateway()), GatewayClassifier)

    def test_heuristic_evaluator_by_default(self):
        cfg = EngineConfig.default()
        assert isinstance(cfg.evaluator(cfg.gateway()), HeuristicEvaluator)

    def test_stub_score_backend_gives_gateway_evaluator(self):
        cfg = EngineConfig.from_dict({"backends": {"score": {"kind": "stub"}}})
        assert isinstance(cfg.evaluator(cfg.gateway()), GatewayEvaluator)

    def test_remote_backend_requires_base_url(self):
        cfg = EngineConfig.from_dict({"backends": {"generate": {"kind": "remote"}}})
        with pytest.raises(ConfigurationError, match="base_url"):
            cfg.gateway()

    def test_stub_script_from_file(self, tmp_path):
        script = {"generate_rules": [["capital", "Paris"]]}
        path = tmp_path / "script.json"
        path.write_text(json.dumps(script), encoding="utf-8")
        cfg = EngineConfig.from_dict(
            {"backends": {"generate": {"kind": "stub", "script": str(path)}}})
        gateway = cfg.gateway()
        from georag.modelgw import GenerationRequest
        assert gateway.generate(GenerationRequest(prompt="the capital?")) == "Paris"

    def test_missing_script_file(self, tmp_path):
        cfg = EngineConfig.from_dict(
            {"backends": {"generate": {"kind": "stub",
                                       "script": str(tmp_path / "nope.json")}}})
        with pytest.raises(MissingArtifactError, match="script"):
            cfg.gateway()

    def test_missing_lexicon_file(self, tmp_path):
        cfg = EngineConfig.from_dict(
            {"paths": {"lexicon": str(tmp_path / "nope.json")}})
        with pytest.raises(MissingArtifactError, match="lexicon"):
            cfg.classifier(cfg.gateway())


class TestArtifacts:
    def test_load_index_requires_configured_path(self):
        with pytest.raises(MissingArtifactError, match="index command"):
            EngineConfig.default().load_index()

    def test_load_index_missing_file_hints_at_command(self, tmp_path):
        cfg = EngineConfig.from_dict({"paths": {"index": str(tmp_path / "idx.bin")}})
        with pytest.raises(MissingArtifactError, match="index command"):
            cfg.load_index()

    def test_theme_graph_optional(self):
        assert EngineConfig.default().theme_graph() is None

    def test_theme_graph_missing_file(self, tmp_path):
        cfg = EngineConfig.from_dict({"paths": {"themes": str(tmp_path / "t.json")}})
        with pytest.raises(MissingArtifactError, match="theme graph"):
            cfg.theme_graph()

    def test_deps_with_injected_index(self, river_index):
        deps = EngineConfig.default().deps(index=river_index)
        assert deps.index is river_index
        assert isinstance(deps.classifier, LexicalClassifier)
        assert deps.theme_graph is None
