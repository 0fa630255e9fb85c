from __future__ import annotations

import json
import random

import pytest

from prmpipe.config import PipelineConfig
from prmpipe.gateway import EndpointSettings
from prmpipe.store import (
    RecordError,
    RunManifest,
    manifest_path_for,
    read_manifest,
    read_records,
    write_manifest,
    write_records,
)


class TestRecords:
    def test_roundtrip_thousand_random_records(self, tmp_path):
        rng = random.Random(8)
        records = [
            {
                "id": i,
                "value": rng.random(),
                "text": f"row {rng.randint(0, 10**9)}",
                "nested": {"list": [rng.randint(0, 9) for _ in range(3)]},
            }
            for i in range(1000)
        ]
        path = tmp_path / "data.jsonl"
        assert write_records(path, records) == 1000
        assert read_records(path) == records

    def test_malformed_line_is_addressed(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        lines = [json.dumps({"i": i}) for i in range(10)]
        lines[6] = "{not json"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(RecordError) as excinfo:
            read_records(path)
        assert excinfo.value.line_number == 7
        assert "line 7" in str(excinfo.value)

    def test_non_object_line_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"a": 1}\n[1, 2, 3]\n')
        with pytest.raises(RecordError) as excinfo:
            read_records(path)
        assert excinfo.value.line_number == 2

    def test_vendor_fields_survive_passthrough(self, tmp_path):
        records = [{"solution_id": "a", "x-vendor-extra": {"deep": True}}]
        path = tmp_path / "v.jsonl"
        write_records(path, records)
        roundtripped = read_records(path)
        write_records(path, roundtripped)
        assert read_records(path) == records

    def test_write_is_atomic_on_failure(self, tmp_path):
        path = tmp_path / "out.jsonl"
        write_records(path, [{"ok": 1}])

        def exploding():
            yield {"partial": True}
            raise RuntimeError("mid-write failure")

        with pytest.raises(RuntimeError):
            write_records(path, exploding())
        # Prior output is intact; no partial replacement happened.
        assert read_records(path) == [{"ok": 1}]


class TestManifest:
    def test_roundtrip(self, tmp_path):
        output = tmp_path / "stage.jsonl"
        manifest = RunManifest(
            stage="label",
            config_hash="abc",
            input_count=10,
            output_count=9,
            discarded=1,
            stats={"note": "x"},
            wall_time_s=0.5,
        )
        write_manifest(output, manifest)
        data = read_manifest(output)
        assert data["stage"] == "label"
        assert data["input_count"] == data["output_count"] + data["discarded"]
        assert manifest_path_for(output).name == "stage.jsonl.manifest.json"


class TestConfig:
    def test_defaults(self):
        config = PipelineConfig()
        assert config.labels.method == "ratio"
        assert config.rewards.threshold == 0.5
        assert config.sampling.max_paths == 2048
        assert config.tts.max_turns == 3

    def test_from_dict_sections(self):
        config = PipelineConfig.from_dict(
            {
                "seed": 3,
                "labels": {"method": "diff", "epsilon": -0.3},
                "endpoints": {
                    "policy": {"base_url": "http://x", "model": "m", "auth_env": "TOK"}
                },
            }
        )
        assert config.seed == 3
        assert config.labels.method == "diff"
        assert config.endpoints["policy"] == EndpointSettings(
            base_url="http://x", model="m", auth_env="TOK"
        )

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError):
            PipelineConfig.from_dict({"sedd": 1})
        with pytest.raises(ValueError):
            PipelineConfig.from_dict({"endpoints": {"oracle": {"base_url": "u", "model": "m"}}})

    def test_json_and_yaml_files(self, tmp_path):
        payload = {"seed": 11, "workdir": "w"}
        json_path = tmp_path / "c.json"
        json_path.write_text(json.dumps(payload))
        assert PipelineConfig.from_file(json_path).seed == 11
        yaml_path = tmp_path / "c.yaml"
        yaml_path.write_text("seed: 12\nworkdir: w\n")
        assert PipelineConfig.from_file(yaml_path).seed == 12

    def test_snapshot_hash_stability(self):
        a = PipelineConfig.from_dict({"seed": 1})
        b = PipelineConfig.from_dict({"seed": 1})
        c = PipelineConfig.from_dict({"seed": 2})
        assert a.snapshot_hash() == b.snapshot_hash()
        assert a.snapshot_hash() != c.snapshot_hash()

    def test_mock_requires_seed(self):
        config = PipelineConfig.from_dict({"mock": True})
        with pytest.raises(ValueError):
            config.validate_for_run(("policy",))
        config.seed = 1
        config.validate_for_run(("policy",))

    def test_live_requires_endpoints(self):
        config = PipelineConfig.from_dict({"seed": 1})
        with pytest.raises(ValueError):
            config.validate_for_run(("completer",))

    def test_overrides(self):
        config = PipelineConfig.from_dict({"seed": 1, "workdir": "a"})
        updated = config.with_overrides(
            seed=9, mock=True, workdir="b", endpoint_urls={"policy": "http://new"}
        )
        assert updated.seed == 9
        assert updated.mock
        assert updated.workdir == "b"
        assert updated.endpoints["policy"].base_url == "http://new"
        # Originals untouched.
        assert config.seed == 1 and not config.mock

    def test_path_for(self):
        config = PipelineConfig.from_dict({"workdir": "w", "paths": {"problems": "/abs/p.jsonl"}})
        assert str(config.path_for("problems")) == "/abs/p.jsonl"
        assert str(config.path_for("labels")) == "w/labels.jsonl"
        with pytest.raises(KeyError):
            config.path_for("nonsense")
