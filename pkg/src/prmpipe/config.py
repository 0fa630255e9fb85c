"""Declarative pipeline configuration.

One document (JSON or YAML) holds every knob; environment variables override
only secrets (endpoint auth tokens are read from the env var each endpoint
names). A snapshot hash of the resolved config goes into every manifest.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .gateway import ROLES, EndpointSettings
from .mockworld import WorldSettings

STAGE_FILES = {
    "problems": "problems.jsonl",
    "solutions": "solutions.jsonl",
    "profiles": "profiles.jsonl",
    "labels": "labels.jsonl",
    "rationales": "rationales.jsonl",
    "filters": "filters.jsonl",
    "dataset": "dataset.jsonl",
    "rewards": "rewards.jsonl",
    "bon": "bon.jsonl",
    "critic": "critic.jsonl",
    "eval_input": "processbench.jsonl",
    "eval_report": "eval_report.json",
    "run_report": "run_report.txt",
}


@dataclass(frozen=True)
class SamplingConfig:
    max_paths: int = 2048
    batch_size: int = 16
    early_stop: bool = False
    paths_per_problem: int = 8  # retained per kept problem; not paper-anchored
    temperature: float = 0.7
    max_tokens: int = 1024


@dataclass(frozen=True)
class McConfig:
    initial_k: int = 64  # budget for MC(s_1) when no sampling estimate exists
    temperature: float = 0.7
    max_tokens: int = 768
    instruction: str | None = None


@dataclass(frozen=True)
class LabelConfig:
    method: str = "ratio"
    epsilon: float | None = None  # None = method default (0.8 ratio, -0.3 diff)


@dataclass(frozen=True)
class RationaleConfig:
    temperature: float = 0.6
    max_tokens: int = 2048
    extra_segments: int = 4


@dataclass(frozen=True)
class RewardConfig:
    threshold: float = 0.5
    n_paths: int = 1
    renormalize: bool = True
    code_exec: bool = True
    temperature: float = 0.6
    max_tokens: int = 2048


@dataclass(frozen=True)
class TtsConfig:
    bon_method: str = "min"
    max_turns: int = 3


@dataclass(frozen=True)
class EvalConfig:
    mode: str = "pass1"
    n: int = 8


@dataclass(frozen=True)
class SandboxConfig:
    wall_clock_seconds: float = 10.0
    output_byte_cap: int = 8192
    network_allowed: bool = False
    interpreter: tuple[str, ...] | None = None


@dataclass
class PipelineConfig:
    workdir: str = "run"
    seed: int | None = None
    cache_dir: str | None = None
    concurrency: int = 8
    mock: bool = False
    limit: int | None = None
    endpoints: dict[str, EndpointSettings] = field(default_factory=dict)
    world: WorldSettings = field(default_factory=WorldSettings)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    mc: McConfig = field(default_factory=McConfig)
    labels: LabelConfig = field(default_factory=LabelConfig)
    rationale: RationaleConfig = field(default_factory=RationaleConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    tts: TtsConfig = field(default_factory=TtsConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    sandbox: SandboxConfig = field(default_factory=SandboxConfig)
    paths: dict[str, str] = field(default_factory=dict)

    def path_for(self, name: str) -> Path:
        if name in self.paths:
            return Path(self.paths[name])
        if name not in STAGE_FILES:
            raise KeyError(f"unknown artifact name {name!r}")
        return Path(self.workdir) / STAGE_FILES[name]

    def snapshot_hash(self) -> str:
        payload = asdict(self)
        blob = json.dumps(payload, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def validate_for_run(self, roles_needed: tuple[str, ...]) -> None:
        """Fail fast before a stage touches anything."""
        if self.mock and self.seed is None:
            raise ValueError("mock runs require an explicit seed")
        if not self.mock:
            for role in roles_needed:
                if role not in self.endpoints:
                    raise ValueError(f"no endpoint configured for role {role!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict = {}
        section_types = {
            "world": WorldSettings,
            "sampling": SamplingConfig,
            "mc": McConfig,
            "labels": LabelConfig,
            "rationale": RationaleConfig,
            "rewards": RewardConfig,
            "tts": TtsConfig,
            "eval": EvalConfig,
        }
        for key, value in data.items():
            if key == "endpoints":
                endpoints = {}
                for role, spec in value.items():
                    if role not in ROLES:
                        raise ValueError(f"unknown endpoint role {role!r}")
                    endpoints[role] = EndpointSettings(**spec)
                kwargs[key] = endpoints
            elif key == "sandbox":
                spec = dict(value)
                if spec.get("interpreter") is not None:
                    spec["interpreter"] = tuple(spec["interpreter"])
                kwargs[key] = SandboxConfig(**spec)
            elif key in section_types:
                kwargs[key] = section_types[key](**value)
            else:
                kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix in (".yaml", ".yml"):
            import yaml

            data = yaml.safe_load(text) or {}
        else:
            data = json.loads(text)
        return cls.from_dict(data)

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        mock: bool | None = None,
        cache_dir: str | None = None,
        limit: int | None = None,
        workdir: str | None = None,
        endpoint_urls: dict[str, str] | None = None,
    ) -> "PipelineConfig":
        cfg = replace(self)
        if seed is not None:
            cfg.seed = seed
        if mock is not None:
            cfg.mock = mock
        if cache_dir is not None:
            cfg.cache_dir = cache_dir
        if limit is not None:
            cfg.limit = limit
        if workdir is not None:
            cfg.workdir = workdir
        if endpoint_urls:
            endpoints = dict(cfg.endpoints)
            for role, url in endpoint_urls.items():
                current = endpoints.get(role)
                if current is None:
                    endpoints[role] = EndpointSettings(base_url=url, model="default")
                else:
                    endpoints[role] = replace(current, base_url=url)
            cfg.endpoints = endpoints
        return cfg
