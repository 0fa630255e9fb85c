"""JSONL persistence and per-stage run manifests.

One JSON document per line, unknown fields preserved on passthrough, atomic
writes (temp file + rename) so a failing stage never replaces prior output
with a partial file.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping


class RecordError(ValueError):
    """A malformed JSONL line, addressed by line number."""

    def __init__(self, path: str | Path, line_number: int, reason: str) -> None:
        super().__init__(f"{path}: line {line_number}: {reason}")
        self.path = str(path)
        self.line_number = line_number
        self.reason = reason


def read_records(path: str | Path) -> list[dict]:
    records: list[dict] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(path, line_number, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise RecordError(path, line_number, "record is not a JSON object")
            records.append(record)
    return records


def write_records(path: str | Path, records: Iterable[Mapping]) -> int:
    """Atomic JSONL write; returns the record count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp.{os.getpid()}")
    count = 0
    with open(tmp, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(dict(record), ensure_ascii=False))
            fh.write("\n")
            count += 1
    os.replace(tmp, path)
    return count


@dataclass
class RunManifest:
    """Book-keeping emitted by every stage invocation.

    Counts must conserve: ``input_count == output_count + discarded`` for
    record-to-record stages.
    """

    stage: str
    config_hash: str
    input_count: int
    output_count: int
    discarded: int = 0
    stats: dict = field(default_factory=dict)
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def manifest_path_for(output_path: str | Path) -> Path:
    output_path = Path(output_path)
    return output_path.with_name(output_path.name + ".manifest.json")


def write_manifest(output_path: str | Path, manifest: RunManifest) -> Path:
    path = manifest_path_for(output_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp.{os.getpid()}")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def read_manifest(output_path: str | Path) -> dict:
    with open(manifest_path_for(output_path), "r", encoding="utf-8") as fh:
        return json.load(fh)


class StageTimer:
    def __enter__(self) -> "StageTimer":
        self._start = time.monotonic()
        self.elapsed = 0.0
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.elapsed = time.monotonic() - self._start
