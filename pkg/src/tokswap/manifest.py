"""Run manifests: enough provenance to decide whether a pipeline stage can
be skipped. Two manifests that agree on everything but the timestamp came
from the same inputs and parameters, so their outputs are interchangeable."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, asdict
from hashlib import sha256

from .errors import DataError

TOOL_VERSION = "0.1.0"


def sha256_file(path) -> str:
    h = sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    parameters: dict
    input_hashes: dict
    tool_version: str = TOOL_VERSION
    timestamp: str = ""
    seed: int | None = None

    def __post_init__(self):
        if not self.timestamp:
            self.timestamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())

    def matches(self, other: "RunManifest") -> bool:
        """Equality up to timestamp."""
        return (
            self.command == other.command
            and self.parameters == other.parameters
            and self.input_hashes == other.input_hashes
            and self.tool_version == other.tool_version
            and self.seed == other.seed
        )


def write_manifest(manifest: RunManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(asdict(manifest), fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path) -> RunManifest:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: bad manifest JSON ({exc.msg})") from None
    try:
        return RunManifest(**data)
    except TypeError:
        raise DataError(f"{path}: manifest fields do not match") from None
