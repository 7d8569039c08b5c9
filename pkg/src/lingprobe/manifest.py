"""Run manifests: enough to reproduce any artifact bit-identically.

A manifest records the subcommand, the fully resolved options (seeds
included), SHA-256 digests of every input file, and digests of the
artifacts written.  No timestamps, so manifests themselves are
deterministic.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Sequence

from .util import sha256_file


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_manifest(
    command: str, config: dict, inputs: Sequence, outputs: Sequence
) -> dict:
    return {
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {str(p): sha256_file(p) for p in outputs},
    }


def write_manifest(manifest: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")


def manifest_path_for(artifact) -> Path:
    return Path(f"{artifact}.manifest.json")
