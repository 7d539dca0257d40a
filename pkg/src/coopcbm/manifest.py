"""Run manifests: every CLI output artifact gets a sidecar manifest with
input/output hashes and the resolved configuration, enough to reproduce the
artifact bit-for-bit."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from . import __version__
from .errors import ArtifactMissingError, HashMismatchError


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest_path(artifact: str | Path) -> Path:
    p = Path(artifact)
    return p.with_name(p.name + ".manifest.json")


def write_manifest(
    subcommand: str,
    config: dict,
    inputs: dict[str, str | Path],
    outputs: dict[str, str | Path],
    seeds: dict[str, int] | None = None,
) -> Path:
    """Write a sidecar manifest next to every output artifact."""
    obj = {
        "tool_version": __version__,
        "subcommand": subcommand,
        "config": config,
        "seeds": seeds or {},
        "inputs": {name: sha256_file(p) for name, p in sorted(inputs.items())},
        "outputs": {name: sha256_file(p) for name, p in sorted(outputs.items())},
    }
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    paths = [manifest_path(p) for p in outputs.values()]
    for path in paths:
        path.write_text(text)
    return paths[0]


def verify_artifact(path: str | Path) -> None:
    """Check an artifact against its sidecar manifest (for --strict runs)."""
    p = Path(path)
    if not p.exists():
        raise ArtifactMissingError(f"artifact not found: {p}")
    mpath = manifest_path(p)
    if not mpath.exists():
        raise ArtifactMissingError(f"no manifest for artifact: {p}")
    manifest = json.loads(mpath.read_text())
    actual = sha256_file(p)
    for name, digest in manifest.get("outputs", {}).items():
        if name == p.name:
            if digest != actual:
                raise HashMismatchError(
                    f"{p} hash {actual} does not match manifest {digest}"
                )
            return
    raise ArtifactMissingError(f"manifest {mpath} does not list {p.name}")
