"""Checkpoint directories: one tensor file per parameter plus a key-value manifest."""
from __future__ import annotations

from pathlib import Path

from .. import tensor_core
from ..config import TrainConfig, parse_config

MANIFEST = "manifest.txt"


def save_checkpoint(directory, params: dict, config: TrainConfig, epoch: int | None) -> Path:
    directory = Path(directory)
    (directory / "params").mkdir(parents=True, exist_ok=True)
    for name, value in params.items():
        tensor_core.save(directory / "params" / f"{name}.tvt", value)
    lines = [
        f"spec_hash = {config.spec_hash()}",
        f"epoch = {epoch if epoch is not None else 'none'}",
        f"seed = {config.seed}",
        f"params = {','.join(params)}",
    ]
    (directory / MANIFEST).write_text("\n".join(lines) + "\n")
    # the full config travels with the checkpoint so eval can rebuild the model
    (directory / "config.txt").write_text(config.to_text())
    return directory


def read_manifest(directory) -> dict:
    path = Path(directory) / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no checkpoint manifest at {path}")
    out = {}
    for line in path.read_text().splitlines():
        key, _, value = line.partition("=")
        if key.strip():
            out[key.strip()] = value.strip()
    return out


def load_checkpoint(directory):
    """Return ``(config, model, params, manifest)``."""
    directory = Path(directory)
    manifest = read_manifest(directory)
    config = parse_config((directory / "config.txt").read_text(), directory)
    if config.spec_hash() != manifest["spec_hash"]:
        raise ValueError(f"checkpoint spec hash {manifest['spec_hash']} does not match its config "
                         f"({config.spec_hash()})")
    model = config.model()
    params = {name: tensor_core.load(directory / "params" / f"{name}.tvt")
              for name in manifest["params"].split(",")}
    expected = model.param_shapes()
    for name, shape in expected.items():
        if name not in params or params[name].shape != shape:
            got = params[name].shape if name in params else None
            raise ValueError(f"parameter {name!r}: checkpoint shape {got}, model expects {shape}")
    return config, model, params, manifest
