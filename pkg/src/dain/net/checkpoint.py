"""Checkpoint directories: one DAIT file per parameter plus a JSON manifest."""
import json
from pathlib import Path

import numpy as np

from ..core.io import load_tensor, save_tensor
from .network import Network
from .spec import NetworkSpec

__all__ = ["save_checkpoint", "load_checkpoint"]


def save_checkpoint(network, directory, stage=None, extra=None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for p in network.parameters():
        fname = p.name + ".dait"
        save_tensor(directory / fname, p.value)
        names.append(p.name)
    manifest = {
        "spec": network.spec.to_dict(),
        "seed": network.seed,
        "stage": stage,
        "parameters": names,
    }
    if extra:
        manifest.update(extra)
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def load_checkpoint(directory, dtype=np.float32):
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    net = Network(NetworkSpec.from_dict(manifest["spec"]), seed=manifest["seed"], dtype=dtype)
    params = net.named_parameters()
    missing = set(params) - set(manifest["parameters"])
    if missing:
        raise ValueError(f"checkpoint lacks parameters {sorted(missing)}")
    for name in manifest["parameters"]:
        params[name].value = load_tensor(directory / (name + ".dait")).astype(dtype)
    return net, manifest
