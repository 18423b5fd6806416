"""Run and dataset manifests (JSON)."""

import hashlib
import json
import platform
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import __version__

MANIFEST_VERSION = 1


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def run_manifest(subcommand, config, seed, outputs=(), extra=None):
    from .._accel import BACKEND

    return {
        "manifest_version": MANIFEST_VERSION,
        "tool": "hierprot",
        "tool_version": __version__,
        "subcommand": subcommand,
        "config": config,
        "config_hash": config_hash(config),
        "seed": seed,
        "outputs": list(outputs),
        "versions": {"python": platform.python_version(), "numpy": np.__version__,
                     "kernels": BACKEND},
        **(extra or {}),
    }


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


@dataclass
class DatasetManifest:
    seed: int
    generator_version: str
    train_ids: list = field(default_factory=list)
    test_ids: list = field(default_factory=list)

    def __post_init__(self):
        overlap = set(self.train_ids) & set(self.test_ids)
        if overlap:
            raise ValueError(f"train/test splits overlap: {sorted(overlap)[:5]}")

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)
