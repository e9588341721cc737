"""Synthetic spatiotemporal tensors drawn from a known tensor-variate GP.

Each sequence is an exact draw ``f`` from a zero-mean tensor-variate Gaussian
with per-mode squared-exponential covariances over the ``(C, W, H, T)`` grid,
squashed into ``(0, 1)`` by the logistic function.

Seeding: sequence ``i`` uses the ``i``-th child of
``numpy.random.SeedSequence(seed)``, so a dataset does not depend on how many
workers generated it.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor_core
from .kernels import SEKernelParams, build_covariance
from .tvgauss import DenseCovariance, TensorNormalParams, sample

DEFAULT_DIMS = (1, 8, 8, 6)
DEFAULT_KERNELS = (
    SEKernelParams(1.0, 1.0),
    SEKernelParams(1.0, 4.0),
    SEKernelParams(1.0, 4.0),
    SEKernelParams(3.0, 4.0),
)
GENERATOR_JITTER = 1e-6
MANIFEST = "manifest.json"


@dataclass(frozen=True)
class DatasetSpec:
    n: int = 600
    dims: tuple = DEFAULT_DIMS
    kernels: tuple = DEFAULT_KERNELS
    seed: int = 0
    nonlinearity: str = "logistic"

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "kernels", tuple(self.kernels))
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if any(d < 1 for d in self.dims):
            raise ValueError(f"dims must be positive, got {self.dims}")
        if len(self.kernels) != len(self.dims):
            raise ValueError("need one generator kernel per data mode")
        if self.nonlinearity != "logistic":
            raise ValueError(f"unsupported nonlinearity {self.nonlinearity!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"] = list(self.dims)
        d["kernels"] = [[k.sigma, k.length_scale] for k in self.kernels]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        return cls(n=int(d["n"]), dims=tuple(d["dims"]),
                   kernels=tuple(SEKernelParams(float(s), float(l)) for s, l in d["kernels"]),
                   seed=int(d["seed"]), nonlinearity=d.get("nonlinearity", "logistic"))

    def field_distribution(self) -> TensorNormalParams:
        covs = tuple(DenseCovariance(build_covariance(n, k, GENERATOR_JITTER * k.sigma ** 2))
                     for n, k in zip(self.dims, self.kernels))
        return TensorNormalParams(np.zeros(self.dims), covs)


def _squash(f: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * f))


def generate_fields(spec: DatasetSpec, workers: int = 1) -> np.ndarray:
    """Pre-squash GP draws, shape ``(n, *dims)``."""
    dist = spec.field_distribution()
    children = np.random.SeedSequence(spec.seed).spawn(spec.n)

    def one(child):
        return sample(dist, np.random.default_rng(child).standard_normal(spec.dims))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            fields = list(pool.map(one, children))
    else:
        fields = [one(c) for c in children]
    return np.stack(fields)


def generate(spec: DatasetSpec, workers: int = 1) -> list[np.ndarray]:
    """``n`` tensors with dims ``spec.dims`` and entries in ``(0, 1)``."""
    return list(_squash(generate_fields(spec, workers)))


def split_indices(n: int, fractions: Sequence[float], seed: int) -> tuple[list[int], list[int], list[int]]:
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ValueError(f"need three nonnegative fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    perm = np.random.default_rng(seed).permutation(n).tolist()
    n_val = math.floor(fractions[1] * n + 1e-9)
    n_test = math.floor(fractions[2] * n + 1e-9)
    n_train = n - n_val - n_test
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


def split(dataset: Sequence, fractions: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0):
    """Seeded random partition into ``(train, val, test)``; leftovers from flooring go to train."""
    tr, va, te = split_indices(len(dataset), fractions, seed)
    return [dataset[i] for i in tr], [dataset[i] for i in va], [dataset[i] for i in te]


# --- persistence ------------------------------------------------------------

@dataclass
class Dataset:
    spec: DatasetSpec
    data: list
    splits: dict = field(default_factory=dict)
    fractions: tuple = (0.8, 0.1, 0.1)

    def subset(self, name: str) -> list:
        return [self.data[i] for i in self.splits[name]]


def save_dataset(directory, dataset: Dataset) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for i, t in enumerate(dataset.data):
        name = f"seq_{i:05d}.tvt"
        tensor_core.save(directory / name, t)
        files.append(name)
    manifest = {
        "files": files,
        "spec": dataset.spec.to_dict(),
        "fractions": list(dataset.fractions),
        "split": {k: list(v) for k, v in dataset.splits.items()},
    }
    path = directory / MANIFEST
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    path = directory / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no dataset manifest at {path}")
    manifest = json.loads(path.read_text())
    data = [tensor_core.load(directory / f) for f in manifest["files"]]
    return Dataset(DatasetSpec.from_dict(manifest["spec"]), data,
                   {k: list(v) for k, v in manifest["split"].items()}, tuple(manifest["fractions"]))


def manifest_hash(directory) -> str:
    return hashlib.sha256((Path(directory) / MANIFEST).read_bytes()).hexdigest()


def build_dataset(spec: DatasetSpec, fractions=(0.8, 0.1, 0.1), workers: int = 1) -> Dataset:
    data = generate(spec, workers)
    tr, va, te = split_indices(spec.n, fractions, spec.seed)
    return Dataset(spec, data, {"train": tr, "val": va, "test": te}, tuple(fractions))
