"""Experiment configuration: flat ``key = value`` text with dotted section names.

Example::

    seed = 0
    data.dir = data
    latent.K = 4
    latent.modes = W:4,H:4,T:4
    train.lr = 1e-3

Blank lines and ``#`` comments are ignored. Lists are comma separated.
Relative paths are resolved against the directory holding the config file.
"""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .data_synth import DEFAULT_DIMS, DEFAULT_KERNELS, DatasetSpec
from .kernels import DEFAULT_JITTER, PriorSpec, SEKernelParams
from .vae.model import TVGPVAE, LatentSpec


class ConfigError(ValueError):
    """Malformed or invalid configuration; message names the line or field."""


def _key(name, **kw):
    return field(metadata={"key": name}, **kw)


@dataclass
class TrainConfig:
    seed: int = _key("seed", default=0)
    threads: int = _key("threads", default=1)
    data_dir: Path = _key("data.dir", default=Path("data"))
    data_seed: int | None = _key("data.seed", default=None)
    data_n: int = _key("data.n", default=600)
    data_dims: tuple = _key("data.dims", default=DEFAULT_DIMS)
    data_sigma: tuple = _key("data.sigma", default=tuple(k.sigma for k in DEFAULT_KERNELS))
    data_length_scale: tuple = _key("data.length_scale",
                                    default=tuple(k.length_scale for k in DEFAULT_KERNELS))
    data_split: tuple = _key("data.split", default=(0.8, 0.1, 0.1))
    latent_K: int = _key("latent.K", default=4)
    latent_modes: str = _key("latent.modes", default="W:4,H:4,T:4")
    prior_sigma: float = _key("prior.sigma", default=1.0)
    prior_length_scale: float = _key("prior.length_scale", default=1.0)
    prior_jitter: float = _key("prior.jitter", default=DEFAULT_JITTER)
    net_hidden: int = _key("net.hidden", default=128)
    net_features: int = _key("net.features", default=8)
    lr: float = _key("train.lr", default=1e-3)
    batch_size: int = _key("train.batch_size", default=50)
    max_epochs: int = _key("train.max_epochs", default=500)
    eval_every: int = _key("train.eval_every", default=10)
    patience: int = _key("train.patience", default=5)
    out_dir: Path = _key("train.out", default=Path("run"))
    log_wall_time: bool = _key("train.log_wall_time", default=False)

    def __post_init__(self):
        self.validate()

    def validate(self):
        checks = [
            ("train.lr", self.lr >= 0, "must be >= 0"),
            ("train.batch_size", self.batch_size >= 1, "must be >= 1"),
            ("train.max_epochs", self.max_epochs >= 1, "must be >= 1"),
            ("train.eval_every", self.eval_every >= 1, "must be >= 1"),
            ("train.patience", self.patience >= 1, "must be >= 1"),
            ("threads", self.threads >= 1, "must be >= 1"),
            ("data.n", self.data_n >= 1, "must be >= 1"),
            ("data.dims", len(self.data_dims) == 4 and min(self.data_dims) >= 1,
             "must be four positive sizes C,W,H,T"),
            ("data.sigma", len(self.data_sigma) == 4 and min(self.data_sigma) > 0,
             "must be four positive values"),
            ("data.length_scale", len(self.data_length_scale) == 4 and min(self.data_length_scale) > 0,
             "must be four positive values"),
            ("data.split", len(self.data_split) == 3 and abs(sum(self.data_split) - 1) <= 1e-9,
             "must be three fractions summing to 1"),
            ("latent.K", self.latent_K >= 1, "must be >= 1"),
            ("prior.sigma", self.prior_sigma > 0, "must be positive"),
            ("prior.length_scale", self.prior_length_scale > 0, "must be positive"),
            ("prior.jitter", self.prior_jitter >= 0, "must be >= 0"),
            ("net.hidden", self.net_hidden >= 1, "must be >= 1"),
            ("net.features", self.net_features >= 1, "must be >= 1"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(f"field '{key}': {msg}")
        try:
            self.latent_spec()
        except ValueError as exc:
            raise ConfigError(f"field 'latent.modes': {exc}") from None

    # --- derived objects ---------------------------------------------------------

    def latent_spec(self) -> LatentSpec:
        return LatentSpec.parse(self.latent_K, self.latent_modes)

    def prior_spec(self) -> PriorSpec:
        return PriorSpec.shared(self.latent_spec().mode_dims, self.prior_sigma,
                                self.prior_length_scale, self.prior_jitter)

    def dataset_spec(self) -> DatasetSpec:
        kernels = tuple(SEKernelParams(s, l) for s, l in zip(self.data_sigma, self.data_length_scale))
        seed = self.seed if self.data_seed is None else self.data_seed
        return DatasetSpec(self.data_n, tuple(self.data_dims), kernels, seed)

    def model(self) -> TVGPVAE:
        return TVGPVAE(self.data_dims, self.latent_spec(), self.prior_spec(),
                       hidden=self.net_hidden, features=self.net_features)

    def spec_hash(self) -> str:
        """Hash of everything that fixes the model architecture and prior."""
        parts = [self.data_dims, self.latent_K, self.latent_spec().format(), self.prior_sigma,
                 self.prior_length_scale, self.prior_jitter, self.net_hidden, self.net_features]
        return hashlib.sha256(repr(parts).encode()).hexdigest()[:16]

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            lines.append(f"{f.metadata['key']} = {_format(v)}")
        return "\n".join(lines) + "\n"


FIELDS = {f.metadata["key"]: f for f in dataclasses.fields(TrainConfig)}


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
    return str(v)


def _convert(f: dataclasses.Field, raw: str, base: Path):
    default = f.default
    name = f.name
    if name in ("data_dims",):
        return tuple(int(x) for x in raw.split(","))
    if name in ("data_sigma", "data_length_scale", "data_split"):
        return tuple(float(x) for x in raw.split(","))
    if isinstance(default, bool):
        low = raw.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"expected a boolean, got {raw!r}")
        return low in ("true", "1", "yes")
    if isinstance(default, Path):
        p = Path(raw)
        return p if p.is_absolute() else base / p
    if isinstance(default, int) or name == "data_seed":
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config(text: str, base: Path = Path(".")) -> TrainConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in FIELDS:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        f = FIELDS[key]
        try:
            values[f.name] = _convert(f, raw, base)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: field '{key}': {exc}") from None
    for f in FIELDS.values():
        if isinstance(f.default, Path) and f.name not in values:
            values[f.name] = base / f.default
    return TrainConfig(**values)


def load_config(path) -> TrainConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    return parse_config(path.read_text(), path.resolve().parent)
