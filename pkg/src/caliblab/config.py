"""Training configuration: typed specs plus the INI config-file format.

Config files are UTF-8 ``key = value`` lines grouped into the sections
[model], [loss], [optimizer], [run], [data] and an optional [grid]. Keys
mirror the dataclass fields below; unknown sections or keys are
rejected, every loss weight defaults to zero, and missing required keys
produce an error naming the key.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass

from .datasets import DatasetSpec

HEAD_KINDS = ("softmax", "enn", "dm")
OPTIMIZER_KINDS = ("adam", "sgd-momentum")


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration input."""


@dataclass(frozen=True)
class ModelSpec:
    hidden: tuple[int, ...]
    head: str = "softmax"
    spectral_norm: bool = False
    sn_coeff: float = 1.0
    sn_power_iters: int = 1

    def validate(self) -> None:
        if self.head not in HEAD_KINDS:
            raise ConfigError(f"unknown head kind {self.head!r}")
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden layer widths must be positive")
        if self.head == "dm" and not self.hidden:
            raise ConfigError("head = dm requires at least one hidden layer")
        if self.sn_coeff <= 0:
            raise ConfigError("sn_coeff must be positive")
        if self.sn_power_iters < 1:
            raise ConfigError("sn_power_iters must be at least 1")


@dataclass(frozen=True)
class LossWeights:
    """Weights of the auxiliary loss terms; zero disables a term entirely."""

    evidential_kl: float = 0.0
    avuc: float = 0.0
    mmce: float = 0.0
    dm_entropy: float = 0.0
    proto_dispersion: float = 0.0
    uncertainty_bce: float = 0.0
    conf_threshold: float = 0.5
    unc_threshold: float = 0.5
    avuc_sharpness: float = 0.1
    kernel_width: float = 0.4

    def validate(self) -> None:
        for name in (
            "evidential_kl",
            "avuc",
            "mmce",
            "dm_entropy",
            "proto_dispersion",
            "uncertainty_bce",
        ):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name!r} must be non-negative")
        for name in ("conf_threshold", "unc_threshold"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{name!r} must lie strictly inside (0, 1)")
        if self.avuc_sharpness <= 0:
            raise ConfigError("avuc_sharpness must be positive")
        if self.kernel_width <= 0:
            raise ConfigError("kernel_width must be positive")


@dataclass(frozen=True)
class OptimizerSpec:
    lr: float
    kind: str = "adam"
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def validate(self) -> None:
        if self.kind not in OPTIMIZER_KINDS:
            raise ConfigError(f"unknown optimizer kind {self.kind!r}")
        if self.lr <= 0:
            raise ConfigError("optimizer lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("adam betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ConfigError("optimizer epsilon must be positive")


@dataclass(frozen=True)
class TrainingConfig:
    model: ModelSpec
    loss: LossWeights
    optimizer: OptimizerSpec
    epochs: int
    batch_size: int
    seed: int = 0
    augment: bool = False

    def validate(self) -> None:
        self.model.validate()
        self.loss.validate()
        self.optimizer.validate()
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        # Loss weights must belong to the configured head.
        if self.loss.evidential_kl > 0 and self.model.head != "enn":
            raise ConfigError(
                "loss key 'evidential_kl' requires head = enn, "
                f"got head = {self.model.head}"
            )
        for name in ("dm_entropy", "proto_dispersion", "uncertainty_bce"):
            if getattr(self.loss, name) > 0 and self.model.head != "dm":
                raise ConfigError(
                    f"loss key {name!r} requires head = dm, "
                    f"got head = {self.model.head}"
                )


@dataclass(frozen=True)
class LoadedConfig:
    training: TrainingConfig
    data: DatasetSpec
    grid: dict[str, list] | None = None


# -- parsing -----------------------------------------------------------------


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_int(text: str) -> int:
    return int(text.strip())


def _parse_float(text: str) -> float:
    return float(text.strip())


def _parse_str(text: str) -> str:
    return text.strip()


def _parse_int_list(text: str) -> tuple[int, ...]:
    stripped = text.strip()
    if not stripped:
        return ()
    return tuple(int(part.strip()) for part in stripped.split(","))


_PARSERS = {
    ("model", "hidden"): _parse_int_list,
    ("model", "head"): _parse_str,
    ("model", "spectral_norm"): _parse_bool,
    ("model", "sn_coeff"): _parse_float,
    ("model", "sn_power_iters"): _parse_int,
    ("loss", "evidential_kl"): _parse_float,
    ("loss", "avuc"): _parse_float,
    ("loss", "mmce"): _parse_float,
    ("loss", "dm_entropy"): _parse_float,
    ("loss", "proto_dispersion"): _parse_float,
    ("loss", "uncertainty_bce"): _parse_float,
    ("loss", "conf_threshold"): _parse_float,
    ("loss", "unc_threshold"): _parse_float,
    ("loss", "avuc_sharpness"): _parse_float,
    ("loss", "kernel_width"): _parse_float,
    ("optimizer", "kind"): _parse_str,
    ("optimizer", "lr"): _parse_float,
    ("optimizer", "momentum"): _parse_float,
    ("optimizer", "beta1"): _parse_float,
    ("optimizer", "beta2"): _parse_float,
    ("optimizer", "epsilon"): _parse_float,
    ("run", "epochs"): _parse_int,
    ("run", "batch_size"): _parse_int,
    ("run", "seed"): _parse_int,
    ("run", "augment"): _parse_bool,
    ("data", "kind"): _parse_str,
    ("data", "samples"): _parse_int,
    ("data", "classes"): _parse_int,
    ("data", "noise"): _parse_float,
    ("data", "label_noise"): _parse_float,
    ("data", "train_frac"): _parse_float,
    ("data", "val_frac"): _parse_float,
    ("data", "test_frac"): _parse_float,
    ("data", "seed"): _parse_int,
    ("data", "path"): _parse_str,
}

_REQUIRED = (
    ("model", "hidden"),
    ("optimizer", "lr"),
    ("run", "epochs"),
    ("run", "batch_size"),
)

_SECTIONS = ("model", "loss", "optimizer", "run", "data", "grid")


def _read_ini(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(
        interpolation=None, delimiters=("=",), strict=True
    )
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    return parser


def load_config(path) -> LoadedConfig:
    """Parse and validate a config file; errors name the offending key."""
    parser = _read_ini(path)

    values: dict[tuple[str, str], object] = {}
    grid: dict[str, list] = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if section == "grid":
                grid[key] = _parse_grid_values(key, raw)
                continue
            parse = _PARSERS.get((section, key))
            if parse is None:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            try:
                values[(section, key)] = parse(raw)
            except ValueError as exc:
                raise ConfigError(
                    f"bad value for {key!r} in section [{section}]: {exc}"
                ) from exc

    for section, key in _REQUIRED:
        if (section, key) not in values:
            raise ConfigError(f"missing required key {key!r} in section [{section}]")

    def section_kwargs(section: str) -> dict:
        return {k: v for (s, k), v in values.items() if s == section}

    model = ModelSpec(**section_kwargs("model"))
    loss = LossWeights(**section_kwargs("loss"))
    optimizer = OptimizerSpec(**section_kwargs("optimizer"))
    training = TrainingConfig(
        model=model, loss=loss, optimizer=optimizer, **section_kwargs("run")
    )
    training.validate()
    data = DatasetSpec(**section_kwargs("data"))
    try:
        data.validate()
    except ValueError as exc:
        raise ConfigError(f"section [data]: {exc}") from exc
    return LoadedConfig(training=training, data=data, grid=grid or None)


def _parse_grid_values(key: str, raw: str) -> list:
    section, _, field = key.partition(".")
    parse = _PARSERS.get((section, field))
    if parse is None or section not in ("model", "loss", "optimizer", "run"):
        raise ConfigError(f"unknown grid key {key!r}")
    if field == "hidden":
        raise ConfigError("grid search over 'model.hidden' is not supported")
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if len(parts) < 1:
        raise ConfigError(f"grid key {key!r} lists no candidate values")
    try:
        return [parse(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"bad grid value for {key!r}: {exc}") from exc


def apply_override(training: TrainingConfig, key: str, value) -> TrainingConfig:
    """Return a copy of `training` with one dotted-key field replaced."""
    section, _, field = key.partition(".")
    if section == "run":
        if field not in ("epochs", "batch_size", "seed", "augment"):
            raise ConfigError(f"unknown override key {key!r}")
        return dataclasses.replace(training, **{field: value})
    if section in ("model", "loss", "optimizer"):
        target = getattr(training, section)
        if field not in {f.name for f in dataclasses.fields(target)}:
            raise ConfigError(f"unknown override key {key!r}")
        replaced = dataclasses.replace(target, **{field: value})
        return dataclasses.replace(training, **{section: replaced})
    raise ConfigError(f"unknown override key {key!r}")


# -- serialization -----------------------------------------------------------


def config_to_dict(training: TrainingConfig, data: DatasetSpec) -> dict:
    blob = {
        "model": dataclasses.asdict(training.model),
        "loss": dataclasses.asdict(training.loss),
        "optimizer": dataclasses.asdict(training.optimizer),
        "run": {
            "epochs": training.epochs,
            "batch_size": training.batch_size,
            "seed": training.seed,
            "augment": training.augment,
        },
        "data": dataclasses.asdict(data),
    }
    blob["model"]["hidden"] = list(training.model.hidden)
    return blob


def config_digest(training: TrainingConfig, data: DatasetSpec) -> str:
    """Stable short fingerprint of a full configuration."""
    canonical = json.dumps(config_to_dict(training, data), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def dump_config(training: TrainingConfig, data: DatasetSpec) -> str:
    """Render a configuration back to config-file text."""
    blob = config_to_dict(training, data)
    lines: list[str] = []
    for section in ("model", "loss", "optimizer", "run", "data"):
        body = blob[section]
        lines.append(f"[{section}]")
        for key, value in body.items():
            if value is None:
                continue
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, list):
                text = ",".join(str(v) for v in value)
            else:
                text = repr(value) if isinstance(value, float) else str(value)
            lines.append(f"{key} = {text}")
        lines.append("")
    return "\n".join(lines)
