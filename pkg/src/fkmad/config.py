"""Sectioned run configuration: INI file, environment overrides, echo.

A run is configured by four dataclasses (model, loss, score, data) plus a
seed, grouped into RunConfig.  Every key has a default; unknown sections or
keys are rejected by name.  Environment variables of the form
FKMAD_<SECTION>_<KEY> override both defaults and file values.  render()
produces the fully resolved config as INI text, and loading that text back
reproduces the config exactly, which is how run artifacts echo their
effective settings.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import os
from dataclasses import dataclass

from .losses import LossConfig
from .model import ModelConfig
from .scoring import FusionConfig


class ConfigError(ValueError):
    """Malformed config text, unknown key, or uncoercible value."""


ENV_PREFIX = "FKMAD_"


@dataclass
class DataConfig:
    train_path: str = ""   # CSV to train on (label column, if any, is ignored)
    eval_path: str = ""    # labeled CSV to score and evaluate
    stride: int = 0        # window stride for training; 0 = window length
    split: float = 1.0     # leading fraction of the training file to train on


@dataclass
class RunConfig:
    model: ModelConfig
    loss: LossConfig
    score: FusionConfig
    data: DataConfig
    seed: int = 0

    def validate(self) -> None:
        self.loss.validate()
        self.score.validate()
        if self.model.window < 2:
            raise ConfigError(f"model.window must be >= 2, got {self.model.window}")
        if self.model.d_in:
            self.model.resolved_hidden()
        if not (0.0 < self.data.split <= 1.0):
            raise ConfigError(f"data.split must lie in (0, 1], got {self.data.split}")
        if self.data.stride < 0:
            raise ConfigError(f"data.stride must be >= 0, got {self.data.stride}")


def default_config() -> RunConfig:
    # d_in = 0 means "infer from the training data"
    return RunConfig(model=ModelConfig(d_in=0), loss=LossConfig(),
                     score=FusionConfig(), data=DataConfig(), seed=0)


def _sections(cfg: RunConfig) -> dict[str, object]:
    return {"model": cfg.model, "loss": cfg.loss,
            "score": cfg.score, "data": cfg.data, "run": cfg}


_RUN_KEYS = ("seed",)  # RunConfig fields that live in the [run] section


def _coerce(raw: str, default, where: str):
    """Parse `raw` to the type of the default value for this key."""
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{where}: expected a boolean, got '{raw}'")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{where}: expected an integer, got '{raw}'") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{where}: expected a number, got '{raw}'") from None
    return raw


def _assign(cfg: RunConfig, section: str, key: str, raw: str) -> None:
    targets = _sections(cfg)
    if section not in targets:
        raise ConfigError(f"unknown config section '{section}'")
    obj = targets[section]
    allowed = (_RUN_KEYS if section == "run"
               else tuple(f.name for f in dataclasses.fields(obj)))
    if key not in allowed:
        raise ConfigError(f"unknown config key '{section}.{key}'")
    setattr(obj, key, _coerce(raw, getattr(obj, key), f"{section}.{key}"))


def apply_text(cfg: RunConfig, text: str, origin: str = "<config>") -> None:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {origin}: {exc}") from None
    if parser.defaults():
        stray = ", ".join(sorted(parser.defaults()))
        raise ConfigError(f"{origin}: keys outside any section: {stray}")
    for section in parser.sections():
        for key, raw in parser.items(section):
            _assign(cfg, section, key, raw)


def apply_env(cfg: RunConfig, env: dict[str, str] | None = None) -> None:
    """Overrides of the form FKMAD_<SECTION>_<KEY>, e.g. FKMAD_LOSS_EPOCHS=3."""
    if env is None:
        env = os.environ
    for name in sorted(env):
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):]
        section, _, key = rest.partition("_")
        if not section or not key:
            raise ConfigError(f"malformed override variable '{name}'")
        _assign(cfg, section.lower(), key.lower(), env[name])


def load_config(path: str | None = None,
                env: dict[str, str] | None = None) -> RunConfig:
    """Defaults, then the INI file (if any), then environment overrides."""
    cfg = default_config()
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        apply_text(cfg, text, origin=path)
    apply_env(cfg, env)
    cfg.validate()
    return cfg


def render(cfg: RunConfig) -> str:
    """The fully resolved config as INI text; load_config of it round-trips."""
    parser = configparser.ConfigParser(interpolation=None)
    for section, obj in _sections(cfg).items():
        keys = (_RUN_KEYS if section == "run"
                else tuple(f.name for f in dataclasses.fields(obj)))
        parser[section] = {k: repr(getattr(obj, k)) if
                           isinstance(getattr(obj, k), float)
                           else str(getattr(obj, k)) for k in keys}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def as_dict(cfg: RunConfig) -> dict:
    """Nested plain-type snapshot, e.g. for the checkpoint manifest."""
    return {"model": dataclasses.asdict(cfg.model),
            "loss": dataclasses.asdict(cfg.loss),
            "score": dataclasses.asdict(cfg.score),
            "data": dataclasses.asdict(cfg.data),
            "seed": cfg.seed}


def from_dict(snapshot: dict) -> RunConfig:
    cfg = default_config()
    for section, obj in _sections(cfg).items():
        if section == "run":
            continue
        stored = snapshot.get(section, {})
        for f in dataclasses.fields(obj):
            if f.name in stored:
                setattr(obj, f.name, stored[f.name])
    cfg.seed = int(snapshot.get("seed", 0))
    return cfg
