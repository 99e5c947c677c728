"""Run configuration: one flat key = value namespace.

Every tunable (trainer hyperparameters, haze sampling ranges, filter and
SSIM settings, corpus/synth options) is addressable by key in a plain-text
config file; command-line flags override file values. Unknown keys are a
hard error so typos cannot silently fall back to defaults. The effective
configuration is echoed into the output directory and reproduces the run
when fed back in.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace

from .nets import VARIANTS


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    seed: int = 7
    variant: str = "full"
    # optimizer
    lr: float = 2e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # schedule
    batch_size: int = 4
    iterations: int = 600
    log_every: int = 25
    checkpoint_every: int = 100
    checkpoint_keep: int = 3
    # loss weights
    alpha1: float = 2.0
    alpha2: float = 1.0
    alpha3: float = 2.0
    alpha4: float = 0.1
    # frequency priors
    gauss_size: int = 15
    gauss_sigma: float = 3.0
    # ssim
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    # haze sampling ranges
    a_min: float = 0.5
    a_max: float = 1.0
    beta_min: float = 1.2
    beta_max: float = 2.0
    # corpus synthesis
    count: int = 20
    size: int = 64
    # paths
    corpus: str = ""
    eval_corpus: str = ""
    out: str = ""

    def validate(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.gauss_size % 2 == 0 or self.gauss_size < 3:
            raise ConfigError(f"gauss_size must be odd and >= 3, got {self.gauss_size}")
        if self.gauss_sigma <= 0:
            raise ConfigError(f"gauss_sigma must be > 0, got {self.gauss_sigma}")
        if self.ssim_window % 2 == 0 or self.ssim_window < 3:
            raise ConfigError(f"ssim_window must be odd and >= 3, got {self.ssim_window}")
        if not (0 <= self.a_min <= self.a_max <= 1):
            raise ConfigError(f"need 0 <= a_min <= a_max <= 1, got [{self.a_min}, {self.a_max}]")
        if not (0 < self.beta_min <= self.beta_max):
            raise ConfigError(f"need 0 < beta_min <= beta_max, got [{self.beta_min}, {self.beta_max}]")
        if self.count < 1:
            raise ConfigError(f"count must be >= 1, got {self.count}")
        if self.size < 16:
            raise ConfigError(f"size must be >= 16, got {self.size}")
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(Config)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int" or kind is int:
            return int(raw)
        if kind == "float" or kind is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from exc


def parse_config_text(text: str) -> dict:
    """Parse key = value lines; '#' starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r} (line {lineno})")
        values[key] = _coerce(key, raw)
    return values


def load_config(path: str | None = None, overrides: dict | None = None) -> Config:
    """Defaults, then config-file values, then explicit overrides."""
    values = {}
    if path:
        with open(path) as fh:
            values.update(parse_config_text(fh.read()))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = value
    return replace(Config(), **values).validate()


def format_config(cfg: Config) -> str:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(Config)]
    return "\n".join(lines) + "\n"


def echo_config(cfg: Config, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "config.txt")
    with open(path, "w") as fh:
        fh.write(format_config(cfg))
    return path
