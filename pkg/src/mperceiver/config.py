"""Run configuration: plain `key = value` text files plus overrides.

Precedence for every key: CLI flag > MPERCEIVER_SEED env var (seed only)
> config file > built-in default. Unknown keys in a config file are
errors, not warnings.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path

SEED_ENV_VAR = "MPERCEIVER_SEED"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    # prompt / adapter geometry
    n_degradations: int = 7
    clip_width: int = 64
    ctx_width: int = 64
    cm_tokens: int = 4
    prompt_tokens: int = 8
    pool_capacity: int = 16
    scale_channels: tuple[int, ...] = (32, 64, 128, 256)
    head_count: int = 4
    window: int = 4
    # diffusion schedule and sampler
    timesteps: int = 1000
    beta_min: float = 1e-4
    beta_max: float = 0.02
    ddim_steps: int = 50
    init_from_lq_latent: bool = False
    # optimizer
    lr_max: float = 1e-4
    lr_min: float = 1e-6
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    weight_decay: float = 0.0
    # losses
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    focal_weight: float = 1.0
    w_l1: float = 1.0
    w_color: float = 0.5
    w_percep: float = 0.2
    w_adv: float = 0.01
    # training schedule
    stage_a_steps: int = 2000
    stage_b_steps: int = 1000
    batch_size: int = 2
    image_size: int = 64
    vae_prefit_steps: int = 3000
    unet_prefit_steps: int = 1500
    prefit_lr: float = 2e-3

    def validate(self) -> "RunConfig":
        positive = ["n_degradations", "clip_width", "ctx_width", "cm_tokens",
                    "prompt_tokens", "pool_capacity", "head_count", "window",
                    "timesteps", "ddim_steps", "batch_size", "image_size",
                    "stage_a_steps", "stage_b_steps", "vae_prefit_steps",
                    "unet_prefit_steps"]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if len(self.scale_channels) != 4 or any(c <= 0 for c in self.scale_channels):
            raise ConfigError(f"scale_channels needs 4 positive entries, got {self.scale_channels}")
        if not 0 < self.beta_min < self.beta_max < 1:
            raise ConfigError(f"need 0 < beta_min < beta_max < 1, got {self.beta_min}, {self.beta_max}")
        if self.ddim_steps > self.timesteps:
            raise ConfigError(f"ddim_steps {self.ddim_steps} exceeds timesteps {self.timesteps}")
        if not 0 < self.lr_min <= self.lr_max:
            raise ConfigError(f"need 0 < lr_min <= lr_max, got {self.lr_min}, {self.lr_max}")
        if self.focal_gamma < 0:
            raise ConfigError("focal_gamma must be >= 0")
        if not 0 < self.focal_alpha <= 1:
            raise ConfigError("focal_alpha must be in (0, 1]")
        for name in ["w_l1", "w_color", "w_percep", "w_adv", "focal_weight", "weight_decay"]:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.w_l1 <= 0:
            raise ConfigError("w_l1 must be positive")
        if self.image_size % 8 != 0:
            raise ConfigError(f"image_size must be divisible by 8, got {self.image_size}")
        return self

    @property
    def latent_size(self) -> int:
        return self.image_size // 8


def _parse_value(name: str, text: str, kind) -> object:
    text = text.strip()
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is bool:
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if kind is tuple or str(kind).startswith("tuple"):
            return tuple(int(v) for v in text.replace(",", " ").split())
        return text
    except ValueError as e:
        raise ConfigError(f"bad value for '{name}': {e}") from e


_FIELD_TYPES = {f.name: (int if f.type == "int" else float if f.type == "float"
                         else bool if f.type == "bool" else tuple)
                for f in dataclasses.fields(RunConfig)}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, object]:
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}'")
        values[key] = _parse_value(key, value, _FIELD_TYPES[key])
    return values


def resolve_config(path: str | Path | None = None,
                   overrides: dict[str, object] | None = None,
                   env: dict[str, str] | None = None) -> RunConfig:
    """Assemble a validated RunConfig with documented precedence."""
    env = os.environ if env is None else env
    values: dict[str, object] = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(), source=str(path)))
    if SEED_ENV_VAR in env:
        try:
            values["seed"] = int(env[SEED_ENV_VAR])
        except ValueError as e:
            raise ConfigError(f"bad {SEED_ENV_VAR}: {env[SEED_ENV_VAR]!r}") from e
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config override '{key}'")
        values[key] = val
    return RunConfig(**values).validate()
