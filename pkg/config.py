#!/usr/bin/env python3
"""
Configuration for the macro regulator

Defaults come from REGULATOR_* environment variables; a key = value config
file overrides them and command-line flags override the file.
"""

import os
from pathlib import Path
from typing import Any, Dict, Optional

from errors import ConfigError, IoError


def _env_bool(name: str, default: str) -> bool:
    return os.getenv(name, default).lower() == 'true'


def _coerce(key: str, raw: Any, current: Any) -> Any:
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if isinstance(current, bool):
            if isinstance(raw, bool):
                return raw
            lowered = str(raw).lower()
            if lowered not in ('true', 'false', '1', '0', 'yes', 'no'):
                raise ValueError(raw)
            return lowered in ('true', '1', 'yes')
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        return str(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key}: {raw!r}")


class RegulatorConfig:
    """Configuration management for placement, regulation and training"""

    def __init__(self, config_file: Optional[str] = None,
                 overrides: Optional[Dict[str, Any]] = None, quiet: bool = False):
        # Canvas / environment
        self.GRID = int(os.getenv('REGULATOR_GRID', 224))
        self.MODE = os.getenv('REGULATOR_MODE', 'regulate')
        self.ALPHA = float(os.getenv('REGULATOR_ALPHA', 0.7))
        self.ORDER_RULE = os.getenv('REGULATOR_ORDER_RULE', 'area_then_nets')
        self.SEED = int(os.getenv('REGULATOR_SEED', 0))
        self.NORMALIZE_REWARD = _env_bool('REGULATOR_NORMALIZE_REWARD', 'true')
        self.USE_REGULAR_MASK = _env_bool('REGULATOR_USE_REGULAR_MASK', 'true')
        self.RELAX_UNADJUSTED = _env_bool('REGULATOR_RELAX_UNADJUSTED', 'false')

        # PPO (hyperparameter table values)
        self.LEARNING_RATE = float(os.getenv('REGULATOR_LEARNING_RATE', 2.5e-3))
        self.EPISODES = int(os.getenv('REGULATOR_EPISODES', 1000))
        self.UPDATE_EPOCHS = int(os.getenv('REGULATOR_UPDATE_EPOCHS', 10))
        self.BATCH_SIZE = int(os.getenv('REGULATOR_BATCH_SIZE', 64))
        self.BUFFER_CAPACITY = int(os.getenv('REGULATOR_BUFFER_CAPACITY', 5120))
        self.CLIP_EPS = float(os.getenv('REGULATOR_CLIP_EPS', 0.2))
        self.GRAD_CLIP_NORM = float(os.getenv('REGULATOR_GRAD_CLIP_NORM', 0.5))
        self.GAMMA = float(os.getenv('REGULATOR_GAMMA', 0.95))
        self.ENTROPY_COEF = float(os.getenv('REGULATOR_ENTROPY_COEF', 0.01))
        self.VALUE_COEF = float(os.getenv('REGULATOR_VALUE_COEF', 0.5))
        self.MASK_PRIOR = float(os.getenv('REGULATOR_MASK_PRIOR', 50.0))

        # Regulation runs
        self.PASSES = int(os.getenv('REGULATOR_PASSES', 1))
        self.INIT = os.getenv('REGULATOR_INIT', 'greedy')
        self.POLICY = os.getenv('REGULATOR_POLICY', 'greedy')

        # Synthetic instances
        self.SYNTHETIC_SEED = int(os.getenv('REGULATOR_SYNTHETIC_SEED', 42))
        self.SYNTHETIC_MACROS = int(os.getenv('REGULATOR_SYNTHETIC_MACROS', 10))
        self.SYNTHETIC_NETS = int(os.getenv('REGULATOR_SYNTHETIC_NETS', 20))
        self.SYNTHETIC_TERMINALS = int(os.getenv('REGULATOR_SYNTHETIC_TERMINALS', 0))
        self.SYNTHETIC_CANVAS = float(os.getenv('REGULATOR_SYNTHETIC_CANVAS', 320.0))

        # Parsing
        self.PROMOTE_FIXED_MACROS = _env_bool('REGULATOR_PROMOTE_FIXED_MACROS', 'false')

        # Output
        self.OUT_DIR = os.getenv('REGULATOR_OUT_DIR', './runs')
        self.GRID_LINES = _env_bool('REGULATOR_GRID_LINES', 'false')

        if config_file:
            self.load_file(config_file)
        if overrides:
            self.apply_overrides(overrides)

        if not quiet:
            print(f"🔧 Configuration loaded:")
            print(f"   Grid: {self.GRID}x{self.GRID}, mode: {self.MODE}, alpha: {self.ALPHA}")
            print(f"   PPO: lr={self.LEARNING_RATE}, episodes={self.EPISODES}, "
                  f"buffer={self.BUFFER_CAPACITY}, gamma={self.GAMMA}")
            print(f"   Seed: {self.SEED}")

    def keys(self):
        return sorted(name for name in vars(self) if name.isupper())

    def apply_overrides(self, overrides: Dict[str, Any]):
        """Apply key/value overrides; None values are ignored"""
        for key, value in overrides.items():
            if value is None:
                continue
            name = key.upper().replace('-', '_')
            if not hasattr(self, name) or not name.isupper():
                raise ConfigError(f"unknown config key: {key}")
            setattr(self, name, _coerce(key, value, getattr(self, name)))

    def load_file(self, path: str):
        """Read key = value lines; '#' starts a comment"""
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        values = {}
        for number, line in enumerate(path.read_text().splitlines(), start=1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ConfigError(f"{path}:{number}: expected key = value")
            key, value = line.split('=', 1)
            values[key.strip()] = value.strip()
        self.apply_overrides(values)

    def save(self, path: str):
        """Write the fully resolved configuration"""
        lines = [f"{key} = {value}" for key, value in self.as_dict().items()]
        try:
            Path(path).write_text('\n'.join(lines) + '\n')
        except OSError as e:
            raise IoError(f"cannot write config {path}: {e}")

    def as_dict(self) -> Dict[str, Any]:
        return {name.lower(): getattr(self, name) for name in self.keys()}

    def env_config(self, **changes):
        from regulator_env import EnvConfig, Mode, OrderRule

        fields = dict(
            mode=Mode(self.MODE),
            alpha=self.ALPHA,
            n_grid=self.GRID,
            seed=self.SEED,
            order_rule=OrderRule(self.ORDER_RULE),
            normalize_reward=self.NORMALIZE_REWARD,
            use_regular_mask=self.USE_REGULAR_MASK,
            relax_unadjusted=self.RELAX_UNADJUSTED,
        )
        fields.update(changes)
        return EnvConfig(**fields)

    def ppo_config(self, **changes):
        from ppo_trainer import PPOConfig

        fields = dict(
            learning_rate=self.LEARNING_RATE,
            episodes=self.EPISODES,
            update_epochs=self.UPDATE_EPOCHS,
            batch_size=self.BATCH_SIZE,
            buffer_capacity=self.BUFFER_CAPACITY,
            clip_eps=self.CLIP_EPS,
            grad_clip_norm=self.GRAD_CLIP_NORM,
            gamma=self.GAMMA,
            alpha=self.ALPHA,
            entropy_coef=self.ENTROPY_COEF,
            value_coef=self.VALUE_COEF,
            mask_prior=self.MASK_PRIOR,
            seed=self.SEED,
        )
        fields.update(changes)
        return PPOConfig(**fields)
