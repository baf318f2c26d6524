"""Run settings for every dynslam subcommand.

Precedence, lowest first: documented default, ``DYNSLAM_*`` environment variables,
config file (``key=value`` lines or a YAML mapping), command-line flags.
"""
import os
from typing import Any

import yaml
from dotenv import dotenv_values
from pydantic import ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .defs.errors import ConfigError
from .defs.params import CameraIntrinsics, ResampleConfig, VarianceThresholds

MASK_MODES = ("off", "depth", "full")


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="DYNSLAM_", case_sensitive=False,
                                      extra="forbid", validate_assignment=True)

    # dynamic mask
    TAU_A: float = 5e-6
    TAU_B: float = 5e-5
    TAU_C: float = 0.05
    TAU_D: float = 0.3
    DEPTH_SCALE: float = 5000.0
    ASSOC_MAX_DIFF: float = 0.02
    PIXEL_EPS: float = 9.0
    PIXEL_MIN_PTS: int = 4
    BOX_MARGIN: int = 6
    EXT_MASK_DIR: str = ''
    MASK_MODE: str = "full"
    DILATE: int = 3

    # keypoint resampling
    EPOCHS: int = 100
    LEARNING_RATE: float = 0.01
    Q0: float = 0.05
    Q_STEP: float = 0.05
    Q_CAP: float = 0.9
    GA_POPULATION: int = 32
    GA_GENERATIONS: int = 50
    GA_SELECTION_RATIO: float = 0.5
    GA_MUTATION_RATE: float = 0.1
    GA_TOURNAMENT: int = 3
    GA_ELITISM: int = 2
    RESAMPLE: bool = False
    WARM_START: bool = False
    SEED: int = 0

    # tracking
    INTRINSICS: str = ''
    ROBUST_LOSS: bool = True
    HUBER_DELTA: float = 2.0
    MAX_KEYPOINTS: int = 500

    # mapping and evaluation
    VOXEL: float = 0.01
    STRIDE: int = 2
    MAX_RANGE: float = 5.0
    RPE_DELTA: float = 1.0

    THREADS: int = 1
    LOG_LEVEL: str = "INFO"
    LOG_LEVEL_CONSOLE: str = "WARNING"
    LOG_FILE: str = ''

    @field_validator('TAU_C', 'TAU_D', 'DEPTH_SCALE', 'ASSOC_MAX_DIFF', 'PIXEL_EPS',
                     'LEARNING_RATE', 'Q_STEP', 'HUBER_DELTA', 'MAX_RANGE', 'RPE_DELTA')
    def check_positive(cls, value, info):
        if not value > 0:
            raise ValueError(f'{info.field_name} must be positive')
        return value

    @field_validator('PIXEL_MIN_PTS', 'EPOCHS', 'STRIDE', 'THREADS', 'GA_POPULATION',
                     'GA_GENERATIONS', 'GA_TOURNAMENT', 'MAX_KEYPOINTS')
    def check_at_least_one(cls, value, info):
        if value < 1:
            raise ValueError(f'{info.field_name} must be at least 1')
        return value

    @field_validator('VOXEL', 'DILATE', 'BOX_MARGIN', 'GA_ELITISM', 'SEED')
    def check_non_negative(cls, value, info):
        if value < 0:
            raise ValueError(f'{info.field_name} must not be negative')
        return value

    @field_validator('MASK_MODE')
    def check_mask_mode(cls, value):
        if value not in MASK_MODES:
            raise ValueError(f'MASK_MODE must be one of {", ".join(MASK_MODES)}')
        return value

    @field_validator('LOG_LEVEL', 'LOG_LEVEL_CONSOLE')
    def check_log_level(cls, value):
        value = value.upper()
        if value not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f'unknown log level {value}')
        return value

    @model_validator(mode='after')
    def check_ranges(self):
        if not 0 < self.TAU_A < self.TAU_B:
            raise ValueError('thresholds must satisfy 0 < TAU_A < TAU_B')
        if not 0 < self.Q0 <= self.Q_CAP <= 1:
            raise ValueError('quantiles must satisfy 0 < Q0 <= Q_CAP <= 1')
        if not 0 < self.GA_SELECTION_RATIO <= 1:
            raise ValueError('GA_SELECTION_RATIO must be in (0, 1]')
        if not 0 <= self.GA_MUTATION_RATE <= 1:
            raise ValueError('GA_MUTATION_RATE must be in [0, 1]')
        return self

    def thresholds(self) -> VarianceThresholds:
        return VarianceThresholds(tau_a=self.TAU_A, tau_b=self.TAU_B,
                                  tau_c=self.TAU_C, tau_d=self.TAU_D)

    def resample_config(self) -> ResampleConfig:
        return ResampleConfig(epochs=self.EPOCHS, learning_rate=self.LEARNING_RATE,
                              q0=self.Q0, q_step=self.Q_STEP, q_cap=self.Q_CAP,
                              seed=self.SEED, population=self.GA_POPULATION,
                              generations=self.GA_GENERATIONS,
                              selection_ratio=self.GA_SELECTION_RATIO,
                              mutation_rate=self.GA_MUTATION_RATE,
                              tournament=self.GA_TOURNAMENT, elitism=self.GA_ELITISM)

    def camera(self, fallback: str = '') -> CameraIntrinsics:
        """intrinsics from INTRINSICS, or from `fallback` (a sequence's intrinsics.txt)"""
        from .utils.file_utils import read_intrinsics
        path = self.INTRINSICS or fallback
        if not path:
            raise ConfigError("no intrinsics file given, use --intrinsics")
        return read_intrinsics(path)


def read_config_file(path: str) -> dict[str, Any]:
    """read a key=value (dotenv syntax) or YAML config file into upper-case keys

    >>> import tempfile, os
    >>> with tempfile.NamedTemporaryFile('w', suffix='.cfg', delete=False) as f:
    ...     _ = f.write("# thresholds\\ntau_a=1e-6\\nSEED=7\\n")
    >>> sorted(read_config_file(f.name).items())
    [('SEED', '7'), ('TAU_A', '1e-6')]
    >>> os.unlink(f.name)
    """
    if not os.path.isfile(path):
        raise ConfigError(f"config file {path} does not exist")
    if path.endswith((".yaml", ".yml")):
        with open(path, "r", encoding="utf-8") as f:
            values = yaml.safe_load(f) or {}
        if not isinstance(values, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
    else:
        values = dotenv_values(path)
    return {str(k).strip().upper(): v for k, v in values.items() if v is not None}


def load_settings(config_file: str = '', **overrides: Any) -> Settings:
    """resolve settings: overrides (CLI flags, None means unset) > config file > env > defaults"""
    values = read_config_file(config_file) if config_file else {}
    values.update({k.upper(): v for k, v in overrides.items() if v is not None})
    try:
        return Settings(**values)
    except ValidationError as e:
        raise ConfigError(f"invalid settings: {e}") from e


try:
    config = Settings()
except ValidationError as e:
    print(f'Environment variable validation error: {e}')
    config = Settings.model_construct()
