"""Validated parameter sets shared by the mask, resampling and tracking stages."""
import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator


class VarianceThresholds(BaseModel):
    """depth-variance window band [tau_a, tau_b] in m², median validity floor tau_c and
    local-mask depth tolerance tau_d in meters

    >>> VarianceThresholds()
    VarianceThresholds(tau_a=5e-06, tau_b=5e-05, tau_c=0.05, tau_d=0.3)
    >>> VarianceThresholds(tau_a=1e-4, tau_b=1e-5)  # doctest: +IGNORE_EXCEPTION_DETAIL
    Traceback (most recent call last):
    ...
    pydantic_core._pydantic_core.ValidationError: 1 validation error for VarianceThresholds
    """
    model_config = ConfigDict(frozen=True)

    tau_a: float = 5e-6
    tau_b: float = 5e-5
    tau_c: float = 0.05
    tau_d: float = 0.3

    @model_validator(mode='after')
    def check_order(self):
        if not 0 < self.tau_a < self.tau_b:
            raise ValueError('thresholds must satisfy 0 < tau_a < tau_b')
        if self.tau_c <= 0 or self.tau_d <= 0:
            raise ValueError('tau_c and tau_d must be positive')
        return self

    def scaled(self, k: float) -> "VarianceThresholds":
        """thresholds for depths multiplied by k (variances scale by k²)"""
        return VarianceThresholds(tau_a=self.tau_a * k * k, tau_b=self.tau_b * k * k,
                                  tau_c=self.tau_c * k, tau_d=self.tau_d * k)


class ResampleConfig(BaseModel):
    """autoencoder, radius-quantile and genetic-selection hyperparameters"""
    model_config = ConfigDict(frozen=True)

    epochs: int = 100
    learning_rate: float = 0.01
    q0: float = 0.05
    q_step: float = 0.05
    q_cap: float = 0.9
    seed: int = 0
    population: int = 32
    generations: int = 50
    selection_ratio: float = 0.5
    mutation_rate: float = 0.1
    tournament: int = 3
    elitism: int = 2
    hidden: int = 4
    latent: int = 2

    @field_validator('epochs', 'population', 'generations', 'tournament', 'hidden')
    def check_at_least_one(cls, value, info):
        if value < 1:
            raise ValueError(f'{info.field_name} must be at least 1')
        return value

    @field_validator('latent')
    def check_latent(cls, value):
        if value != 2:
            raise ValueError('the latent space is two-dimensional')
        return value

    @model_validator(mode='after')
    def check_ranges(self):
        if not 0 < self.q0 <= self.q_cap <= 1:
            raise ValueError('quantiles must satisfy 0 < q0 <= q_cap <= 1')
        if self.q_step <= 0 or self.learning_rate <= 0:
            raise ValueError('q_step and learning_rate must be positive')
        if not 0 < self.selection_ratio <= 1:
            raise ValueError('selection_ratio must be in (0, 1]')
        if self.elitism < 0 or self.elitism > self.population:
            raise ValueError('elitism must be between 0 and the population size')
        return self


class CameraIntrinsics(BaseModel):
    """pinhole intrinsics in pixels"""
    model_config = ConfigDict(frozen=True)

    fx: float
    fy: float
    cx: float
    cy: float

    @field_validator('fx', 'fy')
    def check_focal(cls, value, info):
        if not value > 0:
            raise ValueError(f'{info.field_name} must be positive')
        return value
