# wfstein/config.py
#
# Copyright 2025 wfstein contributors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at:
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import logging
from typing import Any

from omegaconf import OmegaConf
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from wfstein.utils.errors import ConfigError


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    beta: list[float] = [2.0, 12.0]
    K: int = 2
    N_list: list[int] = [8, 16, 32, 64, 128]
    family_seed: int = 0
    mc_seed: int = 0
    quadrature_order: int = 64
    output_path: str = "outputs/rate_study"
    state_cap: int = 2_000_000
    c_star: float = 1.0
    mc_samples: int = 1_000_000
    coupling_reps: int = 100_000
    expansion_checks: bool = False
    expansion_margin: float | None = None
    workers: int = 1

    @field_validator("beta")
    @classmethod
    def _positive_beta(cls, beta: list[float]) -> list[float]:
        if any(b <= 0 for b in beta):
            raise ValueError(f"all beta_i must be positive, got {beta}")
        return beta

    @field_validator("N_list")
    @classmethod
    def _increasing(cls, N_list: list[int]) -> list[int]:
        if not N_list:
            raise ValueError("N_list must not be empty")
        if any(n < 1 for n in N_list):
            raise ValueError(f"population sizes must be positive, got {N_list}")
        if any(b <= a for a, b in zip(N_list, N_list[1:])):
            raise ValueError(f"N_list must be strictly increasing, got {N_list}")
        return N_list

    @field_validator("quadrature_order")
    @classmethod
    def _order(cls, order: int) -> int:
        if order < 8:
            raise ValueError(f"quadrature_order must be >= 8, got {order}")
        return order

    @field_validator("c_star", "mc_samples", "coupling_reps", "workers", "state_cap")
    @classmethod
    def _positive(cls, value):
        if value <= 0:
            raise ValueError(f"must be positive, got {value}")
        return value

    @model_validator(mode="after")
    def _consistent(self) -> "ExperimentConfig":
        if len(self.beta) != self.K:
            raise ValueError(f"beta has {len(self.beta)} entries but K={self.K}")
        if self.K < 2:
            raise ValueError(f"K must be >= 2, got {self.K}")
        s = sum(self.beta)
        small = [n for n in self.N_list if s / (2 * n) >= 1]
        if small:
            raise ValueError(f"Sigma = s/(2N) must be < 1; N={small} too small for s={s}")
        if self.expansion_checks and self.expansion_margin is None:
            low = [n for n in self.N_list if n <= 100 * self.K ** 2]
            if low:
                raise ValueError(f"generator-expansion checks need every N > 100K^2 = {100 * self.K ** 2}, got {low}")
        return self


def load_config(path: str | None = None, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Defaults, then the JSON file, then command-line overrides."""
    layers = [OmegaConf.create(ExperimentConfig().model_dump())]
    if path:
        try:
            layers.append(OmegaConf.load(path))
        except Exception as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
    if overrides:
        layers.append(OmegaConf.create({k: v for k, v in overrides.items() if v is not None}))

    try:
        merged = OmegaConf.to_container(OmegaConf.merge(*layers), resolve=True)
        cfg = ExperimentConfig(**merged)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e
    except Exception as e:
        raise ConfigError(f"cannot merge configuration: {e}") from e
    logging.debug(f"Loaded configuration: {cfg.model_dump()}")
    return cfg
