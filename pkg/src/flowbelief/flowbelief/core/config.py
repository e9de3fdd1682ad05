# Copyright 2026 The flowbelief Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Configuration module.

Two layers:

  * `RuntimeSettings` holds process concerns (log level, environment name),
    loaded from environment variables and an optional `.env` file. It never
    affects numerical results.
  * `TrainConfig` holds every hyperparameter of a run. It resolves from a
    preset, an optional flat `key=value` file and command-line overrides, in
    that order, so a run is a pure function of (flags, file, seed).
"""

import hashlib
import logging
import pathlib
from typing import Any, Iterable, Literal, Optional

import pydantic
import pydantic_settings

logger = logging.getLogger(__name__)

EnvId = Literal["point_mass", "linear_gaussian", "bimodal", "digit"]


class Error(Exception):
  """Base error for configuration handling."""


class ConfigFileError(Error):
  """Raised for malformed config files or unknown keys."""


class RuntimeSettings(pydantic_settings.BaseSettings):
  """Process-level settings.

  Attributes:
    LOG_LEVEL: Root logger level.
    ENVIRONMENT: Operational context ('local' or 'production'); production
      switches logging to structured JSON.
  """

  LOG_LEVEL: str = pydantic.Field(default="INFO", description="Log level.")
  ENVIRONMENT: str = pydantic.Field(
      default="local",
      description="Operational environment, e.g. 'local' or 'production'.",
  )

  @pydantic.field_validator("LOG_LEVEL", "ENVIRONMENT")
  @classmethod
  def normalize_case(cls, v: str, info: pydantic.ValidationInfo) -> str:
    """Upper-cases the log level and lower-cases the environment name."""
    return v.upper() if info.field_name == "LOG_LEVEL" else v.lower()

  @property
  def is_production(self) -> bool:
    return self.ENVIRONMENT == "production"

  model_config = pydantic_settings.SettingsConfigDict(
      extra="ignore", env_file=".env", env_file_encoding="utf-8"
  )


class TrainConfig(pydantic.BaseModel):
  """Every hyperparameter of a training run.

  Defaults are the control-task values; presets adjust them per environment.
  """

  env_id: EnvId = pydantic.Field(
      default="point_mass", description="Environment to train on."
  )
  seed: int = pydantic.Field(default=0, description="Root random seed.")
  run_name: str = pydantic.Field(
      default="default", description="Run directory name under run_root."
  )
  run_root: str = pydantic.Field(
      default="run", description="Parent directory of run directories."
  )

  # Algorithm schedule.
  seed_episodes: int = pydantic.Field(
      default=5, ge=0, description="Random-policy episodes collected first."
  )
  collect_interval: int = pydantic.Field(
      default=100, gt=0, description="Updates between collection episodes."
  )
  total_updates: int = pydantic.Field(
      default=10000, ge=0, description="Number of joint updates to run."
  )
  batch_size: int = pydantic.Field(
      default=50, gt=0, description="Sequences per batch."
  )
  sequence_length: int = pydantic.Field(
      default=50, gt=0, description="Timesteps per sequence."
  )
  buffer_capacity: int = pydantic.Field(
      default=1000, gt=0, description="Episodes kept in the replay buffer."
  )

  # Belief model.
  state_dim: int = pydantic.Field(
      default=30, gt=0, description="Stochastic state size."
  )
  deter_dim: int = pydantic.Field(
      default=200, gt=0, description="GRU hidden size."
  )
  hidden_dim: int = pydantic.Field(
      default=200, gt=0, description="Width of MLP hidden layers."
  )
  embed_dim: int = pydantic.Field(
      default=200, gt=0, description="Observation feature size."
  )
  encoder: Literal["mlp", "conv"] = pydantic.Field(
      default="mlp", description="Observation encoder family."
  )
  min_std: float = pydantic.Field(
      default=1e-4, gt=0, description="Floor on belief standard deviations."
  )

  # Flows.
  use_flows: bool = pydantic.Field(
      default=True, description="Build flow stacks on prior and posterior."
  )
  freeze_flows: bool = pydantic.Field(
      default=False, description="Keep flows at their identity init."
  )
  flow_depth: int = pydantic.Field(
      default=5, ge=0, description="Coupling layers per flow stack."
  )
  flow_hidden_dim: int = pydantic.Field(
      default=64, gt=0, description="Width of coupling parameter networks."
  )
  max_log_scale: float = pydantic.Field(
      default=5.0,
      ge=0,
      description="Bound on coupling log-scales; 0 disables the bound.",
  )
  lu_permutation: Literal["identity", "random"] = pydantic.Field(
      default="identity", description="Frozen permutation of LU layers."
  )
  kl_mode: Literal["monte_carlo", "analytic"] = pydantic.Field(
      default="monte_carlo", description="KL estimator in the model loss."
  )
  free_nats: float = pydantic.Field(
      default=3.0, ge=0, description="Per-step KL floor."
  )

  # Behaviour learning.
  train_policy: bool = pydantic.Field(
      default=True, description="Train actor and critic."
  )
  imagination_horizon: int = pydantic.Field(
      default=15, gt=0, description="Imagined steps H."
  )
  num_trajectories: int = pydantic.Field(
      default=4, gt=0, description="Imagined trajectories N per state."
  )
  gamma: float = pydantic.Field(default=0.99, description="Discount.")
  td_lambda: float = pydantic.Field(
      default=0.95, description="TD(lambda) mixing weight."
  )
  exploration_noise: float = pydantic.Field(
      default=0.3, ge=0, description="Gaussian action noise when collecting."
  )
  actor_min_std: float = pydantic.Field(
      default=1e-3, gt=0, description="Floor on actor standard deviation."
  )

  # Optimisation.
  model_lr: float = pydantic.Field(default=5e-4, gt=0)
  critic_lr: float = pydantic.Field(default=8e-5, gt=0)
  actor_lr: float = pydantic.Field(default=8e-5, gt=0)
  grad_clip: float = pydantic.Field(
      default=100.0, gt=0, description="Per-group global norm limit."
  )
  max_consecutive_failures: int = pydantic.Field(
      default=10, gt=0, description="Skipped updates in a row before abort."
  )

  # Evaluation and artifacts.
  eval_every: int = pydantic.Field(default=1000, gt=0)
  eval_episodes: int = pydantic.Field(default=5, gt=0)
  eval_elbo_samples: int = pydantic.Field(default=16, gt=0)
  checkpoint_every: int = pydantic.Field(default=1000, gt=0)

  # Stroke data.
  stroke_path: Optional[str] = pydantic.Field(
      default=None, description="Stroke file; synthetic digits when unset."
  )
  synthetic_strokes: int = pydantic.Field(
      default=200, gt=0, description="Synthetic stroke episodes to generate."
  )
  stroke_resolution: int = pydantic.Field(
      default=28, description="Frame side length, 28 native or 14."
  )
  points_per_step: int = pydantic.Field(
      default=1, gt=0, description="Stroke points drawn per timestep."
  )
  held_out_fraction: float = pydantic.Field(
      default=0.1,
      ge=0.0,
      lt=1.0,
      description="Share of stroke episodes, last by index, never trained on.",
  )

  @pydantic.field_validator("gamma")
  @classmethod
  def check_gamma(cls, v: float) -> float:
    if not 0.0 < v <= 1.0:
      raise ValueError(f"gamma must lie in (0, 1], got {v}")
    return v

  @pydantic.field_validator("td_lambda")
  @classmethod
  def check_lambda(cls, v: float) -> float:
    if not 0.0 <= v <= 1.0:
      raise ValueError(f"td_lambda must lie in [0, 1], got {v}")
    return v

  @pydantic.field_validator("stroke_resolution")
  @classmethod
  def check_resolution(cls, v: int) -> int:
    if v not in (14, 28):
      raise ValueError(f"stroke_resolution must be 28 or 14, got {v}")
    return v

  @pydantic.model_validator(mode="after")
  def check_kl_mode(self) -> "TrainConfig":
    """Analytic KL is exact only when the flows are identity maps."""
    identity_flows = not self.use_flows or (
        self.freeze_flows and self.lu_permutation == "identity"
    )
    if self.kl_mode == "analytic" and not identity_flows:
      raise ValueError(
          "kl_mode=analytic requires use_flows=false or frozen identity flows"
      )
    return self

  model_config = pydantic.ConfigDict(frozen=True, extra="forbid")

  def to_text(self) -> str:
    """Serialises to the flat `key=value` format, one field per line."""
    lines = []
    for name in type(self).model_fields:
      value = getattr(self, name)
      lines.append(f"{name}={_format_value(value)}")
    return "\n".join(lines) + "\n"

  def config_hash(self) -> str:
    """SHA-256 of the resolved text form."""
    return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


PRESETS: dict[str, dict[str, Any]] = {
    "control": {},
    "point_mass": {"env_id": "point_mass"},
    "linear_gaussian": {
        "env_id": "linear_gaussian",
        "state_dim": 2,
        "deter_dim": 32,
        "hidden_dim": 64,
        "embed_dim": 32,
        "flow_depth": 3,
        "flow_hidden_dim": 32,
        "free_nats": 0.0,
        "train_policy": False,
    },
    "bimodal": {
        "env_id": "bimodal",
        "state_dim": 2,
        "deter_dim": 32,
        "hidden_dim": 64,
        "embed_dim": 32,
        "flow_depth": 3,
        "flow_hidden_dim": 32,
        "sequence_length": 15,
        "train_policy": False,
        "free_nats": 0.0,
    },
    "digit": {
        "env_id": "digit",
        "state_dim": 2,
        "deter_dim": 20,
        "hidden_dim": 200,
        "embed_dim": 200,
        "flow_depth": 3,
        "sequence_length": 30,
        "train_policy": False,
    },
}


def _format_value(value: Any) -> str:
  if value is None:
    return ""
  if isinstance(value, bool):
    return "true" if value else "false"
  if isinstance(value, float):
    return repr(value)
  return str(value)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
  """Parses flat `key=value` text with `#` comments.

  Args:
    text: File contents.
    source: Name used in error messages.

  Returns:
    Raw string values per key, in file order.

  Raises:
    ConfigFileError: On lines without '=' or duplicate keys.
  """
  values: dict[str, str] = {}
  for lineno, raw_line in enumerate(text.splitlines(), start=1):
    line = raw_line.split("#", 1)[0].strip()
    if not line:
      continue
    if "=" not in line:
      raise ConfigFileError(f"{source}:{lineno}: expected key=value")
    key, value = (part.strip() for part in line.split("=", 1))
    if not key:
      raise ConfigFileError(f"{source}:{lineno}: empty key")
    if key in values:
      raise ConfigFileError(f"{source}:{lineno}: duplicate key {key!r}")
    values[key] = value
  return values


def parse_overrides(overrides: Iterable[str]) -> dict[str, str]:
  """Parses `key=value` command-line overrides."""
  return parse_config_text("\n".join(overrides), source="--set")


def resolve_config(
    config_path: Optional[str | pathlib.Path] = None,
    overrides: Iterable[str] = (),
    preset: Optional[str] = None,
) -> TrainConfig:
  """Builds a TrainConfig from preset, file and overrides.

  Args:
    config_path: Optional flat config file.
    overrides: `key=value` strings that take precedence over the file.
    preset: Preset name; defaults to the preset of the resolved env_id.

  Returns:
    The validated, frozen configuration.

  Raises:
    ConfigFileError: For unreadable files, unknown keys or presets.
    pydantic.ValidationError: For values that fail validation.
  """
  raw: dict[str, str] = {}
  if config_path is not None:
    path = pathlib.Path(config_path)
    try:
      text = path.read_text(encoding="utf-8")
    except OSError as e:
      raise ConfigFileError(f"Cannot read config file {path}: {e}") from e
    raw.update(parse_config_text(text, source=str(path)))
  raw.update(parse_overrides(overrides))

  unknown = sorted(set(raw) - set(TrainConfig.model_fields))
  if unknown:
    raise ConfigFileError(f"Unknown config keys: {unknown}")

  preset_name = preset or raw.get("env_id") or "point_mass"
  if preset_name not in PRESETS:
    raise ConfigFileError(
        f"Unknown preset {preset_name!r}; choose from {sorted(PRESETS)}"
    )
  values: dict[str, Any] = dict(PRESETS[preset_name])
  for key, value in raw.items():
    values[key] = None if value == "" else value
  config = TrainConfig.model_validate(values)
  logger.info(
      "Resolved config :: env: '%s' | seed: %d | hash: %s",
      config.env_id,
      config.seed,
      config.config_hash()[:12],
  )
  return config
