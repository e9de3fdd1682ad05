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

"""Unit tests for run configuration."""

import pydantic
import pytest

from flowbelief.core import config as config_lib


class TestResolveConfig:
  """Preset, file and override layering."""

  def test_defaults_use_env_preset(self):
    """Without a preset the env_id picks one."""
    config = config_lib.resolve_config(overrides=["env_id=bimodal"])
    assert config.env_id == "bimodal"
    assert config.state_dim == 2
    assert not config.train_policy

  def test_overrides_win_over_file(self, tmp_path):
    """Command-line overrides replace file values."""
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nseed = 4\nbatch_size=8\n", encoding="utf-8")
    config = config_lib.resolve_config(path, ["seed=9"])
    assert config.seed == 9
    assert config.batch_size == 8

  def test_file_wins_over_preset(self, tmp_path):
    """File values replace preset values."""
    path = tmp_path / "run.cfg"
    path.write_text("flow_depth=1\n", encoding="utf-8")
    config = config_lib.resolve_config(path, preset="linear_gaussian")
    assert config.env_id == "linear_gaussian"
    assert config.flow_depth == 1

  def test_unknown_key(self):
    """Keys outside the schema are rejected."""
    with pytest.raises(config_lib.ConfigFileError, match="learning_rate"):
      config_lib.resolve_config(overrides=["learning_rate=0.1"])

  def test_unknown_preset(self):
    """Presets must exist."""
    with pytest.raises(config_lib.ConfigFileError):
      config_lib.resolve_config(preset="atari")

  def test_duplicate_key(self, tmp_path):
    """A key may appear once per file."""
    path = tmp_path / "run.cfg"
    path.write_text("seed=1\nseed=2\n", encoding="utf-8")
    with pytest.raises(config_lib.ConfigFileError, match="duplicate"):
      config_lib.resolve_config(path)

  def test_missing_file(self, tmp_path):
    """Unreadable files raise ConfigFileError."""
    with pytest.raises(config_lib.ConfigFileError):
      config_lib.resolve_config(tmp_path / "absent.cfg")

  def test_line_without_equals(self):
    """Every non-comment line needs a '='."""
    with pytest.raises(config_lib.ConfigFileError, match="key=value"):
      config_lib.parse_config_text("seed 3\n")


class TestValidation:
  """Field and cross-field rules."""

  @pytest.mark.parametrize(
      "overrides",
      [
          ["gamma=0"],
          ["gamma=1.5"],
          ["td_lambda=-0.1"],
          ["stroke_resolution=20"],
          ["batch_size=0"],
          ["kl_mode=analytic"],
          ["held_out_fraction=1.0"],
          ["held_out_fraction=-0.1"],
      ],
  )
  def test_invalid_values(self, overrides):
    """Out-of-range values fail validation."""
    with pytest.raises(pydantic.ValidationError):
      config_lib.resolve_config(overrides=overrides)

  def test_analytic_kl_with_frozen_identity_flows(self):
    """Analytic KL is allowed once the flows are frozen identities."""
    config = config_lib.resolve_config(
        overrides=["kl_mode=analytic", "freeze_flows=true"]
    )
    assert config.kl_mode == "analytic"

  def test_frozen(self):
    """Resolved configs are immutable."""
    config = config_lib.TrainConfig()
    with pytest.raises(pydantic.ValidationError):
      config.seed = 3  # pylint: disable=assigning-non-slot


class TestTextForm:
  """Serialisation and hashing."""

  def test_text_round_trip(self, tmp_path):
    """The resolved text form resolves back to the same config."""
    config = config_lib.resolve_config(
        overrides=["env_id=digit", "seed=3", "max_log_scale=2.5"]
    )
    path = tmp_path / "config.resolved"
    path.write_text(config.to_text(), encoding="utf-8")
    assert config_lib.resolve_config(path) == config

  def test_hash_tracks_values(self):
    """Any changed field changes the hash."""
    base = config_lib.TrainConfig()
    assert base.config_hash() == config_lib.TrainConfig().config_hash()
    assert base.config_hash() != config_lib.TrainConfig(seed=1).config_hash()

  def test_none_serialises_empty(self):
    """Unset optional fields serialise as empty values."""
    assert "stroke_path=\n" in config_lib.TrainConfig().to_text()


class TestRuntimeSettings:
  """Process settings."""

  def test_case_normalisation(self):
    """Log level is upper-cased and the environment lower-cased."""
    settings = config_lib.RuntimeSettings(
        LOG_LEVEL="warning", ENVIRONMENT="PRODUCTION"
    )
    assert settings.LOG_LEVEL == "WARNING"
    assert settings.is_production
