"""Pytest configuration and common fixtures for flowbelief tests."""

import os

import pytest

# Set environment BEFORE importing settings
os.environ["ENVIRONMENT"] = "testing"
os.environ["LOG_LEVEL"] = "INFO"

from flowbelief.core import config as config_lib  # pylint: disable=wrong-import-position, g-import-not-at-top, g-bad-import-order
from flowbelief.core import rng as rng_lib  # pylint: disable=wrong-import-position, g-import-not-at-top, g-bad-import-order
from flowbelief.models import belief_model as belief_model_lib  # pylint: disable=wrong-import-position, g-import-not-at-top, g-bad-import-order
from flowbelief.models import records  # pylint: disable=wrong-import-position, g-import-not-at-top, g-bad-import-order

TINY_MODEL = {
    "state_dim": 2,
    "deter_dim": 6,
    "hidden_dim": 12,
    "embed_dim": 6,
    "flow_depth": 2,
    "flow_hidden_dim": 8,
}


@pytest.fixture
def rng():
  """A fixed root random stream."""
  return rng_lib.Rng(1234)


@pytest.fixture
def tiny_config(tmp_path):
  """A linear-Gaussian run small enough for unit tests."""
  return config_lib.TrainConfig(
      env_id="linear_gaussian",
      run_root=str(tmp_path / "runs"),
      run_name="tiny",
      seed_episodes=2,
      collect_interval=1,
      total_updates=2,
      batch_size=3,
      sequence_length=4,
      free_nats=0.0,
      imagination_horizon=3,
      num_trajectories=2,
      eval_every=2,
      eval_episodes=2,
      eval_elbo_samples=2,
      checkpoint_every=1,
      **TINY_MODEL,
  )


@pytest.fixture
def vector_spec():
  """A three-dimensional vector observation spec."""
  return records.ObservationSpec("vector", (3,), "none")


@pytest.fixture
def tiny_model(vector_spec, rng):
  """A small belief model with flows over 3-D observations and 1-D actions."""
  return belief_model_lib.BeliefModel(vector_spec, 1, rng, **TINY_MODEL)
