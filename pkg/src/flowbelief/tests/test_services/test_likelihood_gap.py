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

"""Unit tests for the likelihood-gap analysis."""

import numpy as np
import pytest

from flowbelief.core import rng as rng_lib
from flowbelief.models import belief_model as belief_model_lib
from flowbelief.services import environments
from flowbelief.services import likelihood_gap
from flowbelief.services import rollout


@pytest.fixture
def short_env():
  return environments.make_linear_gaussian(seed=0, horizon=5)


@pytest.fixture
def short_episode(short_env):
  return rollout.collect_episode(short_env, rng_lib.Rng(11))


class TestExactPosterior:
  """Filtering with the exact one-step posterior."""

  def test_kl_vanishes(self, short_env, short_episode):
    """The KL term is zero and the ELBO equals the predictive term."""
    report = likelihood_gap.gap_check(
        likelihood_gap.ExactConditionalPosterior(short_env),
        short_env,
        short_episode,
        400,
        rng_lib.Rng(0),
    )
    assert report.kl_sum == pytest.approx(0.0, abs=1e-9)
    assert report.elbo == pytest.approx(
        report.predictive_log_likelihood, abs=1e-8
    )
    assert report.identity_holds
    assert report.num_samples == 400

  def test_elbo_below_exact_log_likelihood(self, short_env, short_episode):
    """The ELBO does not exceed the Kalman log-likelihood."""
    report = likelihood_gap.gap_check(
        likelihood_gap.ExactConditionalPosterior(short_env),
        short_env,
        short_episode,
        2000,
        rng_lib.Rng(1),
    )
    assert report.bound_holds
    assert report.gap == pytest.approx(
        report.exact_log_likelihood - report.elbo
    )

  def test_from_config(self, tiny_config):
    """The config entry point builds the seeded environment."""
    report = likelihood_gap.gap_check_from_config(
        tiny_config, steps=4, n_mc=200, exact=True
    )
    assert np.isfinite(report.exact_log_likelihood)
    assert report.kl_sum == pytest.approx(0.0, abs=1e-9)


class TestModelPosterior:
  """Filtering with the belief model's posterior."""

  def test_identity_holds_per_sample(self, tiny_config):
    """ELBO plus KL equals the predictive term for an untrained model."""
    report = likelihood_gap.gap_check_from_config(
        tiny_config, steps=4, n_mc=64
    )
    assert report.identity_error < 1e-6
    assert report.identity_holds
    assert np.isfinite(report.kalman_kl_per_step)

  def test_fit_posterior_records_history(self, tiny_config, short_env):
    """Each fitting step records a finite ELBO."""
    model = belief_model_lib.BeliefModel.from_config(
        tiny_config, short_env.obs_spec, short_env.action_dim, rng_lib.Rng(3)
    )
    episodes = [
        rollout.collect_episode(short_env, r) for r in rng_lib.Rng(4).split(4)
    ]
    history = likelihood_gap.fit_posterior(
        model, short_env, episodes, 2, rng_lib.Rng(5), batch_size=2
    )
    assert len(history) == 2
    assert np.all(np.isfinite(history))

  def test_state_size_mismatch(self, tiny_model, short_env, short_episode):
    """The model must share the environment's state size."""
    tiny_model.state_dim = 3
    with pytest.raises(ValueError, match="state_dim"):
      likelihood_gap.model_gap_check(
          tiny_model, short_env, short_episode, 4, rng_lib.Rng(0)
      )


class TestFromConfig:
  """Config validation."""

  def test_rejects_other_environments(self, tiny_config):
    """Only the linear-Gaussian environment has exact densities."""
    config = tiny_config.model_copy(update={"env_id": "point_mass"})
    with pytest.raises(ValueError, match="linear_gaussian"):
      likelihood_gap.gap_check_from_config(config, n_mc=2)
