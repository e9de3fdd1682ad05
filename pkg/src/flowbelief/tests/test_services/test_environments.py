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

"""Unit tests for the built-in environments and exact filtering."""

import numpy as np
import pytest
from scipy import stats

from flowbelief.core import config as config_lib
from flowbelief.core import rng as rng_lib
from flowbelief.services import environments
from flowbelief.services import rollout
from flowbelief.services import strokes


def _joint_log_likelihood(env, observations, actions):
  """log p(o_{0:T-1} | a) from the stacked joint Gaussian."""
  steps = len(observations)
  a, c = env.transition, env.emission
  means, covs = [], []
  mean, cov = env.initial_mean, env.initial_cov
  for t in range(steps):
    if t > 0:
      mean = a @ mean + env.control @ actions[t]
      cov = a @ cov @ a.T + env.process_cov
    means.append(mean)
    covs.append(cov)
  o = env.obs_dim
  joint = np.zeros((steps * o, steps * o))
  for s in range(steps):
    for t in range(s, steps):
      cross = np.linalg.matrix_power(a, t - s) @ covs[s]
      block = c @ cross @ c.T
      if s == t:
        block = block + env.obs_cov
      joint[t * o : (t + 1) * o, s * o : (s + 1) * o] = block
      joint[s * o : (s + 1) * o, t * o : (t + 1) * o] = block.T
  mu = np.concatenate([c @ m for m in means])
  return stats.multivariate_normal.logpdf(
      np.concatenate(observations), mu, joint
  )


@pytest.fixture
def linear_env():
  return environments.make_linear_gaussian(seed=3, horizon=4)


class TestLinearGaussian:
  """Exact filtering on the linear-Gaussian POMDP."""

  def test_kalman_matches_joint_gaussian(self, linear_env):
    """The innovation log-likelihood equals the joint density."""
    episode = rollout.collect_episode(linear_env, rng_lib.Rng(0))
    result = environments.kalman_exact(
        linear_env, episode.observations, episode.actions
    )
    expected = _joint_log_likelihood(
        linear_env, episode.observations, episode.actions
    )
    assert result.log_likelihood == pytest.approx(expected, rel=1e-9)
    assert result.means.shape == (4, 2)

  def test_conditional_posterior_is_bayes_rule(self, linear_env):
    """log p(o|x) + log p(x|x') = log p(o|x') + log p(x|x', o)."""
    previous = np.array([[0.3, -0.2], [1.0, 0.5]])
    action = np.array([0.4])
    observation = np.array([0.1, -0.7])
    state = np.array([[0.2, 0.1], [0.9, 0.3]])
    means, cov, log_marginal = linear_env.conditional_posterior(
        previous, action, observation
    )
    left = linear_env.observation_log_prob(
        observation, state
    ) + linear_env.transition_log_prob(state, previous, action)
    posterior = np.array([
        stats.multivariate_normal.logpdf(state[i], means[i], cov)
        for i in range(2)
    ])
    np.testing.assert_allclose(left, log_marginal + posterior, atol=1e-10)

  def test_stationary_covariance(self, linear_env):
    """The initial covariance solves the discrete Lyapunov equation."""
    a, p = linear_env.transition, linear_env.initial_cov
    np.testing.assert_allclose(
        a @ p @ a.T + linear_env.process_cov, p, atol=1e-10
    )

  def test_scalar_update(self):
    """A unit prior and unit noise halve the observation."""
    env = environments.LinearGaussianPOMDP(
        transition=[[0.5]],
        control=[[0.0]],
        emission=[[1.0]],
        process_std=1.0,
        obs_std=1.0,
        initial_mean=[0.0],
        initial_cov=[[1.0]],
    )
    result = environments.kalman_exact(env, [[1.0]], [[0.0]])
    assert result.means[0, 0] == pytest.approx(0.5)
    assert result.covariances[0, 0, 0] == pytest.approx(0.5)

  def test_noiseless_observations_pin_the_state(self):
    """Without observation noise the posterior mean inverts the emission."""
    emission = np.array([[1.0, 0.5], [0.0, 2.0]])
    env = environments.LinearGaussianPOMDP(
        transition=0.5 * np.eye(2),
        control=np.zeros((2, 1)),
        emission=emission,
        process_std=1.0,
        obs_std=0.0,
    )
    observation = np.array([1.0, -2.0])
    result = environments.kalman_exact(
        env, observation[None, :], np.zeros((1, 1))
    )
    np.testing.assert_allclose(
        result.means[0], np.linalg.solve(emission, observation), atol=1e-9
    )
    np.testing.assert_allclose(result.covariances[0], 0.0, atol=1e-9)

  def test_stable_transition(self, linear_env):
    """The random transition has spectral radius 0.9."""
    radius = np.max(np.abs(np.linalg.eigvals(linear_env.transition)))
    assert radius == pytest.approx(0.9)

  def test_action_bounds(self, linear_env):
    """Actions outside [-1, 1] are rejected."""
    linear_env.reset(rng_lib.Rng(0))
    with pytest.raises(environments.ActionOutOfBoundsError):
      linear_env.step(np.array([1.5]), rng_lib.Rng(1))
    with pytest.raises(environments.ActionOutOfBoundsError):
      linear_env.step(np.array([0.1, 0.1]), rng_lib.Rng(1))


class TestEpisodes:
  """Episode conventions shared by every environment."""

  @pytest.mark.parametrize(
      "env",
      [
          environments.PointMassEnv(horizon=6),
          environments.BimodalEnv(),
          environments.make_linear_gaussian(horizon=5),
      ],
      ids=["point_mass", "bimodal", "linear_gaussian"],
  )
  def test_alignment(self, env):
    """Zero first action and reward, horizon length, final done flag."""
    episode = rollout.collect_episode(env, rng_lib.Rng(2))
    assert len(episode) == env.horizon
    np.testing.assert_array_equal(episode.actions[0], np.zeros(env.action_dim))
    assert episode.rewards[0] == 0.0
    assert episode.dones[-1] and not episode.dones[:-1].any()

  def test_rollouts_are_reproducible(self):
    """The same stream replays the same episode."""
    env = environments.PointMassEnv(horizon=8)
    a = rollout.collect_episode(env, rng_lib.Rng(4))
    b = rollout.collect_episode(env, rng_lib.Rng(4))
    np.testing.assert_array_equal(a.observations, b.observations)
    np.testing.assert_array_equal(a.actions, b.actions)


class TestBimodal:
  """The hidden-direction walker."""

  def test_modes_share_prefix(self):
    """Both modes coincide for the prefix and then diverge."""
    env = environments.BimodalEnv(prefix_steps=5)
    for t in range(5):
      np.testing.assert_array_equal(env.position(t, 1), env.position(t, -1))
    assert env.position(6, 1)[1] > 0 > env.position(6, -1)[1]

  def test_prefix_does_not_reveal_the_mode(self):
    """First observations of both modes share one distribution."""
    env = environments.BimodalEnv()
    by_mode = {1: [], -1: []}
    for stream in rng_lib.Rng(8).split(1000):
      observation = env.reset(stream)
      by_mode[env.mode].append(observation[1])
    assert stats.ks_2samp(by_mode[1], by_mode[-1]).pvalue > 0.01

  def test_modes_separate_after_prefix(self):
    """The first divergent step separates the modes by five noise widths."""
    env = environments.make_bimodal(seed=3, prefix_steps=5)
    gap = env.lateral_offset(env.position(5, 1) - env.position(5, -1))
    assert gap >= 5 * env.noise_std

  def test_seeded_heading(self):
    """The seed fixes the heading; the axes stay orthonormal."""
    env = environments.make_bimodal(seed=4)
    assert env.heading == environments.make_bimodal(seed=4).heading
    assert env.heading != environments.make_bimodal(seed=5).heading
    assert 0.0 <= env.heading < 2 * np.pi
    assert env.forward_axis @ env.lateral_axis == pytest.approx(0.0)
    assert np.linalg.norm(env.lateral_axis) == pytest.approx(1.0)

  def test_make_env_uses_config_seed(self, tiny_config):
    """The bimodal task is built from the config seed."""
    config = tiny_config.model_copy(update={"env_id": "bimodal", "seed": 6})
    env = environments.make_env(config)
    assert env.heading == environments.make_bimodal(seed=6).heading

  def test_no_actions(self):
    """The walker takes an empty action vector."""
    env = environments.BimodalEnv()
    assert env.action_dim == 0


class TestPointMass:
  """The damped point mass."""

  def test_reward_is_negative_distance(self):
    """Reward is minus the distance to the goal."""
    env = environments.PointMassEnv(goal=np.array([1.0, 0.0]))
    assert env.reward_at(np.array([1.0, 3.0])) == pytest.approx(-3.0)

  def test_observation_spec(self):
    """Positions are standardised vectors."""
    spec = environments.PointMassEnv().obs_spec
    assert spec.shape == (2,)
    assert spec.preprocessing == "standardize"


class TestMakeEnv:
  """Construction from a config."""

  def test_digit_env_from_synthetic_strokes(self):
    """Without a stroke file the digit task uses synthetic digits."""
    config = config_lib.resolve_config(
        overrides=[
            "env_id=digit",
            "synthetic_strokes=3",
            "stroke_resolution=14",
        ]
    )
    env = environments.make_env(config)
    assert isinstance(env, environments.DigitEnv)
    assert env.obs_spec.shape == (14, 14, 1)
    episode = rollout.collect_episode(env, rng_lib.Rng(0))
    assert episode.observations.shape[1] == 196
    assert episode.observations.min() >= -0.5
    assert episode.observations.max() <= 0.5

  def test_digit_env_from_file(self, tmp_path):
    """A stroke file replaces the synthetic digits."""
    path = tmp_path / "digits.strokes"
    strokes.save_stroke_file(
        path, strokes.generate_synthetic_strokes(2, rng_lib.Rng(1))
    )
    config = config_lib.resolve_config(
        overrides=["env_id=digit", f"stroke_path={path}"]
    )
    env = environments.make_env(config)
    assert len(env.dataset) == 1
    assert env.held_out.episode_ids == ["synthetic-1-d1"]

  def test_linear_gaussian_is_seeded(self):
    """The same seed builds the same instance."""
    config = config_lib.resolve_config(overrides=["env_id=linear_gaussian"])
    a = environments.make_env(config)
    b = environments.make_env(config)
    np.testing.assert_array_equal(a.transition, b.transition)
