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

"""Unit tests for the recurrent belief model."""

import numpy as np
import pytest

from flowbelief.core import autodiff
from flowbelief.core import nn
from flowbelief.core import rng as rng_lib
from flowbelief.models import belief_model as belief_model_lib
from flowbelief.models import records

TINY = {
    "state_dim": 2,
    "deter_dim": 6,
    "hidden_dim": 12,
    "embed_dim": 6,
    "flow_depth": 2,
    "flow_hidden_dim": 8,
}


def _sequence(batch=2, length=4, obs_dim=3, action_dim=1, seed=0):
  r = rng_lib.Rng(seed)
  return (
      r.normal((batch, length, obs_dim)),
      r.normal((batch, length, action_dim)),
  )


class TestObserveStep:
  """Filtering through the posterior."""

  def test_shapes_and_scores(self, tiny_model):
    """One step yields [B, Z], [B, S] and per-row log-densities."""
    observations, actions = _sequence()
    state = tiny_model.observe_step(
        tiny_model.initial_belief(2),
        actions[:, 0],
        observations[:, 0],
        rng_lib.Rng(1),
    )
    assert state.z.shape == (2, 6)
    assert state.s.shape == (2, 2)
    assert state.features.shape == (2, tiny_model.feature_dim)
    np.testing.assert_allclose(
        state.logq.value, state.posterior.log_prob(state.s).value, atol=1e-9
    )
    np.testing.assert_allclose(
        state.logp.value, state.prior.log_prob(state.s).value
    )

  def test_wrong_action_width(self, tiny_model):
    """Actions must be [B, A]."""
    with pytest.raises(autodiff.ShapeError):
      tiny_model.observe_step(
          tiny_model.initial_belief(2),
          np.zeros((2, 3)),
          np.zeros((2, 3)),
          rng_lib.Rng(1),
      )

  def test_wrong_observation_width(self, tiny_model):
    """Observations must be [B, obs_dim]."""
    with pytest.raises(autodiff.ShapeError):
      tiny_model.observe_step(
          tiny_model.initial_belief(2),
          np.zeros((2, 1)),
          np.zeros((2, 4)),
          rng_lib.Rng(1),
      )

  def test_sequence_is_deterministic(self, tiny_model):
    """The same stream gives the same filtered states."""
    observations, actions = _sequence()
    first = tiny_model.observe_sequence(observations, actions, rng_lib.Rng(2))
    second = tiny_model.observe_sequence(observations, actions, rng_lib.Rng(2))
    assert len(first) == 4
    for a, b in zip(first, second):
      np.testing.assert_array_equal(a.s.value, b.s.value)


class TestRecurrence:
  """The deterministic recurrence."""

  def test_input_network_is_an_mlp(self, tiny_model):
    """States and actions pass through a hidden layer before the GRU."""
    assert isinstance(tiny_model.pre_net, nn.MLP)
    assert len(tiny_model.pre_net.layers) == 1

  def test_zero_input_network_ignores_state_and_action(self, tiny_model):
    """With a zeroed input network only z drives the update."""
    for param in tiny_model.pre_net.parameters():
      param.assign(np.zeros(param.shape))
    r = rng_lib.Rng(3)
    z = autodiff.Tensor(r.normal((2, 6)))
    a = belief_model_lib.BeliefState(z=z, s=autodiff.Tensor(r.normal((2, 2))))
    b = belief_model_lib.BeliefState(z=z, s=autodiff.Tensor(r.normal((2, 2))))
    np.testing.assert_allclose(
        tiny_model.recur(a, r.normal((2, 1))).value,
        tiny_model.recur(b, r.normal((2, 1))).value,
    )


class TestImagineStep:
  """Prediction through the prior."""

  def test_imagined_state_scores_under_prior(self, tiny_model):
    """Imagined s carries its prior log-density and no posterior."""
    state = tiny_model.imagine_step(
        tiny_model.initial_belief(3), np.zeros((3, 1)), rng_lib.Rng(4)
    )
    assert state.posterior is None
    np.testing.assert_allclose(
        state.logp.value, state.prior.log_prob(state.s).value, atol=1e-9
    )

  def test_heads_shapes(self, tiny_model):
    """Decoder and reward head give unit-variance Gaussians."""
    state = tiny_model.imagine_step(
        tiny_model.initial_belief(3), np.zeros((3, 1)), rng_lib.Rng(4)
    )
    assert tiny_model.decode(state).mean.shape == (3, 3)
    reward = tiny_model.predict_reward(state)
    assert reward.mean.shape == (3, 1)
    np.testing.assert_array_equal(reward.std.value, np.ones((3, 1)))


class TestFlowsToggle:
  """Flows sit on top of the Gaussian model."""

  def test_identity_flows_match_gaussian_model(self, vector_spec):
    """Freshly initialised flows are identities over the same base model."""
    with_flows = belief_model_lib.BeliefModel(
        vector_spec, 1, rng_lib.Rng(8), **TINY
    )
    without = belief_model_lib.BeliefModel(
        vector_spec, 1, rng_lib.Rng(8), use_flows=False, **TINY
    )
    observations, actions = _sequence(seed=3)
    a = with_flows.observe_sequence(observations, actions, rng_lib.Rng(9))
    b = without.observe_sequence(observations, actions, rng_lib.Rng(9))
    for x, y in zip(a, b):
      np.testing.assert_allclose(x.s.value, y.s.value, atol=1e-12)
      np.testing.assert_allclose(x.logq.value, y.logq.value, atol=1e-10)
      np.testing.assert_allclose(x.logp.value, y.logp.value, atol=1e-10)

  def test_frozen_flows_are_not_trainable(self, vector_spec):
    """freeze_flows removes both flow stacks from the trainable set."""
    model = belief_model_lib.BeliefModel(
        vector_spec, 1, rng_lib.Rng(8), freeze_flows=True, **TINY
    )
    trainable = {id(p) for p in model.trainable_parameters()}
    flow_params = model.flow_parameters()
    assert flow_params
    assert not trainable & {id(p) for p in flow_params}
    assert len(trainable) == len(model.parameters()) - len(flow_params)

  def test_prior_and_posterior_stacks_are_separate(self, tiny_model):
    """The two flow stacks share no parameters."""
    prior = {id(p) for p in tiny_model.prior_flow.parameters()}
    posterior = {id(p) for p in tiny_model.posterior_flow.parameters()}
    assert prior and posterior
    assert not prior & posterior


class TestPreprocessing:
  """Observation statistics and image inputs."""

  def test_standardize_uses_running_statistics(self, rng):
    """Standardised inputs have zero mean and unit spread."""
    spec = records.ObservationSpec("vector", (2,), "standardize")
    model = belief_model_lib.BeliefModel(spec, 0, rng, **TINY)
    data = rng_lib.Rng(1).normal((500, 2)) * [2.0, 0.5] + [3.0, -1.0]
    model.observe_data(data)
    processed = model.preprocess(data)
    np.testing.assert_allclose(processed.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(processed.std(axis=0, ddof=1), 1.0, atol=1e-9)

  def test_normalizer_state_round_trip(self):
    """Saved statistics restore the same normalisation."""
    source = belief_model_lib.ObservationNormalizer(2)
    source.update(np.array([[1.0, 2.0], [3.0, 5.0], [0.0, 1.0]]))
    target = belief_model_lib.ObservationNormalizer(2)
    target.load_state(source.state())
    x = np.array([[1.5, 2.5]])
    np.testing.assert_array_equal(target.normalize(x), source.normalize(x))

  def test_conv_encoder_for_images(self, rng):
    """Image observations can use the convolutional encoder."""
    spec = records.ObservationSpec("image", (14, 14, 1), "none")
    model = belief_model_lib.BeliefModel(spec, 0, rng, encoder="conv", **TINY)
    state = model.observe_step(
        model.initial_belief(2),
        np.zeros((2, 0)),
        np.zeros((2, 196)),
        rng_lib.Rng(0),
    )
    assert model.decode(state).mean.shape == (2, 196)
