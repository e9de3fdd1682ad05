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

"""Recurrent state-space belief model with flow-transformed beliefs.

Per timestep the model keeps a deterministic recurrent state z and a
stochastic state s. The prior over s is a flow distribution conditioned on z
alone; the posterior additionally sees the encoded observation. Both flow
stacks use z as their context and never share parameters.
"""

import dataclasses
import logging
from typing import Optional

import numpy as np

from flowbelief.core import autodiff
from flowbelief.core import config as config_lib
from flowbelief.core import nn
from flowbelief.core import optim
from flowbelief.core import rng as rng_lib
from flowbelief.models import distributions
from flowbelief.models import flows
from flowbelief.models import records

logger = logging.getLogger(__name__)

Tensor = autodiff.Tensor


@dataclasses.dataclass
class BeliefState:
  """Belief at one timestep for a batch of sequences.

  Attributes:
    z: [B, Z] deterministic recurrent state.
    s: [B, S] stochastic state, a flow output of one base sample.
    prior: Prior flow distribution given z; None for the seed state.
    posterior: Posterior flow distribution given z and o; None when no
      observation was used.
    logq: [B] posterior log-density of s, when s came from the posterior.
    logp: [B] prior log-density of s.
  """

  z: Tensor
  s: Tensor
  prior: Optional[flows.FlowDistribution] = None
  posterior: Optional[flows.FlowDistribution] = None
  logq: Optional[Tensor] = None
  logp: Optional[Tensor] = None

  @property
  def batch_size(self) -> int:
    return self.z.shape[0]

  @property
  def features(self) -> Tensor:
    """concat(s, z), the input of the decoder and the policy heads."""
    return autodiff.concat([self.s, self.z], axis=-1)

  def detach(self) -> "BeliefState":
    return BeliefState(
        z=autodiff.stop_gradient(self.z),
        s=autodiff.stop_gradient(self.s),
        prior=self.prior.detach() if self.prior else None,
        posterior=self.posterior.detach() if self.posterior else None,
    )


class ObservationNormalizer:
  """Running per-coordinate statistics (Welford) for vector observations."""

  def __init__(self, dim: int):
    self.count = 0.0
    self.mean = np.zeros(dim)
    self.sum_sq = np.zeros(dim)

  @property
  def std(self) -> np.ndarray:
    if self.count < 2:
      return np.ones_like(self.mean)
    return np.sqrt(np.maximum(self.sum_sq / (self.count - 1), 1e-8))

  def update(self, observations: np.ndarray) -> None:
    """Folds [..., dim] observations into the running statistics."""
    for row in np.asarray(observations).reshape(-1, self.mean.shape[0]):
      self.count += 1.0
      delta = row - self.mean
      self.mean = self.mean + delta / self.count
      self.sum_sq = self.sum_sq + delta * (row - self.mean)

  def normalize(self, observations: np.ndarray) -> np.ndarray:
    return (observations - self.mean) / self.std

  def state(self) -> dict[str, np.ndarray]:
    return {
        "count": np.array([self.count]),
        "mean": self.mean.copy(),
        "sum_sq": self.sum_sq.copy(),
    }

  def load_state(self, state: dict[str, np.ndarray]) -> None:
    self.count = float(state["count"][0])
    self.mean = np.array(state["mean"])
    self.sum_sq = np.array(state["sum_sq"])


class BeliefModel(nn.Module):
  """Encoder, recurrence, prior and posterior heads, flows and decoders."""

  def __init__(
      self,
      obs_spec: records.ObservationSpec,
      action_dim: int,
      rng: rng_lib.Rng,
      state_dim: int = 30,
      deter_dim: int = 200,
      hidden_dim: int = 200,
      embed_dim: int = 200,
      encoder: str = "mlp",
      use_flows: bool = True,
      freeze_flows: bool = False,
      flow_depth: int = 5,
      flow_hidden_dim: int = 64,
      max_log_scale: float = flows.DEFAULT_MAX_LOG_SCALE,
      lu_permutation: flows.Permutation = "identity",
      min_std: float = distributions.DEFAULT_MIN_STD,
  ):
    self.obs_spec = obs_spec
    self.obs_dim = obs_spec.flat_dim
    self.action_dim = action_dim
    self.state_dim = state_dim
    self.deter_dim = deter_dim
    self.min_std = min_std
    self.use_flows = use_flows
    self.freeze_flows = freeze_flows

    # Flows draw from their own stream so toggling them leaves every other
    # initial weight unchanged.
    model_rng, flow_rng = rng.split(2)
    streams = model_rng.split(7)
    if encoder == "conv" and obs_spec.kind == "image":
      self.encoder = nn.ConvEncoder(obs_spec.shape, embed_dim, streams[0])
    else:
      self.encoder = nn.MLP(
          self.obs_dim, [hidden_dim, hidden_dim], embed_dim, streams[0]
      )
    self.pre_net = nn.MLP(
        state_dim + action_dim, [hidden_dim], hidden_dim, streams[1]
    )
    self.gru = nn.GRUCell(hidden_dim, deter_dim, streams[2])
    self.prior_head = nn.MLP(deter_dim, [hidden_dim], 2 * state_dim, streams[3])
    self.posterior_head = nn.MLP(
        deter_dim + embed_dim, [hidden_dim], 2 * state_dim, streams[4]
    )
    feature_dim = state_dim + deter_dim
    self.decoder = nn.MLP(
        feature_dim, [hidden_dim, hidden_dim], self.obs_dim, streams[5]
    )
    self.reward_head = nn.MLP(
        feature_dim, [hidden_dim, hidden_dim], 1, streams[6]
    )

    prior_rng, posterior_rng = flow_rng.split(2)
    self.prior_flow: Optional[flows.FlowStack] = None
    self.posterior_flow: Optional[flows.FlowStack] = None
    if use_flows:
      self.prior_flow = flows.FlowStack(
          state_dim,
          deter_dim,
          flow_depth,
          flow_hidden_dim,
          prior_rng,
          max_log_scale=max_log_scale,
          permutation=lu_permutation,
      )
      self.posterior_flow = flows.FlowStack(
          state_dim,
          deter_dim,
          flow_depth,
          flow_hidden_dim,
          posterior_rng,
          max_log_scale=max_log_scale,
          permutation=lu_permutation,
      )
    self.normalizer = ObservationNormalizer(self.obs_dim)

  @classmethod
  def from_config(
      cls,
      config: config_lib.TrainConfig,
      obs_spec: records.ObservationSpec,
      action_dim: int,
      rng: rng_lib.Rng,
  ) -> "BeliefModel":
    return cls(
        obs_spec,
        action_dim,
        rng,
        state_dim=config.state_dim,
        deter_dim=config.deter_dim,
        hidden_dim=config.hidden_dim,
        embed_dim=config.embed_dim,
        encoder=config.encoder,
        use_flows=config.use_flows,
        freeze_flows=config.freeze_flows,
        flow_depth=config.flow_depth,
        flow_hidden_dim=config.flow_hidden_dim,
        max_log_scale=config.max_log_scale,
        lu_permutation=config.lu_permutation,
        min_std=config.min_std,
    )

  @property
  def feature_dim(self) -> int:
    return self.state_dim + self.deter_dim

  def flow_parameters(self) -> list[optim.Parameter]:
    params = []
    for stack in (self.prior_flow, self.posterior_flow):
      if stack is not None:
        params.extend(stack.parameters())
    return params

  def trainable_parameters(self) -> list[optim.Parameter]:
    """All parameters, minus the flow stacks when they are frozen."""
    if not self.freeze_flows:
      return self.parameters()
    frozen = {id(p) for p in self.flow_parameters()}
    return [p for p in self.parameters() if id(p) not in frozen]

  def preprocess(self, observations: np.ndarray) -> np.ndarray:
    """Maps raw flat observations to model inputs."""
    processed = self.obs_spec.preprocess(observations)
    if self.obs_spec.preprocessing == "standardize":
      processed = self.normalizer.normalize(processed)
    return processed

  def observe_data(self, observations: np.ndarray) -> None:
    """Updates running statistics with newly collected raw observations."""
    if self.obs_spec.preprocessing == "standardize":
      self.normalizer.update(self.obs_spec.preprocess(observations))

  def initial_belief(self, batch_size: int = 1) -> BeliefState:
    """The all-zero recurrence seed."""
    return BeliefState(
        z=autodiff.Tensor(np.zeros((batch_size, self.deter_dim))),
        s=autodiff.Tensor(np.zeros((batch_size, self.state_dim))),
    )

  def recur(self, prev: BeliefState, action) -> Tensor:
    """z' = GRU(z, relu(MLP(concat(s, a))))."""
    action = autodiff.as_tensor(action)
    if action.shape != (prev.batch_size, self.action_dim):
      raise autodiff.ShapeError(
          "recur",
          [prev.s.shape, action.shape],
          f"action must be [B, {self.action_dim}]",
      )
    x = prev.s
    if self.action_dim:
      x = autodiff.concat([prev.s, action], axis=-1)
    y = autodiff.relu(self.pre_net(x))
    return self.gru(prev.z, y)

  def _base(self, head_out: Tensor) -> distributions.DiagonalGaussian:
    return distributions.DiagonalGaussian.from_raw(
        head_out[..., : self.state_dim],
        head_out[..., self.state_dim :],
        self.min_std,
    )

  def prior_belief(self, z: Tensor) -> flows.FlowDistribution:
    return flows.FlowDistribution(
        self._base(self.prior_head(z)), self.prior_flow, z
    )

  def posterior_belief(self, z: Tensor, observation) -> flows.FlowDistribution:
    observation = autodiff.as_tensor(observation)
    if observation.shape != (z.shape[0], self.obs_dim):
      raise autodiff.ShapeError(
          "posterior_belief",
          [observation.shape],
          f"observation must be [B, {self.obs_dim}]",
      )
    embed = self.encoder(observation)
    head_in = autodiff.concat([z, embed], axis=-1)
    return flows.FlowDistribution(
        self._base(self.posterior_head(head_in)), self.posterior_flow, z
    )

  def observe_step(
      self, prev: BeliefState, action, observation, rng: rng_lib.Rng
  ) -> BeliefState:
    """Filters one step: samples s from the posterior, scores it under both."""
    z = self.recur(prev, action)
    prior = self.prior_belief(z)
    posterior = self.posterior_belief(z, observation)
    s, logq = posterior.sample(rng)
    logp = prior.log_prob(s)
    return BeliefState(
        z=z, s=s, prior=prior, posterior=posterior, logq=logq, logp=logp
    )

  def imagine_step(
      self, prev: BeliefState, action, rng: rng_lib.Rng
  ) -> BeliefState:
    """Predicts one step without an observation: s ~ prior(z)."""
    z = self.recur(prev, action)
    prior = self.prior_belief(z)
    s, logp = prior.sample(rng)
    return BeliefState(z=z, s=s, prior=prior, logp=logp)

  def observe_sequence(
      self,
      observations: np.ndarray,
      actions: np.ndarray,
      rng: rng_lib.Rng,
      start: Optional[BeliefState] = None,
  ) -> list[BeliefState]:
    """Runs observe_step over [B, L, ...] preprocessed observations."""
    length = observations.shape[1]
    state = start or self.initial_belief(observations.shape[0])
    states = []
    for t, step_rng in enumerate(rng.split(length)):
      state = self.observe_step(
          state, actions[:, t], observations[:, t], step_rng
      )
      states.append(state)
    return states

  def decode(self, state: BeliefState) -> distributions.DiagonalGaussian:
    """Unit-variance Gaussian over flat observations."""
    mean = self.decoder(state.features)
    return distributions.DiagonalGaussian(mean=mean, std=np.ones(mean.shape))

  def predict_reward(
      self, state: BeliefState
  ) -> distributions.DiagonalGaussian:
    """Unit-variance Gaussian over the scalar reward, event shape [1]."""
    mean = self.reward_head(state.features)
    return distributions.DiagonalGaussian(mean=mean, std=np.ones(mean.shape))
