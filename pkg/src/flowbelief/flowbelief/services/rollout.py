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

"""Agents and environment interaction."""

import dataclasses
import logging
from typing import Optional

import numpy as np

from flowbelief.core import config as config_lib
from flowbelief.core import rng as rng_lib
from flowbelief.models import actor_critic
from flowbelief.models import belief_model as belief_model_lib
from flowbelief.models import records
from flowbelief.services import environments

logger = logging.getLogger(__name__)


@dataclasses.dataclass
class Agent:
  """Belief model plus, for environments with actions, actor and critic."""

  model: belief_model_lib.BeliefModel
  actor: Optional[actor_critic.Actor] = None
  critic: Optional[actor_critic.Critic] = None

  @classmethod
  def create(
      cls,
      config: config_lib.TrainConfig,
      env: environments.Environment,
      rng: rng_lib.Rng,
  ) -> "Agent":
    model_rng, actor_rng, critic_rng = rng.split(3)
    model = belief_model_lib.BeliefModel.from_config(
        config, env.obs_spec, env.action_dim, model_rng
    )
    if not env.action_dim:
      return cls(model=model)
    return cls(
        model=model,
        actor=actor_critic.Actor(
            model.feature_dim,
            env.action_low,
            env.action_high,
            config.hidden_dim,
            actor_rng,
            min_std=config.actor_min_std,
        ),
        critic=actor_critic.Critic(
            model.feature_dim, config.hidden_dim, critic_rng
        ),
    )


class PolicyRunner:
  """Filters one live episode and picks actions from the current belief."""

  def __init__(
      self,
      agent: Agent,
      env: environments.Environment,
      exploration_noise: float = 0.0,
      deterministic: bool = False,
  ):
    self.agent = agent
    self.env = env
    self.exploration_noise = exploration_noise
    self.deterministic = deterministic
    self._state: Optional[belief_model_lib.BeliefState] = None

  def observe(self, action: np.ndarray, observation: np.ndarray, rng) -> None:
    model = self.agent.model
    if self._state is None:
      self._state = model.initial_belief(1)
    self._state = model.observe_step(
        self._state,
        np.asarray(action, dtype=np.float64).reshape(1, -1),
        model.preprocess(np.asarray(observation).reshape(1, -1)),
        rng,
    )

  def act(self, rng: rng_lib.Rng) -> np.ndarray:
    """Policy action with optional Gaussian noise, clipped to the box."""
    actor = self.agent.actor
    features = self._state.features
    if self.deterministic:
      action = actor.mode(features).numpy()[0]
    else:
      sampled, _ = actor.sample(features, rng)
      action = sampled.numpy()[0]
    if self.exploration_noise > 0:
      action = action + self.exploration_noise * rng.normal(action.shape)
    return np.clip(action, self.env.action_low, self.env.action_high)


def collect_episode(
    env: environments.Environment,
    rng: rng_lib.Rng,
    agent: Optional[Agent] = None,
    exploration_noise: float = 0.0,
    deterministic: bool = False,
) -> records.Episode:
  """Runs one episode to its natural end.

  Without an agent (or an actor) actions are uniform in the box. The reset
  step carries a zero action and zero reward.
  """
  reset_rng, *step_rngs = rng.split(env.horizon)
  observation = env.reset(reset_rng)
  action = np.zeros(env.action_dim)
  runner = None
  if agent is not None and agent.actor is not None:
    runner = PolicyRunner(agent, env, exploration_noise, deterministic)
  observations, actions = [observation], [action]
  rewards, dones = [0.0], [False]
  for step_rng in step_rngs:
    env_rng, belief_rng, action_rng = step_rng.split(3)
    if runner is not None:
      runner.observe(action, observation, belief_rng)
      action = runner.act(action_rng)
    else:
      action = env.random_action(action_rng)
    result = env.step(action, env_rng)
    observation = result.observation
    observations.append(observation)
    actions.append(np.asarray(action, dtype=np.float64).reshape(-1))
    rewards.append(result.reward)
    dones.append(result.done)
    if result.done:
      break
  dones[-1] = True
  return records.Episode(
      observations=np.stack(observations),
      actions=np.stack(actions),
      rewards=np.array(rewards),
      dones=np.array(dones),
  )


def episode_from_frames(frames: np.ndarray) -> records.Episode:
  """An action-free episode replaying recorded frames."""
  frames = np.asarray(frames, dtype=np.float64)
  length = len(frames)
  dones = np.zeros(length, dtype=bool)
  dones[-1] = True
  return records.Episode(
      observations=frames.reshape(length, -1),
      actions=np.zeros((length, 0)),
      rewards=np.zeros(length),
      dones=dones,
  )
