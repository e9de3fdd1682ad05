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

"""Behaviour learning in imagination.

From each filtered posterior belief, N initial states are drawn from the
posterior flow distribution and rolled forward H steps through the prior
with actor actions. TD(lambda) targets over the predicted rewards and critic
values train the critic by regression and the actor by backpropagating the
targets through the learned dynamics.
"""

import dataclasses
import logging
from typing import Optional, Sequence

import numpy as np

from flowbelief.core import autodiff
from flowbelief.core import config as config_lib
from flowbelief.core import optim
from flowbelief.core import rng as rng_lib
from flowbelief.models import actor_critic
from flowbelief.models import belief_model as belief_model_lib
from flowbelief.models import distributions
from flowbelief.models import flows
from flowbelief.models import records
from flowbelief.services import elbo

logger = logging.getLogger(__name__)

Tensor = autodiff.Tensor


@dataclasses.dataclass
class ImaginedBatch:
  """N trajectories per start belief, H + 1 states each.

  Rows are copy-major: row `n * M + m` is trajectory n of start belief m.

  Attributes:
    states: H + 1 belief states, each over N * M rows.
    rewards: [H + 1, N * M] predicted reward means.
    discount: Constant per-step discount.
    num_trajectories: N.
    action_std: Mean pre-squash action std over the rollout.
    targets: [H, N * M] TD(lambda) targets once computed.
  """

  states: list[belief_model_lib.BeliefState]
  rewards: Tensor
  discount: float
  num_trajectories: int
  action_std: float = 0.0
  targets: Optional[Tensor] = None

  @property
  def horizon(self) -> int:
    return len(self.states) - 1


@dataclasses.dataclass
class Optimizers:
  """Adam for the model and, when a policy exists, the actor and critic."""

  model: optim.Adam
  actor: Optional[optim.Adam] = None
  critic: Optional[optim.Adam] = None

  @classmethod
  def create(
      cls,
      model: belief_model_lib.BeliefModel,
      actor: Optional[actor_critic.Actor],
      critic: Optional[actor_critic.Critic],
      config: config_lib.TrainConfig,
  ) -> "Optimizers":
    optimizers = cls(
        model=optim.Adam(
            model.trainable_parameters(),
            config.model_lr,
            config.grad_clip,
            name="model",
        )
    )
    if actor is not None and critic is not None:
      optimizers.actor = optim.Adam(
          actor.parameters(), config.actor_lr, config.grad_clip, name="actor"
      )
      optimizers.critic = optim.Adam(
          critic.parameters(),
          config.critic_lr,
          config.grad_clip,
          name="critic",
      )
    return optimizers


@dataclasses.dataclass
class UpdateMetrics:
  """Outcome of one joint update."""

  loss: float = float("nan")
  recon: float = float("nan")
  reward_ll: float = float("nan")
  kl_raw: float = float("nan")
  kl_clipped: float = float("nan")
  model_grad_norm: float = float("nan")
  critic_loss: float = float("nan")
  actor_value: float = float("nan")
  mean_imagined_reward: float = float("nan")
  action_std: float = float("nan")
  skipped: bool = False

  def as_dict(self) -> dict[str, float]:
    return dataclasses.asdict(self)


def start_states(
    states: Sequence[belief_model_lib.BeliefState],
) -> belief_model_lib.BeliefState:
  """Merges every filtered state except the last into one detached batch."""
  seeds = list(states[:-1]) or list(states)
  posterior = seeds[0].posterior
  base = distributions.DiagonalGaussian(
      mean=np.concatenate([s.posterior.base.mean.value for s in seeds]),
      std=np.concatenate([s.posterior.base.std.value for s in seeds]),
  )
  z = autodiff.Tensor(np.concatenate([s.z.value for s in seeds]))
  return belief_model_lib.BeliefState(
      z=z,
      s=autodiff.Tensor(np.concatenate([s.s.value for s in seeds])),
      posterior=flows.FlowDistribution(base, posterior.stack, z),
  )


def imagine_trajectories(
    start: belief_model_lib.BeliefState,
    actor: actor_critic.Actor,
    model: belief_model_lib.BeliefModel,
    num_trajectories: int,
    horizon: int,
    rng: rng_lib.Rng,
    gamma: float = 0.99,
) -> ImaginedBatch:
  """Rolls N posterior draws per start belief H steps through the prior.

  Raises:
    ValueError: If N < 1, H < 1 or the start carries no posterior.
  """
  if num_trajectories < 1 or horizon < 1:
    raise ValueError(
        f"Need N >= 1 and H >= 1, got N={num_trajectories}, H={horizon}"
    )
  if start.posterior is None:
    raise ValueError("Imagination starts from a filtered posterior belief.")
  init_rng, *step_rngs = rng.split(horizon + 1)
  posterior = start.posterior.detach().tile(num_trajectories)
  s0, _ = posterior.sample(init_rng)
  state = belief_model_lib.BeliefState(z=posterior.context, s=s0)
  states = [state]
  stds = []
  for step_rng in step_rngs:
    action_rng, state_rng = step_rng.split(2)
    action, std = actor.sample(state.features, action_rng)
    stds.append(float(std.value.mean()))
    state = model.imagine_step(state, action, state_rng)
    states.append(state)
  rewards = autodiff.concat(
      [
          autodiff.reshape(
              model.predict_reward(s).mean, (1, s.batch_size)
          )
          for s in states
      ],
      axis=0,
  )
  return ImaginedBatch(
      states=states,
      rewards=rewards,
      discount=gamma,
      num_trajectories=num_trajectories,
      action_std=float(np.mean(stds)),
  )


def td_lambda_targets(
    rewards,
    values,
    gamma: float,
    lambda_: float,
    terminal_reward=None,
) -> Tensor:
  """TD(lambda) targets by backward recursion.

  V_t = r_t + gamma * ((1 - lambda) * v_{t+1} + lambda * V_{t+1}) for t < H,
  bootstrapped with V_H = v_H. When `terminal_reward` is given the bootstrap
  becomes V_H = r_H + gamma * v_H.

  Args:
    rewards: [H] or [H, M] rewards.
    values: [H + 1] or [H + 1, M] values.
    gamma: Discount in (0, 1].
    lambda_: Mixing weight in [0, 1].
    terminal_reward: Optional reward at step H, shaped like one row of
      `rewards`.

  Returns:
    Targets shaped like `rewards`.

  Raises:
    ValueError: On out-of-range gamma or lambda, or mismatched lengths.
  """
  if not 0.0 < gamma <= 1.0:
    raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
  if not 0.0 <= lambda_ <= 1.0:
    raise ValueError(f"lambda must lie in [0, 1], got {lambda_}")
  rewards = autodiff.as_tensor(rewards)
  values = autodiff.as_tensor(values)
  horizon = rewards.shape[0]
  if values.shape[0] != horizon + 1 or values.shape[1:] != rewards.shape[1:]:
    raise ValueError(
        f"values must be [H+1, ...] for rewards {rewards.shape}, got"
        f" {values.shape}"
    )
  target = values[horizon]
  if terminal_reward is not None:
    target = terminal_reward + gamma * target
  row_shape = (1,) + rewards.shape[1:]
  rows = []
  for t in reversed(range(horizon)):
    target = rewards[t] + gamma * (
        (1.0 - lambda_) * values[t + 1] + lambda_ * target
    )
    rows.append(autodiff.reshape(target, row_shape))
  return autodiff.concat(rows[::-1], axis=0)


def compute_targets(
    batch: ImaginedBatch, critic: actor_critic.Critic, lambda_: float
) -> Tensor:
  """Fills `batch.targets`; critic weights enter as constants."""
  values = autodiff.concat(
      [
          autodiff.reshape(
              critic(s.features, detach=True), (1, s.batch_size)
          )
          for s in batch.states
      ],
      axis=0,
  )
  horizon = batch.horizon
  batch.targets = td_lambda_targets(
      batch.rewards[:horizon],
      values,
      batch.discount,
      lambda_,
      terminal_reward=batch.rewards[horizon],
  )
  return batch.targets


def critic_loss(
    batch: ImaginedBatch, critic: actor_critic.Critic, lambda_: float = 0.95
) -> Tensor:
  """Mean of 0.5 * (v(s_t) - sg(V_t))^2 over t < H and every trajectory."""
  targets = batch.targets
  if targets is None:
    targets = compute_targets(batch, critic, lambda_)
  targets = autodiff.stop_gradient(targets)
  total = autodiff.as_tensor(0.0)
  for t in range(batch.horizon):
    features = autodiff.stop_gradient(batch.states[t].features)
    error = critic(features) - targets[t]
    total = total + autodiff.mean(0.5 * autodiff.square(error))
  return total / float(batch.horizon)


def actor_loss(
    batch: ImaginedBatch, critic: actor_critic.Critic, lambda_: float = 0.95
) -> Tensor:
  """Negative mean TD(lambda) target; minimising it maximises the return."""
  targets = batch.targets
  if targets is None:
    targets = compute_targets(batch, critic, lambda_)
  return -autodiff.mean(targets)


def _apply(
    optimizer: optim.Adam, loss: Tensor
) -> optim.StepReport:
  grads = autodiff.backward(loss, wrt=optimizer.params)
  return optimizer.step(grads)


def joint_update(
    model: belief_model_lib.BeliefModel,
    actor: actor_critic.Actor,
    critic: actor_critic.Critic,
    batch: records.SequenceBatch,
    config: config_lib.TrainConfig,
    optimizers: Optimizers,
    rng: rng_lib.Rng,
) -> UpdateMetrics:
  """One model update on real data, then one actor and critic update.

  A non-finite signal skips the remaining updates of this step and is
  reported through `UpdateMetrics.skipped`.
  """
  metrics = UpdateMetrics()
  model_rng, imagine_rng = rng.split(2)
  try:
    with autodiff.Tape():
      observations = model.preprocess(batch.observations)
      model_loss, loss_metrics = elbo.compute_model_loss(
          batch, model, model_rng, config.free_nats, config.kl_mode
      )
    for key, value in loss_metrics.as_dict().items():
      setattr(metrics, key, value)
    report = _apply(optimizers.model, model_loss)
    metrics.model_grad_norm = report.grad_norm
    if not report.applied:
      metrics.skipped = True
      return metrics
    if not config.train_policy or optimizers.actor is None:
      return metrics

    with autodiff.Tape():
      # Posterior beliefs from the updated model seed imagination.
      states = model.observe_sequence(
          observations, batch.actions, model_rng.child()
      )
      imagined = imagine_trajectories(
          start_states(states),
          actor,
          model,
          config.num_trajectories,
          config.imagination_horizon,
          imagine_rng,
          config.gamma,
      )
      compute_targets(imagined, critic, config.td_lambda)
      policy_loss = actor_loss(imagined, critic, config.td_lambda)
      value_loss = critic_loss(imagined, critic, config.td_lambda)
  except (elbo.NonFiniteLossError, autodiff.NumericError) as e:
    logger.warning("Skipping update with non-finite signal: %s", e)
    metrics.skipped = True
    return metrics

  actor_report = _apply(optimizers.actor, policy_loss)
  critic_report = _apply(optimizers.critic, value_loss)
  metrics.actor_value = -policy_loss.item()
  metrics.critic_loss = value_loss.item()
  metrics.mean_imagined_reward = float(imagined.rewards.value.mean())
  metrics.action_std = imagined.action_std
  metrics.skipped = not (actor_report.applied and critic_report.applied)
  return metrics
