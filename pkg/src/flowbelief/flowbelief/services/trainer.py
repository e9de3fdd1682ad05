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

"""The training loop: seed episodes, then interleaved updates and collection.

Each run is a pure function of its resolved config: every random stream is
derived from `config.seed` and no row of the metrics file carries
wall-clock data.
"""

import dataclasses
import logging
import pathlib
from typing import Any, Optional

from flowbelief.core import config as config_lib
from flowbelief.core import rng as rng_lib
from flowbelief.services import artifacts
from flowbelief.services import checkpoint
from flowbelief.services import environments
from flowbelief.services import evaluation
from flowbelief.services import imagination
from flowbelief.services import replay_buffer
from flowbelief.services import rollout

logger = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "step",
    "env_steps",
    *(f.name for f in dataclasses.fields(imagination.UpdateMetrics)),
    "train_return",
    "eval_return",
    "eval_return_std",
    "eval_elbo",
)


class Error(Exception):
  """Base error for training."""


class TrainingAbortedError(Error):
  """Raised after too many consecutive skipped updates.

  Attributes:
    step: The update at which training stopped.
  """

  def __init__(self, step: int, failures: int):
    self.step = step
    super().__init__(
        f"Aborting at update {step}: {failures} consecutive updates had"
        " non-finite training signals"
    )


@dataclasses.dataclass
class TrainResult:
  """What a finished run leaves behind."""

  paths: artifacts.RunPaths
  agent: rollout.Agent
  env: environments.Environment
  buffer: replay_buffer.ReplayBuffer
  metrics: list[dict[str, Any]]
  final_checkpoint: pathlib.Path


@dataclasses.dataclass
class _Streams:
  """Independent random streams of one run, all derived from the seed."""

  init: rng_lib.Rng
  seed_collect: rng_lib.Rng
  collect: rng_lib.Rng
  update: rng_lib.Rng
  evaluate: rng_lib.Rng

  @classmethod
  def from_seed(cls, seed: int) -> "_Streams":
    return cls(*rng_lib.Rng(seed).split(5))


def _add_episode(
    buffer: replay_buffer.ReplayBuffer,
    agent: rollout.Agent,
    episode,
) -> None:
  buffer.add(episode)
  agent.model.observe_data(episode.observations)


def _save(
    paths: artifacts.RunPaths,
    agent: rollout.Agent,
    config: config_lib.TrainConfig,
    step: int,
) -> pathlib.Path:
  return checkpoint.save_checkpoint(
      paths.checkpoint_path(step),
      agent.model,
      agent.actor,
      agent.critic,
      config.config_hash(),
      step,
  )


def train(
    config: config_lib.TrainConfig,
    env: Optional[environments.Environment] = None,
) -> TrainResult:
  """Runs the full training schedule described by `config`.

  Args:
    config: The resolved configuration.
    env: Optional prebuilt environment; built from the config otherwise.

  Returns:
    The run artifacts and the trained agent.

  Raises:
    TrainingAbortedError: After more than `max_consecutive_failures`
      skipped updates in a row.
    replay_buffer.InsufficientDataError: If no collected episode is as long
      as `sequence_length`.
  """
  paths = artifacts.RunPaths.for_config(config).create()
  paths.write_config(config)
  streams = _Streams.from_seed(config.seed)
  env = env or environments.make_env(config)
  agent = rollout.Agent.create(config, env, streams.init)
  optimizers = imagination.Optimizers.create(
      agent.model, agent.actor, agent.critic, config
  )
  buffer = replay_buffer.ReplayBuffer(config.buffer_capacity)
  writer = artifacts.MetricsWriter(paths.metrics_path, METRIC_COLUMNS)

  for _ in range(config.seed_episodes):
    _add_episode(
        buffer,
        agent,
        rollout.collect_episode(env, streams.seed_collect.child()),
    )
  logger.info(
      "Collected seed episodes :: count: %d | steps: %d",
      len(buffer),
      buffer.num_steps,
  )

  failures = 0
  for step in range(1, config.total_updates + 1):
    sample_rng, update_rng = streams.update.child().split(2)
    batch = buffer.sample(config.batch_size, config.sequence_length, sample_rng)
    metrics = imagination.joint_update(
        agent.model,
        agent.actor,
        agent.critic,
        batch,
        config,
        optimizers,
        update_rng,
    )
    failures = failures + 1 if metrics.skipped else 0
    if failures > config.max_consecutive_failures:
      logger.critical(
          "Training aborted :: step: %d | consecutive failures: %d",
          step,
          failures,
      )
      writer.flush()
      raise TrainingAbortedError(step, failures)

    row: dict[str, Any] = {"step": step, **metrics.as_dict()}
    if step % config.collect_interval == 0:
      episode = rollout.collect_episode(
          env,
          streams.collect.child(),
          agent if config.train_policy else None,
          exploration_noise=config.exploration_noise,
      )
      _add_episode(buffer, agent, episode)
      row["train_return"] = episode.total_reward
    row["env_steps"] = buffer.num_steps
    if step % config.eval_every == 0:
      report = evaluation.evaluate_policy(
          agent,
          env,
          config.eval_episodes,
          streams.evaluate.child(),
          config.eval_elbo_samples,
      )
      row["eval_return"] = report.mean_return
      row["eval_return_std"] = report.std_return
      row["eval_elbo"] = report.elbo.elbo
    logger.debug(
        "Update %d :: loss: %.4f", step, metrics.loss, extra=dict(row)
    )
    writer.append(row)
    if step % config.checkpoint_every == 0:
      _save(paths, agent, config, step)
      writer.flush()

  final = paths.checkpoint_path(config.total_updates)
  if not config.total_updates or config.total_updates % config.checkpoint_every:
    final = _save(paths, agent, config, config.total_updates)
  writer.flush()
  logger.info(
      "Training finished :: updates: %d | episodes: %d | run: %s",
      config.total_updates,
      len(buffer),
      paths.root,
  )
  return TrainResult(
      paths=paths,
      agent=agent,
      env=env,
      buffer=buffer,
      metrics=writer.rows,
      final_checkpoint=final,
  )
