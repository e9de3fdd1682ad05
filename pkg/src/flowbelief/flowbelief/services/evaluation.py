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

"""Evaluation of trained agents: returns, ELBO, predictions and modes."""

import dataclasses
import logging
import pathlib
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from flowbelief.core import config as config_lib
from flowbelief.core import rng as rng_lib
from flowbelief.models import belief_model as belief_model_lib
from flowbelief.models import records
from flowbelief.services import artifacts
from flowbelief.services import checkpoint
from flowbelief.services import elbo
from flowbelief.services import environments
from flowbelief.services import rollout

logger = logging.getLogger(__name__)


@dataclasses.dataclass
class EvalReport:
  """Returns of the mean-action policy, a random baseline and the ELBO.

  Attributes:
    mean_return: Mean episode return of the policy.
    std_return: Standard deviation of the policy returns.
    random_mean_return: Mean return of uniform random actions on the same
      episode seeds.
    random_std_return: Standard deviation of the random returns.
    elbo: Per-step ELBO on the policy episodes.
    num_episodes: Episodes per policy.
  """

  mean_return: float
  std_return: float
  random_mean_return: float
  random_std_return: float
  elbo: elbo.ElboReport
  num_episodes: int

  def as_dict(self) -> dict[str, float]:
    return {
        "mean_return": self.mean_return,
        "std_return": self.std_return,
        "random_mean_return": self.random_mean_return,
        "random_std_return": self.random_std_return,
        "elbo": self.elbo.elbo,
        "elbo_standard_error": self.elbo.standard_error,
        "recon": self.elbo.recon,
        "reward_ll": self.elbo.reward_ll,
        "kl": self.elbo.kl,
        "num_episodes": self.num_episodes,
    }


def evaluate_policy(
    agent: rollout.Agent,
    env: environments.Environment,
    episodes: int,
    rng: rng_lib.Rng,
    elbo_samples: int = 16,
) -> EvalReport:
  """Runs deterministic mean-action episodes and a random baseline.

  Both policies see the same per-episode random streams. Without an actor
  the policy episodes are random too.

  Raises:
    ValueError: If episodes < 1.
  """
  if episodes < 1:
    raise ValueError(f"episodes must be >= 1, got {episodes}")
  episode_rngs = rng.split(episodes)
  elbo_rng = rng.child()
  policy = [
      rollout.collect_episode(env, r.replica(), agent, deterministic=True)
      for r in episode_rngs
  ]
  baseline = [rollout.collect_episode(env, r.replica()) for r in episode_rngs]
  policy_returns = np.array([e.total_reward for e in policy])
  random_returns = np.array([e.total_reward for e in baseline])
  report = EvalReport(
      mean_return=float(policy_returns.mean()),
      std_return=float(policy_returns.std()),
      random_mean_return=float(random_returns.mean()),
      random_std_return=float(random_returns.std()),
      elbo=elbo.evaluate_elbo(policy, agent.model, elbo_samples, elbo_rng),
      num_episodes=episodes,
  )
  logger.info(
      "Evaluation :: return: %.3f +/- %.3f | random: %.3f | elbo/step: %.4f",
      report.mean_return,
      report.std_return,
      report.random_mean_return,
      report.elbo.elbo,
  )
  return report


@dataclasses.dataclass
class LoadedRun:
  config: config_lib.TrainConfig
  env: environments.Environment
  agent: rollout.Agent
  step: int


def load_run(
    run_dir: str | pathlib.Path,
    checkpoint_path: Optional[str | pathlib.Path] = None,
) -> LoadedRun:
  """Rebuilds config, environment and agent from a run directory.

  Raises:
    checkpoint.CheckpointError: If no checkpoint exists or it is unreadable.
    checkpoint.CheckpointMismatchError: If the checkpoint does not belong to
      the run's config.
  """
  paths = artifacts.RunPaths(root=pathlib.Path(run_dir))
  config = config_lib.resolve_config(paths.config_path)
  checkpoint_path = checkpoint_path or paths.latest_checkpoint()
  if checkpoint_path is None:
    raise checkpoint.CheckpointError(f"No checkpoint found under {run_dir}")
  saved = checkpoint.read_checkpoint(checkpoint_path)
  env = environments.make_env(config)
  agent = rollout.Agent.create(config, env, rng_lib.Rng(config.seed))
  checkpoint.restore_state(
      saved,
      agent.model,
      agent.actor,
      agent.critic,
      expected_hash=config.config_hash(),
  )
  logger.info(
      "Loaded run :: dir: %s | step: %d", paths.root, saved.header.step
  )
  return LoadedRun(config=config, env=env, agent=agent, step=saved.step)


def evaluate(
    run_dir: str | pathlib.Path,
    episodes: Optional[int] = None,
    checkpoint_path: Optional[str | pathlib.Path] = None,
    seed: Optional[int] = None,
) -> EvalReport:
  """Evaluates a saved checkpoint of a run."""
  run = load_run(run_dir, checkpoint_path)
  rng = rng_lib.Rng(run.config.seed if seed is None else seed)
  return evaluate_policy(
      run.agent,
      run.env,
      episodes or run.config.eval_episodes,
      rng,
      run.config.eval_elbo_samples,
  )


@dataclasses.dataclass
class Prediction:
  """Decoded open-loop predictions.

  Attributes:
    values: [n_samples, h, obs_dim] decoded observation means.
    truth: [h, obs_dim] observed values at the same steps.
    t_context: Steps used to condition the posterior.
  """

  values: np.ndarray
  truth: np.ndarray
  t_context: int


def _imagine_from_posterior(
    model: belief_model_lib.BeliefModel,
    state: belief_model_lib.BeliefState,
    actions: np.ndarray,
    n_samples: int,
    rng: rng_lib.Rng,
) -> list[belief_model_lib.BeliefState]:
  """Redraws the last filtered s from its posterior, then follows `actions`."""
  init_rng, *step_rngs = rng.split(len(actions) + 1)
  posterior = state.posterior.tile(n_samples)
  s, _ = posterior.sample(init_rng)
  current = belief_model_lib.BeliefState(z=posterior.context, s=s)
  states = []
  for action, step_rng in zip(actions, step_rngs):
    current = model.imagine_step(
        current, np.tile(action.reshape(1, -1), (n_samples, 1)), step_rng
    )
    states.append(current)
  return states


def predict(
    model: belief_model_lib.BeliefModel,
    episode: records.Episode,
    t_context: int,
    h: int,
    n_samples: int,
    rng: rng_lib.Rng,
) -> Prediction:
  """Conditions on `t_context` steps and imagines `h` more, per sample.

  Raises:
    ValueError: If t_context < 1, h < 1, n_samples < 1 or the episode is
      shorter than t_context + h.
  """
  if t_context < 1 or h < 1 or n_samples < 1:
    raise ValueError(
        f"Need t_context, h, n_samples >= 1; got {t_context}, {h}, {n_samples}"
    )
  if t_context + h > len(episode):
    raise ValueError(
        f"t_context + h = {t_context + h} exceeds episode length"
        f" {len(episode)}"
    )
  filter_rng, imagine_rng = rng.split(2)
  context = records.SequenceBatch.from_episodes(
      [episode.window(0, t_context)]
  )
  states = model.observe_sequence(
      model.preprocess(context.observations), context.actions, filter_rng
  )
  imagined = _imagine_from_posterior(
      model,
      states[-1],
      episode.actions[t_context : t_context + h],
      n_samples,
      imagine_rng,
  )
  values = np.stack([model.decode(s).mean.numpy() for s in imagined], axis=1)
  truth = model.preprocess(episode.observations[t_context : t_context + h])
  return Prediction(values=values, truth=truth, t_context=t_context)


def predict_render(
    model: belief_model_lib.BeliefModel,
    episode: records.Episode,
    t_context: int,
    h: int,
    n_samples: int,
    rng: rng_lib.Rng,
    out_dir: str | pathlib.Path,
    name: str = "prediction",
) -> Prediction:
  """Predicts and writes `<name>.csv` and, for images, `<name>.pgm`.

  The grid has one row per sample and one column per imagined step; a
  `<name>_truth.pgm` strip shows the observed frames.
  """
  prediction = predict(model, episode, t_context, h, n_samples, rng)
  out_dir = pathlib.Path(out_dir)
  artifacts.write_grid_csv(out_dir / f"{name}.csv", prediction.values)
  spec = model.obs_spec
  if spec.kind == "image":
    height, width = spec.shape[0], spec.shape[1]
    frames = prediction.values.reshape(n_samples, h, height, width)
    artifacts.write_pgm(
        out_dir / f"{name}.pgm",
        artifacts.image_grid(artifacts.to_gray(frames)),
    )
    truth = prediction.truth.reshape(1, h, height, width)
    artifacts.write_pgm(
        out_dir / f"{name}_truth.pgm",
        artifacts.image_grid(artifacts.to_gray(truth)),
    )
  logger.info(
      "Rendered prediction :: samples: %d | context: %d | horizon: %d | %s",
      n_samples,
      t_context,
      h,
      out_dir / name,
  )
  return prediction


def row_diversity(values: np.ndarray, threshold: float = 0.1) -> float:
  """Smallest pairwise share of entries differing by more than `threshold`.

  Rows are the samples of [n, h, D] predictions; a single row scores 0.
  """
  n = values.shape[0]
  if n < 2:
    return 0.0
  fractions = [
      float(np.mean(np.abs(values[i] - values[j]) > threshold))
      for i in range(n)
      for j in range(i + 1, n)
  ]
  return min(fractions)


@dataclasses.dataclass
class ModeCoverage:
  """Share of imagined bimodal trajectories per lateral direction."""

  positive: float
  negative: float
  num_trajectories: int

  def covers_both(self, minimum: float = 0.1) -> bool:
    return self.positive >= minimum and self.negative >= minimum


def mode_coverage(
    model: belief_model_lib.BeliefModel,
    env: environments.BimodalEnv,
    rng: rng_lib.Rng,
    n_trajectories: int = 20,
) -> ModeCoverage:
  """Imagines past the shared prefix and classifies the final lateral sign.

  Conditions on the prefix of one fresh episode, where both modes still
  look alike, then decodes the last imagined observation of each sample.
  """
  episode_rng, predict_rng = rng.split(2)
  episode = rollout.collect_episode(env, episode_rng)
  h = len(episode) - env.prefix_steps
  prediction = predict(
      model, episode, env.prefix_steps, h, n_trajectories, predict_rng
  )
  lateral = env.lateral_offset(prediction.values[:, -1])
  coverage = ModeCoverage(
      positive=float(np.mean(lateral > 0)),
      negative=float(np.mean(lateral < 0)),
      num_trajectories=n_trajectories,
  )
  logger.info(
      "Mode coverage :: positive: %.2f | negative: %.2f",
      coverage.positive,
      coverage.negative,
  )
  return coverage


@dataclasses.dataclass
class ElboComparison:
  mean_difference: float
  statistic: float
  p_value: float

  def significant(self, alpha: float = 0.05) -> bool:
    return self.p_value < alpha


def compare_elbos(
    candidate: Sequence[float], baseline: Sequence[float]
) -> ElboComparison:
  """One-sided paired t-test that `candidate` ELBOs exceed `baseline` ones.

  Raises:
    ValueError: If the sequences differ in length or have fewer than two
      pairs.
  """
  candidate = np.asarray(candidate, dtype=np.float64)
  baseline = np.asarray(baseline, dtype=np.float64)
  if candidate.shape != baseline.shape or candidate.size < 2:
    raise ValueError(
        "compare_elbos needs two equal-length sequences of at least two"
        f" values, got {candidate.shape} and {baseline.shape}"
    )
  with np.errstate(divide="ignore", invalid="ignore"):
    result = stats.ttest_rel(candidate, baseline, alternative="greater")
  return ElboComparison(
      mean_difference=float(np.mean(candidate - baseline)),
      statistic=float(result.statistic),
      p_value=float(result.pvalue),
  )

