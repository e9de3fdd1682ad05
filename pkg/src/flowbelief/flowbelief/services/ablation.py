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

"""Ablations: flows versus Gaussian beliefs and the trajectory count N.

Every mode trains from the same seed and scores the same held-out episodes,
so per-seed ELBOs can be compared pairwise.
"""

import dataclasses
import logging
import pathlib
import re
from typing import Any, Iterable, Optional

import numpy as np

from flowbelief.core import config as config_lib
from flowbelief.core import rng as rng_lib
from flowbelief.models import records
from flowbelief.services import artifacts
from flowbelief.services import elbo
from flowbelief.services import environments
from flowbelief.services import evaluation
from flowbelief.services import rollout
from flowbelief.services import trainer

logger = logging.getLogger(__name__)

MODES = ("flow", "gaussian", "flow_n1", "gaussian_nN")
# Published names of the same modes.
MODE_ALIASES = {"forbes": "flow", "forbes_n1": "flow_n1"}
_GAUSSIAN_COUNT_PATTERN = re.compile(r"^(?:gaussian|dreamer)_n(\d+|N)$")
DEFAULT_SWEEP = (1, 2, 4)
_HELD_OUT_STREAM = 7919
# Held-out digits are scored on 15 conditioning plus 15 predicted frames.
DIGIT_SCORED_FRAMES = 15 + 15


def canonical_mode(mode: str) -> str:
  """Maps a published mode name onto its name in `MODES`.

  `dreamer_n<k>` becomes `gaussian_n<k>`.

  Raises:
    ValueError: For an unknown mode.
  """
  mode = MODE_ALIASES.get(mode, mode)
  if mode.startswith("dreamer_n"):
    mode = "gaussian_n" + mode[len("dreamer_n") :]
  mode_overrides(mode)
  return mode


def mode_overrides(mode: str) -> dict[str, Any]:
  """Config changes for an ablation mode.

  `flow` is the full method, `gaussian` freezes identity flows and uses
  the analytic KL, `flow_n1` imagines a single trajectory and
  `gaussian_n<k>` (or `gaussian_nN` for N=4) combines Gaussian beliefs with
  k trajectories. Names in `MODE_ALIASES` and `dreamer_n<k>` are accepted.

  Raises:
    ValueError: For an unknown mode.
  """
  gaussian = {
      "use_flows": True,
      "freeze_flows": True,
      "lu_permutation": "identity",
      "kl_mode": "analytic",
  }
  mode = MODE_ALIASES.get(mode, mode)
  if mode == "flow":
    return {}
  if mode == "gaussian":
    return gaussian
  if mode == "flow_n1":
    return {"num_trajectories": 1}
  match = _GAUSSIAN_COUNT_PATTERN.match(mode)
  if match:
    count = 4 if match.group(1) == "N" else int(match.group(1))
    if count < 1:
      raise ValueError(f"Trajectory count must be >= 1 in {mode!r}")
    return {**gaussian, "num_trajectories": count}
  raise ValueError(f"Unknown ablation mode {mode!r}; choose from {MODES}")


def ablation_config(
    config: config_lib.TrainConfig, mode: str, **extra: Any
) -> config_lib.TrainConfig:
  """The config for one mode, in its own run directory."""
  updates = {
      **mode_overrides(mode),
      "run_name": f"{config.run_name}-{mode}",
      **extra,
  }
  return config_lib.TrainConfig.model_validate(
      {**config.model_dump(), **updates}
  )


def _stream(seed: int, *key: int) -> rng_lib.Rng:
  return rng_lib.Rng(np.random.SeedSequence([seed, _HELD_OUT_STREAM, *key]))


def held_out_episodes(
    env: environments.Environment, count: int, seed: int
) -> list[records.Episode]:
  """Episodes to score every mode on, identical across modes for a seed.

  The digit task replays its held-out split, which training never samples,
  cut to the first `DIGIT_SCORED_FRAMES` frames. Other tasks collect
  random-policy episodes from a stream no training run draws from.
  """
  if isinstance(env, environments.DigitEnv):
    if env.held_out is not None and len(env.held_out):
      frames = env.held_out.episodes[:count]
      return [
          rollout.episode_from_frames(f[:DIGIT_SCORED_FRAMES]) for f in frames
      ]
    logger.warning("Digit task has no held-out split; scoring collected data.")
  streams = _stream(seed).split(count)
  return [rollout.collect_episode(env, r) for r in streams]


@dataclasses.dataclass
class AblationResult:
  mode: str
  config: config_lib.TrainConfig
  held_out: elbo.ElboReport
  policy: Optional[evaluation.EvalReport]
  run_dir: pathlib.Path

  def as_row(self) -> dict[str, Any]:
    row: dict[str, Any] = {
        "mode": self.mode,
        "seed": self.config.seed,
        "num_trajectories": self.config.num_trajectories,
        "held_out_elbo": self.held_out.elbo,
        "held_out_elbo_se": self.held_out.standard_error,
        "held_out_kl": self.held_out.kl,
    }
    if self.policy is not None:
      row["eval_return"] = self.policy.mean_return
      row["random_return"] = self.policy.random_mean_return
    return row


def ablation_run(
    config: config_lib.TrainConfig,
    mode: str,
    held_out: int = 10,
    **extra: Any,
) -> AblationResult:
  """Trains one mode and scores it on shared held-out episodes."""
  mode_config = ablation_config(config, mode, **extra)
  env = environments.make_env(mode_config)
  result = trainer.train(mode_config, env)
  episodes = held_out_episodes(env, held_out, config.seed)
  report = elbo.evaluate_elbo(
      episodes,
      result.agent.model,
      mode_config.eval_elbo_samples,
      _stream(config.seed, 1),
  )
  policy = None
  if result.agent.actor is not None and mode_config.train_policy:
    policy = evaluation.evaluate_policy(
        result.agent,
        env,
        mode_config.eval_episodes,
        _stream(config.seed, 2),
        mode_config.eval_elbo_samples,
    )
  logger.info(
      "Ablation :: mode: %s | seed: %d | held-out elbo/step: %.4f",
      mode,
      config.seed,
      report.elbo,
  )
  return AblationResult(
      mode=mode,
      config=mode_config,
      held_out=report,
      policy=policy,
      run_dir=result.paths.root,
  )


def run_modes(
    config: config_lib.TrainConfig,
    modes: Iterable[str],
    seeds: Iterable[int],
    out_path: str | pathlib.Path,
    held_out: int = 10,
) -> list[AblationResult]:
  """Runs every (mode, seed) pair and writes one CSV row per run."""
  results = []
  modes = [canonical_mode(mode) for mode in modes]
  for seed in seeds:
    for mode in modes:
      seeded = config.model_copy(
          update={"seed": seed, "run_name": f"{config.run_name}-s{seed}"}
      )
      results.append(ablation_run(seeded, mode, held_out))
  artifacts.write_table(out_path, [r.as_row() for r in results])
  return results


def trajectory_sweep(
    config: config_lib.TrainConfig,
    out_path: str | pathlib.Path,
    counts: Iterable[int] = DEFAULT_SWEEP,
    held_out: int = 10,
) -> list[AblationResult]:
  """The full method at several trajectory counts, one CSV row each."""
  results = [
      ablation_run(
          config,
          "flow",
          held_out,
          num_trajectories=count,
          run_name=f"{config.run_name}-n{count}",
      )
      for count in counts
  ]
  artifacts.write_table(out_path, [r.as_row() for r in results])
  return results


def compare_modes(
    results: Iterable[AblationResult],
    candidate: str = "flow",
    baseline: str = "gaussian",
) -> evaluation.ElboComparison:
  """Paired test over seeds of held-out ELBO, candidate above baseline."""
  by_seed: dict[int, dict[str, float]] = {}
  for result in results:
    by_seed.setdefault(result.config.seed, {})[result.mode] = (
        result.held_out.elbo
    )
  seeds = sorted(
      seed
      for seed, modes in by_seed.items()
      if candidate in modes and baseline in modes
  )
  return evaluation.compare_elbos(
      [by_seed[s][candidate] for s in seeds],
      [by_seed[s][baseline] for s in seeds],
  )
