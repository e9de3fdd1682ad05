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

"""Command-line entry point for training, evaluation and analysis."""

import argparse
import dataclasses
import logging
import pathlib
import sys
from typing import Optional, Sequence

from flowbelief.core import config as config_lib
from flowbelief.core import log_setup
from flowbelief.core import rng as rng_lib
from flowbelief.services import ablation
from flowbelief.services import artifacts
from flowbelief.services import evaluation
from flowbelief.services import likelihood_gap
from flowbelief.services import rollout
from flowbelief.services import strokes
from flowbelief.services import trainer

logger = logging.getLogger(__name__)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
  parser.add_argument("--config", help="Flat key=value config file.")
  parser.add_argument(
      "--preset",
      choices=sorted(config_lib.PRESETS),
      help="Preset applied before the file; defaults to the env_id preset.",
  )
  parser.add_argument(
      "--set",
      dest="overrides",
      action="append",
      default=[],
      metavar="KEY=VALUE",
      help="Config override; repeatable, wins over the file.",
  )


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
  parser.add_argument("--run-dir", required=True, help="Run directory.")
  parser.add_argument(
      "--checkpoint", help="Checkpoint file; the latest in the run if unset."
  )
  parser.add_argument("--seed", type=int, help="Evaluation seed override.")


def _int_list(text: str) -> list[int]:
  return [int(part) for part in text.split(",") if part.strip()]


def _resolve(args: argparse.Namespace) -> config_lib.TrainConfig:
  return config_lib.resolve_config(args.config, args.overrides, args.preset)


def build_parser() -> argparse.ArgumentParser:
  parser = argparse.ArgumentParser(
      prog="flowbelief",
      description="Belief-state learning and control with normalizing flows.",
  )
  commands = parser.add_subparsers(dest="command", required=True)

  train = commands.add_parser("train", help="Run the training loop.")
  _add_config_flags(train)

  evaluate = commands.add_parser(
      "evaluate", help="Mean-action returns, random baseline and ELBO."
  )
  _add_run_flags(evaluate)
  evaluate.add_argument("--episodes", type=int, help="Evaluation episodes.")

  render = commands.add_parser(
      "predict-render", help="Sampled open-loop predictions as PGM and CSV."
  )
  _add_run_flags(render)
  render.add_argument("--t-context", type=int, default=15)
  render.add_argument("--horizon", type=int, default=15)
  render.add_argument("--samples", type=int, default=5)
  render.add_argument(
      "--episode-index",
      type=int,
      default=0,
      help="Held-out episode for the digit task; collection index otherwise.",
  )

  ablate = commands.add_parser(
      "ablate", help="Train ablation modes or sweep the trajectory count."
  )
  _add_config_flags(ablate)
  ablate.add_argument(
      "--modes",
      default="flow,gaussian",
      help=(
          f"Comma-separated modes out of {', '.join(ablation.MODES)};"
          f" aliases {', '.join(ablation.MODE_ALIASES)}, dreamer_n<k>."
      ),
  )
  ablate.add_argument("--seeds", type=_int_list, default=[0, 1, 2])
  ablate.add_argument(
      "--sweep",
      type=_int_list,
      help="Trajectory counts to sweep with the full method, e.g. 1,2,4.",
  )
  ablate.add_argument("--held-out", type=int, default=10)

  gap = commands.add_parser(
      "check-gap",
      aliases=["check-theorem1"],
      help="Likelihood gap versus KL to the exact posterior, linear-Gaussian.",
  )
  _add_config_flags(gap)
  gap.add_argument("--run-dir", help="Use the model of a trained run.")
  gap.add_argument("--steps", type=int, default=10)
  gap.add_argument("--samples", type=int, default=10000)
  gap.add_argument(
      "--fit-steps",
      type=int,
      default=0,
      help="Posterior-only fitting updates for a fresh model.",
  )
  gap.add_argument(
      "--exact",
      action="store_true",
      help="Filter with the exact one-step posterior instead of a model.",
  )

  convert = commands.add_parser(
      "convert-strokes", help="Write a strokes v1 file."
  )
  convert.add_argument("inputs", nargs="*", help="Pen-offset files.")
  convert.add_argument("--output", required=True)
  convert.add_argument(
      "--synthetic", type=int, help="Generate this many synthetic digits."
  )
  convert.add_argument("--seed", type=int, default=0)
  return parser


def run_train(args: argparse.Namespace) -> None:
  result = trainer.train(_resolve(args))
  logger.info("Final checkpoint: %s", result.final_checkpoint)


def run_evaluate(args: argparse.Namespace) -> None:
  report = evaluation.evaluate(
      args.run_dir, args.episodes, args.checkpoint, args.seed
  )
  path = artifacts.write_table(
      pathlib.Path(args.run_dir) / "evaluation.csv", [report.as_dict()]
  )
  logger.info("Evaluation written to %s", path)


def run_predict_render(args: argparse.Namespace) -> None:
  run = evaluation.load_run(args.run_dir, args.checkpoint)
  rng = rng_lib.Rng(run.config.seed if args.seed is None else args.seed)
  episode_rng, predict_rng = rng.split(2)
  if run.config.env_id == "digit":
    dataset = run.env.held_out or run.env.dataset
    frames = dataset.episodes[args.episode_index % len(dataset)]
    episode = rollout.episode_from_frames(frames)
  else:
    episode = rollout.collect_episode(
        run.env, episode_rng.split(args.episode_index + 1)[-1]
    )
  evaluation.predict_render(
      run.agent.model,
      episode,
      args.t_context,
      args.horizon,
      args.samples,
      predict_rng,
      artifacts.RunPaths(pathlib.Path(args.run_dir)).renders_dir,
      name=f"prediction_step{run.step}_ep{args.episode_index}",
  )


def run_ablate(args: argparse.Namespace) -> None:
  config = _resolve(args)
  out_dir = pathlib.Path(config.run_root) / config.run_name
  if args.sweep:
    ablation.trajectory_sweep(
        config, out_dir / "trajectory_sweep.csv", args.sweep, args.held_out
    )
    return
  modes = [
      ablation.canonical_mode(mode.strip())
      for mode in args.modes.split(",")
      if mode.strip()
  ]
  results = ablation.run_modes(
      config, modes, args.seeds, out_dir / "ablation.csv", args.held_out
  )
  if "flow" in modes and "gaussian" in modes and len(args.seeds) > 1:
    comparison = ablation.compare_modes(results)
    logger.info(
        "Flow vs gaussian held-out ELBO :: diff: %.4f | t: %.3f | p: %.4f",
        comparison.mean_difference,
        comparison.statistic,
        comparison.p_value,
    )


def run_check_gap(args: argparse.Namespace) -> None:
  model = None
  if args.run_dir:
    run = evaluation.load_run(args.run_dir)
    config, model = run.config, run.agent.model
  else:
    config = _resolve(args)
  report = likelihood_gap.gap_check_from_config(
      config,
      steps=args.steps,
      n_mc=args.samples,
      fit_steps=args.fit_steps,
      exact=args.exact,
      model=model,
  )
  row = dataclasses.asdict(report)
  row["identity_holds"] = report.identity_holds
  row["bound_holds"] = report.bound_holds
  path = artifacts.write_table(
      pathlib.Path(config.run_root) / config.run_name / "likelihood_gap.csv",
      [row],
  )
  logger.info("Gap report written to %s", path)


def run_convert_strokes(args: argparse.Namespace) -> None:
  if args.synthetic:
    episodes = strokes.generate_synthetic_strokes(
        args.synthetic, rng_lib.Rng(args.seed)
    )
  elif args.inputs:
    episodes = strokes.convert_pen_offset_files(args.inputs)
  else:
    raise ValueError("convert-strokes needs input files or --synthetic N")
  strokes.save_stroke_file(args.output, episodes)
  logger.info("Wrote %d episodes to %s", len(episodes), args.output)


COMMANDS = {
    "train": run_train,
    "evaluate": run_evaluate,
    "predict-render": run_predict_render,
    "ablate": run_ablate,
    "check-gap": run_check_gap,
    "check-theorem1": run_check_gap,
    "convert-strokes": run_convert_strokes,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
  """Parses arguments, configures logging and runs one subcommand."""
  args = build_parser().parse_args(argv)
  log_setup.configure_logging()
  try:
    COMMANDS[args.command](args)
  except Exception as e:  # pylint: disable=broad-exception-caught
    logger.exception("Command %r failed: %s", args.command, str(e))
    return 1
  return 0


if __name__ == "__main__":
  sys.exit(main())
