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

"""Sequential variational objective for the belief model.

Per step the objective combines the observation and reward log-likelihoods
of the posterior sample with a KL term. With flows the KL is the one-sample
estimate log q(s) - log p(s) at the posterior sample; the analytic mode uses
the closed-form KL of the base Gaussians and is exact only for identity
flows. Training floors each step's KL at the free-nats value.
"""

import dataclasses
import logging
from typing import Literal, Sequence

import numpy as np

from flowbelief.core import autodiff
from flowbelief.core import rng as rng_lib
from flowbelief.models import belief_model as belief_model_lib
from flowbelief.models import distributions
from flowbelief.models import records

logger = logging.getLogger(__name__)

Tensor = autodiff.Tensor
KlMode = Literal["monte_carlo", "analytic"]
DEFAULT_FREE_NATS = 3.0


class Error(Exception):
  """Base error for the objective."""


class NonFiniteLossError(Error):
  """Raised when a loss term is NaN or Inf.

  Attributes:
    term: Name of the offending term.
  """

  def __init__(self, term: str, detail: str = ""):
    self.term = term
    super().__init__(f"Non-finite {term}{': ' + detail if detail else ''}")


@dataclasses.dataclass
class StepTerms:
  """Per-step, per-row objective components, each [B]."""

  recon: Tensor
  reward: Tensor
  kl: Tensor


@dataclasses.dataclass
class ModelLossMetrics:
  """Batch means of the objective components, in nats per step."""

  loss: float
  recon: float
  reward_ll: float
  kl_raw: float
  kl_clipped: float

  def as_dict(self) -> dict[str, float]:
    return dataclasses.asdict(self)


@dataclasses.dataclass
class ElboReport:
  """Evaluation ELBO.

  Attributes:
    elbo: Mean ELBO per timestep over every episode and sample.
    recon: Observation log-likelihood per timestep.
    reward_ll: Reward log-likelihood per timestep.
    kl: KL per timestep.
    standard_error: Standard error of `elbo` across samples.
    num_steps: Timesteps covered.
  """

  elbo: float
  recon: float
  reward_ll: float
  kl: float
  standard_error: float
  num_steps: int


def step_terms(
    model: belief_model_lib.BeliefModel,
    state: belief_model_lib.BeliefState,
    observation: np.ndarray,
    reward: np.ndarray,
    kl_mode: KlMode = "monte_carlo",
) -> StepTerms:
  """Objective components of one filtered step."""
  recon = model.decode(state).log_prob(observation)
  reward_ll = model.predict_reward(state).log_prob(
      np.asarray(reward).reshape(-1, 1)
  )
  if kl_mode == "analytic":
    kl = distributions.analytic_kl(state.posterior.base, state.prior.base)
  else:
    kl = state.logq - state.logp
  return StepTerms(recon=recon, reward=reward_ll, kl=kl)


def sequence_terms(
    model: belief_model_lib.BeliefModel,
    batch: records.SequenceBatch,
    rng: rng_lib.Rng,
    kl_mode: KlMode = "monte_carlo",
) -> list[StepTerms]:
  """Filters the batch and returns the components of every step."""
  observations = model.preprocess(batch.observations)
  states = model.observe_sequence(observations, batch.actions, rng)
  return [
      step_terms(
          model, state, observations[:, t], batch.rewards[:, t], kl_mode
      )
      for t, state in enumerate(states)
  ]


def compute_model_loss(
    batch: records.SequenceBatch,
    model: belief_model_lib.BeliefModel,
    rng: rng_lib.Rng,
    free_nats: float = DEFAULT_FREE_NATS,
    kl_mode: KlMode = "monte_carlo",
) -> tuple[Tensor, ModelLossMetrics]:
  """Negative free-nats ELBO averaged over batch rows and timesteps.

  Raises:
    NonFiniteLossError: If any term or the loss is not finite.
  """
  try:
    terms = sequence_terms(model, batch, rng, kl_mode)
    total = autodiff.as_tensor(0.0)
    kl_clipped_sum = 0.0
    for term in terms:
      clipped = autodiff.maximum(term.kl, free_nats)
      kl_clipped_sum += float(clipped.value.mean())
      total = total + autodiff.mean(term.recon + term.reward - clipped)
    loss = -total / float(len(terms))
  except autodiff.NumericError as e:
    raise NonFiniteLossError("model loss", str(e)) from e
  if not np.isfinite(loss.value):
    raise NonFiniteLossError("model loss")
  steps = float(len(terms))
  metrics = ModelLossMetrics(
      loss=loss.item(),
      recon=sum(float(t.recon.value.mean()) for t in terms) / steps,
      reward_ll=sum(float(t.reward.value.mean()) for t in terms) / steps,
      kl_raw=sum(float(t.kl.value.mean()) for t in terms) / steps,
      kl_clipped=kl_clipped_sum / steps,
  )
  return loss, metrics


def evaluate_elbo(
    episodes: Sequence[records.Episode],
    model: belief_model_lib.BeliefModel,
    n_samples: int,
    rng: rng_lib.Rng,
    kl_mode: KlMode = "monte_carlo",
) -> ElboReport:
  """Per-timestep ELBO without free nats, averaged over posterior draws.

  Each episode is filtered `n_samples` times in one batch.

  Raises:
    ValueError: If n_samples < 1 or there are no episodes.
  """
  if n_samples < 1:
    raise ValueError(f"n_samples must be >= 1, got {n_samples}")
  if not episodes:
    raise ValueError("evaluate_elbo needs at least one episode.")
  per_sample_totals = []
  sums = {"recon": 0.0, "reward": 0.0, "kl": 0.0}
  num_steps = 0
  for episode, episode_rng in zip(episodes, rng.split(len(episodes))):
    batch = records.SequenceBatch.from_episodes([episode]).repeat(n_samples)
    terms = sequence_terms(model, batch, episode_rng, kl_mode)
    totals = np.zeros(n_samples)
    for term in terms:
      totals += term.recon.value + term.reward.value - term.kl.value
      sums["recon"] += float(term.recon.value.mean())
      sums["reward"] += float(term.reward.value.mean())
      sums["kl"] += float(term.kl.value.mean())
    per_sample_totals.append(totals)
    num_steps += len(episode)
  # Per sample index: summed ELBO over episodes, divided by total steps.
  per_sample = np.sum(per_sample_totals, axis=0) / num_steps
  standard_error = (
      float(np.std(per_sample, ddof=1) / np.sqrt(n_samples))
      if n_samples > 1
      else float("nan")
  )
  return ElboReport(
      elbo=float(per_sample.mean()),
      recon=sums["recon"] / num_steps,
      reward_ll=sums["reward"] / num_steps,
      kl=sums["kl"] / num_steps,
      standard_error=standard_error,
      num_steps=num_steps,
  )
