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

"""Likelihood-gap analysis on the linear-Gaussian environment.

The environment's own transition and emission densities serve as the
generative model and a filtering distribution q supplies s_t given the
sampled past. For every sample path and step, Bayes' rule gives

  log p(o_t|s_t) + log p(s_t|s_{t-1}) - log q(s_t)
      = log p(o_t|s_{t-1}) - [log q(s_t) - log p(s_t|s_{t-1}, o_t)],

so the ELBO plus the summed KL to the exact one-step posterior equals the
summed one-step predictive log-likelihood. The report checks that identity
within three combined standard errors and compares the ELBO with the exact
Kalman log-likelihood, which bounds it from above.
"""

import abc
import dataclasses
import logging
from typing import Optional

import numpy as np
from scipy import linalg
from scipy import stats

from flowbelief.core import autodiff
from flowbelief.core import config as config_lib
from flowbelief.core import optim
from flowbelief.core import rng as rng_lib
from flowbelief.models import belief_model as belief_model_lib
from flowbelief.models import records
from flowbelief.services import environments
from flowbelief.services import rollout

logger = logging.getLogger(__name__)

Tensor = autodiff.Tensor
_LOG_2PI = float(np.log(2.0 * np.pi))


class FilteringPosterior(abc.ABC):
  """Draws s_t for a batch of sample paths, one step at a time."""

  @abc.abstractmethod
  def reset(self, num_samples: int) -> None:
    """Starts fresh sample paths."""

  @abc.abstractmethod
  def step(
      self,
      action: np.ndarray,
      observation: np.ndarray,
      rng: rng_lib.Rng,
  ) -> tuple[np.ndarray, np.ndarray]:
    """Returns samples [N, S] and their log-densities [N]."""


class ModelPosterior(FilteringPosterior):
  """The belief model's posterior flow distribution."""

  def __init__(self, model: belief_model_lib.BeliefModel):
    self.model = model
    self._state: Optional[belief_model_lib.BeliefState] = None

  def reset(self, num_samples: int) -> None:
    self._state = self.model.initial_belief(num_samples)

  def step(self, action, observation, rng):
    n = self._state.batch_size
    obs = self.model.preprocess(np.tile(observation, (n, 1)))
    act = np.tile(np.asarray(action).reshape(1, -1), (n, 1))
    self._state = self.model.observe_step(self._state, act, obs, rng)
    return self._state.s.numpy(), self._state.logq.numpy()


class ExactConditionalPosterior(FilteringPosterior):
  """Samples the environment's exact p(s_t | s_{t-1}, a_t, o_t)."""

  def __init__(self, env: environments.LinearGaussianPOMDP):
    self.env = env
    self._previous: Optional[np.ndarray] = None
    self._count = 0

  def reset(self, num_samples: int) -> None:
    self._previous = None
    self._count = num_samples

  def step(self, action, observation, rng):
    means, cov, _ = self.env.conditional_posterior(
        self._previous, action, observation
    )
    means = np.broadcast_to(means, (self._count, self.env.state_dim))
    chol = np.linalg.cholesky(cov)
    samples = means + rng.normal(means.shape) @ chol.T
    logq = _gaussian_log_prob(samples, means, cov)
    self._previous = samples
    return samples, logq


def _gaussian_log_prob(
    x: np.ndarray, means: np.ndarray, cov: np.ndarray
) -> np.ndarray:
  return np.atleast_1d(stats.multivariate_normal.logpdf(x - means, cov=cov))


@dataclasses.dataclass
class GapReport:
  """Outcome of the likelihood-gap analysis.

  Attributes:
    exact_log_likelihood: Kalman log p(o_{0:T-1} | a).
    elbo: Mean over sample paths of the summed ELBO terms.
    kl_sum: Mean summed KL(q_t || p(s_t | s_{t-1}, a_t, o_t)).
    predictive_log_likelihood: Mean summed log p(o_t | s_{t-1}, a_t).
    identity_error: |predictive - elbo - kl_sum|.
    combined_standard_error: Root sum of squares of the three standard
      errors.
    gap: exact_log_likelihood - elbo.
    elbo_standard_error: Standard error of `elbo`.
    kalman_kl_per_step: Mean per-step log q(s_t) - log N(s_t; Kalman).
    num_samples: Sample paths used.
  """

  exact_log_likelihood: float
  elbo: float
  kl_sum: float
  predictive_log_likelihood: float
  identity_error: float
  combined_standard_error: float
  gap: float
  elbo_standard_error: float
  kalman_kl_per_step: float
  num_samples: int

  @property
  def identity_holds(self) -> bool:
    return self.identity_error <= 3.0 * self.combined_standard_error + 1e-9

  @property
  def bound_holds(self) -> bool:
    return self.elbo <= self.exact_log_likelihood + 3.0 * max(
        self.elbo_standard_error, 1e-12
    )


def _standard_error(values: np.ndarray) -> float:
  if len(values) < 2:
    return 0.0
  return float(np.std(values, ddof=1) / np.sqrt(len(values)))


def gap_check(
    posterior: FilteringPosterior,
    env: environments.LinearGaussianPOMDP,
    episode: records.Episode,
    n_mc: int,
    rng: rng_lib.Rng,
) -> GapReport:
  """Evaluates the stepwise likelihood identity for one episode.

  Raises:
    environments.SingularInnovationError: If the exact filter fails.
  """
  kalman = environments.kalman_exact(env, episode.observations, episode.actions)
  posterior.reset(n_mc)
  elbo = np.zeros(n_mc)
  kl = np.zeros(n_mc)
  predictive = np.zeros(n_mc)
  kalman_kl = np.zeros(n_mc)
  previous = None
  for t, step_rng in enumerate(rng.split(len(episode))):
    action = episode.actions[t]
    observation = episode.observations[t]
    samples, logq = posterior.step(action, observation, step_rng)
    post_means, post_cov, log_marginal = env.conditional_posterior(
        previous, action, observation
    )
    elbo += (
        env.observation_log_prob(observation, samples)
        + env.transition_log_prob(samples, previous, action)
        - logq
    )
    kl += logq - _gaussian_log_prob(samples, post_means, post_cov)
    predictive += log_marginal
    kalman_kl += logq - _gaussian_log_prob(
        samples, kalman.means[t], kalman.covariances[t]
    )
    previous = samples
  errors = [_standard_error(v) for v in (elbo, kl, predictive)]
  report = GapReport(
      exact_log_likelihood=kalman.log_likelihood,
      elbo=float(elbo.mean()),
      kl_sum=float(kl.mean()),
      predictive_log_likelihood=float(predictive.mean()),
      identity_error=float(abs(predictive.mean() - elbo.mean() - kl.mean())),
      combined_standard_error=float(np.sqrt(np.sum(np.square(errors)))),
      gap=float(kalman.log_likelihood - elbo.mean()),
      elbo_standard_error=errors[0],
      kalman_kl_per_step=float(kalman_kl.mean() / len(episode)),
      num_samples=n_mc,
  )
  logger.info(
      "Gap check :: log-lik: %.4f | elbo: %.4f | kl: %.4f | identity err:"
      " %.2e (3se %.2e)",
      report.exact_log_likelihood,
      report.elbo,
      report.kl_sum,
      report.identity_error,
      3.0 * report.combined_standard_error,
  )
  return report


def model_gap_check(
    model: belief_model_lib.BeliefModel,
    env: environments.LinearGaussianPOMDP,
    episode: records.Episode,
    n_mc: int,
    rng: rng_lib.Rng,
) -> GapReport:
  """Gap check with the belief model's posterior as q.

  Raises:
    ValueError: If the model's state size differs from the environment's.
  """
  if model.state_dim != env.state_dim:
    raise ValueError(
        f"Model state_dim {model.state_dim} must equal the environment's"
        f" {env.state_dim}"
    )
  return gap_check(ModelPosterior(model), env, episode, n_mc, rng)


def _gaussian_log_prob_tensor(
    x: Tensor, mean: Tensor, cov: np.ndarray
) -> Tensor:
  """Differentiable log N(x; mean, cov) over rows, with a constant cov."""
  chol = np.linalg.cholesky(cov)
  whitening = linalg.solve_triangular(chol, np.eye(len(cov)), lower=True)
  white = autodiff.matmul(x - mean, whitening.T)
  log_det = float(np.sum(np.log(np.diag(chol))))
  return (
      -0.5 * autodiff.sum(autodiff.square(white), axis=-1)
      - log_det
      - 0.5 * len(cov) * _LOG_2PI
  )


def generative_elbo(
    model: belief_model_lib.BeliefModel,
    env: environments.LinearGaussianPOMDP,
    batch: records.SequenceBatch,
    rng: rng_lib.Rng,
) -> Tensor:
  """Differentiable summed ELBO under the environment's own densities."""
  observations = model.preprocess(batch.observations)
  state = model.initial_belief(batch.batch_size)
  previous: Optional[Tensor] = None
  total = autodiff.as_tensor(0.0)
  for t, step_rng in enumerate(rng.split(batch.length)):
    state = model.observe_step(
        state, batch.actions[:, t], observations[:, t], step_rng
    )
    if previous is None:
      prior_mean = autodiff.as_tensor(
          np.broadcast_to(env.initial_mean, state.s.shape)
      )
      prior_cov = env.initial_cov
    else:
      prior_mean = autodiff.matmul(previous, env.transition.T) + (
          batch.actions[:, t] @ env.control.T
      )
      prior_cov = env.process_cov
    predicted = autodiff.matmul(state.s, env.emission.T)
    obs_ll = _gaussian_log_prob_tensor(
        batch.observations[:, t], predicted, env.obs_cov
    )
    trans_ll = _gaussian_log_prob_tensor(state.s, prior_mean, prior_cov)
    total = total + autodiff.mean(obs_ll + trans_ll - state.logq)
    previous = state.s
  return total


def fit_posterior(
    model: belief_model_lib.BeliefModel,
    env: environments.LinearGaussianPOMDP,
    episodes: list[records.Episode],
    steps: int,
    rng: rng_lib.Rng,
    batch_size: int = 16,
    learning_rate: float = 1e-3,
) -> list[float]:
  """Trains only the filtering path of the model against the exact densities.

  Returns:
    The ELBO (summed over time, mean over rows) after every step.
  """
  params = [
      p
      for module in (
          model.encoder,
          model.pre_net,
          model.gru,
          model.posterior_head,
          model.posterior_flow,
      )
      if module is not None
      for p in module.parameters()
  ]
  optimizer = optim.Adam(params, learning_rate, name="posterior")
  history = []
  for step_rng in rng.split(steps):
    sample_rng, loss_rng = step_rng.split(2)
    picks = sample_rng.integers(0, len(episodes), batch_size)
    batch = records.SequenceBatch.from_episodes([episodes[i] for i in picks])
    with autodiff.Tape():
      elbo = generative_elbo(model, env, batch, loss_rng)
      loss = -elbo
    grads = autodiff.backward(loss, wrt=params)
    optimizer.step(grads)
    history.append(elbo.item())
  logger.info(
      "Posterior fit :: steps: %d | final elbo: %.4f",
      steps,
      history[-1] if history else float("nan"),
  )
  return history


def gap_check_from_config(
    config: config_lib.TrainConfig,
    steps: int = 10,
    n_mc: int = 10000,
    fit_steps: int = 0,
    exact: bool = False,
    model: Optional[belief_model_lib.BeliefModel] = None,
    fit_episodes: int = 64,
) -> GapReport:
  """Runs the gap check on a fresh `steps`-long linear-Gaussian episode.

  The environment is the seeded instance a `linear_gaussian` run trains on.
  With `exact` the filtering distribution is the exact one-step posterior,
  so the KL term vanishes; otherwise `model` (or a new model from the
  config, optionally fitted for `fit_steps` updates) supplies it.

  Raises:
    ValueError: If the config is not for the linear-Gaussian environment.
  """
  if config.env_id != "linear_gaussian":
    raise ValueError(
        f"The gap check needs env_id=linear_gaussian, got {config.env_id!r}"
    )
  init_rng, data_rng, fit_rng, episode_rng, check_rng = rng_lib.Rng(
      config.seed
  ).split(5)
  env = environments.make_linear_gaussian(seed=config.seed, horizon=steps)
  episode = rollout.collect_episode(env, episode_rng)
  if exact:
    return gap_check(
        ExactConditionalPosterior(env), env, episode, n_mc, check_rng
    )
  if model is None:
    model = belief_model_lib.BeliefModel.from_config(
        config, env.obs_spec, env.action_dim, init_rng
    )
  if fit_steps:
    episodes = [
        rollout.collect_episode(env, r) for r in data_rng.split(fit_episodes)
    ]
    fit_posterior(
        model,
        env,
        episodes,
        fit_steps,
        fit_rng,
        batch_size=min(config.batch_size, fit_episodes),
        learning_rate=config.model_lr,
    )
  return model_gap_check(model, env, episode, n_mc, check_rng)
