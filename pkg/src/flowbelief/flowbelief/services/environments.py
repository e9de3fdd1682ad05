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

"""Built-in partially observable environments.

Every environment draws its randomness from the `Rng` passed to `reset` and
`step`, so a rollout is a pure function of (seed, action sequence). The
episode emitted by `reset` is observation 0; each `step` applies the action
that precedes the next observation.
"""

import abc
import dataclasses
import logging
from typing import Optional

import numpy as np
from scipy import linalg
from scipy import stats

from flowbelief.core import config as config_lib
from flowbelief.core import rng as rng_lib
from flowbelief.models import records
from flowbelief.services import strokes

logger = logging.getLogger(__name__)

_BOUND_TOLERANCE = 1e-9


class Error(Exception):
  """Base error for environments."""


class ActionOutOfBoundsError(Error):
  """Raised when an action leaves the environment's action box."""


class SingularInnovationError(Error):
  """Raised when a Kalman innovation covariance is not positive definite."""


class Environment(abc.ABC):
  """Uniform interface over the built-in POMDPs.

  Attributes:
    name: Environment id.
    obs_spec: Shape and preprocessing of observations.
    action_low: Lower corner of the action box, shape [A].
    action_high: Upper corner of the action box, shape [A].
    horizon: Observations per episode.
  """

  name: str
  obs_spec: records.ObservationSpec
  action_low: np.ndarray
  action_high: np.ndarray
  horizon: int

  @property
  def action_dim(self) -> int:
    return int(self.action_low.shape[0])

  def check_action(self, action) -> np.ndarray:
    """Validates the action shape and bounds.

    Raises:
      ActionOutOfBoundsError: If the action has the wrong size or leaves the
        box.
    """
    action = np.asarray(action, dtype=np.float64).reshape(-1)
    if action.shape != (self.action_dim,):
      raise ActionOutOfBoundsError(
          f"{self.name} expects {self.action_dim} action values,"
          f" got {action.shape[0]}"
      )
    if np.any(action < self.action_low - _BOUND_TOLERANCE) or np.any(
        action > self.action_high + _BOUND_TOLERANCE
    ):
      raise ActionOutOfBoundsError(
          f"Action {action} outside [{self.action_low}, {self.action_high}]"
      )
    return action

  def random_action(self, rng: rng_lib.Rng) -> np.ndarray:
    return rng.uniform(self.action_low, self.action_high, self.action_dim)

  @abc.abstractmethod
  def reset(self, rng: rng_lib.Rng) -> np.ndarray:
    """Starts an episode and returns the first flat observation."""

  @abc.abstractmethod
  def step(self, action, rng: rng_lib.Rng) -> records.EnvStep:
    """Applies one action and returns the next observation."""


def _symmetrize(matrix: np.ndarray) -> np.ndarray:
  return 0.5 * (matrix + matrix.T)


@dataclasses.dataclass
class KalmanResult:
  """Exact filtering output.

  Attributes:
    means: [T, S] posterior means of x_t given o_{0:t}.
    covariances: [T, S, S] posterior covariances.
    step_log_likelihoods: [T] log p(o_t | o_{<t}, a_{<=t}).
    log_likelihood: Sum of the step terms.
  """

  means: np.ndarray
  covariances: np.ndarray
  step_log_likelihoods: np.ndarray

  @property
  def log_likelihood(self) -> float:
    return float(self.step_log_likelihoods.sum())


class LinearGaussianPOMDP(Environment):
  """x' = A x + B a + w, o = C x + v, with isotropic Gaussian w and v.

  The reward is linear in the hidden state.
  """

  def __init__(
      self,
      transition: np.ndarray,
      control: np.ndarray,
      emission: np.ndarray,
      process_std: float,
      obs_std: float,
      initial_mean: Optional[np.ndarray] = None,
      initial_cov: Optional[np.ndarray] = None,
      reward_weights: Optional[np.ndarray] = None,
      horizon: int = 50,
  ):
    self.name = "linear_gaussian"
    self.transition = np.atleast_2d(np.asarray(transition, dtype=np.float64))
    self.control = np.asarray(control, dtype=np.float64).reshape(
        self.transition.shape[0], -1
    )
    self.emission = np.atleast_2d(np.asarray(emission, dtype=np.float64))
    self.state_dim = self.transition.shape[0]
    self.obs_dim = self.emission.shape[0]
    self.process_cov = process_std**2 * np.eye(self.state_dim)
    self.obs_cov = obs_std**2 * np.eye(self.obs_dim)
    self.initial_mean = (
        np.zeros(self.state_dim)
        if initial_mean is None
        else np.asarray(initial_mean, dtype=np.float64)
    )
    if initial_cov is None:
      initial_cov = self.stationary_covariance()
    self.initial_cov = np.atleast_2d(np.asarray(initial_cov, dtype=np.float64))
    self.reward_weights = (
        np.ones(self.state_dim)
        if reward_weights is None
        else np.asarray(reward_weights, dtype=np.float64)
    )
    self.horizon = horizon
    self.obs_spec = records.ObservationSpec("vector", (self.obs_dim,), "none")
    self.action_low = -np.ones(self.control.shape[1])
    self.action_high = np.ones(self.control.shape[1])
    self._state: Optional[np.ndarray] = None
    self._t = 0

  def stationary_covariance(self) -> np.ndarray:
    """Solves P = A P A^T + Q for the zero-action stationary covariance."""
    return linalg.solve_discrete_lyapunov(self.transition, self.process_cov)

  def _noise(self, cov: np.ndarray, rng: rng_lib.Rng, count=None) -> np.ndarray:
    # Isotropic or explicit covariance; an eigen factor also covers zero noise.
    eigvals, eigvecs = np.linalg.eigh(cov)
    factor = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    shape = (cov.shape[0],) if count is None else (count, cov.shape[0])
    return rng.normal(shape) @ factor.T

  def reward(self, state: np.ndarray) -> float:
    return float(self.reward_weights @ state)

  def emit(self, state: np.ndarray, rng: rng_lib.Rng) -> np.ndarray:
    return self.emission @ state + self._noise(self.obs_cov, rng)

  def reset(self, rng: rng_lib.Rng) -> np.ndarray:
    self._state = self.initial_mean + self._noise(self.initial_cov, rng)
    self._t = 0
    return self.emit(self._state, rng)

  def step(self, action, rng: rng_lib.Rng) -> records.EnvStep:
    action = self.check_action(action)
    self._state = (
        self.transition @ self._state
        + self.control @ action
        + self._noise(self.process_cov, rng)
    )
    self._t += 1
    return records.EnvStep(
        observation=self.emit(self._state, rng),
        reward=self.reward(self._state),
        done=self._t >= self.horizon - 1,
    )

  def sample_states(
      self, rng: rng_lib.Rng, count: int, steps: int
  ) -> np.ndarray:
    """Zero-action hidden-state rollouts, [count, steps, S]."""
    states = np.zeros((count, steps, self.state_dim))
    x = self.initial_mean + self._noise(self.initial_cov, rng, count)
    for t in range(steps):
      states[:, t] = x
      x = x @ self.transition.T + self._noise(self.process_cov, rng, count)
    return states

  def transition_moments(
      self, previous: Optional[np.ndarray], action: np.ndarray
  ) -> tuple[np.ndarray, np.ndarray]:
    """Mean [N, S] and covariance [S, S] of x_t given x_{t-1} samples.

    `previous=None` stands for the first step, whose prior is the initial
    distribution.
    """
    if previous is None:
      return self.initial_mean[None, :], self.initial_cov
    mean = previous @ self.transition.T + self.control @ np.asarray(action)
    return mean, self.process_cov

  def conditional_posterior(
      self,
      previous: Optional[np.ndarray],
      action: np.ndarray,
      observation: np.ndarray,
  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact p(x_t | x_{t-1}, a_t, o_t) and log p(o_t | x_{t-1}, a_t).

    Returns:
      Posterior means [N, S], shared covariance [S, S] and the marginal
      observation log-density [N].

    Raises:
      SingularInnovationError: If C P C^T + R is not positive definite.
    """
    mean, cov = self.transition_moments(previous, action)
    innovation_cov = self.emission @ cov @ self.emission.T + self.obs_cov
    factor = _cho_factor(innovation_cov)
    gain = linalg.cho_solve(factor, self.emission @ cov).T
    predicted = mean @ self.emission.T
    post_mean = mean + (observation - predicted) @ gain.T
    post_cov = _symmetrize(
        (np.eye(self.state_dim) - gain @ self.emission) @ cov
    )
    log_marginal = stats.multivariate_normal.logpdf(
        observation - predicted,
        mean=np.zeros(self.obs_dim),
        cov=innovation_cov,
    )
    return post_mean, post_cov, np.atleast_1d(log_marginal)

  def transition_log_prob(
      self, state: np.ndarray, previous: Optional[np.ndarray], action
  ) -> np.ndarray:
    """log p(x_t | x_{t-1}, a_t) for sample rows, [N]."""
    mean, cov = self.transition_moments(previous, action)
    return np.atleast_1d(
        stats.multivariate_normal.logpdf(state - mean, cov=cov)
    )

  def observation_log_prob(
      self, observation: np.ndarray, state: np.ndarray
  ) -> np.ndarray:
    """log p(o_t | x_t) for sample rows, [N]."""
    predicted = state @ self.emission.T
    return np.atleast_1d(
        stats.multivariate_normal.logpdf(
            observation - predicted, cov=self.obs_cov
        )
    )


def _cho_factor(matrix: np.ndarray):
  try:
    return linalg.cho_factor(matrix)
  except linalg.LinAlgError as e:
    raise SingularInnovationError(
        f"Innovation covariance is not positive definite:\n{matrix}"
    ) from e


def kalman_exact(
    env: LinearGaussianPOMDP,
    observations: np.ndarray,
    actions: np.ndarray,
) -> KalmanResult:
  """Exact posteriors and innovation log-likelihood of one episode.

  Args:
    env: The linear-Gaussian environment that generated the data.
    observations: [T, O] observations.
    actions: [T, A] actions; actions[t] precedes observations[t] and
      actions[0] is ignored.

  Returns:
    The filtering means, covariances and per-step log-likelihoods.

  Raises:
    SingularInnovationError: If an innovation covariance is singular.
  """
  observations = np.asarray(observations, dtype=np.float64)
  actions = np.asarray(actions, dtype=np.float64).reshape(len(observations), -1)
  steps = len(observations)
  means = np.zeros((steps, env.state_dim))
  covs = np.zeros((steps, env.state_dim, env.state_dim))
  step_ll = np.zeros(steps)
  mean, cov = env.initial_mean, env.initial_cov
  for t in range(steps):
    if t > 0:
      mean = env.transition @ mean + env.control @ actions[t]
      cov = env.transition @ cov @ env.transition.T + env.process_cov
    innovation_cov = _symmetrize(
        env.emission @ cov @ env.emission.T + env.obs_cov
    )
    factor = _cho_factor(innovation_cov)
    residual = observations[t] - env.emission @ mean
    gain = linalg.cho_solve(factor, env.emission @ cov).T
    mean = mean + gain @ residual
    cov = _symmetrize((np.eye(env.state_dim) - gain @ env.emission) @ cov)
    means[t] = mean
    covs[t] = cov
    step_ll[t] = stats.multivariate_normal.logpdf(
        residual, mean=np.zeros(env.obs_dim), cov=innovation_cov
    )
  return KalmanResult(
      means=means, covariances=covs, step_log_likelihoods=step_ll
  )


def make_linear_gaussian(
    seed: int = 0,
    state_dim: int = 2,
    obs_dim: int = 2,
    action_dim: int = 1,
    spectral_radius: float = 0.9,
    process_std: float = 0.5,
    obs_std: float = 1.0,
    horizon: int = 50,
) -> LinearGaussianPOMDP:
  """A stable random instance; unit observation noise matches the decoder."""
  rng = rng_lib.Rng(seed)
  raw = rng.normal((state_dim, state_dim))
  transition = spectral_radius * raw / np.max(np.abs(np.linalg.eigvals(raw)))
  control = 0.5 * rng.normal((state_dim, action_dim))
  emission = np.eye(obs_dim, state_dim) + 0.3 * rng.normal((obs_dim, state_dim))
  reward_weights = rng.normal((state_dim,))
  return LinearGaussianPOMDP(
      transition,
      control,
      emission,
      process_std=process_std,
      obs_std=obs_std,
      reward_weights=reward_weights,
      horizon=horizon,
  )


class BimodalEnv(Environment):
  """A walker whose lateral direction is a hidden coin flip.

  The walker advances by `forward_step` along `heading` (radians) every step.
  For the first `prefix_steps` observations the lateral offset is 0 for both
  modes; afterwards it moves by `mode * lateral_step` per step along the
  left-hand normal. Observations add N(0, noise_std^2).
  """

  def __init__(
      self,
      prefix_steps: int = 5,
      horizon: int = 15,
      forward_step: float = 0.1,
      lateral_step: float = 0.2,
      noise_std: float = 0.05,
      heading: float = 0.0,
  ):
    self.name = "bimodal"
    self.heading = heading
    self.forward_axis = np.array([np.cos(heading), np.sin(heading)])
    self.lateral_axis = np.array([-np.sin(heading), np.cos(heading)])
    self.prefix_steps = prefix_steps
    self.horizon = horizon
    self.forward_step = forward_step
    self.lateral_step = lateral_step
    self.noise_std = noise_std
    self.obs_spec = records.ObservationSpec("vector", (2,), "none")
    self.action_low = np.zeros(0)
    self.action_high = np.zeros(0)
    self.mode = 1
    self._t = 0

  def position(self, t: int, mode: int) -> np.ndarray:
    lateral = mode * self.lateral_step * max(0, t - self.prefix_steps + 1)
    forward = self.forward_step * t
    return forward * self.forward_axis + lateral * self.lateral_axis

  def lateral_offset(self, observation: np.ndarray) -> np.ndarray:
    """Signed offset of observations along the lateral axis."""
    return np.asarray(observation) @ self.lateral_axis

  def _observe(self, rng: rng_lib.Rng) -> np.ndarray:
    return self.position(self._t, self.mode) + self.noise_std * rng.normal((2,))

  def reset(self, rng: rng_lib.Rng) -> np.ndarray:
    self.mode = 1 if rng.uniform(0.0, 1.0) < 0.5 else -1
    self._t = 0
    return self._observe(rng)

  def step(self, action, rng: rng_lib.Rng) -> records.EnvStep:
    self.check_action(action)
    self._t += 1
    return records.EnvStep(
        observation=self._observe(rng),
        reward=0.0,
        done=self._t >= self.horizon - 1,
    )


def make_bimodal(seed: int = 0, **kwargs) -> BimodalEnv:
  """A bimodal walker with a heading drawn uniformly from the seed."""
  heading = float(rng_lib.Rng(seed).uniform(0.0, 2.0 * np.pi))
  return BimodalEnv(heading=heading, **kwargs)

class PointMassEnv(Environment):
  """A damped 2-D point mass steered by bounded accelerations.

  Only the position is observed, with N(0, obs_std^2) noise. The reward is
  the negative distance to the goal.
  """

  def __init__(
      self,
      goal: Optional[np.ndarray] = None,
      horizon: int = 100,
      dt: float = 0.1,
      damping: float = 0.1,
      obs_std: float = 0.1,
      start_range: float = 1.0,
  ):
    self.name = "point_mass"
    self.goal = np.zeros(2) if goal is None else np.asarray(goal, dtype=float)
    self.horizon = horizon
    self.dt = dt
    self.damping = damping
    self.obs_std = obs_std
    self.start_range = start_range
    self.obs_spec = records.ObservationSpec("vector", (2,), "standardize")
    self.action_low = -np.ones(2)
    self.action_high = np.ones(2)
    self.position = np.zeros(2)
    self.velocity = np.zeros(2)
    self._t = 0

  def reward_at(self, position: np.ndarray) -> float:
    return -float(np.linalg.norm(np.asarray(position) - self.goal))

  def _observe(self, rng: rng_lib.Rng) -> np.ndarray:
    return self.position + self.obs_std * rng.normal((2,))

  def reset(self, rng: rng_lib.Rng) -> np.ndarray:
    self.position = rng.uniform(-self.start_range, self.start_range, 2)
    self.velocity = np.zeros(2)
    self._t = 0
    return self._observe(rng)

  def step(self, action, rng: rng_lib.Rng) -> records.EnvStep:
    action = self.check_action(action)
    self.velocity = (1.0 - self.damping) * self.velocity + self.dt * action
    self.position = self.position + self.dt * self.velocity
    self._t += 1
    return records.EnvStep(
        observation=self._observe(rng),
        reward=self.reward_at(self.position),
        done=self._t >= self.horizon - 1,
    )


class DigitEnv(Environment):
  """Replays a stroke dataset: one digit per episode, no actions, no reward.

  `reset` only draws from `dataset`; `held_out` is kept aside for scoring.
  """

  def __init__(
      self,
      dataset: strokes.StrokeSequenceDataset,
      held_out: Optional[strokes.StrokeSequenceDataset] = None,
  ):
    if not len(dataset):
      raise ValueError("Digit environment needs at least one episode.")
    self.name = "digit"
    self.dataset = dataset
    self.held_out = held_out
    self.obs_spec = dataset.obs_spec
    self.action_low = np.zeros(0)
    self.action_high = np.zeros(0)
    self.horizon = max(len(frames) for frames in dataset.episodes)
    self._frames: Optional[np.ndarray] = None
    self._t = 0

  def reset(self, rng: rng_lib.Rng) -> np.ndarray:
    index = int(rng.integers(0, len(self.dataset)))
    self._frames = self.dataset.episodes[index].reshape(
        len(self.dataset.episodes[index]), -1
    )
    self._t = 0
    return self._frames[0].copy()

  def step(self, action, rng: rng_lib.Rng) -> records.EnvStep:
    del rng
    self.check_action(action)
    self._t = min(self._t + 1, len(self._frames) - 1)
    return records.EnvStep(
        observation=self._frames[self._t].copy(),
        reward=0.0,
        done=self._t >= len(self._frames) - 1,
    )


def make_env(config: config_lib.TrainConfig) -> Environment:
  """Builds the environment named by the config, seeded by `config.seed`."""
  if config.env_id == "linear_gaussian":
    return make_linear_gaussian(seed=config.seed)
  if config.env_id == "bimodal":
    return make_bimodal(seed=config.seed)
  if config.env_id == "point_mass":
    return PointMassEnv()
  if config.stroke_path:
    dataset = strokes.load_stroke_dataset(
        config.stroke_path, config.stroke_resolution, config.points_per_step
    )
  else:
    episodes = strokes.generate_synthetic_strokes(
        config.synthetic_strokes, rng_lib.Rng(config.seed)
    )
    dataset = strokes.build_dataset(
        episodes, config.stroke_resolution, config.points_per_step
    )
  train, held_out = dataset.split(config.held_out_fraction)
  logger.info(
      "Digit environment :: train episodes: %d | held-out episodes: %d",
      len(train),
      len(held_out),
  )
  return DigitEnv(train, held_out=held_out)
