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

"""Digit stroke files, synthetic digits and frame rasterisation.

A stroke file is plain text:

  strokes v1
  episode <id> <n_points> <H> <W>
  <x> <y>            # n_points lines, integer pixel coordinates
  ...

Each episode becomes a sequence of cumulative frames: frame t shows every
point drawn up to and including timestep t, so lit pixels never disappear.
"""

import dataclasses
import logging
import pathlib
import re
from typing import Iterable, Optional, Sequence

import numpy as np

from flowbelief.core import rng as rng_lib
from flowbelief.models import records

logger = logging.getLogger(__name__)

HEADER = "strokes v1"
NATIVE_SIZE = 28
DEFAULT_MIN_POINTS = 30
INK = 255.0

_TOKEN = re.compile(r"\S+")


class Error(Exception):
  """Base error for stroke data."""


class StrokeFormatError(Error):
  """Raised for malformed stroke or pen-offset files.

  Attributes:
    line: 1-based line number of the problem.
    offset: 0-based character offset within the line.
  """

  def __init__(self, message: str, line: int, offset: int = 0):
    self.line = line
    self.offset = offset
    super().__init__(f"line {line}, offset {offset}: {message}")


@dataclasses.dataclass
class StrokeEpisode:
  """One drawn digit as an ordered list of pixel coordinates.

  Attributes:
    episode_id: Identifier without whitespace.
    height: Canvas height in pixels.
    width: Canvas width in pixels.
    points: [n, 2] integer (x, y) coordinates in drawing order.
  """

  episode_id: str
  height: int
  width: int
  points: np.ndarray

  def __post_init__(self):
    self.points = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)


@dataclasses.dataclass
class StrokeSequenceDataset:
  """Frame sequences ready for training.

  Attributes:
    episodes: Per episode a [T, R, R] array with pixels in [-0.5, 0.5].
    episode_ids: Identifier of each episode.
    resolution: Frame side length R.
  """

  episodes: list[np.ndarray]
  episode_ids: list[str]
  resolution: int

  def __len__(self) -> int:
    return len(self.episodes)

  @property
  def obs_spec(self) -> records.ObservationSpec:
    return records.ObservationSpec(
        "image", (self.resolution, self.resolution, 1), "none"
    )

  def split(
      self, held_out_fraction: float
  ) -> tuple["StrokeSequenceDataset", "StrokeSequenceDataset"]:
    """Splits off the last episodes by index as a held-out set.

    A positive fraction holds out at least one episode while at least one
    stays for training.
    """
    count = len(self)
    held = int(round(count * held_out_fraction))
    if held_out_fraction > 0 and count > 1:
      held = max(held, 1)
    held = min(held, count - 1) if count > 1 else 0
    cut = count - held
    train = StrokeSequenceDataset(
        self.episodes[:cut], self.episode_ids[:cut], self.resolution
    )
    test = StrokeSequenceDataset(
        self.episodes[cut:], self.episode_ids[cut:], self.resolution
    )
    return train, test


def _tokens(line: str) -> list[tuple[str, int]]:
  return [(m.group(), m.start()) for m in _TOKEN.finditer(line)]


def _parse_int(token: tuple[str, int], line_no: int, what: str) -> int:
  text, offset = token
  try:
    return int(text)
  except ValueError as e:
    raise StrokeFormatError(
        f"expected integer {what}, got {text!r}", line_no, offset
    ) from e


def parse_stroke_text(text: str) -> list[StrokeEpisode]:
  """Parses the contents of a stroke file.

  Raises:
    StrokeFormatError: On a bad header, episode line, point line or
      premature end of file.
  """
  lines = text.splitlines()
  if not lines or lines[0].strip() != HEADER:
    raise StrokeFormatError(f"expected header {HEADER!r}", 1, 0)
  episodes = []
  i = 1
  while i < len(lines):
    line_no = i + 1
    tokens = _tokens(lines[i])
    i += 1
    if not tokens:
      continue
    if tokens[0][0] != "episode" or len(tokens) != 5:
      raise StrokeFormatError(
          "expected 'episode <id> <n_points> <H> <W>'", line_no, tokens[0][1]
      )
    episode_id = tokens[1][0]
    n_points = _parse_int(tokens[2], line_no, "n_points")
    height = _parse_int(tokens[3], line_no, "H")
    width = _parse_int(tokens[4], line_no, "W")
    if n_points < 1 or height < 1 or width < 1:
      raise StrokeFormatError(
          "n_points, H and W must be positive", line_no, tokens[2][1]
      )
    points = np.zeros((n_points, 2), dtype=np.int64)
    for j in range(n_points):
      if i >= len(lines):
        raise StrokeFormatError(
            f"episode {episode_id!r} ends after {j} of {n_points} points",
            i + 1,
        )
      point_line = i + 1
      point_tokens = _tokens(lines[i])
      i += 1
      if len(point_tokens) != 2:
        raise StrokeFormatError("expected 'x y'", point_line)
      x = _parse_int(point_tokens[0], point_line, "x")
      y = _parse_int(point_tokens[1], point_line, "y")
      if not (0 <= x < width and 0 <= y < height):
        raise StrokeFormatError(
            f"point ({x}, {y}) outside {height}x{width} canvas",
            point_line,
            point_tokens[0][1],
        )
      points[j] = (x, y)
    episodes.append(StrokeEpisode(episode_id, height, width, points))
  return episodes


def format_stroke_text(episodes: Iterable[StrokeEpisode]) -> str:
  lines = [HEADER]
  for episode in episodes:
    lines.append(
        f"episode {episode.episode_id} {len(episode.points)}"
        f" {episode.height} {episode.width}"
    )
    lines.extend(f"{x} {y}" for x, y in episode.points)
  return "\n".join(lines) + "\n"


def save_stroke_file(
    path: str | pathlib.Path, episodes: Iterable[StrokeEpisode]
) -> None:
  path = pathlib.Path(path)
  path.parent.mkdir(parents=True, exist_ok=True)
  path.write_text(format_stroke_text(episodes), encoding="utf-8")


def rasterize(
    episode: StrokeEpisode,
    resolution: Optional[int] = None,
    points_per_step: int = 1,
) -> np.ndarray:
  """Cumulative raw frames [T, R, R] with pixels in {0, 255}.

  Raises:
    ValueError: If the canvas does not divide into the resolution.
  """
  if points_per_step < 1:
    raise ValueError(f"points_per_step must be >= 1, got {points_per_step}")
  canvas = np.zeros((episode.height, episode.width))
  frames = []
  for start in range(0, len(episode.points), points_per_step):
    chunk = episode.points[start : start + points_per_step]
    canvas[chunk[:, 1], chunk[:, 0]] = INK
    frames.append(canvas.copy())
  frames = np.stack(frames)
  if resolution is None or resolution == episode.height == episode.width:
    return frames
  if episode.height != episode.width or episode.height % resolution:
    raise ValueError(
        f"Cannot downsample {episode.height}x{episode.width} to {resolution}"
    )
  factor = episode.height // resolution
  pooled = frames.reshape(len(frames), resolution, factor, resolution, factor)
  # Max pooling keeps every lit pixel lit, so frames stay cumulative.
  return pooled.max(axis=(2, 4))


def build_dataset(
    episodes: Sequence[StrokeEpisode],
    resolution: Optional[int] = None,
    points_per_step: int = 1,
) -> StrokeSequenceDataset:
  """Rasterises and scales stroke episodes to [-0.5, 0.5] frames."""
  if not episodes:
    raise ValueError("No stroke episodes to build a dataset from.")
  resolution = resolution or episodes[0].height
  spec = records.ObservationSpec(
      "image", (resolution, resolution, 1), "unit_pixels"
  )
  frames = [
      spec.preprocess(rasterize(e, resolution, points_per_step))
      for e in episodes
  ]
  return StrokeSequenceDataset(
      episodes=frames,
      episode_ids=[e.episode_id for e in episodes],
      resolution=resolution,
  )


def load_stroke_dataset(
    path: str | pathlib.Path,
    resolution: Optional[int] = None,
    points_per_step: int = 1,
) -> StrokeSequenceDataset:
  """Reads a stroke file into scaled frame sequences.

  Raises:
    StrokeFormatError: If the file is malformed.
    FileNotFoundError: If the path does not exist.
  """
  path = pathlib.Path(path)
  episodes = parse_stroke_text(path.read_text(encoding="utf-8"))
  logger.info("Loaded %d stroke episodes from %s", len(episodes), path)
  return build_dataset(episodes, resolution, points_per_step)


def _line_pixels(start: np.ndarray, end: np.ndarray) -> np.ndarray:
  steps = int(np.max(np.abs(end - start)))
  if steps == 0:
    return start[None, :]
  fractions = np.arange(steps + 1)[:, None] / steps
  return np.rint(start + fractions * (end - start)).astype(np.int64)


def trace_polylines(
    polylines: Sequence[np.ndarray], height: int, width: int
) -> np.ndarray:
  """Joins pixel vertices with straight segments; pen lifts between lines.

  Consecutive duplicate pixels are dropped.
  """
  path = []
  for line in polylines:
    vertices = np.rint(np.asarray(line, dtype=np.float64)).astype(np.int64)
    vertices[:, 0] = np.clip(vertices[:, 0], 0, width - 1)
    vertices[:, 1] = np.clip(vertices[:, 1], 0, height - 1)
    if len(vertices) == 1:
      path.append(vertices)
    for a, b in zip(vertices[:-1], vertices[1:]):
      path.append(_line_pixels(a, b))
  points = np.concatenate(path)
  keep = np.ones(len(points), dtype=bool)
  keep[1:] = np.any(points[1:] != points[:-1], axis=1)
  return points[keep]


def _arc(cx, cy, rx, ry, start_deg, end_deg, count=24) -> np.ndarray:
  angles = np.deg2rad(np.linspace(start_deg, end_deg, count))
  return np.stack([cx + rx * np.cos(angles), cy - ry * np.sin(angles)], axis=1)


def _poly(*vertices) -> np.ndarray:
  return np.asarray(vertices, dtype=np.float64)


# Digit outlines in a unit box, y pointing down; one array per pen stroke.
DIGIT_TEMPLATES: dict[int, list[np.ndarray]] = {
    0: [_arc(0.5, 0.5, 0.32, 0.45, 90, 450, 40)],
    1: [
        _poly((0.3, 0.25), (0.5, 0.05), (0.5, 0.95)),
        _poly((0.3, 0.95), (0.7, 0.95)),
    ],
    2: [
        np.concatenate([
            _arc(0.5, 0.3, 0.3, 0.25, 160, -30),
            _poly((0.15, 0.95), (0.85, 0.95)),
        ])
    ],
    3: [
        np.concatenate([
            _arc(0.5, 0.28, 0.3, 0.23, 150, -90),
            _arc(0.5, 0.72, 0.32, 0.23, 90, -150),
        ])
    ],
    4: [_poly((0.65, 0.95), (0.65, 0.05), (0.15, 0.65), (0.85, 0.65))],
    5: [
        np.concatenate([
            _poly((0.8, 0.05), (0.3, 0.05), (0.25, 0.45)),
            _arc(0.5, 0.67, 0.3, 0.28, 130, -150),
        ])
    ],
    6: [
        np.concatenate([
            _arc(0.6, 0.5, 0.4, 0.45, 60, 180),
            _arc(0.5, 0.7, 0.3, 0.25, 180, 540),
        ])
    ],
    7: [_poly((0.15, 0.05), (0.85, 0.05), (0.4, 0.95))],
    8: [
        np.concatenate([
            _arc(0.5, 0.27, 0.25, 0.22, 270, 630),
            _arc(0.5, 0.72, 0.3, 0.23, 90, 450),
        ])
    ],
    9: [
        np.concatenate([
            _arc(0.5, 0.3, 0.28, 0.25, 0, 360),
            _poly((0.78, 0.3), (0.7, 0.95)),
        ])
    ],
}


def generate_synthetic_strokes(
    count: int,
    rng: rng_lib.Rng,
    size: int = NATIVE_SIZE,
    min_points: int = DEFAULT_MIN_POINTS,
) -> list[StrokeEpisode]:
  """Draws jittered digit outlines, cycling through classes 0-9.

  Paths shorter than `min_points` are padded by resting the pen on the last
  point, which leaves the final frame unchanged.
  """
  episodes = []
  for index in range(count):
    digit = index % 10
    box = size * rng.uniform(0.55, 0.75)
    shear = rng.uniform(-0.15, 0.15)
    origin = rng.uniform(0.1 * size, size - box - 0.1 * size, 2)
    polylines = []
    for stroke in DIGIT_TEMPLATES[digit]:
      u, v = stroke[:, 0], stroke[:, 1]
      x = origin[0] + box * (u + shear * (v - 0.5))
      y = origin[1] + box * v
      polylines.append(np.stack([x, y], axis=1))
    points = trace_polylines(polylines, size, size)
    if len(points) < min_points:
      padding = np.repeat(points[-1:], min_points - len(points), axis=0)
      points = np.concatenate([points, padding])
    episodes.append(
        StrokeEpisode(f"synthetic-{index}-d{digit}", size, size, points)
    )
  return episodes


def convert_pen_offsets(
    text: str,
    episode_id: str,
    size: int = NATIVE_SIZE,
) -> StrokeEpisode:
  """Converts `dx dy eos eod` rows (first row absolute) to a stroke episode.

  Consecutive points within a stroke are joined pixel by pixel; `eos=1`
  lifts the pen after the row and `eod=1` ends the digit.

  Raises:
    StrokeFormatError: For rows that are not four integers.
  """
  polylines: list[list[tuple[int, int]]] = [[]]
  position = np.zeros(2, dtype=np.int64)
  first = True
  for line_no, line in enumerate(text.splitlines(), start=1):
    tokens = _tokens(line)
    if not tokens:
      continue
    if len(tokens) != 4:
      raise StrokeFormatError("expected 'dx dy eos eod'", line_no)
    dx, dy, eos, eod = (
        _parse_int(tok, line_no, name)
        for tok, name in zip(tokens, ("dx", "dy", "eos", "eod"))
    )
    if first:
      position = np.array([dx, dy])
      first = False
    else:
      position = position + (dx, dy)
    polylines[-1].append(tuple(position))
    if eod:
      break
    if eos:
      polylines.append([])
  polylines = [np.asarray(p, dtype=np.float64) for p in polylines if p]
  if not polylines:
    raise StrokeFormatError("no pen offsets found", 1)
  return StrokeEpisode(
      episode_id, size, size, trace_polylines(polylines, size, size)
  )


def convert_pen_offset_files(
    paths: Sequence[str | pathlib.Path], size: int = NATIVE_SIZE
) -> list[StrokeEpisode]:
  episodes = []
  for path in map(pathlib.Path, paths):
    episode_id = re.sub(r"\s+", "_", path.stem)
    episodes.append(
        convert_pen_offsets(path.read_text(encoding="utf-8"), episode_id, size)
    )
  logger.info("Converted %d pen-offset files.", len(episodes))
  return episodes
