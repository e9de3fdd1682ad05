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

"""Run directories, metrics tables and image dumps."""

import csv
import dataclasses
import logging
import pathlib
import re
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from flowbelief.core import config as config_lib

logger = logging.getLogger(__name__)

_CHECKPOINT_PATTERN = re.compile(r"^step_(\d+)\.ckpt$")


@dataclasses.dataclass(frozen=True)
class RunPaths:
  """Layout of one run directory."""

  root: pathlib.Path

  @classmethod
  def for_config(cls, config: config_lib.TrainConfig) -> "RunPaths":
    return cls(root=pathlib.Path(config.run_root) / config.run_name)

  @property
  def config_path(self) -> pathlib.Path:
    return self.root / "config.resolved"

  @property
  def metrics_path(self) -> pathlib.Path:
    return self.root / "metrics.csv"

  @property
  def checkpoints_dir(self) -> pathlib.Path:
    return self.root / "checkpoints"

  @property
  def renders_dir(self) -> pathlib.Path:
    return self.root / "renders"

  def create(self) -> "RunPaths":
    for directory in (self.root, self.checkpoints_dir, self.renders_dir):
      directory.mkdir(parents=True, exist_ok=True)
    return self

  def checkpoint_path(self, step: int) -> pathlib.Path:
    return self.checkpoints_dir / f"step_{step}.ckpt"

  def latest_checkpoint(self) -> Optional[pathlib.Path]:
    """The checkpoint with the highest step, if any."""
    if not self.checkpoints_dir.is_dir():
      return None
    found = []
    for path in self.checkpoints_dir.iterdir():
      match = _CHECKPOINT_PATTERN.match(path.name)
      if match:
        found.append((int(match.group(1)), path))
    return max(found)[1] if found else None

  def write_config(self, config: config_lib.TrainConfig) -> pathlib.Path:
    self.config_path.write_text(config.to_text(), encoding="utf-8")
    return self.config_path


def format_cell(value: Any) -> str:
  """Deterministic text for one CSV cell."""
  if value is None:
    return ""
  if isinstance(value, bool):
    return "1" if value else "0"
  if isinstance(value, (float, np.floating)):
    return repr(float(value))
  if isinstance(value, np.integer):
    return str(int(value))
  return str(value)


def write_table(
    path: str | pathlib.Path,
    rows: Sequence[Mapping[str, Any]],
    columns: Optional[Sequence[str]] = None,
) -> pathlib.Path:
  """Writes rows as CSV; columns default to the union in first-seen order."""
  path = pathlib.Path(path)
  path.parent.mkdir(parents=True, exist_ok=True)
  header = list(columns or [])
  for row in rows:
    header.extend(key for key in row if key not in header)
  with path.open("w", newline="", encoding="utf-8") as f:
    writer = csv.writer(f, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
      writer.writerow([format_cell(row.get(key)) for key in header])
  return path


def read_table(path: str | pathlib.Path) -> list[dict[str, str]]:
  with pathlib.Path(path).open(newline="", encoding="utf-8") as f:
    return list(csv.DictReader(f))


class MetricsWriter:
  """Accumulates metric rows and rewrites the CSV on every flush.

  Columns are the declared ones followed by any new keys in first-seen
  order; rows carry no wall-clock data, so identical runs write identical
  files.
  """

  def __init__(
      self, path: str | pathlib.Path, columns: Iterable[str] = ("step",)
  ):
    self.path = pathlib.Path(path)
    self.columns = list(columns)
    self.rows: list[dict[str, Any]] = []

  def append(self, row: Mapping[str, Any]) -> None:
    self.columns.extend(key for key in row if key not in self.columns)
    self.rows.append(dict(row))

  def flush(self) -> pathlib.Path:
    return write_table(self.path, self.rows, self.columns)


def to_gray(values: np.ndarray, low: float = -0.5, high: float = 0.5):
  """Maps values in [low, high] to 8-bit gray levels, clipping outside."""
  scaled = (np.asarray(values, dtype=np.float64) - low) / (high - low)
  return np.round(np.clip(scaled, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(path: str | pathlib.Path, image: np.ndarray) -> pathlib.Path:
  """Writes a [H, W] uint8 image as binary PGM (P5)."""
  image = np.asarray(image)
  if image.ndim != 2 or image.dtype != np.uint8:
    raise ValueError(
        f"write_pgm needs a 2-D uint8 image, got {image.shape} {image.dtype}"
    )
  path = pathlib.Path(path)
  path.parent.mkdir(parents=True, exist_ok=True)
  height, width = image.shape
  path.write_bytes(
      f"P5\n{width} {height}\n255\n".encode("ascii") + image.tobytes()
  )
  return path


def read_pgm(path: str | pathlib.Path) -> np.ndarray:
  """Reads a binary PGM written by `write_pgm`."""
  payload = pathlib.Path(path).read_bytes()
  fields = payload.split(maxsplit=4)
  if len(fields) < 5 or fields[0] != b"P5":
    raise ValueError(f"{path}: not a binary PGM")
  width, height = int(fields[1]), int(fields[2])
  pixels = payload[len(payload) - width * height :]
  return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width)


def image_grid(frames: np.ndarray, pad: int = 1) -> np.ndarray:
  """Tiles [rows, cols, H, W] uint8 frames into one image with a border."""
  rows, cols, height, width = frames.shape
  grid = np.zeros(
      (rows * (height + pad) + pad, cols * (width + pad) + pad),
      dtype=np.uint8,
  )
  for r in range(rows):
    for c in range(cols):
      top = pad + r * (height + pad)
      left = pad + c * (width + pad)
      grid[top : top + height, left : left + width] = frames[r, c]
  return grid


def write_grid_csv(
    path: str | pathlib.Path, values: np.ndarray
) -> pathlib.Path:
  """Writes [samples, steps, D] values as rows of (sample, step, v0..)."""
  samples, steps, dim = values.shape
  rows = []
  for i in range(samples):
    for t in range(steps):
      row: dict[str, Any] = {"sample": i, "step": t}
      row.update({f"v{k}": values[i, t, k] for k in range(dim)})
      rows.append(row)
  return write_table(path, rows)
