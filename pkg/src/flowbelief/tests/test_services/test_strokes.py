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

"""Unit tests for stroke files and digit frames."""

import numpy as np
import pytest

from flowbelief.core import rng as rng_lib
from flowbelief.services import strokes

_TWO_EPISODES = """strokes v1
episode a 3 4 4
0 0
1 0
1 1

episode b 1 4 4
3 3
"""


class TestParse:
  """Reading the text format."""

  def test_parses_episodes(self):
    """Blank lines between episodes are allowed."""
    episodes = strokes.parse_stroke_text(_TWO_EPISODES)
    assert [e.episode_id for e in episodes] == ["a", "b"]
    np.testing.assert_array_equal(episodes[0].points, [[0, 0], [1, 0], [1, 1]])
    assert (episodes[1].height, episodes[1].width) == (4, 4)

  def test_format_round_trip(self):
    """Formatting parsed episodes reproduces the text without blanks."""
    text = strokes.format_stroke_text(
        strokes.parse_stroke_text(_TWO_EPISODES)
    )
    assert text == _TWO_EPISODES.replace("\n\n", "\n")

  @pytest.mark.parametrize(
      "text, line, message",
      [
          ("strokes v2\n", 1, "header"),
          ("strokes v1\nepisod a 1 4 4\n0 0\n", 2, "episode"),
          ("strokes v1\nepisode a x 4 4\n", 2, "n_points"),
          ("strokes v1\nepisode a 2 4 4\n0 0\n", 4, "ends after 1"),
          ("strokes v1\nepisode a 1 4 4\n0\n", 3, "x y"),
          ("strokes v1\nepisode a 1 4 4\n4 0\n", 3, "outside"),
          ("strokes v1\nepisode a 0 4 4\n", 2, "positive"),
      ],
  )
  def test_errors_name_the_line(self, text, line, message):
    """Malformed input reports the 1-based line of the problem."""
    with pytest.raises(strokes.StrokeFormatError, match=message) as info:
      strokes.parse_stroke_text(text)
    assert info.value.line == line

  def test_error_offset(self):
    """Errors point at the offending token."""
    with pytest.raises(strokes.StrokeFormatError) as info:
      strokes.parse_stroke_text("strokes v1\nepisode a 1 4 4\n0  y\n")
    assert info.value.offset == 3


class TestRasterize:
  """Cumulative frames."""

  def test_frames_accumulate(self):
    """Lit pixels stay lit and each frame adds the next point."""
    episode = strokes.parse_stroke_text(_TWO_EPISODES)[0]
    frames = strokes.rasterize(episode)
    assert frames.shape == (3, 4, 4)
    assert frames[0, 0, 0] == strokes.INK
    assert frames[1, 0, 1] == strokes.INK and frames[0, 0, 1] == 0
    assert np.all(np.diff(frames, axis=0) >= 0)

  def test_points_per_step(self):
    """Several points per step shorten the sequence."""
    episode = strokes.parse_stroke_text(_TWO_EPISODES)[0]
    frames = strokes.rasterize(episode, points_per_step=2)
    assert frames.shape == (2, 4, 4)
    assert frames[0].sum() == 2 * strokes.INK

  def test_downsample_keeps_ink(self):
    """Max pooling halves the resolution without losing lit pixels."""
    episode = strokes.StrokeEpisode("d", 4, 4, [[3, 3]])
    frames = strokes.rasterize(episode, resolution=2)
    np.testing.assert_array_equal(frames[0], [[0, 0], [0, strokes.INK]])

  def test_bad_resolution(self):
    """Only exact divisors of the canvas are allowed."""
    episode = strokes.StrokeEpisode("d", 4, 4, [[0, 0]])
    with pytest.raises(ValueError, match="downsample"):
      strokes.rasterize(episode, resolution=3)
    with pytest.raises(ValueError, match="points_per_step"):
      strokes.rasterize(episode, points_per_step=0)

  def test_dataset_scaling(self):
    """Dataset frames lie in [-0.5, 0.5]."""
    dataset = strokes.build_dataset(strokes.parse_stroke_text(_TWO_EPISODES))
    assert len(dataset) == 2
    assert dataset.episodes[0].min() == -0.5
    assert dataset.episodes[0].max() == 0.5
    assert dataset.obs_spec.shape == (4, 4, 1)

  def test_load_file(self, tmp_path):
    """Saved files load back as datasets."""
    path = tmp_path / "d.strokes"
    strokes.save_stroke_file(path, strokes.parse_stroke_text(_TWO_EPISODES))
    dataset = strokes.load_stroke_dataset(path)
    assert dataset.episode_ids == ["a", "b"]

  @pytest.mark.parametrize(
      "count, fraction, held",
      [(10, 0.1, 1), (20, 0.25, 5), (2, 0.1, 1), (1, 0.5, 0), (4, 0.0, 0)],
  )
  def test_split_holds_out_the_last_episodes(self, count, fraction, held):
    """The last episodes by index are held out; training keeps at least one."""
    dataset = strokes.build_dataset(
        strokes.generate_synthetic_strokes(count, rng_lib.Rng(0)), 14
    )
    train, test = dataset.split(fraction)
    assert len(test) == held
    assert train.episode_ids + test.episode_ids == dataset.episode_ids
    assert not set(train.episode_ids) & set(test.episode_ids)


class TestSynthetic:
  """Generated digits."""

  def test_cycles_digits_and_stays_on_canvas(self):
    """Ids cycle through 0-9 and every point lies on the canvas."""
    episodes = strokes.generate_synthetic_strokes(12, rng_lib.Rng(0))
    assert episodes[11].episode_id == "synthetic-11-d1"
    for episode in episodes:
      assert len(episode.points) >= strokes.DEFAULT_MIN_POINTS
      assert episode.points.min() >= 0
      assert episode.points.max() < strokes.NATIVE_SIZE

  def test_reproducible(self):
    """The same stream draws the same digits."""
    a = strokes.generate_synthetic_strokes(3, rng_lib.Rng(5))
    b = strokes.generate_synthetic_strokes(3, rng_lib.Rng(5))
    for x, y in zip(a, b):
      np.testing.assert_array_equal(x.points, y.points)

  def test_trace_is_connected(self):
    """Consecutive traced pixels within a stroke are neighbours."""
    points = strokes.trace_polylines([np.array([[0, 0], [5, 3]])], 8, 8)
    steps = np.abs(np.diff(points, axis=0)).max(axis=1)
    assert np.all(steps == 1)
    np.testing.assert_array_equal(points[-1], [5, 3])


class TestPenOffsets:
  """Conversion from relative pen movements."""

  def test_offsets_accumulate(self):
    """The first row is absolute and later rows are relative."""
    episode = strokes.convert_pen_offsets("2 2 0 0\n2 0 0 0\n0 1 0 1\n", "e")
    np.testing.assert_array_equal(episode.points[0], [2, 2])
    np.testing.assert_array_equal(episode.points[-1], [4, 3])

  def test_end_of_digit_stops(self):
    """Rows after the end-of-digit flag are ignored."""
    episode = strokes.convert_pen_offsets("1 1 0 1\n5 5 0 0\n", "e")
    np.testing.assert_array_equal(episode.points, [[1, 1]])

  def test_pen_lift_skips_segment(self):
    """No pixels are traced between strokes."""
    episode = strokes.convert_pen_offsets("0 0 1 0\n4 0 0 1\n", "e")
    np.testing.assert_array_equal(episode.points, [[0, 0], [4, 0]])

  def test_bad_row(self):
    """Rows must have four integers."""
    with pytest.raises(strokes.StrokeFormatError) as info:
      strokes.convert_pen_offsets("1 1 0 0\n1 1 0\n", "e")
    assert info.value.line == 2

  def test_files(self, tmp_path):
    """Episode ids come from file stems."""
    path = tmp_path / "my digit.txt"
    path.write_text("3 3 0 1\n", encoding="utf-8")
    episodes = strokes.convert_pen_offset_files([path])
    assert episodes[0].episode_id == "my_digit"
