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

"""Unit tests for run directories, tables and image dumps."""

import numpy as np
import pytest

from flowbelief.services import artifacts


class TestRunPaths:
  """Run directory layout."""

  def test_for_config(self, tiny_config, tmp_path):
    """The run lives under run_root/run_name."""
    paths = artifacts.RunPaths.for_config(tiny_config)
    assert paths.root == tmp_path / "runs" / "tiny"
    assert paths.metrics_path.name == "metrics.csv"

  def test_latest_checkpoint_uses_step_order(self, tmp_path):
    """Step 10 sorts after step 9."""
    paths = artifacts.RunPaths(tmp_path / "run").create()
    for step in (2, 9, 10):
      paths.checkpoint_path(step).write_bytes(b"")
    (paths.checkpoints_dir / "notes.txt").write_text("x")
    assert paths.latest_checkpoint() == paths.checkpoint_path(10)

  def test_no_checkpoints(self, tmp_path):
    """An empty or missing directory has no latest checkpoint."""
    assert artifacts.RunPaths(tmp_path / "absent").latest_checkpoint() is None

  def test_write_config(self, tiny_config, tmp_path):
    """The resolved config is written in its text form."""
    paths = artifacts.RunPaths.for_config(tiny_config).create()
    path = paths.write_config(tiny_config)
    assert path.read_text(encoding="utf-8") == tiny_config.to_text()


class TestTables:
  """CSV tables."""

  @pytest.mark.parametrize(
      "value, expected",
      [
          (None, ""),
          (True, "1"),
          (False, "0"),
          (0.1, "0.1"),
          (np.float64(2.5), "2.5"),
          (np.int64(7), "7"),
          ("flow", "flow"),
      ],
  )
  def test_format_cell(self, value, expected):
    """Cells have one canonical text form."""
    assert artifacts.format_cell(value) == expected

  def test_columns_are_union_in_first_seen_order(self, tmp_path):
    """Missing cells are empty and new keys append columns."""
    path = artifacts.write_table(
        tmp_path / "t.csv", [{"a": 1, "b": 2}, {"c": 3, "a": 4}]
    )
    assert path.read_text(encoding="utf-8").splitlines() == [
        "a,b,c",
        "1,2,",
        "4,,3",
    ]
    assert artifacts.read_table(path)[1] == {"a": "4", "b": "", "c": "3"}

  def test_metrics_writer(self, tmp_path):
    """Declared columns come first and every flush rewrites the file."""
    writer = artifacts.MetricsWriter(tmp_path / "m.csv", ("step", "loss"))
    writer.append({"step": 1, "loss": 0.5})
    writer.flush()
    writer.append({"step": 2, "kl": 0.25, "loss": 0.4})
    rows = artifacts.read_table(writer.flush())
    assert list(rows[0]) == ["step", "loss", "kl"]
    assert rows[1] == {"step": "2", "loss": "0.4", "kl": "0.25"}

  def test_header_only(self, tmp_path):
    """A writer without rows still writes its header."""
    path = artifacts.MetricsWriter(tmp_path / "m.csv", ("step",)).flush()
    assert path.read_text(encoding="utf-8") == "step\n"


class TestImages:
  """Gray-level images."""

  def test_to_gray_clips(self):
    """The pixel range maps onto 0..255, clipping outside values."""
    gray = artifacts.to_gray(np.array([-1.0, -0.5, 0.0, 0.5, 2.0]))
    np.testing.assert_array_equal(gray, [0, 0, 128, 255, 255])
    assert gray.dtype == np.uint8

  def test_pgm_round_trip(self, tmp_path):
    """Images read back unchanged, including low byte values."""
    image = np.array([[0, 10, 32], [255, 9, 13]], dtype=np.uint8)
    path = artifacts.write_pgm(tmp_path / "img" / "a.pgm", image)
    assert path.read_bytes().startswith(b"P5\n3 2\n255\n")
    np.testing.assert_array_equal(artifacts.read_pgm(path), image)

  def test_pgm_rejects_float_images(self, tmp_path):
    """Only 2-D uint8 arrays are written."""
    with pytest.raises(ValueError, match="uint8"):
      artifacts.write_pgm(tmp_path / "a.pgm", np.zeros((2, 2)))

  def test_image_grid(self):
    """Frames are tiled row-major with a one-pixel border."""
    frames = np.full((2, 3, 4, 5), 200, dtype=np.uint8)
    grid = artifacts.image_grid(frames)
    assert grid.shape == (2 * 5 + 1, 3 * 6 + 1)
    assert grid[0].max() == 0
    assert grid[1, 1] == 200

  def test_grid_csv(self, tmp_path):
    """One row per (sample, step) with a column per dimension."""
    path = artifacts.write_grid_csv(tmp_path / "g.csv", np.zeros((2, 3, 4)))
    rows = artifacts.read_table(path)
    assert len(rows) == 6
    assert list(rows[0]) == ["sample", "step", "v0", "v1", "v2", "v3"]
