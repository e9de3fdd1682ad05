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

"""Logging configuration module.

Long training runs on shared machines emit structured JSON so per-update
records (step, losses) can be filtered as fields; local runs get a short
human-readable format.
"""

import logging
import sys

import dotenv
from pythonjsonlogger.json import JsonFormatter

from flowbelief.core import config


def configure_logging(settings: config.RuntimeSettings | None = None) -> None:
  """Configures the root logger for the current runtime environment.

  Args:
    settings: Process settings; loaded from the environment and `.env` when
      omitted.
  """
  dotenv.load_dotenv()
  settings = settings or config.RuntimeSettings()
  handler = logging.StreamHandler(sys.stdout)

  if settings.is_production:
    handler.setFormatter(
        JsonFormatter(
            "%(asctime)s %(levelname)s %(name)s %(message)s",
            datefmt="%Y-%m-%dT%H:%M:%SZ",
            rename_fields={"levelname": "severity", "asctime": "timestamp"},
        )
    )
  else:
    handler.setFormatter(
        logging.Formatter("%(levelname)s - %(name)s - %(message)s")
    )

  logging.basicConfig(
      level=settings.LOG_LEVEL,
      handlers=[handler],
      force=True,
  )
