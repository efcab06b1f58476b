# wfstein/utils/report.py
#
# Copyright 2025 wfstein contributors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at:
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import csv
import json
import logging
import os
import threading
from typing import Any, Iterable, Sequence

_write_lock = threading.Lock()


def _ensure_parent(path: str) -> None:
    output_dir = os.path.dirname(path)
    if output_dir and not os.path.exists(output_dir):
        os.makedirs(output_dir, exist_ok=True)
        logging.info(f"Created directory: {output_dir}")


def save_rows_csv(header: Sequence[str], rows: Iterable[Sequence[Any]], path: str) -> str:
    with _write_lock:
        _ensure_parent(path)
        try:
            with open(path, "w", encoding="utf-8", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(header)
                for row in rows:
                    writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
            logging.info(f"Saved CSV: {path}")
        except Exception as e:
            logging.error(f"Failed to save CSV {path}: {e}", exc_info=True)
            raise
    return path


def save_summary_json(data: dict[str, Any], path: str) -> str:
    with _write_lock:
        _ensure_parent(path)
        try:
            with open(path, "w", encoding="utf-8") as f:
                json.dump(data, f, ensure_ascii=False, indent=2)
            logging.info(f"Saved summary (JSON): {path}")
        except Exception as e:
            logging.error(f"Failed to save summary {path}: {e}", exc_info=True)
            raise
    return path
