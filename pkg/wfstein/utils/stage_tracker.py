# wfstein/utils/stage_tracker.py
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

import logging
import threading
import time
from collections import defaultdict
from datetime import datetime
from functools import wraps


class StageTracker:
    def __init__(self):
        """
        Wall time and call counts per pipeline stage, plus a log of
        failures. Stages run concurrently, so updates take a lock.
        """
        self._lock = threading.Lock()
        self.stage_counts = defaultdict(lambda: {"calls": 0, "seconds": 0.0})
        self.failures = defaultdict(list)

    def add_timing(self, stage: str, seconds: float):
        with self._lock:
            self.stage_counts[stage]["calls"] += 1
            self.stage_counts[stage]["seconds"] += seconds

    def add_failure(self, stage: str, message: str, timestamp: datetime):
        with self._lock:
            self.failures[stage].append({"message": message, "timestamp": timestamp.isoformat()})

    def get_failures(self, stage: str | None = None) -> dict[str, list[dict]]:
        if stage:
            return {stage: list(self.failures[stage])}
        return {k: list(v) for k, v in self.failures.items()}

    def reset(self):
        with self._lock:
            self.stage_counts = defaultdict(lambda: {"calls": 0, "seconds": 0.0})
            self.failures = defaultdict(list)

    def get_summary(self) -> dict[str, dict[str, float]]:
        with self._lock:
            return {stage: dict(counts) for stage, counts in self.stage_counts.items()}


# Global stage tracker instance
stage_tracker = StageTracker()


def track_stage(func):
    @wraps(func)
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        try:
            return func(*args, **kwargs)
        except Exception as e:
            stage_tracker.add_failure(func.__name__, str(e), datetime.now())
            raise
        finally:
            elapsed = time.perf_counter() - start
            stage_tracker.add_timing(func.__name__, elapsed)
            logging.debug(f"Stage {func.__name__} took {elapsed:.3f}s")

    return wrapper
