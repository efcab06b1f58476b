# wfstein/utils/errors.py
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


class WFSteinError(Exception):
    """Base class for every error raised by wfstein."""


class CapacityError(WFSteinError):
    """A state space or enumeration exceeds its configured cap."""


class InvalidStateError(WFSteinError, ValueError):
    """A lattice point is not a state of the simplex S."""


class SingularSystemError(WFSteinError):
    """A linear system that should be regular is numerically singular."""


class DomainError(WFSteinError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class FacePointError(DomainError):
    """A fourth derivative was requested on a cell face, where it does not exist."""


class IndexCollisionError(WFSteinError, ValueError):
    """A moment pattern that needs distinct indices received repeated ones."""


class ConfigError(WFSteinError):
    """An experiment configuration could not be loaded or validated."""
