# wfstein/tools/wf_kernel.py
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
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import gammaln, xlogy

from wfstein.tools.simplex_lattice import (
    DEFAULT_STATE_CAP,
    GridFunction,
    LatticeState,
    ModelParams,
    SimplexLattice,
    enumerate_states,
)
from wfstein.utils.errors import CapacityError, DomainError, InvalidStateError, SingularSystemError

MAX_KERNEL_STATES = 6_000
ROW_BLOCK_ENTRIES = 4_000_000


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    lattice: SimplexLattice
    params: ModelParams
    matrix: np.ndarray

    @property
    def rows(self) -> np.ndarray:
        return self.matrix

    def row(self, u: LatticeState) -> np.ndarray:
        return self.matrix[self.lattice.index_of(u)]

    def expectation(self, f: GridFunction) -> np.ndarray:
        """E_u f(U(1)) for every state u."""
        return self.matrix @ f.values


@dataclass(frozen=True, eq=False)
class StationaryDistribution:
    lattice: SimplexLattice
    pi: np.ndarray
    residual: float

    def expectation(self, f: GridFunction | np.ndarray) -> float:
        values = f.values if isinstance(f, GridFunction) else np.asarray(f)
        return float(self.pi @ values)


def offspring_probabilities(params: ModelParams, u: np.ndarray) -> np.ndarray:
    """Trial probabilities q_j = u_j (1 - Sigma) + p_j for all K types, batched over rows of u."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    p = np.asarray(params.p)
    q = u * (1.0 - params.Sigma) + p[:-1]
    last = np.clip(1.0 - q.sum(axis=1, keepdims=True), 0.0, 1.0)
    return np.hstack([q, last])


def _full_counts(lattice: SimplexLattice) -> np.ndarray:
    counts = lattice.counts
    return np.hstack([counts, (lattice.N - counts.sum(axis=1))[:, None]])


def _log_multinomial_coefficients(lattice: SimplexLattice) -> np.ndarray:
    y = _full_counts(lattice)
    return gammaln(lattice.N + 1) - gammaln(y + 1).sum(axis=1)


def _row_block(params: ModelParams, lattice: SimplexLattice, rows: np.ndarray,
               log_coef: np.ndarray) -> np.ndarray:
    q = offspring_probabilities(params, lattice.values[rows])
    y = _full_counts(lattice)
    log_pmf = log_coef[None, :] + xlogy(y[None, :, :], q[:, None, :]).sum(axis=-1)
    return np.exp(log_pmf)


def transition_row(params: ModelParams, u: LatticeState, lattice: SimplexLattice | None = None) -> np.ndarray:
    lattice = lattice or enumerate_states(params)
    idx = lattice.index_of(u)
    return _row_block(params, lattice, np.array([idx]), _log_multinomial_coefficients(lattice))[0]


def build_kernel(params: ModelParams, lattice: SimplexLattice | None = None, workers: int = 1,
                 state_cap: int = DEFAULT_STATE_CAP, max_states: int = MAX_KERNEL_STATES) -> TransitionKernel:
    lattice = lattice or enumerate_states(params, state_cap=state_cap)
    size = len(lattice)
    if size > max_states:
        raise CapacityError(f"dense kernel over {size} states exceeds the cap of {max_states} (N={params.N}, K={params.K})")

    log_coef = _log_multinomial_coefficients(lattice)
    block = max(1, ROW_BLOCK_ENTRIES // max(1, size * params.K))
    blocks = [np.arange(start, min(start + block, size)) for start in range(0, size, block)]
    build = lambda rows: _row_block(params, lattice, rows, log_coef)
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(build, blocks))
    else:
        parts = [build(rows) for rows in blocks]
    matrix = np.vstack(parts)
    matrix.setflags(write=False)

    row_error = float(np.max(np.abs(matrix.sum(axis=1) - 1.0)))
    logging.debug(f"Built {size}x{size} kernel (N={params.N}, K={params.K}), max row-sum error {row_error:.2e}")
    return TransitionKernel(lattice=lattice, params=params, matrix=matrix)


def stationary_distribution(kernel: TransitionKernel) -> StationaryDistribution:
    P = kernel.matrix
    size = P.shape[0]
    system = P.T - np.eye(size)
    system[-1, :] = 1.0
    rhs = np.zeros(size)
    rhs[-1] = 1.0

    lu, piv = scipy.linalg.lu_factor(system, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= 1e-13 * max(1.0, pivots.max()):
        raise SingularSystemError(
            f"balance equations are singular (smallest pivot {pivots.min():.3e}, N={kernel.params.N})"
        )
    pi = scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)
    if pi.min() < -1e-12:
        raise SingularSystemError(f"stationary solve produced a negative mass {pi.min():.3e}")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    pi.setflags(write=False)

    residual = float(np.abs(pi @ P - pi).sum())
    logging.debug(f"Stationary distribution over {size} states, residual {residual:.2e}")
    return StationaryDistribution(lattice=kernel.lattice, pi=pi, residual=residual)


def power_iteration(kernel: TransitionKernel, steps: int = 10_000) -> np.ndarray:
    pi = np.full(len(kernel.lattice), 1.0 / len(kernel.lattice))
    for _ in range(steps):
        pi = pi @ kernel.matrix
    return pi / pi.sum()


def second_eigenvalue(kernel: TransitionKernel) -> float:
    moduli = np.sort(np.abs(scipy.linalg.eigvals(kernel.matrix)))[::-1]
    return float(moduli[1]) if moduli.size > 1 else 0.0


def apply_generator_U(kernel: TransitionKernel, f: GridFunction, u: LatticeState) -> float:
    idx = kernel.lattice.index_of(u)
    return float(kernel.matrix[idx] @ f.values - f.values[idx])


def generator_vector(kernel: TransitionKernel, f: GridFunction) -> np.ndarray:
    """(P - I) f over all states."""
    return kernel.matrix @ f.values - f.values


def _multinomial_step(rng: np.random.Generator, N: int, q: np.ndarray) -> np.ndarray:
    # sequential conditional binomials; the last type takes the remainder
    out = np.zeros(q.size - 1, dtype=np.int64)
    remaining, mass = N, 1.0
    for j in range(q.size - 1):
        if remaining == 0 or mass <= 0.0:
            break
        prob = min(1.0, max(0.0, q[j] / mass))
        out[j] = rng.binomial(remaining, prob)
        remaining -= out[j]
        mass -= q[j]
    return out


def simulate_counts(params: ModelParams, u0: LatticeState, T: int, seed: int) -> np.ndarray:
    if T < 0:
        raise DomainError(f"T must be non-negative, got {T}")
    start = np.asarray(u0.counts, dtype=np.int64)
    if start.size != params.dim or start.min(initial=0) < 0 or start.sum() > params.N:
        raise InvalidStateError(f"initial state {u0.counts} is not in S (N={params.N}, K={params.K})")

    rng = np.random.default_rng(seed)
    path = np.empty((T + 1, params.dim), dtype=np.int64)
    path[0] = start
    for t in range(T):
        q = offspring_probabilities(params, path[t] / params.N)[0]
        path[t + 1] = _multinomial_step(rng, params.N, q)
    return path


def simulate(params: ModelParams, u0: LatticeState, T: int, seed: int) -> list[LatticeState]:
    path = simulate_counts(params, u0, T, seed)
    return [LatticeState(tuple(row), params.N) for row in path]
