# wfstein/tools/moments.py
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

"""
Conditional moments of one Wright-Fisher step.

Axes are 0-based: axis i refers to the coordinate u_{i+1} of the state.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.special import gammaln, xlogy
from scipy.stats import binom

from wfstein.tools.simplex_lattice import LatticeState, ModelParams, SimplexLattice, enumerate_lattice
from wfstein.tools.wf_kernel import TransitionKernel, offspring_probabilities, transition_row
from wfstein.utils.errors import CapacityError, DomainError, IndexCollisionError

ENUMERATION_CAP = 500_000
MC_DRAWS = 1_000_000


class MomentPattern(Enum):
    I = "i"
    I2 = "i^2"
    IJ = "ij"
    IJK = "ijk"
    I2J = "i^2j"
    I3 = "i^3"

    @property
    def arity(self) -> int:
        return {"i": 1, "i^2": 1, "ij": 2, "ijk": 3, "i^2j": 2, "i^3": 1}[self.value]


def multinomial_moment(N: int, p: Sequence[float], pattern: MomentPattern | str, *indices: int) -> float:
    """Closed-form mixed moments of X ~ Multinomial(N, p)."""
    pattern = MomentPattern(pattern)
    if len(indices) != pattern.arity:
        raise DomainError(f"pattern {pattern.value} takes {pattern.arity} indices, got {indices}")
    if len(set(indices)) != len(indices):
        raise IndexCollisionError(f"pattern {pattern.value} needs distinct indices, got {indices}")
    p = np.asarray(p, dtype=float)
    q = [float(p[i]) for i in indices]
    N1, N2, N3 = N, N * (N - 1), N * (N - 1) * (N - 2)

    match pattern:
        case MomentPattern.I:
            return N1 * q[0]
        case MomentPattern.I2:
            return N2 * q[0] ** 2 + N1 * q[0]
        case MomentPattern.IJ:
            return N2 * q[0] * q[1]
        case MomentPattern.IJK:
            return N3 * q[0] * q[1] * q[2]
        case MomentPattern.I2J:
            return N3 * q[0] ** 2 * q[1] + N2 * q[0] * q[1]
        case MomentPattern.I3:
            return N3 * q[0] ** 3 + 3 * N2 * q[0] ** 2 + N1 * q[0]


def multinomial_table(N: int, p: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """All outcome vectors of Multinomial(N, p) with their probabilities."""
    p = np.asarray(p, dtype=float)
    lattice = enumerate_lattice(N, p.size, state_cap=ENUMERATION_CAP)
    outcomes = np.hstack([lattice.counts, (N - lattice.counts.sum(axis=1))[:, None]])
    log_pmf = gammaln(N + 1) - gammaln(outcomes + 1).sum(axis=1) + xlogy(outcomes, p[None, :]).sum(axis=1)
    return outcomes, np.exp(log_pmf)


def enumerated_moment(N: int, p: Sequence[float], pattern: MomentPattern | str, *indices: int) -> float:
    outcomes, pmf = multinomial_table(N, p)
    pattern = MomentPattern(pattern)
    powers = {
        MomentPattern.I: (1,), MomentPattern.I2: (2,), MomentPattern.IJ: (1, 1),
        MomentPattern.IJK: (1, 1, 1), MomentPattern.I2J: (2, 1), MomentPattern.I3: (3,),
    }[pattern]
    term = np.ones(pmf.size)
    for idx, power in zip(indices, powers):
        term = term * outcomes[:, idx].astype(float) ** power
    return float(pmf @ term)


def _state_vector(u: LatticeState | np.ndarray) -> np.ndarray:
    return u.value if isinstance(u, LatticeState) else np.asarray(u, dtype=float)


def ubar(params: ModelParams, u: LatticeState | np.ndarray) -> np.ndarray:
    """ubar_i = u_i Sigma - p_i for the first K-1 coordinates."""
    return _state_vector(u) * params.Sigma - np.asarray(params.p[:-1])


def drift(params: ModelParams, u: LatticeState | np.ndarray, i: int) -> float:
    """b_i(u) = -ubar_i(u); i = K-1 is the implied last type, -(u_K Sigma - p_K)."""
    if i == params.K - 1:
        last = 1.0 - math.fsum(_state_vector(u))
        return float(-(last * params.Sigma - params.p[-1]))
    if not 0 <= i < params.K - 1:
        raise DomainError(f"drift index {i} outside 0..{params.K - 1}")
    return float(-ubar(params, u)[i])


def _diffusion_from(u: np.ndarray, ub: np.ndarray, N: int, i: int, j: int) -> float:
    kron = 1.0 if i == j else 0.0
    return float(ub[i] * ub[j] + (u[i] - ub[i]) * (kron - (u[j] - ub[j])) / N)


def diffusion(params: ModelParams, u: LatticeState | np.ndarray, i: int, j: int) -> float:
    x = _state_vector(u)
    return _diffusion_from(x, ubar(params, x), params.N, i, j)


@dataclass(frozen=True)
class MomentReport:
    state: LatticeState
    b: np.ndarray
    a: np.ndarray
    c_bound: float
    dbar_bound: float


def third_moment_envelope(params: ModelParams) -> float:
    return (1.0 / params.N + params.Sigma) ** 2


def fourth_moment_envelope(params: ModelParams) -> float:
    return (2.0 / math.sqrt(params.N) + params.Sigma) ** 4


def moment_report(params: ModelParams, u: LatticeState) -> MomentReport:
    x = u.value
    ub = ubar(params, x)
    d = params.dim
    a = np.array([[_diffusion_from(x, ub, params.N, i, j) for j in range(d)] for i in range(d)])
    return MomentReport(
        state=u, b=-ub, a=a,
        c_bound=third_moment_envelope(params),
        dbar_bound=fourth_moment_envelope(params),
    )


def kernel_central_moment(kernel: TransitionKernel, axes: Sequence[int], absolute: bool = False) -> np.ndarray:
    """E_u prod_{a in axes} (U_a(1) - u_a) at every state, by enumeration over the kernel rows."""
    values = kernel.lattice.values
    prod = np.ones_like(kernel.matrix)
    for axis in axes:
        prod = prod * (values[None, :, axis] - values[:, None, axis])
    if absolute:
        prod = np.abs(prod)
    return np.sum(kernel.matrix * prod, axis=1)


def _row_moment(params: ModelParams, u: LatticeState, axes: Sequence[int], absolute: bool,
                lattice: SimplexLattice | None, cap: int) -> float:
    lattice = lattice or enumerate_lattice(params.N, params.K, state_cap=cap)
    if len(lattice) > cap:
        raise CapacityError(f"{len(lattice)} outcome vectors exceed the enumeration cap {cap}")
    row = transition_row(params, u, lattice)
    prod = np.ones(len(lattice))
    x = u.value
    for axis in axes:
        prod = prod * (lattice.values[:, axis] - x[axis])
    if absolute:
        prod = np.abs(prod)
    return float(row @ prod)


@dataclass(frozen=True)
class ThirdMoment:
    value: float
    envelope: float


def third_moment_exact(params: ModelParams, u: LatticeState, i: int, j: int, k: int,
                       lattice: SimplexLattice | None = None, cap: int = ENUMERATION_CAP) -> ThirdMoment:
    value = _row_moment(params, u, (i, j, k), False, lattice, cap)
    return ThirdMoment(value=value, envelope=third_moment_envelope(params))


def third_moment_closed_form(params: ModelParams, u: LatticeState | np.ndarray, i: int) -> float:
    """c_iii from the binomial marginal: -ubar^3 - (3/N) ubar q (1-q) + q (1-q)(1-2q)/N^2."""
    x = _state_vector(u)
    ub = float(ubar(params, x)[i])
    q = x[i] - ub
    N = params.N
    return -ub ** 3 - 3.0 * ub * q * (1.0 - q) / N + q * (1.0 - q) * (1.0 - 2.0 * q) / N ** 2


@dataclass(frozen=True)
class FourthMoment:
    value: float
    stderr: float
    bound: float
    method: str


def fourth_abs_moment(params: ModelParams, u: LatticeState, i: int, j: int, k: int, l: int,
                      method: str = "auto", draws: int = MC_DRAWS, seed: int = 0,
                      lattice: SimplexLattice | None = None, cap: int = ENUMERATION_CAP) -> FourthMoment:
    axes = (i, j, k, l)
    bound = fourth_moment_envelope(params)
    if method == "auto":
        size = len(lattice) if lattice is not None else math.comb(params.N + params.K - 1, params.K - 1)
        method = "enumerate" if size <= cap else "monte_carlo"

    if method == "enumerate":
        value = _row_moment(params, u, axes, True, lattice, cap)
        return FourthMoment(value=value, stderr=0.0, bound=bound, method=method)
    if method != "monte_carlo":
        raise DomainError(f"unknown method {method!r}")

    rng = np.random.default_rng(seed)
    q = offspring_probabilities(params, u.value)[0]
    draws_counts = rng.multinomial(params.N, q, size=draws)[:, :-1]
    x = u.value
    prod = np.ones(draws)
    for axis in axes:
        prod = prod * (draws_counts[:, axis] / params.N - x[axis])
    prod = np.abs(prod)
    value = float(prod.mean())
    stderr = float(prod.std(ddof=1) / math.sqrt(draws))
    logging.debug(f"Monte Carlo fourth moment at {u.counts}: {value:.3e} +/- {stderr:.1e}")
    return FourthMoment(value=value, stderr=stderr, bound=bound, method=method)


def binomial_tail_bound(params: ModelParams, u: LatticeState, M: int) -> tuple[float, float]:
    """P_u(U_K(1) <= M/N) and its explicit upper bound."""
    p_last = params.p[-1]
    if params.Sigma <= p_last:
        raise DomainError(f"the tail bound needs Sigma > p_K, got Sigma={params.Sigma}, p_K={p_last}")
    if M < 0:
        raise DomainError(f"M must be non-negative, got {M}")
    u_last = u.last
    q_last = u_last * (1.0 - params.Sigma) + p_last
    exact = float(binom.cdf(M, params.N, min(1.0, q_last)))
    log_bound = (
        math.log(M + 1) + M * math.log(params.N) - M * math.log(params.Sigma - p_last)
        + params.N * math.log1p(-u_last * (1.0 - params.Sigma))
    )
    return exact, math.exp(min(log_bound, 700.0))
