# wfstein/tools/stein.py
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
The discrete Stein equation G_U f = h - pi h, its solution f_h with
pi f_h = 0, the Stein factors B_i(f_h), the ancestry coupling behind the
factor bounds, and the comparison of A G_U A f_h with the diffusion
generator.
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
from dataclasses_json import dataclass_json
from tqdm import tqdm

from wfstein.tools.dirichlet import generator_Z_batch
from wfstein.tools.interpolator import Interpolant, eval_interpolant
from wfstein.tools.simplex_lattice import (
    GridFunction,
    LatticeState,
    ModelParams,
    SimplexLattice,
    sup_difference,
)
from wfstein.tools.moments import moment_report
from wfstein.tools.wf_kernel import StationaryDistribution, TransitionKernel, second_eigenvalue
from wfstein.utils.errors import DomainError, SingularSystemError

SERIES_TOLERANCE = 1e-13
COUPLING_CHUNK = 25_000


@dataclass(frozen=True, eq=False)
class TestFunction:
    """A lattice test function with a certified class constant.

    |Delta^a h| <= class_constant * delta^|a| for 1 <= |a| <= 4 on every in-simplex stencil.
    """

    __test__ = False

    h_id: str
    h: GridFunction
    class_constant: float
    func: Callable[[np.ndarray], np.ndarray] | None = None
    polynomial: dict[tuple[int, ...], float] | None = None

    def on(self, lattice: SimplexLattice) -> GridFunction:
        if self.func is None:
            raise DomainError(f"test function {self.h_id} has no continuous form to restrict")
        return GridFunction.from_callable(lattice, self.func)


def certify_class_constant(h: GridFunction) -> float:
    delta = h.delta
    return max(sup_difference(h, i) / delta ** i for i in range(1, 5))


@dataclass(frozen=True, eq=False)
class SteinSolution:
    h: GridFunction
    f: GridFunction
    pi_h: float
    residual: float
    stationary_mean: float
    factors: tuple[float, float, float, float]
    kernel: TransitionKernel = field(repr=False)
    pi: StationaryDistribution = field(repr=False)


def _as_grid(h: TestFunction | GridFunction) -> GridFunction:
    return h.h if isinstance(h, TestFunction) else h


def _check_lattice(grid: GridFunction, lattice: SimplexLattice) -> None:
    if len(grid.lattice) != len(lattice) or not np.array_equal(grid.lattice.counts, lattice.counts):
        raise DomainError("test function, kernel and stationary law must share one lattice")


def solve_stein_batch(kernel: TransitionKernel, pi: StationaryDistribution,
                      hs: list[TestFunction | GridFunction]) -> list[SteinSolution]:
    """Solve the Stein equation for several test functions with one factorization."""
    lattice = kernel.lattice
    grids = [_as_grid(h) for h in hs]
    for grid in grids:
        _check_lattice(grid, lattice)
    if not grids:
        return []

    P = kernel.matrix
    pi_vec = pi.pi
    size = len(lattice)
    # (P - I - 1 pi^T) f = h - pi h forces pi f = 0
    system = P - np.eye(size) - np.outer(np.ones(size), pi_vec)
    lu, piv = scipy.linalg.lu_factor(system, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= 1e-14 * max(1.0, pivots.max()):
        raise SingularSystemError(f"Stein system is singular (smallest pivot {pivots.min():.3e}); check the kernel")

    H = np.column_stack([g.values for g in grids])
    pi_h = pi_vec @ H
    rhs = H - pi_h[None, :]
    F = scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)
    residuals = np.max(np.abs(P @ F - F - rhs), axis=0)
    means = pi_vec @ F

    solutions = []
    for col, grid in enumerate(grids):
        f = GridFunction(lattice, F[:, col])
        factors = tuple(sup_difference(f, i) for i in range(1, 5))
        solutions.append(SteinSolution(
            h=grid, f=f, pi_h=float(pi_h[col]), residual=float(residuals[col]),
            stationary_mean=float(means[col]), factors=factors, kernel=kernel, pi=pi,
        ))
    logging.debug(f"Stein solve N={lattice.N}: {len(grids)} functions, max residual {residuals.max():.2e}")
    return solutions


def solve_stein(kernel: TransitionKernel, pi: StationaryDistribution, h: TestFunction | GridFunction) -> SteinSolution:
    return solve_stein_batch(kernel, pi, [h])[0]


def stein_factors(sol: SteinSolution) -> tuple[float, float, float, float]:
    return tuple(sup_difference(sol.f, i) for i in range(1, 5))


def factor_bound(params: ModelParams, c: float, i: int) -> float:
    """c delta^i / (1 - (1 - Sigma)^i)."""
    return c * params.delta ** i / (1.0 - (1.0 - params.Sigma) ** i)


def series_horizon(kernel: TransitionKernel, tolerance: float = SERIES_TOLERANCE) -> int:
    lam = second_eigenvalue(kernel)
    if lam <= 0.0:
        return 1
    return int(math.ceil(math.log(tolerance * (1.0 - lam)) / math.log(lam)))


def series_solutions(kernel: TransitionKernel, pi: StationaryDistribution,
                     hs: list[TestFunction | GridFunction], T: int | None = None) -> list[GridFunction]:
    """-sum_{t<=T} (P^t h - pi h) for each h, the truncated series solving G_U f = h - pi h."""
    grids = [_as_grid(h) for h in hs]
    T = series_horizon(kernel) if T is None else T
    H = np.column_stack([g.values for g in grids])
    centred = H - (pi.pi @ H)[None, :]
    total = np.zeros_like(centred)
    for _ in range(T + 1):
        total += centred
        centred = kernel.matrix @ centred
    logging.debug(f"Series oracle summed {T + 1} terms for {len(grids)} functions")
    return [GridFunction(kernel.lattice, -total[:, col]) for col in range(len(grids))]


def series_solution(kernel: TransitionKernel, pi: StationaryDistribution, h: TestFunction | GridFunction,
                    T: int | None = None) -> GridFunction:
    return series_solutions(kernel, pi, [h], T)[0]


@dataclass_json
@dataclass
class CouplingEstimate:
    N: int
    tagged: int
    reps: int
    t: list[int]
    mean_v1: list[float]
    se_v1: list[float]
    expected_v1: list[float]
    mean_pair: list[float] | None = None
    se_pair: list[float] | None = None
    expected_pair: list[float] | None = None
    displayed_pair: list[float] | None = None


def _coupling_chunk(params: ModelParams, tagged: int, T: int, reps: int,
                    seed: np.random.SeedSequence) -> np.ndarray:
    rng = np.random.default_rng(seed)
    N, keep = params.N, 1.0 - params.Sigma
    c1 = np.ones(reps, dtype=np.int64)
    c2 = np.ones(reps, dtype=np.int64)
    # stats[q] = (mean, M2) per step, q = 0 for V1 and q = 1 for C1 C2
    stats = np.zeros((2, 2, T + 1))
    for t in range(T + 1):
        if t > 0:
            q1 = c1 / N * keep
            if tagged == 1:
                c1 = rng.binomial(N, q1)
            else:
                q2 = c2 / N * keep
                new1 = rng.binomial(N, q1)
                c2 = rng.binomial(N - new1, np.clip(q2 / (1.0 - q1), 0.0, 1.0))
                c1 = new1
        stats[0, :, t] = _mean_m2(c1 / N)
        if tagged == 2:
            stats[1, :, t] = _mean_m2((c1 * c2).astype(float))
    return stats


def _mean_m2(v: np.ndarray) -> tuple[float, float]:
    """Sample mean and sum of squared deviations, exactly (v[0], 0) for a constant sample."""
    if np.all(v == v[0]):
        return float(v[0]), 0.0
    mean = float(v.mean())
    return mean, float(np.sum((v - mean) ** 2))


def _merge_chunks(parts: list[np.ndarray], sizes: list[int]) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise (Chan) merge of per-chunk means and M2 arrays."""
    mean, m2 = parts[0][:, 0].copy(), parts[0][:, 1].copy()
    n = sizes[0]
    for part, nb in zip(parts[1:], sizes[1:]):
        d = part[:, 0] - mean
        total = n + nb
        mean = mean + d * (nb / total)
        m2 = m2 + part[:, 1] + d ** 2 * (n * nb / total)
        n = total
    return mean, m2


def ancestry_coupling_sim(params: ModelParams, tagged: int, T: int, reps: int, seed: int,
                          workers: int = 1, progress: bool = False) -> CouplingEstimate:
    """Descendant counts of one or two tagged individuals, with mutated lines removed.

    Replicates run in chunks with independent streams spawned from seed, so the
    result does not depend on the number of workers.
    """
    if tagged not in (1, 2):
        raise DomainError(f"tagged must be 1 or 2, got {tagged}")
    if T < 0 or reps < 1:
        raise DomainError(f"need T >= 0 and reps >= 1, got T={T}, reps={reps}")
    if tagged == 2 and params.N < 2:
        raise DomainError("two tagged individuals need N >= 2")

    sizes = [min(COUPLING_CHUNK, reps - start) for start in range(0, reps, COUPLING_CHUNK)]
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    run = lambda job: _coupling_chunk(params, tagged, T, *job)
    jobs = list(zip(sizes, streams))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(tqdm(pool.map(run, jobs), total=len(jobs), disable=not progress, desc="coupling"))
    else:
        parts = [run(job) for job in tqdm(jobs, disable=not progress, desc="coupling")]
    means, m2 = _merge_chunks(parts, sizes)

    def mean_se(q: int) -> tuple[list[float], list[float]]:
        se = np.sqrt(m2[q] / max(reps - 1, 1) / reps)
        return means[q].tolist(), se.tolist()

    ts = np.arange(T + 1)
    keep = 1.0 - params.Sigma
    mean_v1, se_v1 = mean_se(0)
    estimate = CouplingEstimate(
        N=params.N, tagged=tagged, reps=reps, t=ts.tolist(),
        mean_v1=mean_v1, se_v1=se_v1, expected_v1=(params.delta * keep ** ts).tolist(),
    )
    if tagged == 2:
        estimate.mean_pair, estimate.se_pair = mean_se(1)
        # exact: E[C1 C2](t) = ((N-1)/N)^t (1-Sigma)^2t; the closed form N(N-1) delta^2 (1-Sigma)^2t
        # agrees at t = 1 and bounds it from above afterwards
        ratio = (params.N - 1) / params.N
        estimate.expected_pair = (ratio ** ts * keep ** (2 * ts)).tolist()
        estimate.displayed_pair = (ratio * keep ** (2 * ts)).tolist()
    return estimate


@dataclass(frozen=True)
class ExpansionResidual:
    lhs: float
    rhs: float
    eps: float


def _interpolated_generator(sol: SteinSolution) -> GridFunction:
    lattice = sol.f.lattice
    af = eval_interpolant(sol.f, lattice.values)
    return GridFunction(lattice, sol.kernel.matrix @ af - af)


def _check_region(params: ModelParams, lattice: SimplexLattice, x: np.ndarray, margin: float | None) -> None:
    if margin is None and params.N <= 100 * params.K ** 2:
        raise DomainError(f"the inner region needs N > 100 K^2, got N={params.N}, K={params.K}")
    top = math.floor(lattice.inner_count_bound(margin))
    if top < 0:
        raise DomainError(f"inner region is empty for N={params.N}, margin={margin}")
    if top + 4 * lattice.dim > lattice.N:
        raise DomainError(f"stencils of the inner region leave S for N={params.N}, margin={margin}")
    outside = ~lattice.in_inner_hull(x, margin)
    if outside.any():
        raise DomainError(f"point {x[outside][0]} is outside the inner region hull")


def expansion_terms(params: ModelParams, sol: SteinSolution, x: np.ndarray,
                    margin: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """A(G_U(A f_h))(x) and delta G_Z A f_h(x) for a batch of points."""
    lattice = sol.f.lattice
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _check_region(params, lattice, x, margin)
    lhs = eval_interpolant(_interpolated_generator(sol), x)
    interp = Interpolant(sol.f)
    rhs = params.delta * generator_Z_batch(params, interp.gradient(x), interp.hessian(x), x)
    return np.atleast_1d(lhs), rhs


def generator_expansion_residual(params: ModelParams, sol: SteinSolution, x: np.ndarray,
                                 margin: float | None = None) -> ExpansionResidual:
    lhs, rhs = expansion_terms(params, sol, np.asarray(x, dtype=float).reshape(1, -1), margin)
    return ExpansionResidual(lhs=float(lhs[0]), rhs=float(rhs[0]), eps=float(lhs[0] - rhs[0]))


def expansion_residual_sample(params: ModelParams, sol: SteinSolution, n: int, seed: int,
                              margin: float | None = None) -> float:
    """max |eps| over n points drawn uniformly from the hull of the inner region."""
    lattice = sol.f.lattice
    top = math.floor(lattice.inner_count_bound(margin))
    rng = np.random.default_rng(seed)
    x = rng.dirichlet(np.ones(params.K), size=n)[:, :-1] * (max(top, 0) / params.N)
    lhs, rhs = expansion_terms(params, sol, x, margin)
    return float(np.max(np.abs(lhs - rhs)))


def taylor_remainder(sol: SteinSolution, u: LatticeState) -> float:
    """G_U(A f)(u) minus its drift, diffusion and third-moment terms at the state u."""
    lattice = sol.f.lattice
    params = sol.kernel.params
    idx = lattice.index_of(u)
    x = u.value
    d = lattice.dim
    interp = Interpolant(sol.f)

    row = sol.kernel.matrix[idx]
    steps = lattice.values - x[None, :]
    generator = float(row @ eval_interpolant(sol.f, lattice.values) - interp(x))

    report = moment_report(params, u)
    grad = interp.gradient(x)[0]
    hess = interp.hessian(x)[0]
    expansion = float(report.b @ grad + 0.5 * np.sum(report.a * hess))
    unit = np.eye(d, dtype=int)
    for i, j, k in itertools.product(range(d), repeat=3):
        c_ijk = float(row @ (steps[:, i] * steps[:, j] * steps[:, k]))
        expansion += c_ijk * float(interp.derivative(x, tuple(unit[i] + unit[j] + unit[k]))) / 6.0
    return generator - expansion
