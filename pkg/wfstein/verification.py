# wfstein/verification.py
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
Release checks for every module, bundled into one machine-readable report.

Checks are registered per group and run in order; a failing or crashing
check becomes a failed record and the suite moves on.
"""

import itertools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from math import comb
from typing import Callable, Iterable, Iterator

import numpy as np
import sympy
from dataclasses_json import dataclass_json
from tqdm import tqdm

from wfstein.config import ExperimentConfig
from wfstein.experiments import build_test_family, rate_study
from wfstein.tools.dirichlet import (
    DirichletLaw,
    beta_tail,
    beta_tail_envelope,
    density_mass,
    expectation,
    generator_Z_batch,
    monomial_moment,
    sample,
)
from wfstein.tools.interpolator import (
    AnalyticFunction,
    AnalyticGrid,
    Interpolant,
    WeightKernel,
    cell_lipschitz_quotients,
    eval_derivative,
    eval_interpolant,
    interpolation_error,
    one_sided_derivative,
    product_decomposition,
    tilde_delta_multi,
    weight_kernel,
)
from wfstein.tools.moments import (
    MomentPattern,
    binomial_tail_bound,
    diffusion,
    drift,
    enumerated_moment,
    fourth_abs_moment,
    fourth_moment_envelope,
    kernel_central_moment,
    multinomial_moment,
    third_moment_closed_form,
    third_moment_envelope,
)
from wfstein.tools.simplex_lattice import (
    GridFunction,
    LatticeState,
    ModelParams,
    enumerate_lattice,
    enumerate_states,
    multi_indices,
)
from wfstein.tools.stein import (
    ancestry_coupling_sim,
    expansion_residual_sample,
    factor_bound,
    generator_expansion_residual,
    series_solutions,
    solve_stein_batch,
)
from wfstein.tools.wf_kernel import (
    build_kernel,
    power_iteration,
    simulate_counts,
    stationary_distribution,
)
from wfstein.utils.stage_tracker import track_stage

GROUPS = ("interpolator", "moments", "kernel", "stein", "coupling", "dirichlet", "expansion", "rate", "beta_tail")
SIGMA_LEVEL = 4.0
SUP_MARGIN = 1.01
OCCUPATION_STEPS = 200_000
EXPANSION_N = (16, 32, 64)
EXPANSION_MARGIN = 0.5
EXPANSION_RATIO = (1.4, 2.6)


@dataclass_json
@dataclass
class VerificationRecord:
    name: str
    group: str
    value: float
    bound: float
    passed: bool
    detail: str = ""


@dataclass_json
@dataclass
class VerificationReport:
    records: list[VerificationRecord] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    @property
    def failures(self) -> list[VerificationRecord]:
        return [r for r in self.records if not r.passed]

    def by_group(self) -> dict[str, list[VerificationRecord]]:
        groups = defaultdict(list)
        for r in self.records:
            groups[r.group].append(r)
        return dict(groups)


@dataclass(frozen=True)
class SuiteContext:
    cfg: ExperimentConfig
    weights: WeightKernel
    progress: bool = False


Check = Callable[[SuiteContext], Iterable[VerificationRecord]]
CHECKS: dict[str, list[Check]] = defaultdict(list)


def check(group: str) -> Callable[[Check], Check]:
    if group not in GROUPS:
        raise ValueError(f"unknown verification group {group!r}")

    def register(func: Check) -> Check:
        CHECKS[group].append(func)
        return func

    return register


def _record(group: str, name: str, value: float, bound: float, passed: bool | None = None,
            detail: str = "") -> VerificationRecord:
    value, bound = float(value), float(bound)
    ok = value <= bound if passed is None else passed
    return VerificationRecord(name=name, group=group, value=value, bound=bound, passed=bool(ok), detail=detail)


def corrupt_weight_kernel(kernel: WeightKernel, i: int = 2, m: int = 4,
                          amount: sympy.Rational = sympy.Rational(1, 1000)) -> WeightKernel:
    """A copy of the kernel with one coefficient perturbed, for exercising the harness."""
    rows = [list(row) for row in kernel.coefficients]
    rows[i][m] += amount
    return WeightKernel(tuple(tuple(row) for row in rows))


def _trig_function(rng: np.random.Generator, d: int, terms: int = 4) -> Callable[[np.ndarray], np.ndarray]:
    freqs = rng.uniform(-3.0, 3.0, size=(terms, d))
    phases = rng.uniform(0.0, 2 * math.pi, size=terms)
    amps = rng.uniform(-1.0, 1.0, size=terms)
    return lambda x: np.cos(np.atleast_2d(x) @ freqs.T + phases) @ amps


def _cubic(rng: np.random.Generator, d: int) -> tuple[Callable[[np.ndarray], np.ndarray], float]:
    exps = [a for order in range(4) for a in multi_indices(d, order)]
    coeffs = rng.uniform(-1.0, 1.0, size=len(exps))
    powers = np.array(exps)

    def func(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.prod(x[:, None, :] ** powers[None, :, :], axis=2) @ coeffs

    return func, float(np.abs(coeffs).sum())


def _stencil_difference(source: AnalyticGrid, base: np.ndarray, a: tuple[int, ...]) -> np.ndarray:
    """Delta^a of the source at each row of base (integer counts)."""
    out = np.zeros(base.shape[0])
    for e in itertools.product(*(range(aj + 1) for aj in a)):
        coef = np.prod([(-1) ** (aj - ej) * comb(aj, ej) for aj, ej in zip(a, e)])
        out += coef * source.at_counts(base + np.asarray(e))
    return out


# ---------------------------------------------------------------- interpolator

@check("interpolator")
def exact_weight_identities(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    for name, ok in ctx.weights.verify().items():
        yield _record("interpolator", f"weights.{name}", 0.0 if ok else 1.0, 0.0, ok, "exact rational identity")


@check("interpolator")
def weights_sum_to_one(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    t = np.random.default_rng(ctx.cfg.mc_seed).random(10_000)
    err = np.max(np.abs(ctx.weights.weights(t).sum(axis=1) - 1.0))
    yield _record("interpolator", "weights.sum_at_random_points", err, 1e-13)
    yield _record("interpolator", "weights.sup_abs_weight", ctx.weights.sup_weight(), math.inf,
                  detail="finite supremum of |alpha_i| over a cell")


@check("interpolator")
def grid_interpolation(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    rng = np.random.default_rng(ctx.cfg.mc_seed)
    for d, N in itertools.product((1, 2), (8, 32)):
        lattice = enumerate_lattice(N, d + 1)
        f = GridFunction(lattice, rng.uniform(-1.0, 1.0, len(lattice)))
        err = np.max(np.abs(eval_interpolant(f, lattice.values, ctx.weights) - f.values))
        yield _record("interpolator", f"interpolates_grid[d={d},N={N}]", err, 4 * np.finfo(float).eps)


@check("interpolator")
def cubic_reproduction(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    rng = np.random.default_rng(ctx.cfg.mc_seed + 1)
    for d, N in itertools.product((1, 2), (8, 32)):
        worst = 0.0
        for _ in range(20 if d == 1 else 5):
            func, norm = _cubic(rng, d)
            x = rng.uniform(-1.0, 1.0, size=(500, d))
            err = np.max(np.abs(eval_interpolant(AnalyticGrid(func, 1.0 / N, d), x, ctx.weights) - func(x)))
            worst = max(worst, err / (1.0 + norm))
        yield _record("interpolator", f"cubic_reproduction[d={d},N={N}]", worst, 1e-9)


@check("interpolator")
def derivative_form_at_grid(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    rng = np.random.default_rng(ctx.cfg.mc_seed + 2)
    for d, N in itertools.product((1, 2), (8, 32)):
        lattice = enumerate_lattice(N, d + 1)
        f = GridFunction(lattice, rng.uniform(-1.0, 1.0, len(lattice)))
        picks = rng.choice(len(lattice), size=min(20, len(lattice)), replace=False)
        worst = 0.0
        for idx in picks:
            u = lattice.state(int(idx))
            for order in range(1, 4):
                for a in multi_indices(d, order):
                    direct = eval_derivative(f, u.value, a, ctx.weights)
                    tilde = tilde_delta_multi(f, u, a) * lattice.delta ** (-order)
                    worst = max(worst, abs(direct - tilde) / max(1.0, abs(tilde)))
        yield _record("interpolator", f"derivative_form[d={d},N={N}]", worst, 1e-12)


@check("interpolator")
def c3_continuity(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    rng = np.random.default_rng(ctx.cfg.mc_seed + 3)
    for d, N in itertools.product((1, 2), (8, 32)):
        source = AnalyticGrid(_trig_function(rng, d), 1.0 / N, d)
        worst = 0.0
        for k in range(1, N):
            x = np.full(d, (k + 0.5) / N)
            x[0] = k / N
            for order in range(0, 4):
                for a in multi_indices(d, order) if order else [(0,) * d]:
                    left = one_sided_derivative(source, x, a, 0, "left", ctx.weights)
                    right = one_sided_derivative(source, x, a, 0, "right", ctx.weights)
                    worst = max(worst, abs(left - right) / max(1.0, abs(left), abs(right)))
        yield _record("interpolator", f"c3_across_faces[d={d},N={N}]", worst, 1e-9)


@check("interpolator")
def derivative_bound(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    rng = np.random.default_rng(ctx.cfg.mc_seed + 4)
    delta = 1.0 / 16
    for d in (1, 2):
        orders = [a for order in range(1, 4) for a in multi_indices(d, order)]
        constants = {a: ctx.weights.derivative_bound_constant(a) for a in orders}
        worst = 0.0
        for _ in range(200 if d == 1 else 50):
            source = AnalyticGrid(_trig_function(rng, d), delta, d)
            x = rng.uniform(0.0, 1.0, size=d)
            k = np.floor(x / delta).astype(np.int64)
            for a in orders:
                value = abs(eval_derivative(source, x, a, ctx.weights))
                bases = k + np.array(list(itertools.product(*(range(5 - aj) for aj in a))))
                stencil_max = np.max(np.abs(_stencil_difference(source, bases, a)))
                bound = constants[a] * delta ** (-sum(a)) * stencil_max
                if bound > 0:
                    worst = max(worst, value / bound)
        yield _record("interpolator", f"derivative_bound_ratio[d={d}]", worst, SUP_MARGIN,
                      detail="|D^a Af| / (C(a) delta^-|a| max |Delta^a f|)")


@check("interpolator")
def third_derivative_lipschitz(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    rng = np.random.default_rng(ctx.cfg.mc_seed + 6)
    delta = 1.0 / 16
    for d in (1, 2):
        orders = multi_indices(d, 3)
        constants = {a: ctx.weights.lipschitz_constant(a) for a in orders}
        unit = np.eye(d, dtype=np.int64)
        worst, measured = 0.0, 0.0
        for _ in range(100 if d == 1 else 30):
            source = AnalyticGrid(_trig_function(rng, d), delta, d)
            k = rng.integers(0, 16, size=d)
            x = (k + rng.random((8, d))) * delta
            y = (k + rng.random((8, d))) * delta
            for a in orders:
                quotient = float(cell_lipschitz_quotients(source, x, y, a, ctx.weights).max())
                stencil_max = 0.0
                for e in unit:
                    b = tuple(int(v) for v in np.add(a, e))
                    bases = k + np.array(list(itertools.product(*(range(5 - bj) for bj in b))))
                    stencil_max = max(stencil_max, float(np.max(np.abs(_stencil_difference(source, bases, b)))))
                bound = constants[a] * delta ** -4 * stencil_max
                measured = max(measured, quotient)
                if bound > 0:
                    worst = max(worst, quotient / bound)
        yield _record("interpolator", f"lipschitz_constant[d={d}]", max(constants.values()), math.inf,
                      detail="finite L(a) for |a|_1 = 3")
        yield _record("interpolator", f"third_derivative_lipschitz_ratio[d={d}]", worst, SUP_MARGIN,
                      detail=f"largest measured quotient {measured:.4g}")


@check("interpolator")
def product_rule(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    rng = np.random.default_rng(ctx.cfg.mc_seed + 5)
    N = 32
    lattice = enumerate_lattice(N, 2)
    constant = ctx.weights.product_rule_constant(1)
    worst = 0.0
    for _ in range(1000):
        f = GridFunction(lattice, rng.uniform(-1.0, 1.0, len(lattice)))
        g = GridFunction(lattice, rng.uniform(-1.0, 1.0, len(lattice)))
        x = rng.uniform(0.0, 1.0 - 5.0 / N)
        _, eps = product_decomposition(f, g, x, ctx.weights)
        scale = np.max(np.abs(np.diff(f.values))) * np.max(np.abs(np.diff(g.values)))
        worst = max(worst, abs(eps) / (constant * scale))
    yield _record("interpolator", "product_rule_ratio", worst, SUP_MARGIN,
                  detail=f"measured constant {constant:.4g}")


@check("interpolator")
def interpolation_order(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    smooth = AnalyticFunction(value=lambda x: np.sin(2.0 * x[:, 0]) * np.sin(3.0 * x[:, 1]))
    report = interpolation_error(smooth, ([0.1, 0.1], [0.9, 0.9]), 1.0 / 8, s=4, seed=ctx.cfg.mc_seed,
                                 kernel=ctx.weights)
    yield _record("interpolator", "interpolation_order", abs(report.fitted_order - 4.0), 0.3,
                  detail=f"fitted order {report.fitted_order:.3f}")
    cubic, norm = _cubic(np.random.default_rng(ctx.cfg.mc_seed), 2)
    exact = interpolation_error(AnalyticFunction(value=cubic), ([0.1, 0.1], [0.9, 0.9]), 1.0 / 8,
                                s=4, seed=ctx.cfg.mc_seed, kernel=ctx.weights)
    yield _record("interpolator", "interpolation_error_cubic", max(exact.errors), 1e-9 * (1.0 + norm))


# ---------------------------------------------------------------- moments

def _moment_instances() -> Iterator[ModelParams]:
    for N in (4, 6):
        for beta in ((1.0, 1.0), (2.0, 2.0), (2.0, 3.0), (1.0, 1.0, 1.0), (2.0, 2.0, 2.0), (2.0, 3.0, 5.0)):
            if sum(beta) / (2 * N) < 1:
                yield ModelParams(N=N, K=len(beta), beta=beta)


@check("moments")
def multinomial_formulas(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    worst = 0.0
    for N in (3, 6):
        for p in ((0.2, 0.3, 0.5), (0.1, 0.6, 0.3), (1 / 3, 1 / 3, 1 / 3)):
            for pattern in MomentPattern:
                for indices in itertools.permutations(range(3), pattern.arity):
                    closed = multinomial_moment(N, p, pattern, *indices)
                    brute = enumerated_moment(N, p, pattern, *indices)
                    worst = max(worst, abs(closed - brute) / max(1.0, abs(brute)))
    yield _record("moments", "multinomial_formulas", worst, 1e-12)


@check("moments")
def drift_and_diffusion(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    worst_b = worst_a = conservation = 0.0
    for params in _moment_instances():
        kernel = build_kernel(params)
        states = kernel.lattice.values
        total = np.array([math.fsum(drift(params, x, i) for i in range(params.K)) for x in states])
        conservation = max(conservation, float(np.max(np.abs(total))))
        for i in range(params.dim):
            mean = kernel_central_moment(kernel, (i,))
            closed = np.array([drift(params, x, i) for x in states])
            worst_b = max(worst_b, np.max(np.abs(mean - closed)))
            for j in range(params.dim):
                second = kernel_central_moment(kernel, (i, j))
                closed = np.array([diffusion(params, x, i, j) for x in states])
                worst_a = max(worst_a, np.max(np.abs(second - closed)))
    yield _record("moments", "drift_matches_kernel", worst_b, 1e-12)
    yield _record("moments", "diffusion_matches_kernel", worst_a, 1e-12)
    yield _record("moments", "drift_sums_to_zero", conservation, 1e-14)


@check("moments")
def third_and_fourth_moments(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    ratio = 0.0
    closed_err = 0.0
    fourth_excess = -math.inf
    for params in _moment_instances():
        kernel = build_kernel(params)
        d = params.dim
        for i, j, k in itertools.product(range(d), repeat=3):
            c = kernel_central_moment(kernel, (i, j, k))
            ratio = max(ratio, np.max(np.abs(c)) / third_moment_envelope(params))
            if i == j == k:
                closed = np.array([third_moment_closed_form(params, x, i) for x in kernel.lattice.values])
                closed_err = max(closed_err, np.max(np.abs(c - closed)))
        for axes in itertools.product(range(d), repeat=4):
            dbar = kernel_central_moment(kernel, axes, absolute=True)
            fourth_excess = max(fourth_excess, np.max(dbar) - fourth_moment_envelope(params))
    yield _record("moments", "third_moment_closed_form", closed_err, 1e-12)
    yield _record("moments", "third_moment_envelope_ratio", ratio, math.inf,
                  detail="sup |c_ijk| / (1/N + Sigma)^2, reported not asserted")
    yield _record("moments", "fourth_moment_envelope", fourth_excess, 0.0,
                  detail="max of dbar minus (2/sqrt(N) + Sigma)^4")


@check("moments")
def fourth_moment_paths(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    params = ModelParams(N=4, K=2, beta=(1.0, 1.0))
    u = LatticeState((2,), 4)
    exact = fourth_abs_moment(params, u, 0, 0, 0, 0, method="enumerate")
    mc = fourth_abs_moment(params, u, 0, 0, 0, 0, method="monte_carlo", draws=ctx.cfg.mc_samples, seed=ctx.cfg.mc_seed)
    yield _record("moments", "fourth_moment_enumeration_vs_monte_carlo", abs(exact.value - mc.value),
                  SIGMA_LEVEL * mc.stderr)


@check("moments")
def binomial_tail(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    excess = -math.inf
    for N in (16, 64):
        params = ModelParams(N=N, K=2, beta=(2.0, 2.0))
        lattice = enumerate_states(params)
        for u in lattice:
            exact, bound = binomial_tail_bound(params, u, 4 * params.K)
            excess = max(excess, exact - bound)
        full, _ = binomial_tail_bound(params, lattice.state(0), N)
        yield _record("moments", f"binomial_tail_total_mass[N={N}]", abs(full - 1.0), 1e-12)
    yield _record("moments", "binomial_tail_bound", excess, 0.0, detail="max of exact minus bound")


# ---------------------------------------------------------------- kernel

@check("kernel")
def kernel_rows_and_stationary_law(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    for params in (ModelParams(N=10, K=2, beta=(2.0, 2.0)), ModelParams(N=6, K=3, beta=(2.0, 2.0, 2.0))):
        tag = f"N={params.N},K={params.K}"
        kernel = build_kernel(params)
        P = kernel.matrix
        yield _record("kernel", f"row_sums[{tag}]", np.max(np.abs(P.sum(axis=1) - 1.0)), 1e-12)
        yield _record("kernel", f"nonnegative[{tag}]", -min(0.0, float(P.min())), 0.0)
        pi = stationary_distribution(kernel)
        yield _record("kernel", f"stationary_residual[{tag}]", pi.residual, 1e-12)
        tv = 0.5 * np.abs(power_iteration(kernel) - pi.pi).sum()
        yield _record("kernel", f"power_iteration_tv[{tag}]", tv, 1e-9)
        if params.K == 3:
            swapped = kernel.lattice.lookup(kernel.lattice.counts[:, ::-1])
            yield _record("kernel", f"exchangeable_symmetry[{tag}]", np.max(np.abs(pi.pi[swapped] - pi.pi)), 1e-12)


@check("kernel")
def simulated_occupation(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    params = ModelParams(N=5, K=2, beta=(2.0, 2.0))
    lattice = enumerate_states(params)
    pi = stationary_distribution(build_kernel(params, lattice))
    path = simulate_counts(params, lattice.state(0), OCCUPATION_STEPS, ctx.cfg.mc_seed)[1:]
    visits = lattice.lookup(path)
    # batch means absorb the autocorrelation of the chain
    batches = visits.reshape(200, -1)
    freq = np.stack([(batches == s).mean(axis=1) for s in range(len(lattice))], axis=1)
    se = freq.std(axis=0, ddof=1) / math.sqrt(freq.shape[0])
    z = np.abs(freq.mean(axis=0) - pi.pi) / np.maximum(se, 1e-12)
    yield _record("kernel", "simulated_occupation_z", float(z.max()), SIGMA_LEVEL)


# ---------------------------------------------------------------- stein

def _stein_instances() -> Iterator[ModelParams]:
    for N in (4, 8, 16, 32):
        for beta in ((1.0, 1.0), (2.0, 2.0), (2.0, 3.0, 5.0)):
            if sum(beta) / (2 * N) < 1:
                yield ModelParams(N=N, K=len(beta), beta=beta)


@check("stein")
def stein_solutions(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    instances = list(_stein_instances())
    for params in tqdm(instances, desc="stein", disable=not ctx.progress):
        tag = f"N={params.N},beta={params.beta}"
        family = build_test_family(params.K, params.delta, ctx.cfg.family_seed, ctx.cfg.c_star)
        kernel = build_kernel(params, enumerate_states(params))
        pi = stationary_distribution(kernel)
        solutions = solve_stein_batch(kernel, pi, family)
        series = series_solutions(kernel, pi, family)

        residual = max(sol.residual for sol in solutions)
        mean = max(abs(sol.stationary_mean) for sol in solutions)
        gap = max(np.max(np.abs(sol.f.values - s.values)) / max(1.0, np.max(np.abs(sol.f.values)))
                  for sol, s in zip(solutions, series))
        excess = -math.inf
        for tf, sol in zip(family, solutions):
            for i, b in enumerate(sol.factors, start=1):
                bound = factor_bound(params, tf.class_constant, i)
                excess = max(excess, (b - bound) / max(bound, 1e-300) - 1e-9)
        yield _record("stein", f"residual[{tag}]", residual, 1e-10)
        yield _record("stein", f"stationary_mean[{tag}]", mean, 1e-10)
        yield _record("stein", f"series_agreement[{tag}]", gap, 1e-8)
        yield _record("stein", f"factor_bounds[{tag}]", excess, 0.0,
                      detail="max relative excess of B_i over c delta^i / (1 - (1 - Sigma)^i)")


# ---------------------------------------------------------------- coupling

@check("coupling")
def ancestry_moments(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    params = ModelParams(N=50, K=2, beta=(2.0, 2.0))
    for tagged in (1, 2):
        est = ancestry_coupling_sim(params, tagged, 20, ctx.cfg.coupling_reps, ctx.cfg.mc_seed,
                                    workers=ctx.cfg.workers, progress=ctx.progress)
        mean, se, expected = est.mean_v1, est.se_v1, est.expected_v1
        name = "E_V1"
        if tagged == 2:
            mean, se, expected = est.mean_pair, est.se_pair, est.expected_pair
            name = "E_N2_V1V2"
        z = max(abs(m - e) / s if s > 0 else (0.0 if abs(m - e) <= 1e-12 else math.inf)
                for m, s, e in zip(mean, se, expected))
        yield _record("coupling", f"{name}_z", z, SIGMA_LEVEL)


# ---------------------------------------------------------------- dirichlet

@check("dirichlet")
def dirichlet_law(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    for beta in ((1.0, 1.0), (2.0, 3.0), (2.0, 2.0, 2.0)):
        law = DirichletLaw(beta)
        yield _record("dirichlet", f"density_mass[{beta}]", abs(density_mass(law) - 1.0), 1e-6)
        worst = 0.0
        for order in range(1, 5):
            for a in multi_indices(law.K, order):
                power = np.asarray(a)
                quad = expectation(law, lambda x: np.prod(
                    np.hstack([x, 1.0 - x.sum(axis=1, keepdims=True)]) ** power, axis=1))
                exact = monomial_moment(law, a)
                worst = max(worst, abs(quad - exact) / exact)
        yield _record("dirichlet", f"monomial_moments[{beta}]", worst, 1e-6)


@check("dirichlet")
def stein_characterization(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    params = ModelParams(N=16, K=2, beta=(2.0, 3.0))
    lattice = enumerate_states(params)
    kernel = build_kernel(params, lattice)
    pi = stationary_distribution(kernel)
    family = {tf.h_id: tf for tf in build_test_family(2, params.delta, ctx.cfg.family_seed, ctx.cfg.c_star)}
    chosen = [family["mono_1"], family["mono_4"], family["exp_neg_sum"]]
    z = sample(DirichletLaw(params.beta), ctx.cfg.mc_seed, ctx.cfg.mc_samples)
    for sol, tf in zip(solve_stein_batch(kernel, pi, chosen), chosen):
        interp = Interpolant(sol.f, ctx.weights)
        values = generator_Z_batch(params, interp.gradient(z), interp.hessian(z), z)
        se = values.std(ddof=1) / math.sqrt(values.size)
        yield _record("dirichlet", f"generator_mean_zero[{tf.h_id}]", abs(values.mean()), SIGMA_LEVEL * se)


@check("beta_tail")
def beta_tail_checks(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    law = DirichletLaw((2.0, 12.0))
    for N in (400, 1600):
        t = 10 * law.K / math.sqrt(N)
        yield _record("beta_tail", f"beta_tail_envelope[N={N}]", beta_tail(law, t),
                      beta_tail_envelope(law, N) + 1e-10)
    grid = np.linspace(0.0, 1.0, 1001)
    tail = np.array([beta_tail(law, t) for t in grid])
    yield _record("beta_tail", "beta_tail_monotone", -min(0.0, float(np.diff(tail).min())), 0.0)
    yield _record("beta_tail", "beta_tail_endpoints", abs(tail[0]) + abs(tail[-1] - 1.0), 1e-12)
    uniform = DirichletLaw((1.0, 1.0))
    yield _record("beta_tail", "beta_tail_uniform_marginal",
                  max(abs(beta_tail(uniform, t) - t) for t in grid[::50]), 1e-12)


# ---------------------------------------------------------------- expansion

@check("expansion")
def generator_expansion(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    beta = (2.0, 12.0)
    coarse = build_test_family(2, 1.0 / EXPANSION_N[0], ctx.cfg.family_seed, ctx.cfg.c_star)
    quartic = next(tf for tf in coarse if tf.h_id == "mono_4")
    eps = []
    for N in EXPANSION_N:
        params = ModelParams(N=N, K=2, beta=beta)
        kernel = build_kernel(params, enumerate_states(params))
        pi = stationary_distribution(kernel)
        sol = solve_stein_batch(kernel, pi, [quartic.on(kernel.lattice)])[0]
        eps.append(expansion_residual_sample(params, sol, 400, ctx.cfg.mc_seed, EXPANSION_MARGIN))

        u = kernel.lattice.state(N // 4)
        at_grid = generator_expansion_residual(params, sol, u.value, EXPANSION_MARGIN)
        yield _record("expansion", f"lhs_at_grid_point[N={N}]", abs(at_grid.lhs - (sol.h(u) - sol.pi_h)), 1e-10)
    for (n1, e1), (n2, e2) in zip(zip(EXPANSION_N, eps), zip(EXPANSION_N[1:], eps[1:])):
        ratio = e1 / e2
        ok = EXPANSION_RATIO[0] <= ratio <= EXPANSION_RATIO[1]
        yield _record("expansion", f"residual_halving[N={n1}->{n2}]", ratio, EXPANSION_RATIO[1], ok,
                      detail=f"max |eps| {e1:.3e} -> {e2:.3e}, accepted ratio window {EXPANSION_RATIO}")


# ---------------------------------------------------------------- rate

@check("rate")
def headline_rate(ctx: SuiteContext) -> Iterator[VerificationRecord]:
    report = rate_study(ctx.cfg, write=False, progress=ctx.progress)
    yield _record("rate", "fitted_slope", report.slope, -0.7, report.slope_ok,
                  detail=f"accepted window [-1.3, -0.7], N_list={report.N_list}")
    yield _record("rate", "scaled_error_bounded", max(report.scaled_errors),
                  report.bound_factor * float(np.median(report.scaled_errors)), report.bounded)
    yield _record("rate", "nonnegative_errors", -min(0.0, min(report.errors)), 0.0)


@track_stage
def run_verification_suite(cfg: ExperimentConfig, groups: Iterable[str] | None = None,
                           weights: WeightKernel | None = None, progress: bool = False) -> VerificationReport:
    """Run every registered check of the selected groups and collect one record per invariant."""
    selected = list(groups) if groups is not None else list(GROUPS)
    unknown = [g for g in selected if g not in GROUPS]
    if unknown:
        raise ValueError(f"unknown verification groups {unknown}; choose from {GROUPS}")

    ctx = SuiteContext(cfg=cfg, weights=weights or weight_kernel(), progress=progress)
    report = VerificationReport()
    debug = logging.getLogger().isEnabledFor(logging.DEBUG)
    for group in selected:
        start = len(report.records)
        for func in CHECKS[group]:
            try:
                for record in func(ctx):
                    report.records.append(record)
                    if not record.passed:
                        logging.warning(f"FAILED {group}/{record.name}: value {record.value:.3e}, bound {record.bound:.3e}")
            except Exception as e:
                logging.error(f"Check {group}/{func.__name__} crashed: {e}", exc_info=debug)
                report.records.append(_record(group, func.__name__, math.nan, math.nan, False, f"error: {e}"))
        done = report.records[start:]
        logging.info(f"Verification group {group}: {sum(r.passed for r in done)}/{len(done)} passed")
    logging.info(f"Verification suite: {len(report.records) - len(report.failures)}/{len(report.records)} passed")
    return report
