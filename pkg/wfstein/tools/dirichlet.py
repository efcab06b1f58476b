# wfstein/tools/dirichlet.py
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
The Dirichlet limit law and the Wright-Fisher diffusion generator.

Points are given by their first K-1 coordinates; x_K = 1 - sum(x).
"""

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import betainc, gammaln, roots_jacobi, roots_legendre

from wfstein.tools.simplex_lattice import ModelParams
from wfstein.utils.errors import DomainError

QUADRATURE_ORDER = 64


@dataclass(frozen=True)
class DirichletLaw:
    beta: tuple[float, ...]
    s: float = field(init=False)

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta)
        if len(beta) < 2 or any(b <= 0 for b in beta):
            raise DomainError(f"Dirichlet parameters must be >= 2 positive reals, got {beta}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "s", math.fsum(beta))

    @classmethod
    def from_params(cls, params: ModelParams) -> "DirichletLaw":
        return cls(params.beta)

    @property
    def K(self) -> int:
        return len(self.beta)

    @property
    def dim(self) -> int:
        return self.K - 1

    @property
    def log_normalizer(self) -> float:
        return float(gammaln(self.s) - gammaln(np.asarray(self.beta)).sum())


def _full_point(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.hstack([x, 1.0 - x.sum(axis=1, keepdims=True)])


def density(law: DirichletLaw, x: np.ndarray) -> float | np.ndarray:
    single = np.ndim(x) == 1
    full = _full_point(x)
    if full.shape[1] != law.K:
        raise DomainError(f"points need {law.dim} coordinates, got {full.shape[1] - 1}")
    if np.any(full <= 0.0):
        raise DomainError("density is only defined on the open simplex")
    log_density = law.log_normalizer + ((np.asarray(law.beta) - 1.0) * np.log(full)).sum(axis=1)
    out = np.exp(log_density)
    return float(out[0]) if single else out


def monomial_moment(law: DirichletLaw, a: Sequence[int]) -> float:
    """E prod_i Z_i^a_i; a may cover all K coordinates or only the first K-1."""
    a = np.asarray(a, dtype=float)
    if a.size == law.dim:
        a = np.append(a, 0.0)
    if a.size != law.K or np.any(a < 0):
        raise DomainError(f"multi-index {tuple(a)} does not fit K={law.K}")
    beta = np.asarray(law.beta)
    # ratio of rising factorials, in log space
    log_moment = (gammaln(beta + a) - gammaln(beta)).sum() - (gammaln(law.s + a.sum()) - gammaln(law.s))
    return float(np.exp(log_moment))


def sample(law: DirichletLaw, seed: int, n: int) -> np.ndarray:
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    rng = np.random.default_rng(seed)
    gammas = rng.gamma(shape=np.asarray(law.beta), size=(n, law.K))
    return (gammas / gammas.sum(axis=1, keepdims=True))[:, :-1]


def beta_tail(law: DirichletLaw, t: float) -> float:
    """P(Z_K <= t) with Z_K ~ Beta(beta_K, s - beta_K)."""
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t}")
    beta_last = law.beta[-1]
    return float(betainc(beta_last, law.s - beta_last, t))


def beta_tail_envelope(law: DirichletLaw, N: int, K: int | None = None) -> float:
    """Explicit upper bound for P(Z_K <= 10K/sqrt(N))."""
    K = K or law.K
    beta_last = law.beta[-1]
    t = 10 * K / math.sqrt(N)
    log_prefactor = gammaln(law.s) - gammaln(law.s - beta_last) - gammaln(beta_last)
    correction = 1.0 + (1.0 - 1.0 / math.sqrt(N)) ** (-abs(law.s - beta_last - 1.0))
    return float(math.exp(log_prefactor) * t ** beta_last / beta_last * correction)


def apply_generator_Z(params: ModelParams | DirichletLaw, grad: np.ndarray, hess: np.ndarray, x: np.ndarray) -> float:
    return float(generator_Z_batch(params, np.atleast_2d(grad), np.asarray(hess)[None, ...], np.atleast_2d(x))[0])


def generator_Z_batch(params: ModelParams | DirichletLaw, grad: np.ndarray, hess: np.ndarray, x: np.ndarray) -> np.ndarray:
    """1/2 [sum_ij x_i (delta_ij - x_j) hess_ij + sum_i (beta_i - s x_i) grad_i] for n points."""
    beta = np.asarray(params.beta[:-1])
    covariance = x[:, :, None] * (np.eye(x.shape[1])[None, :, :] - x[:, None, :])
    second = np.einsum("nij,nij->n", covariance, hess)
    first = np.einsum("ni,ni->n", beta[None, :] - params.s * x, grad)
    return 0.5 * (second + first)


@functools.lru_cache(maxsize=64)
def _beta_rule(a: float, b: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    # Gauss-Jacobi nodes for Beta(a, b) on (0, 1)
    nodes, weights = roots_jacobi(order, b - 1.0, a - 1.0)
    return (nodes + 1.0) / 2.0, weights / weights.sum()


def quadrature_rule(law: DirichletLaw, order: int = QUADRATURE_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Jacobi rule for Z on stick-breaking coordinates.

    Z_i = W_i (1 - sum_{j<i} Z_j) with independent W_i ~ Beta(beta_i, sum_{j>i} beta_j),
    so a polynomial of degree <= 2 order - 1 in every W_i is integrated exactly.
    """
    beta = np.asarray(law.beta)
    rules = [_beta_rule(float(beta[i]), float(beta[i + 1:].sum()), order) for i in range(law.dim)]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    sticks = np.column_stack([g.ravel() for g in grids])
    weights = np.prod(np.column_stack([w.ravel() for w in wgrids]), axis=1)

    points = np.empty_like(sticks)
    remaining = np.ones(sticks.shape[0])
    for i in range(law.dim):
        points[:, i] = sticks[:, i] * remaining
        remaining = remaining - points[:, i]
    return points, weights


def expectation(law: DirichletLaw, func: Callable[[np.ndarray], np.ndarray], order: int = QUADRATURE_ORDER) -> float:
    points, weights = quadrature_rule(law, order)
    return float(weights @ np.asarray(func(points), dtype=float))


def density_mass(law: DirichletLaw, order: int = QUADRATURE_ORDER) -> float:
    """Integral of the density over the simplex by collapsed Gauss-Legendre quadrature."""
    nodes, weights = roots_legendre(order)
    nodes, weights = (nodes + 1.0) / 2.0, weights / 2.0
    grids = np.meshgrid(*([nodes] * law.dim), indexing="ij")
    wgrids = np.meshgrid(*([weights] * law.dim), indexing="ij")
    t = np.column_stack([g.ravel() for g in grids])
    w = np.prod(np.column_stack([g.ravel() for g in wgrids]), axis=1)

    x = np.empty_like(t)
    remaining = np.ones(t.shape[0])
    for i in range(law.dim):
        x[:, i] = t[:, i] * remaining
        remaining = remaining - x[:, i]
    return float(np.sum(w * _density_interior(law, x) * _collapsed_jacobian(t)))


def _collapsed_jacobian(t: np.ndarray) -> np.ndarray:
    # d x / d t for x_i = t_i prod_{j<i} (1 - t_j)
    jac = np.ones(t.shape[0])
    for i in range(1, t.shape[1]):
        jac = jac * (1.0 - t[:, :i]).prod(axis=1)
    return jac


def _density_interior(law: DirichletLaw, x: np.ndarray) -> np.ndarray:
    full = _full_point(x)
    with np.errstate(divide="ignore"):
        log_density = law.log_normalizer + ((np.asarray(law.beta) - 1.0) * np.log(np.clip(full, 1e-300, None))).sum(axis=1)
    return np.exp(log_density)
