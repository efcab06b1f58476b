# wfstein/tools/simplex_lattice.py
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
The rescaled state space S = {u in delta Z^(K-1) : u_i >= 0, sum u_i <= 1},
functions on it, and forward-difference calculus.

States are stored as integer counts n_i = N u_i in colexicographic order
(the last coordinate is the most significant key). The ordinal of a count
vector is computed in closed form from binomial coefficients, so no dense
lookup table over the bounding box is needed.
"""

import functools
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.special import comb

from wfstein.utils.errors import CapacityError, DomainError, InvalidStateError

DEFAULT_STATE_CAP = 2_000_000
INNER_REGION_SLACK = 1e-9


@dataclass(frozen=True)
class ModelParams:
    N: int
    K: int
    beta: tuple[float, ...]
    strict: bool = True
    delta: float = field(init=False)
    p: tuple[float, ...] = field(init=False)
    Sigma: float = field(init=False)
    s: float = field(init=False)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"N must be a positive integer, got {self.N}")
        if int(self.K) != self.K or self.K < 2:
            raise DomainError(f"K must be an integer >= 2, got {self.K}")
        beta = tuple(float(b) for b in self.beta)
        if len(beta) != self.K:
            raise DomainError(f"beta has {len(beta)} entries, expected K={self.K}")
        if self.strict and any(b <= 0 for b in beta):
            raise DomainError(f"all beta_i must be positive, got {beta}")
        if any(b < 0 for b in beta):
            raise DomainError(f"mutation parameters must be non-negative, got {beta}")

        p = tuple(b / (2 * self.N) for b in beta)
        Sigma = math.fsum(p)
        if self.strict and Sigma >= 1:
            raise DomainError(f"Sigma = s/(2N) = {Sigma} must be < 1 (N={self.N}, s={sum(beta)})")
        if Sigma > 1:
            raise DomainError(f"Sigma = {Sigma} exceeds 1")

        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "delta", 1.0 / self.N)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "s", math.fsum(beta))

    @classmethod
    def from_mutation(cls, N: int, p: Sequence[float]) -> "ModelParams":
        """General parent-independent mutation probabilities, zeros allowed, sum(p) <= 1."""
        return cls(N=N, K=len(p), beta=tuple(2 * N * float(pi) for pi in p), strict=False)

    @property
    def dim(self) -> int:
        return self.K - 1


@dataclass(frozen=True, order=True)
class LatticeState:
    counts: tuple[int, ...]
    N: int

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    @property
    def value(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.N

    @property
    def last(self) -> float:
        """The implied K-th coordinate u_K = 1 - sum_{i<K} u_i."""
        return (self.N - sum(self.counts)) / self.N

    def shifted(self, a: Sequence[int]) -> "LatticeState":
        return LatticeState(tuple(c + int(s) for c, s in zip(self.counts, a)), self.N)


def multi_indices(d: int, order: int) -> list[tuple[int, ...]]:
    """All multi-indices a in N^d with |a|_1 == order."""
    out = []
    for combo in itertools.combinations_with_replacement(range(d), order):
        a = [0] * d
        for axis in combo:
            a[axis] += 1
        out.append(tuple(a))
    return out


def lattice_size(N: int, K: int) -> int:
    return math.comb(N + K - 1, K - 1)


@functools.lru_cache(maxsize=64)
def _binomial_table(n_max: int, d: int) -> np.ndarray:
    n = np.arange(n_max + 1)[:, None]
    k = np.arange(d + 1)[None, :]
    return np.rint(comb(n, k, exact=False)).astype(np.int64)


@functools.lru_cache(maxsize=32)
def _colex_counts(N: int, d: int) -> np.ndarray:
    rows = np.zeros((1, 0), dtype=np.int64)
    for _ in range(d):
        room = N - rows.sum(axis=1)
        reps = room + 1
        head = np.repeat(rows, reps, axis=0)
        tail = np.concatenate([np.arange(r + 1) for r in room]).astype(np.int64)
        rows = np.column_stack([head, tail])
    order = np.lexsort(rows.T)
    counts = rows[order]
    counts.setflags(write=False)
    return counts


@dataclass(frozen=True, eq=False)
class SimplexLattice:
    N: int
    K: int
    counts: np.ndarray
    params: ModelParams | None = None

    @property
    def dim(self) -> int:
        return self.K - 1

    @property
    def delta(self) -> float:
        return 1.0 / self.N

    @property
    def values(self) -> np.ndarray:
        return self.counts / self.N

    @property
    def states(self) -> list[LatticeState]:
        return [LatticeState(tuple(row), self.N) for row in self.counts]

    def __len__(self) -> int:
        return self.counts.shape[0]

    def __iter__(self) -> Iterator[LatticeState]:
        return iter(self.states)

    def state(self, i: int) -> LatticeState:
        return LatticeState(tuple(self.counts[i]), self.N)

    def contains(self, counts: np.ndarray) -> np.ndarray:
        counts = np.atleast_2d(np.asarray(counts))
        return np.all(counts >= 0, axis=1) & (counts.sum(axis=1) <= self.N)

    def lookup(self, counts: np.ndarray) -> np.ndarray:
        """Ordinals of the given count vectors, -1 for points outside S."""
        counts = np.atleast_2d(np.asarray(counts, dtype=np.int64))
        inside = self.contains(counts)
        ranks = np.full(counts.shape[0], -1, dtype=np.int64)
        if not inside.any():
            return ranks
        c = counts[inside]
        table = _binomial_table(self.N + self.dim, self.dim)
        rank = np.zeros(c.shape[0], dtype=np.int64)
        budget = np.full(c.shape[0], self.N, dtype=np.int64)
        for j in range(self.dim, 0, -1):
            cj = c[:, j - 1]
            rank += table[budget + j, j] - table[budget - cj + j, j]
            budget -= cj
        ranks[inside] = rank
        return ranks

    def index_of(self, u: "LatticeState | Sequence[int]") -> int:
        counts = u.counts if isinstance(u, LatticeState) else tuple(u)
        if len(counts) != self.dim:
            raise InvalidStateError(f"state {counts} has {len(counts)} coordinates, expected {self.dim}")
        idx = int(self.lookup(np.asarray(counts)[None, :])[0])
        if idx < 0:
            raise InvalidStateError(f"counts {counts} are not a state of S with N={self.N}")
        return idx

    def inner_count_bound(self, margin: float | None = None) -> float:
        """Largest admissible count sum in the inner region {sum u_i <= 1 - margin}."""
        if margin is None:
            margin = 10 * self.K / math.sqrt(self.N)
        return self.N * (1.0 - margin) + INNER_REGION_SLACK * self.N

    def in_inner_region(self, counts: np.ndarray, margin: float | None = None) -> np.ndarray:
        # N * sum(counts) <= N^2 - 10 K N^(3/2), divided through by N
        counts = np.atleast_2d(np.asarray(counts))
        return self.contains(counts) & (counts.sum(axis=1) <= self.inner_count_bound(margin))

    def in_inner_hull(self, x: np.ndarray, margin: float | None = None) -> np.ndarray:
        """Membership of continuous points in the convex hull of the inner region."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        top = math.floor(self.inner_count_bound(margin))
        if top < 0:
            return np.zeros(x.shape[0], dtype=bool)
        return np.all(x >= -1e-12, axis=1) & (x.sum(axis=1) <= top / self.N + 1e-12)


def enumerate_lattice(N: int, K: int, state_cap: int = DEFAULT_STATE_CAP,
                      params: ModelParams | None = None) -> SimplexLattice:
    if N < 1 or K < 2:
        raise DomainError(f"need N >= 1 and K >= 2, got N={N}, K={K}")
    size = lattice_size(N, K)
    if size > state_cap:
        raise CapacityError(f"S has {size} states for N={N}, K={K}; cap is {state_cap}")
    counts = _colex_counts(N, K - 1)
    logging.debug(f"Enumerated {size} lattice states (N={N}, K={K})")
    return SimplexLattice(N=N, K=K, counts=counts, params=params)


def enumerate_states(params: ModelParams, state_cap: int = DEFAULT_STATE_CAP) -> SimplexLattice:
    return enumerate_lattice(params.N, params.K, state_cap=state_cap, params=params)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real values on S, extended by zero to the rest of delta Z^(K-1)."""

    lattice: SimplexLattice
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (len(self.lattice),):
            raise DomainError(f"expected {len(self.lattice)} values, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, lattice: SimplexLattice, func: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        return cls(lattice, np.asarray(func(lattice.values), dtype=float))

    @property
    def delta(self) -> float:
        return self.lattice.delta

    @property
    def dim(self) -> int:
        return self.lattice.dim

    def at_counts(self, counts: np.ndarray) -> np.ndarray:
        idx = self.lattice.lookup(counts)
        out = np.zeros(idx.shape[0])
        hit = idx >= 0
        out[hit] = self.values[idx[hit]]
        return out

    def __call__(self, u: "LatticeState | Sequence[int]") -> float:
        counts = u.counts if isinstance(u, LatticeState) else tuple(u)
        return float(self.at_counts(np.asarray(counts)[None, :])[0])

    def _combine(self, other: "GridFunction", op) -> "GridFunction":
        if other.lattice is not self.lattice and not np.array_equal(other.lattice.counts, self.lattice.counts):
            raise DomainError("grid functions live on different lattices")
        return GridFunction(self.lattice, op(self.values, other.values))

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return self._combine(other, np.add)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return self._combine(other, np.subtract)

    def __mul__(self, other: "GridFunction | float") -> "GridFunction":
        if isinstance(other, GridFunction):
            return self._combine(other, np.multiply)
        return GridFunction(self.lattice, self.values * float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "GridFunction":
        return GridFunction(self.lattice, -self.values)


def _as_counts(u: "LatticeState | Sequence[int]") -> np.ndarray:
    return np.asarray(u.counts if isinstance(u, LatticeState) else u, dtype=np.int64)


def _stencil(a: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Offsets b <= a and coefficients (-1)^(|a|-|b|) prod_j C(a_j, b_j) of Delta^a."""
    a = np.asarray(a, dtype=np.int64)
    if a.sum() < 1 or np.any(a < 0):
        raise DomainError(f"multi-index {tuple(a)} must be non-negative with |a|_1 >= 1")
    offsets = np.array(list(itertools.product(*(range(int(aj) + 1) for aj in a))), dtype=np.int64)
    signs = (-1.0) ** (a.sum() - offsets.sum(axis=1))
    coeffs = np.prod([[math.comb(int(aj), int(bj)) for aj, bj in zip(a, b)] for b in offsets], axis=1)
    return offsets, signs * coeffs


def forward_difference(f: GridFunction, u: "LatticeState | Sequence[int]", a: Sequence[int]) -> float:
    return float(difference_array(f, a, _as_counts(u)[None, :])[0])


def difference_array(f: GridFunction, a: Sequence[int], base: np.ndarray | None = None) -> np.ndarray:
    """Delta^a f at each row of base (every state of S by default), using the zero extension."""
    offsets, coeffs = _stencil(a)
    base = f.lattice.counts if base is None else np.atleast_2d(np.asarray(base, dtype=np.int64))
    out = np.zeros(base.shape[0])
    for offset, coef in zip(offsets, coeffs):
        out += coef * f.at_counts(base + offset[None, :])
    return out


def sup_difference(f: GridFunction, i: int) -> float:
    """B_i(f): max |Delta^a f(u)| over |a|_1 = i and stencils with u, u + delta a in S."""
    if not 1 <= i <= 4:
        raise DomainError(f"difference order must be in 1..4, got {i}")
    lattice = f.lattice
    # S is closed under coordinatewise decrease, so the whole stencil of an
    # admissible (u, a) stays in S and the zero extension is never read.
    base = lattice.counts[lattice.counts.sum(axis=1) <= lattice.N - i]
    if base.shape[0] == 0:
        return 0.0
    return max(float(np.max(np.abs(difference_array(f, a, base)))) for a in multi_indices(lattice.dim, i))
