# wfstein/tools/interpolator.py
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
The lattice interpolation operator A.

In one dimension A f on the cell [delta k, delta (k+1)) is the degree-7
polynomial

    P_k(t) = f + t (D - D^2/2 + D^3/3) f + t^2/2 (D^2 - D^3) f + t^3/6 D^3 f
             + (-23/3 t^4 + 41/2 t^5 - 55/3 t^6 + 11/2 t^7) D^4 f,

with t = (x - delta k)/delta and D the forward difference at delta k. Expanding
the difference powers over the five stencil values f(delta (k+i)), i = 0..4,
gives the weight polynomials alpha_i(t). In d dimensions the weights are
tensor products over a 5^d stencil. A f interpolates f on the grid, reproduces
cubics and is C^3.
"""

import functools
import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Callable, Protocol, Sequence

import numpy as np
import sympy
from numpy.polynomial import polynomial as npoly

from wfstein.tools.simplex_lattice import GridFunction, LatticeState, multi_indices
from wfstein.utils.errors import DomainError, FacePointError

STENCIL = 5
DEGREE = 7
GRID_SNAP = 1e-12
CHUNK_POINTS = 20_000
SUP_SAMPLES = 2001


class LatticeSource(Protocol):
    delta: float
    dim: int

    def at_counts(self, counts: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class AnalyticGrid:
    """A function on R^d sampled on delta Z^d, with no boundary."""

    func: Callable[[np.ndarray], np.ndarray]
    delta: float
    dim: int

    def at_counts(self, counts: np.ndarray) -> np.ndarray:
        return np.asarray(self.func(np.atleast_2d(counts) * self.delta), dtype=float)


def _delta_power(j: int, f: Sequence) -> "sympy.Expr":
    return sum((-1) ** (j - m) * comb(j, m) * f[m] for m in range(j + 1))


def _expand_pplus() -> tuple[tuple[sympy.Rational, ...], ...]:
    t = sympy.Symbol("t")
    f = sympy.symbols(f"f0:{STENCIL}")
    D = [None] + [_delta_power(j, f) for j in range(1, 5)]
    R = sympy.Rational
    P = (
        f[0]
        + t * (D[1] - R(1, 2) * D[2] + R(1, 3) * D[3])
        + R(1, 2) * t ** 2 * (D[2] - D[3])
        + R(1, 6) * t ** 3 * D[3]
        + (-R(23, 3) * t ** 4 + R(41, 2) * t ** 5 - R(55, 3) * t ** 6 + R(11, 2) * t ** 7) * D[4]
    )
    P = sympy.expand(P)
    rows = []
    for i in range(STENCIL):
        poly = sympy.Poly(P.coeff(f[i]), t)
        rows.append(tuple(sympy.Rational(poly.coeff_monomial(t ** m)) for m in range(DEGREE + 1)))
    return tuple(rows)


@dataclass(frozen=True)
class WeightKernel:
    """Exact rational coefficients of alpha_i(t) = sum_m coefficients[i][m] t^m."""

    coefficients: tuple[tuple[sympy.Rational, ...], ...]
    _tables: tuple[np.ndarray, ...] = field(init=False, repr=False, compare=False)
    _to_stencil: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        coeffs = tuple(tuple(sympy.Rational(c) for c in row) for row in self.coefficients)
        if len(coeffs) != STENCIL or any(len(row) != DEGREE + 1 for row in coeffs):
            raise DomainError(f"weight kernel needs {STENCIL} rows of {DEGREE + 1} coefficients")
        object.__setattr__(self, "coefficients", coeffs)

        # numeric evaluation runs in the forward-difference basis: P = sum_j g_j(t) D^j f_0
        # with g_j = sum_i alpha_i C(i, j), and alpha_i = sum_j (-1)^(j-i) C(j, i) g_j
        g = np.array([
            [float(sum(coeffs[i][m] * comb(i, j) for i in range(STENCIL))) for m in range(DEGREE + 1)]
            for j in range(STENCIL)
        ])
        tables = []
        for m in range(5):
            table = np.zeros_like(g)
            for j in range(STENCIL):
                der = npoly.polyder(g[j], m) if m else g[j]
                table[j, :der.size] = der
            tables.append(table)
        object.__setattr__(self, "_tables", tuple(tables))
        to_stencil = np.array([[(-1) ** (j - i) * comb(j, i) for i in range(STENCIL)] for j in range(STENCIL)], dtype=float)
        object.__setattr__(self, "_to_stencil", to_stencil)

    def weights(self, t: np.ndarray, m: int = 0) -> np.ndarray:
        """m-th t-derivatives of the five weights, shape (n, 5)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return npoly.polyval(t, self._tables[m].T).T @ self._to_stencil

    def _rational(self, i: int, m: int, t: int) -> sympy.Rational:
        # m-th derivative of alpha_i at an integer t, exactly; alpha_i = 0 outside 0..4
        if not 0 <= i < STENCIL:
            return sympy.Integer(0)
        row = self.coefficients[i]
        return sum(
            (row[p] * sympy.ff(p, m) * sympy.Integer(t) ** (p - m) for p in range(m, DEGREE + 1)),
            sympy.Integer(0),
        )

    def verify(self) -> dict[str, bool]:
        """Exact identities of the stored rationals."""
        rows = self.coefficients
        checks = {
            "interpolates_at_left_node": all(rows[i][0] == (1 if i == 0 else 0) for i in range(STENCIL)),
            "weights_sum_to_one": all(
                sum(rows[i][m] for i in range(STENCIL)) == (1 if m == 0 else 0) for m in range(DEGREE + 1)
            ),
            "interpolates_at_right_node": all(
                sum(rows[i]) == (1 if i == 1 else 0) for i in range(STENCIL)
            ),
            "reproduces_cubics": all(
                sum(rows[i][m] * sympy.Integer(i) ** r for i in range(STENCIL)) == (1 if m == r else 0)
                for r in range(4) for m in range(DEGREE + 1)
            ),
            "c3_across_faces": all(
                self._rational(i, m, 1) == self._rational(i - 1, m, 0)
                for m in range(4) for i in range(STENCIL + 1)
            ),
        }
        return checks

    def difference_weights(self, m: int, t: np.ndarray) -> np.ndarray:
        """gamma_r(t), r = 0..4-m, with sum_i alpha_i^(m)(t) f_i = sum_r gamma_r(t) D^m f_r."""
        w = self.weights(t, m)
        basis = np.zeros((STENCIL, STENCIL - m))
        for r in range(STENCIL - m):
            for q in range(m + 1):
                basis[r + q, r] = (-1) ** (m - q) * comb(m, q)
        gamma, *_ = np.linalg.lstsq(basis, w.T, rcond=None)
        return gamma.T

    def derivative_bound_constant(self, a: Sequence[int], samples: int = SUP_SAMPLES) -> float:
        """C(a) with |D^a A f| <= C(a) delta^-|a| max over the stencil of |D^a f|."""
        t = np.linspace(0.0, 1.0, samples)
        return float(np.prod([np.abs(self.difference_weights(int(m), t)).sum(axis=1).max() for m in a]))

    def lipschitz_constant(self, a: Sequence[int], samples: int = SUP_SAMPLES) -> float:
        """L(a) with |D^a A f(x) - D^a A f(y)| <= L(a) delta^-(|a|+1) max_j max |Delta^(a+e_j) f| |x - y|
        for x, y in one cell, from the gradient bound of the cell polynomial."""
        a = tuple(int(v) for v in a)
        if any(v > 3 for v in a):
            raise DomainError(f"Lipschitz constants need a_j <= 3, got {a}")
        raised = [tuple(v + (j == i) for j, v in enumerate(a)) for i in range(len(a))]
        return float(np.sqrt(sum(self.derivative_bound_constant(b, samples) ** 2 for b in raised)))

    def sup_weight(self, samples: int = SUP_SAMPLES) -> float:
        t = np.linspace(0.0, 1.0, samples)
        return float(np.abs(self.weights(t)).max())

    def product_rule_constant(self, d: int, samples: int | None = None) -> float:
        """sup_t sum_i |w_i| (sum_l |w_l| |i - l|_1)^2 over the tensor stencil."""
        samples = samples or (SUP_SAMPLES if d == 1 else 101)
        t = np.linspace(0.0, 1.0, samples)
        offsets = _stencil_offsets(d)
        w1 = np.abs(self.weights(t))
        grids = np.meshgrid(*([np.arange(samples)] * d), indexing="ij")
        sample_idx = np.column_stack([g.ravel() for g in grids])
        weights = np.ones((sample_idx.shape[0], offsets.shape[0]))
        for j in range(d):
            weights *= w1[sample_idx[:, j]][:, offsets[:, j]]
        distance = np.abs(offsets[:, None, :] - offsets[None, :, :]).sum(axis=-1)
        spread = weights @ distance
        return float((weights * spread ** 2).sum(axis=1).max())


@functools.lru_cache(maxsize=1)
def weight_kernel() -> WeightKernel:
    kernel = WeightKernel(_expand_pplus())
    failed = [name for name, ok in kernel.verify().items() if not ok]
    if failed:
        logging.error(f"Interpolation weights fail exact identities: {failed}")
    else:
        logging.debug("Interpolation weights derived and verified")
    return kernel


@functools.lru_cache(maxsize=8)
def _stencil_offsets(d: int) -> np.ndarray:
    return np.array(list(itertools.product(range(STENCIL), repeat=d)), dtype=np.int64).reshape(-1, d)


def _cells(x: np.ndarray, delta: float) -> tuple[np.ndarray, np.ndarray]:
    scaled = x / delta
    nearest = np.rint(scaled)
    on_grid = np.abs(scaled - nearest) <= GRID_SNAP * np.maximum(1.0, np.abs(scaled))
    scaled = np.where(on_grid, nearest, scaled)
    k = np.floor(scaled).astype(np.int64)
    return k, scaled - k


def _evaluate(source: LatticeSource, k: np.ndarray, t: np.ndarray, a: Sequence[int],
              kernel: WeightKernel) -> np.ndarray:
    n, d = k.shape
    offsets = _stencil_offsets(d)
    out = np.empty(n)
    for start in range(0, n, CHUNK_POINTS):
        stop = min(start + CHUNK_POINTS, n)
        weights = np.ones((stop - start, offsets.shape[0]))
        for j in range(d):
            weights *= kernel.weights(t[start:stop, j], int(a[j]))[:, offsets[:, j]]
        points = (k[start:stop, None, :] + offsets[None, :, :]).reshape(-1, d)
        values = source.at_counts(points).reshape(stop - start, -1)
        out[start:stop] = (weights * values).sum(axis=1)
    return out * source.delta ** (-float(sum(a)))


def _points(x: np.ndarray | Sequence[float], d: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1
    arr = arr.reshape(-1, d) if single else arr
    if arr.shape[1] != d:
        raise DomainError(f"points need {d} coordinates, got {arr.shape[1]}")
    return arr, single


def weights_1d(x: float, delta: float, kernel: WeightKernel | None = None) -> tuple[int, np.ndarray]:
    if delta <= 0:
        raise DomainError(f"delta must be positive, got {delta}")
    kernel = kernel or weight_kernel()
    k, t = _cells(np.array([float(x)]), delta)
    return int(k[0]), kernel.weights(t)[0]


def eval_interpolant(f: LatticeSource, x, kernel: WeightKernel | None = None) -> float | np.ndarray:
    kernel = kernel or weight_kernel()
    points, single = _points(x, f.dim)
    k, t = _cells(points, f.delta)
    out = _evaluate(f, k, t, (0,) * f.dim, kernel)
    return float(out[0]) if single else out


def eval_derivative(f: LatticeSource, x, a: Sequence[int], kernel: WeightKernel | None = None) -> float | np.ndarray:
    kernel = kernel or weight_kernel()
    a = tuple(int(v) for v in a)
    if len(a) != f.dim or min(a) < 0 or sum(a) > 4:
        raise DomainError(f"multi-index {a} must be non-negative with |a|_1 <= 4 in {f.dim} dimensions")
    points, single = _points(x, f.dim)
    k, t = _cells(points, f.delta)
    if sum(a) == 4:
        on_face = np.any(t == 0.0, axis=1)
        if on_face.any():
            raise FacePointError(f"fourth derivative {a} requested on a cell face at {points[on_face][0]}")
    out = _evaluate(f, k, t, a, kernel)
    return float(out[0]) if single else out


def cell_lipschitz_quotients(f: LatticeSource, x, y, a: Sequence[int],
                             kernel: WeightKernel | None = None) -> np.ndarray:
    """|D^a A f(x) - D^a A f(y)| / |x - y| for pairs of distinct points sharing a cell."""
    kernel = kernel or weight_kernel()
    px, _ = _points(x, f.dim)
    py, _ = _points(y, f.dim)
    if px.shape != py.shape:
        raise DomainError(f"point sets differ in shape: {px.shape} vs {py.shape}")
    if np.any(_cells(px, f.delta)[0] != _cells(py, f.delta)[0]):
        raise DomainError("Lipschitz quotients need both points of a pair in the same cell")
    dist = np.linalg.norm(px - py, axis=1)
    if np.any(dist == 0.0):
        raise DomainError("Lipschitz quotients need distinct points")
    diff = np.atleast_1d(eval_derivative(f, px, a, kernel)) - np.atleast_1d(eval_derivative(f, py, a, kernel))
    return np.abs(diff) / dist


def one_sided_derivative(f: LatticeSource, x, a: Sequence[int], axis: int, side: str,
                         kernel: WeightKernel | None = None) -> float | np.ndarray:
    """D^a of the cell polynomial left or right of the grid line through x along axis."""
    kernel = kernel or weight_kernel()
    points, single = _points(x, f.dim)
    k, t = _cells(points, f.delta)
    face = np.rint(points[:, axis] / f.delta).astype(np.int64)
    if side == "left":
        k[:, axis], t[:, axis] = face - 1, 1.0
    elif side == "right":
        k[:, axis], t[:, axis] = face, 0.0
    else:
        raise DomainError(f"side must be 'left' or 'right', got {side!r}")
    out = _evaluate(f, k, t, tuple(a), kernel)
    return float(out[0]) if single else out


@dataclass(frozen=True, eq=False)
class Interpolant:
    source: LatticeSource
    kernel: WeightKernel = field(default_factory=weight_kernel)

    def __call__(self, x):
        return eval_interpolant(self.source, x, self.kernel)

    def derivative(self, x, a: Sequence[int]):
        return eval_derivative(self.source, x, a, self.kernel)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        d = self.source.dim
        points, _ = _points(x, d)
        return np.column_stack([self.derivative(points, tuple(np.eye(d, dtype=int)[i])) for i in range(d)])

    def hessian(self, x: np.ndarray) -> np.ndarray:
        d = self.source.dim
        points, _ = _points(x, d)
        out = np.empty((points.shape[0], d, d))
        unit = np.eye(d, dtype=int)
        for i in range(d):
            for j in range(i, d):
                out[:, i, j] = out[:, j, i] = self.derivative(points, tuple(unit[i] + unit[j]))
        return out


@functools.lru_cache(maxsize=4)
def tilde_coefficients(j: int) -> tuple[Fraction, ...]:
    """Shift coefficients c_m of the tilde difference of order j: sum_m c_m f(u + m e_i)."""
    powers = [[Fraction((-1) ** (p - m) * comb(p, m)) if m <= p else Fraction(0) for m in range(4)] for p in range(4)]
    combos = {
        0: {0: Fraction(1)},
        1: {1: Fraction(1), 2: Fraction(-1, 2), 3: Fraction(1, 3)},
        2: {2: Fraction(1), 3: Fraction(-1)},
        3: {3: Fraction(1)},
    }
    if j not in combos:
        raise DomainError(f"tilde difference order must be 0..3, got {j}")
    if j == 0:
        return (Fraction(1), Fraction(0), Fraction(0), Fraction(0))
    return tuple(sum(c * powers[p][m] for p, c in combos[j].items()) for m in range(4))


def _base_counts(u: "LatticeState | Sequence[int]") -> np.ndarray:
    return np.asarray(u.counts if isinstance(u, LatticeState) else u, dtype=np.int64)


def tilde_delta(f: LatticeSource, u: "LatticeState | Sequence[int]", i: int, j: int) -> float:
    a = [0] * f.dim
    a[i] = j
    return tilde_delta_multi(f, u, a)


def tilde_delta_multi(f: LatticeSource, u: "LatticeState | Sequence[int]", a: Sequence[int]) -> float:
    """Composition over axes of the tilde differences of orders a_j, applied at u."""
    base = _base_counts(u)
    coeffs = [np.array([float(c) for c in tilde_coefficients(int(aj))]) for aj in a]
    offsets = np.array(list(itertools.product(range(4), repeat=f.dim)), dtype=np.int64).reshape(-1, f.dim)
    weights = np.prod([coeffs[j][offsets[:, j]] for j in range(f.dim)], axis=0)
    values = f.at_counts(base[None, :] + offsets)
    return float(weights @ values)


def product_decomposition(f: GridFunction, g: GridFunction, x,
                          kernel: WeightKernel | None = None) -> tuple[float, float] | tuple[np.ndarray, np.ndarray]:
    kernel = kernel or weight_kernel()
    main = np.asarray(eval_interpolant(f, x, kernel)) * np.asarray(eval_interpolant(g, x, kernel))
    eps = np.asarray(eval_interpolant(f * g, x, kernel)) - main
    if np.ndim(main) == 0:
        return float(main), float(eps)
    return main, eps


@dataclass(frozen=True)
class AnalyticFunction:
    value: Callable[[np.ndarray], np.ndarray]
    partial: Callable[[np.ndarray, tuple[int, ...]], np.ndarray] | None = None


@dataclass(frozen=True)
class InterpolationErrorReport:
    deltas: list[float]
    errors: list[float]
    normalized: list[float]
    ratios: list[float]
    fitted_order: float


def interpolation_error(f_analytic: AnalyticFunction, region: tuple[Sequence[float], Sequence[float]],
                        delta: float, s: int = 4, samples: int = 2000, seed: int = 0,
                        kernel: WeightKernel | None = None) -> InterpolationErrorReport:
    """max |f - A f| over a sample of the box for delta, delta/2, delta/4, delta/8."""
    if not 1 <= s <= 4:
        raise DomainError(f"smoothness must be 1..4, got {s}")
    kernel = kernel or weight_kernel()
    lo, hi = np.asarray(region[0], dtype=float), np.asarray(region[1], dtype=float)
    d = lo.size
    rng = np.random.default_rng(seed)
    x = lo + (hi - lo) * rng.random((samples, d))
    exact = np.asarray(f_analytic.value(x), dtype=float)

    scale = 1.0
    if f_analytic.partial is not None:
        scale = max(float(np.max(np.abs(f_analytic.partial(x, a)))) for a in multi_indices(d, s))
        scale = scale or 1.0

    deltas = [delta / 2 ** i for i in range(4)]
    errors = []
    for h in deltas:
        approx = eval_interpolant(AnalyticGrid(f_analytic.value, h, d), x, kernel)
        errors.append(float(np.max(np.abs(approx - exact))))
    normalized = [e / (h ** s * scale) for e, h in zip(errors, deltas)]
    floor = np.finfo(float).tiny
    ratios = [float(np.log2(max(errors[i], floor) / max(errors[i + 1], floor))) for i in range(3)]
    slope, _ = np.polyfit(np.log2(deltas), np.log2(np.maximum(errors, floor)), 1)
    logging.debug(f"Interpolation errors {errors} (fitted order {slope:.3f})")
    return InterpolationErrorReport(deltas=deltas, errors=errors, normalized=normalized,
                                    ratios=ratios, fitted_order=float(slope))
