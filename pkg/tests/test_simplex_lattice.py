import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from wfstein.tools.simplex_lattice import (
    GridFunction,
    LatticeState,
    ModelParams,
    SimplexLattice,
    difference_array,
    enumerate_lattice,
    enumerate_states,
    forward_difference,
    multi_indices,
    sup_difference,
)
from wfstein.utils.errors import CapacityError, DomainError, InvalidStateError


def _counts(lattice):
    return [tuple(int(c) for c in row) for row in lattice.counts]


def test_model_params_derived_fields():
    params = ModelParams(N=10, K=3, beta=(1.0, 2.0, 3.0))
    assert params.delta == pytest.approx(0.1)
    assert params.p == pytest.approx((0.05, 0.1, 0.15))
    assert params.Sigma == pytest.approx(0.3)
    assert params.s == pytest.approx(6.0)
    assert params.dim == 2


@pytest.mark.parametrize("N, K, beta", [
    (2, 2, (2.0, 2.0)),      # Sigma = 1
    (4, 2, (0.0, 1.0)),      # beta_1 = 0
    (4, 3, (1.0, 1.0)),      # wrong length
    (0, 2, (1.0, 1.0)),
])
def test_model_params_rejects_invalid(N, K, beta):
    with pytest.raises(DomainError):
        ModelParams(N=N, K=K, beta=beta)


def test_from_mutation_allows_zero_mutation():
    params = ModelParams.from_mutation(5, (0.0, 0.0))
    assert params.Sigma == 0.0
    assert params.p == (0.0, 0.0)


@pytest.mark.parametrize("N, K, size", [(1, 2, 2), (2, 3, 6), (3, 2, 4)])
def test_enumerate_small_lattices(N, K, size):
    lattice = enumerate_lattice(N, K)
    assert len(lattice) == size


def test_enumerate_n2_k3_states():
    lattice = enumerate_lattice(2, 3)
    assert set(_counts(lattice)) == {(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0)}
    # colexicographic: the last coordinate is the primary key
    assert _counts(lattice) == sorted(_counts(lattice), key=lambda c: c[::-1])


@pytest.mark.parametrize("N", [1, 5, 17, 50])
@pytest.mark.parametrize("K", [2, 3, 4, 5])
def test_lattice_size_matches_binomial(N, K):
    lattice = enumerate_lattice(N, K)
    assert len(lattice) == math.comb(N + K - 1, K - 1)
    assert np.all(lattice.counts.sum(axis=1) <= N)
    assert np.all(lattice.counts >= 0)


@pytest.mark.parametrize("N, K", [(7, 2), (6, 3), (4, 4)])
def test_indexing_is_a_bijection(N, K):
    lattice = enumerate_lattice(N, K)
    assert np.array_equal(lattice.lookup(lattice.counts), np.arange(len(lattice)))
    for i, u in enumerate(lattice):
        assert lattice.index_of(u) == i


def test_lookup_outside_is_minus_one():
    lattice = enumerate_lattice(4, 3)
    assert list(lattice.lookup(np.array([[5, 0], [-1, 2], [3, 2]]))) == [-1, -1, -1]
    with pytest.raises(InvalidStateError):
        lattice.index_of((3, 2))
    with pytest.raises(InvalidStateError):
        lattice.index_of((1, 1, 1))


def test_state_cap():
    with pytest.raises(CapacityError):
        enumerate_lattice(100, 4, state_cap=1000)
    params = ModelParams(N=100, K=3, beta=(1.0, 1.0, 1.0))
    with pytest.raises(CapacityError):
        enumerate_states(params, state_cap=10)


def test_lattice_state_helpers():
    u = LatticeState((1, 2), 5)
    assert u.value == pytest.approx([0.2, 0.4])
    assert u.last == pytest.approx(0.4)
    assert u.shifted((1, 0)).counts == (2, 2)


def test_grid_function_zero_extension():
    lattice = enumerate_lattice(3, 3)
    f = GridFunction.from_callable(lattice, lambda x: 1.0 + x.sum(axis=1))
    outside = np.array([[4, 0], [2, 2], [-1, 0]])
    assert np.all(f.at_counts(outside) == 0.0)
    assert f(LatticeState((1, 1), 3)) == pytest.approx(1.0 + 2.0 / 3.0)
    with pytest.raises(ValueError):
        f.values[0] = 3.0


def test_forward_difference_mixed_stencil():
    lattice = enumerate_lattice(6, 3)
    rng = np.random.default_rng(0)
    f = GridFunction(lattice, rng.normal(size=len(lattice)))
    u = LatticeState((1, 2), 6)
    expected = f((2, 3)) - f((2, 2)) - f((1, 3)) + f((1, 2))
    assert forward_difference(f, u, (1, 1)) == pytest.approx(expected, abs=1e-14)


def test_differences_of_constant_and_linear():
    lattice = enumerate_lattice(8, 3)
    const = GridFunction(lattice, np.full(len(lattice), 2.5))
    linear = GridFunction.from_callable(lattice, lambda x: x[:, 0])
    u = LatticeState((2, 1), 8)
    for a in [(1, 0), (0, 2), (1, 1), (2, 1)]:
        assert forward_difference(const, u, a) == 0.0
    assert forward_difference(linear, u, (1, 0)) == pytest.approx(1 / 8)


def test_sup_difference_examples():
    lattice = enumerate_lattice(10, 3)
    c = -3.0
    linear = GridFunction.from_callable(lattice, lambda x: c * x[:, 0])
    square = GridFunction.from_callable(lattice, lambda x: x[:, 0] ** 2)
    const = GridFunction(lattice, np.ones(len(lattice)))
    assert sup_difference(linear, 1) == pytest.approx(abs(c) / 10)
    assert sup_difference(square, 2) == pytest.approx(2 / 100)
    assert all(sup_difference(const, i) == 0.0 for i in range(1, 5))


def test_sup_difference_without_admissible_stencil():
    lattice = enumerate_lattice(2, 2)
    f = GridFunction(lattice, np.array([0.0, 1.0, 5.0]))
    assert sup_difference(f, 4) == 0.0


def test_sup_difference_matches_brute_force():
    lattice = enumerate_lattice(7, 3)
    f = GridFunction(lattice, np.random.default_rng(3).normal(size=len(lattice)))
    for order in range(1, 5):
        brute = 0.0
        for a in multi_indices(2, order):
            for u in lattice:
                if lattice.contains(np.add(u.counts, a)).all():
                    brute = max(brute, abs(forward_difference(f, u, a)))
        assert sup_difference(f, order) == pytest.approx(brute, abs=1e-13)


def test_difference_array_agrees_with_pointwise():
    lattice = enumerate_lattice(5, 3)
    f = GridFunction(lattice, np.random.default_rng(1).normal(size=len(lattice)))
    arr = difference_array(f, (1, 2))
    assert arr.shape == (len(lattice),)
    for u in lattice:
        assert arr[lattice.index_of(u)] == pytest.approx(forward_difference(f, u, (1, 2)), abs=1e-13)
    picked = difference_array(f, (1, 2), np.array([[0, 0], [1, 1]]))
    assert picked == pytest.approx([forward_difference(f, (0, 0), (1, 2)), forward_difference(f, (1, 1), (1, 2))])


def test_sup_difference_on_many_types():
    # 135751 states; the bounding box {0..40}^4 is never built
    lattice = enumerate_lattice(40, 5)
    linear = GridFunction.from_callable(lattice, lambda x: x[:, 0] - 2.0 * x[:, 3])
    assert sup_difference(linear, 1) == pytest.approx(2.0 / 40, rel=1e-12)
    square = GridFunction.from_callable(lattice, lambda x: x[:, 1] ** 2)
    assert sup_difference(square, 2) == pytest.approx(2.0 / 40 ** 2, rel=1e-9)
    assert sup_difference(square, 3) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    alpha=st.floats(-5, 5), beta=st.floats(-5, 5),
    a=st.tuples(st.integers(0, 2), st.integers(0, 2)),
    seed=st.integers(0, 2**16),
)
def test_difference_is_linear(alpha, beta, a, seed):
    assume(sum(a) >= 1)
    lattice = enumerate_lattice(6, 3)
    rng = np.random.default_rng(seed)
    f = GridFunction(lattice, rng.normal(size=len(lattice)))
    g = GridFunction(lattice, rng.normal(size=len(lattice)))
    combo = f * alpha + g * beta
    for u in lattice:
        lhs = forward_difference(combo, u, a)
        rhs = alpha * forward_difference(f, u, a) + beta * forward_difference(g, u, a)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12 * (1 + abs(alpha) + abs(beta)) * 16)


@settings(max_examples=30, deadline=None)
@given(
    a=st.tuples(st.integers(0, 2), st.integers(0, 2)),
    b=st.tuples(st.integers(0, 2), st.integers(0, 2)),
    seed=st.integers(0, 2**16),
)
def test_difference_composition(a, b, seed):
    assume(sum(b) >= 1)
    lattice = enumerate_lattice(6, 3)
    f = GridFunction(lattice, np.random.default_rng(seed).normal(size=len(lattice)))
    u = LatticeState((1, 1), 6)
    total = tuple(x + y for x, y in zip(a, b))
    composed = 0.0
    for e0 in range(a[0] + 1):
        for e1 in range(a[1] + 1):
            coef = (-1) ** (a[0] - e0 + a[1] - e1) * math.comb(a[0], e0) * math.comb(a[1], e1)
            composed += coef * forward_difference(f, LatticeState((u.counts[0] + e0, u.counts[1] + e1), 6), b)
    assert composed == pytest.approx(forward_difference(f, u, total), abs=1e-11)


@settings(max_examples=50, deadline=None)
@given(N=st.integers(200, 5000), K=st.integers(2, 3), data=st.data())
def test_inner_region_is_downward_closed(N, K, data):
    lattice = SimplexLattice(N=N, K=K, counts=np.zeros((1, K - 1), dtype=np.int64))
    top = int(lattice.inner_count_bound())
    if top < 0:
        return
    counts = np.array(data.draw(st.lists(st.integers(0, max(top, 0) // (K - 1)), min_size=K - 1, max_size=K - 1)))
    if not lattice.in_inner_region(counts[None, :])[0]:
        return
    smaller = np.array([data.draw(st.integers(0, int(c))) for c in counts])
    assert lattice.in_inner_region(smaller[None, :])[0]


def test_inner_region_default_margin():
    lattice = enumerate_lattice(1600, 2)
    # 1 - 10 K / sqrt(N) = 1 - 20/40 = 0.5
    assert math.floor(lattice.inner_count_bound()) == 800
    assert lattice.in_inner_region(np.array([[800]]))[0]
    assert not lattice.in_inner_region(np.array([[801]]))[0]
    assert lattice.in_inner_hull(np.array([[0.5]]))[0]
    assert not lattice.in_inner_hull(np.array([[0.51]]))[0]
