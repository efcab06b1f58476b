import numpy as np
import pytest

from wfstein.tools.simplex_lattice import GridFunction, LatticeState, ModelParams, enumerate_states
from wfstein.tools.wf_kernel import (
    apply_generator_U,
    build_kernel,
    generator_vector,
    offspring_probabilities,
    power_iteration,
    second_eigenvalue,
    simulate,
    simulate_counts,
    stationary_distribution,
    transition_row,
)
from wfstein.utils.errors import CapacityError, DomainError, InvalidStateError, SingularSystemError


@pytest.fixture(scope="module")
def three_types():
    params = ModelParams(N=6, K=3, beta=(1.0, 2.0, 3.0))
    kernel = build_kernel(params)
    return params, kernel, stationary_distribution(kernel)


def test_single_individual_rows():
    # Sigma = 1 at N = 1, outside the scaled parametrisation
    params = ModelParams.from_mutation(1, (0.25, 0.75))
    kernel = build_kernel(params)
    p1, p2 = params.p
    assert kernel.row(LatticeState((0,), 1)) == pytest.approx([1 - p1, p1])
    assert kernel.row(LatticeState((1,), 1)) == pytest.approx([p2, 1 - p2])


def test_two_state_chain_symmetric_mutation():
    params = ModelParams.from_mutation(1, (0.5, 0.5))
    assert params.Sigma == 1.0
    pi = stationary_distribution(build_kernel(params))
    assert pi.pi == pytest.approx([0.5, 0.5], abs=1e-14)


@pytest.mark.parametrize("N, K, beta", [(5, 2, (0.5, 2.0)), (6, 3, (1.0, 2.0, 3.0)), (4, 4, (1.0, 1.0, 1.0, 1.0))])
def test_rows_are_probability_vectors(N, K, beta):
    kernel = build_kernel(ModelParams(N=N, K=K, beta=beta))
    assert np.all(kernel.matrix >= 0)
    assert np.max(np.abs(kernel.matrix.sum(axis=1) - 1.0)) <= 1e-12


def test_transition_row_matches_kernel(three_types):
    params, kernel, _ = three_types
    u = LatticeState((2, 1), 6)
    assert transition_row(params, u) == pytest.approx(kernel.row(u), abs=1e-15)


def test_offspring_probabilities_sum_to_one(three_types):
    params, kernel, _ = three_types
    q = offspring_probabilities(params, kernel.lattice.values)
    assert np.all(q >= 0)
    assert q.sum(axis=1) == pytest.approx(np.ones(len(kernel.lattice)))


def test_stationary_law(three_types):
    _, kernel, pi = three_types
    assert pi.pi.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(pi.pi > 0)
    assert pi.residual <= 1e-12
    assert 0.5 * np.abs(power_iteration(kernel) - pi.pi).sum() <= 1e-10


def test_exchangeable_types_have_symmetric_law():
    params = ModelParams(N=7, K=3, beta=(1.5, 1.5, 1.5))
    kernel = build_kernel(params)
    pi = stationary_distribution(kernel)
    lattice = kernel.lattice
    swapped = lattice.lookup(lattice.counts[:, ::-1])
    assert pi.pi[swapped] == pytest.approx(pi.pi, abs=1e-13)


@pytest.mark.parametrize("N, K, beta", [(5, 2, (1.0, 1.0)), (6, 3, (1.0, 2.0, 3.0))])
def test_second_eigenvalue_is_one_minus_sigma(N, K, beta):
    params = ModelParams(N=N, K=K, beta=beta)
    assert second_eigenvalue(build_kernel(params)) == pytest.approx(1.0 - params.Sigma, abs=1e-10)


def test_absorbing_chain_is_singular():
    params = ModelParams.from_mutation(4, (0.0, 0.0))
    kernel = build_kernel(params)
    assert kernel.row(LatticeState((4,), 4)) == pytest.approx([0, 0, 0, 0, 1])
    with pytest.raises(SingularSystemError):
        stationary_distribution(kernel)


def test_kernel_state_cap():
    params = ModelParams(N=30, K=4, beta=(1.0, 1.0, 1.0, 1.0))
    with pytest.raises(CapacityError):
        build_kernel(params, max_states=1000)


def test_threaded_build_matches_serial():
    params = ModelParams(N=40, K=3, beta=(1.0, 2.0, 0.5))
    serial = build_kernel(params)
    threaded = build_kernel(params, workers=4)
    assert np.array_equal(serial.matrix, threaded.matrix)


def test_generator_of_constant_and_linear(three_types):
    params, kernel, _ = three_types
    lattice = kernel.lattice
    const = GridFunction(lattice, np.full(len(lattice), 3.0))
    assert np.max(np.abs(generator_vector(kernel, const))) <= 1e-13
    linear = GridFunction.from_callable(lattice, lambda x: x[:, 1])
    drift = params.p[1] - params.Sigma * lattice.values[:, 1]
    assert generator_vector(kernel, linear) == pytest.approx(drift, abs=1e-13)
    u = LatticeState((3, 2), 6)
    assert apply_generator_U(kernel, linear, u) == pytest.approx(params.p[1] - params.Sigma * 2 / 6, abs=1e-13)


def test_stationary_mean_of_generator_vanishes(three_types):
    _, kernel, pi = three_types
    f = GridFunction(kernel.lattice, np.random.default_rng(5).normal(size=len(kernel.lattice)))
    assert abs(pi.pi @ generator_vector(kernel, f)) <= 1e-12


def test_simulate_zero_steps_and_determinism():
    params = ModelParams(N=20, K=3, beta=(1.0, 1.0, 2.0))
    u0 = LatticeState((5, 7), 20)
    assert simulate(params, u0, 0, seed=1) == [u0]
    a = simulate_counts(params, u0, 50, seed=11)
    b = simulate_counts(params, u0, 50, seed=11)
    assert np.array_equal(a, b)
    assert np.all(a >= 0) and np.all(a.sum(axis=1) <= 20)


def test_simulate_without_mutation_fixes_at_vertex():
    params = ModelParams.from_mutation(10, (0.0, 0.0, 0.0))
    path = simulate_counts(params, LatticeState((10, 0), 10), 25, seed=3)
    assert np.all(path == [10, 0])
    path = simulate_counts(params, LatticeState((0, 0), 10), 25, seed=3)
    assert np.all(path == 0)


def test_simulate_rejects_bad_input():
    params = ModelParams(N=5, K=2, beta=(1.0, 1.0))
    with pytest.raises(InvalidStateError):
        simulate_counts(params, LatticeState((6,), 5), 3, seed=0)
    with pytest.raises(DomainError):
        simulate_counts(params, LatticeState((1,), 5), -1, seed=0)


def test_one_step_mean_matches_offspring_probabilities():
    params = ModelParams(N=12, K=3, beta=(2.0, 1.0, 3.0))
    u0 = LatticeState((4, 3), 12)
    reps = 3000
    steps = np.array([simulate_counts(params, u0, 1, seed=s)[1] for s in range(reps)])
    q = offspring_probabilities(params, u0.value)[0][:-1]
    mean = steps.mean(axis=0) / params.N
    se = np.sqrt(q * (1 - q) / params.N / reps)
    assert np.all(np.abs(mean - q) <= 4 * se)


def test_stationary_lookup_by_enumeration():
    params = ModelParams(N=3, K=2, beta=(1.0, 3.0))
    lattice = enumerate_states(params)
    kernel = build_kernel(params, lattice)
    assert kernel.lattice is lattice
    assert stationary_distribution(kernel).expectation(np.ones(len(lattice))) == pytest.approx(1.0)
