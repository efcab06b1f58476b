from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from wfstein.tools.interpolator import (
    AnalyticFunction,
    AnalyticGrid,
    Interpolant,
    cell_lipschitz_quotients,
    eval_derivative,
    eval_interpolant,
    interpolation_error,
    one_sided_derivative,
    product_decomposition,
    tilde_coefficients,
    tilde_delta,
    tilde_delta_multi,
    weight_kernel,
    weights_1d,
)
from wfstein.tools.simplex_lattice import GridFunction, enumerate_lattice, multi_indices
from wfstein.utils.errors import DomainError, FacePointError
from wfstein.verification import corrupt_weight_kernel


def _cubic_2d(x):
    x = np.atleast_2d(x)
    return 1.0 - 2.0 * x[:, 0] + 0.5 * x[:, 1] ** 2 + x[:, 0] ** 2 * x[:, 1] - 0.7 * x[:, 1] ** 3


def _cubic_2d_dx(x):
    x = np.atleast_2d(x)
    return -2.0 + 2.0 * x[:, 0] * x[:, 1]


def test_exact_identities():
    checks = weight_kernel().verify()
    assert set(checks) == {
        "interpolates_at_left_node", "weights_sum_to_one", "interpolates_at_right_node",
        "reproduces_cubics", "c3_across_faces",
    }
    assert all(checks.values())


def test_corrupted_kernel_is_detected():
    checks = corrupt_weight_kernel(weight_kernel()).verify()
    assert not checks["reproduces_cubics"]
    assert not checks["weights_sum_to_one"]


def test_weights_numerics():
    kernel = weight_kernel()
    t = np.linspace(0.0, 1.0, 1001)
    w = kernel.weights(t)
    assert w.shape == (1001, 5)
    assert np.max(np.abs(w.sum(axis=1) - 1.0)) <= 1e-13
    assert w[0] == pytest.approx([1, 0, 0, 0, 0], abs=1e-15)
    assert w[-1] == pytest.approx([0, 1, 0, 0, 0], abs=1e-13)
    for m in range(1, 5):
        assert np.max(np.abs(kernel.weights(t, m).sum(axis=1))) <= 1e-10


def test_weights_1d():
    k, w = weights_1d(0.37, 0.1)
    assert k == 3
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    k, w = weights_1d(0.3, 0.1)
    assert k == 3
    assert w == pytest.approx([1, 0, 0, 0, 0], abs=1e-15)
    with pytest.raises(DomainError):
        weights_1d(0.3, 0.0)


def test_interpolant_hits_grid_values():
    lattice = enumerate_lattice(12, 3)
    f = GridFunction(lattice, np.random.default_rng(0).normal(size=len(lattice)))
    assert eval_interpolant(f, lattice.values) == pytest.approx(f.values, abs=1e-13)


def test_cubics_are_reproduced():
    grid = AnalyticGrid(_cubic_2d, 0.05, 2)
    x = np.random.default_rng(1).uniform(-1.0, 1.0, size=(300, 2))
    assert eval_interpolant(grid, x) == pytest.approx(_cubic_2d(x), abs=1e-11)
    assert eval_derivative(grid, x, (1, 0)) == pytest.approx(_cubic_2d_dx(x), abs=1e-8)


def test_fourth_derivative_on_face():
    grid = AnalyticGrid(_cubic_2d, 0.1, 2)
    with pytest.raises(FacePointError):
        eval_derivative(grid, np.array([0.3, 0.45]), (2, 2))
    with pytest.raises(FacePointError):
        eval_derivative(grid, np.array([0.35, 0.4]), (4, 0))
    value = eval_derivative(grid, np.array([0.35, 0.45]), (2, 2))
    assert np.isfinite(value)
    # third derivatives are continuous and defined on faces
    assert np.isfinite(eval_derivative(grid, np.array([0.3, 0.4]), (2, 1)))
    with pytest.raises(DomainError):
        eval_derivative(grid, np.array([0.35, 0.45]), (3, 2))


@pytest.mark.parametrize("a", [(0, 0), (1, 0), (1, 1), (2, 1), (0, 3)])
def test_continuity_across_faces(a):
    lattice = enumerate_lattice(20, 3)
    f = GridFunction.from_callable(lattice, lambda x: np.exp(-x[:, 0]) * np.cos(3 * x[:, 1]))
    x = np.array([[0.2, 0.33], [0.1, 0.47]])
    left = one_sided_derivative(f, x, a, axis=0, side="left")
    right = one_sided_derivative(f, x, a, axis=0, side="right")
    scale = max(1.0, float(np.max(np.abs(right))))
    assert np.max(np.abs(left - right)) <= 1e-8 * scale
    with pytest.raises(DomainError):
        one_sided_derivative(f, x, a, axis=0, side="up")


def test_fourth_order_convergence():
    smooth = AnalyticFunction(value=lambda x: np.sin(2.0 * x[:, 0]) * np.sin(3.0 * x[:, 1]))
    report = interpolation_error(smooth, ([0.1, 0.1], [0.9, 0.9]), 1.0 / 8, s=4, samples=500)
    assert len(report.errors) == 4
    assert abs(report.fitted_order - 4.0) <= 0.3
    with pytest.raises(DomainError):
        interpolation_error(smooth, ([0.1, 0.1], [0.9, 0.9]), 1.0 / 8, s=5)


def test_tilde_coefficients():
    assert tilde_coefficients(0) == (1, 0, 0, 0)
    assert tilde_coefficients(1) == (Fraction(-11, 6), Fraction(3), Fraction(-3, 2), Fraction(1, 3))
    assert tilde_coefficients(3) == (-1, 3, -3, 1)
    for j in range(1, 4):
        assert sum(tilde_coefficients(j)) == 0
    with pytest.raises(DomainError):
        tilde_coefficients(4)


def test_tilde_differences_of_cubics():
    delta = 0.1
    grid = AnalyticGrid(_cubic_2d, delta, 2)
    u = (3, 2)
    x = np.array([[0.3, 0.2]])
    assert tilde_delta(grid, u, 0, 1) == pytest.approx(delta * _cubic_2d_dx(x)[0], abs=1e-13)
    assert tilde_delta_multi(grid, u, (0, 0)) == pytest.approx(_cubic_2d(x)[0], abs=1e-14)
    # d^3/dy^3 of the cubic is -4.2
    assert tilde_delta(grid, u, 1, 3) == pytest.approx(-4.2 * delta ** 3, abs=1e-13)


def test_tilde_difference_is_interpolant_derivative_at_grid():
    lattice = enumerate_lattice(16, 3)
    f = GridFunction(lattice, np.random.default_rng(2).normal(size=len(lattice)))
    u = (4, 5)
    x = np.array(u) / 16
    for a in [(1, 0), (0, 2), (1, 1), (2, 1), (0, 3)]:
        expected = tilde_delta_multi(f, u, a) * 16 ** sum(a)
        assert eval_derivative(f, x, a) == pytest.approx(expected, rel=1e-12, abs=1e-10 * 16 ** sum(a))


def test_product_decomposition():
    lattice = enumerate_lattice(10, 2)
    f = GridFunction.from_callable(lattice, lambda x: np.sin(x[:, 0]))
    g = GridFunction.from_callable(lattice, lambda x: np.exp(x[:, 0]))
    main, eps = product_decomposition(f, g, np.array([0.3]))
    assert main == pytest.approx(np.sin(0.3) * np.exp(0.3), abs=1e-14)
    assert abs(eps) <= 1e-14
    main, eps = product_decomposition(f, g, np.array([[0.33], [0.41]]))
    assert main.shape == eps.shape == (2,)
    assert np.max(np.abs(eps)) <= 1e-3


def test_interpolant_gradient_and_hessian():
    grid = AnalyticGrid(lambda x: np.atleast_2d(x)[:, 0] ** 2 * np.atleast_2d(x)[:, 1], 0.05, 2)
    A = Interpolant(grid)
    x = np.array([[0.21, 0.37]])
    assert A(x) == pytest.approx([0.21 ** 2 * 0.37])
    assert A.gradient(x)[0] == pytest.approx([2 * 0.21 * 0.37, 0.21 ** 2], abs=1e-9)
    assert A.hessian(x)[0] == pytest.approx(np.array([[2 * 0.37, 2 * 0.21], [2 * 0.21, 0.0]]), abs=1e-6)


def test_constants_are_finite():
    kernel = weight_kernel()
    assert kernel.sup_weight() >= 1.0
    for a in [(1,), (2,), (1, 1), (2, 2)]:
        c = kernel.derivative_bound_constant(a)
        assert np.isfinite(c) and c > 0
    assert kernel.product_rule_constant(1) > 0


@settings(max_examples=60, deadline=None)
@given(t=st.floats(0.0, 1.0))
def test_weights_sum_to_one_everywhere(t):
    kernel = weight_kernel()
    assert abs(kernel.weights(t).sum() - 1.0) <= 1e-13
    for m in range(1, 5):
        assert abs(kernel.weights(t, m).sum()) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(
    f=st.lists(st.floats(-1.0, 1.0), min_size=33, max_size=33),
    g=st.lists(st.floats(-1.0, 1.0), min_size=33, max_size=33),
    x=st.floats(0.0, 1.0 - 5.0 / 32),
)
def test_product_rule_bound(f, g, x):
    lattice = enumerate_lattice(32, 2)
    f, g = GridFunction(lattice, np.array(f)), GridFunction(lattice, np.array(g))
    scale = np.max(np.abs(np.diff(f.values))) * np.max(np.abs(np.diff(g.values)))
    assume(scale > 0)
    _, eps = product_decomposition(f, g, np.array([x]))
    assert abs(eps) <= 1.01 * weight_kernel().product_rule_constant(1) * scale + 1e-12


def test_third_derivatives_of_cubics_are_constant_in_a_cell():
    grid = AnalyticGrid(_cubic_2d, 0.1, 2)
    x = np.array([[0.31, 0.52], [0.35, 0.58]])
    y = np.array([[0.38, 0.55], [0.32, 0.51]])
    for a in multi_indices(2, 3):
        assert np.max(cell_lipschitz_quotients(grid, x, y, a)) <= 1e-6


def test_third_derivative_lipschitz_bound():
    # Delta^4 of x^4 is 24 delta^4 everywhere
    kernel = weight_kernel()
    grid = AnalyticGrid(lambda x: np.atleast_2d(x)[:, 0] ** 4, 0.1, 1)
    x = np.array([[0.31], [0.35], [0.38]])
    y = np.array([[0.36], [0.33], [0.395]])
    quotients = cell_lipschitz_quotients(grid, x, y, (3,))
    constant = kernel.lipschitz_constant((3,))
    assert np.isfinite(constant) and constant > 0
    assert np.all(quotients > 0)
    assert np.max(quotients) <= 1.01 * 24.0 * constant


def test_lipschitz_quotients_need_pairs_in_one_cell():
    grid = AnalyticGrid(_cubic_2d, 0.1, 2)
    with pytest.raises(DomainError):
        cell_lipschitz_quotients(grid, np.array([[0.31, 0.52]]), np.array([[0.41, 0.52]]), (2, 1))
    with pytest.raises(DomainError):
        cell_lipschitz_quotients(grid, np.array([[0.31, 0.52]]), np.array([[0.31, 0.52]]), (2, 1))
    with pytest.raises(DomainError):
        weight_kernel().lipschitz_constant((4, 0))
    assert np.isfinite(weight_kernel().lipschitz_constant((1, 1, 1)))
