import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wskan.splines import (
    SplineSpec,
    basis_eval,
    basis_grad_matrix,
    basis_grad_x,
    basis_matrix,
    make_spec,
    spline_eval,
)


def cox_de_boor_oracle(spec: SplineSpec, i: int, x: float) -> float:
    """Direct recursive evaluation of basis function i at x.

    Independent of the vectorized implementation: literal two-term
    recursion over the knot array with 0/0 -> 0 and the last core
    interval closed at b.
    """
    t = spec.knots
    closed = spec.grid_size + spec.degree - 1

    def n(j, r, x):
        if r == 0:
            if x == spec.b:
                return 1.0 if j == closed else 0.0
            return 1.0 if t[j] <= x < t[j + 1] else 0.0
        out = 0.0
        den_l = t[j + r] - t[j]
        if den_l != 0.0:
            out += (x - t[j]) / den_l * n(j, r - 1, x)
        den_r = t[j + r + 1] - t[j + 1]
        if den_r != 0.0:
            out += (t[j + r + 1] - x) / den_r * n(j + 1, r - 1, x)
        return out

    return n(i, spec.degree, x)


def test_make_spec_knot_layout():
    spec = make_spec(-1.0, 1.0, 5, 3)
    assert spec.n_basis == 8
    assert len(spec.knots) == 5 + 2 * 3 + 1
    assert spec.knots[3] == -1.0
    assert spec.knots[3 + 5] == 1.0
    np.testing.assert_allclose(np.diff(spec.knots), 0.4)


def test_make_spec_rejects_bad_args():
    with pytest.raises(ValueError):
        make_spec(1.0, 1.0, 5, 3)
    with pytest.raises(ValueError):
        make_spec(1.0, -1.0, 5, 3)
    with pytest.raises(ValueError):
        make_spec(np.nan, 1.0, 5, 3)
    with pytest.raises(ValueError):
        make_spec(0.0, 1.0, 0, 3)
    with pytest.raises(ValueError):
        make_spec(0.0, 1.0, 5, -1)


def test_degree_zero_is_interval_indicator():
    spec = make_spec(0.0, 4.0, 4, 0)
    v = basis_eval(spec, 1.5)
    np.testing.assert_array_equal(v, [0.0, 1.0, 0.0, 0.0])
    # right endpoint falls in the last (closed) interval
    v = basis_eval(spec, 4.0)
    np.testing.assert_array_equal(v, [0.0, 0.0, 0.0, 1.0])


def test_cubic_values_at_interior_knot():
    # uniform cubic B-spline takes values (1/6, 2/3, 1/6) at a knot
    spec = make_spec(0.0, 4.0, 4, 3)
    v = basis_eval(spec, 2.0)
    np.testing.assert_allclose(v[[2, 3, 4]], [1 / 6, 2 / 3, 1 / 6], atol=1e-15)
    others = np.delete(v, [2, 3, 4])
    np.testing.assert_allclose(others, 0.0, atol=1e-15)


def test_matches_recursive_oracle():
    rng = np.random.default_rng(0)
    for a, b, g, k in [(-1.0, 1.0, 5, 3), (0.0, 2.0, 3, 2), (-2.0, 3.0, 7, 1), (0.0, 1.0, 4, 0), (-1.0, 1.0, 2, 4)]:
        spec = make_spec(a, b, g, k)
        xs = rng.uniform(a, b, size=25)
        xs = np.append(xs, [a, b])
        for x in xs:
            got = basis_eval(spec, x)
            want = np.array([cox_de_boor_oracle(spec, i, x) for i in range(spec.n_basis)])
            np.testing.assert_allclose(got, want, atol=1e-12)


@settings(deadline=None, max_examples=40)
@given(
    g=st.integers(min_value=1, max_value=9),
    k=st.integers(min_value=0, max_value=5),
    u=st.floats(min_value=0.0, max_value=1.0),
)
def test_partition_of_unity(g, k, u):
    spec = make_spec(-1.5, 2.5, g, k)
    x = spec.a + u * (spec.b - spec.a)
    assert abs(basis_eval(spec, x).sum() - 1.0) < 1e-10


def test_partition_of_unity_dense():
    spec = make_spec(-1.0, 1.0, 10, 3)
    xs = np.linspace(-1.0, 1.0, 1001)
    sums = basis_matrix(spec, xs).sum(axis=-1)
    np.testing.assert_allclose(sums, 1.0, atol=1e-10)


def test_nonnegative_and_local_support():
    spec = make_spec(-1.0, 1.0, 6, 3)
    xs = np.linspace(-1.0, 1.0, 301)
    vals = basis_matrix(spec, xs)
    assert (vals >= 0.0).all()
    for i in range(spec.n_basis):
        lo, hi = spec.knots[i], spec.knots[i + spec.degree + 1]
        outside = (xs < lo) | (xs > hi)
        np.testing.assert_array_equal(vals[outside, i], 0.0)


def test_clamping_outside_domain():
    spec = make_spec(-1.0, 1.0, 5, 3)
    np.testing.assert_array_equal(basis_eval(spec, 3.7), basis_eval(spec, 1.0))
    np.testing.assert_array_equal(basis_eval(spec, -2.0), basis_eval(spec, -1.0))


def test_non_finite_input_raises():
    spec = make_spec(-1.0, 1.0, 5, 3)
    with pytest.raises(ValueError):
        basis_eval(spec, np.nan)
    with pytest.raises(ValueError):
        basis_grad_x(spec, np.inf)


def test_grad_matches_finite_differences():
    rng = np.random.default_rng(1)
    h = 1e-5
    for a, b, g, k in [(-1.0, 1.0, 5, 3), (0.0, 2.0, 4, 2), (-2.0, 1.0, 6, 1)]:
        spec = make_spec(a, b, g, k)
        # keep away from knots and from the boundary so x +- h stays inside
        xs = rng.uniform(a + 2 * h, b - 2 * h, size=40)
        step = (b - a) / g
        xs = xs[np.abs(((xs - a) / step) - np.round((xs - a) / step)) > 1e-3]
        for x in xs:
            an = basis_grad_x(spec, x)
            fd = (basis_eval(spec, x + h) - basis_eval(spec, x - h)) / (2 * h)
            rel = np.abs(an - fd) / np.maximum(1.0, np.maximum(np.abs(an), np.abs(fd)))
            assert rel.max() < 1e-4


def test_grad_degree_zero_is_zero():
    spec = make_spec(0.0, 1.0, 5, 0)
    np.testing.assert_array_equal(basis_grad_x(spec, 0.31), np.zeros(5))


def test_grads_sum_to_zero():
    # derivative of the all-ones combination (constant 1) vanishes
    spec = make_spec(-1.0, 1.0, 7, 3)
    xs = np.linspace(-0.99, 0.99, 57)
    g = basis_grad_matrix(spec, xs).sum(axis=-1)
    np.testing.assert_allclose(g, 0.0, atol=1e-10)


def test_spline_eval_linear_in_coefs():
    spec = make_spec(-1.0, 1.0, 5, 3)
    rng = np.random.default_rng(2)
    c1 = rng.standard_normal(spec.n_basis)
    c2 = rng.standard_normal(spec.n_basis)
    x = 0.37
    lhs = spline_eval(spec, c1 + c2, x)
    rhs = spline_eval(spec, c1, x) + spline_eval(spec, c2, x)
    assert abs(lhs - rhs) < 1e-12
    with pytest.raises(ValueError):
        spline_eval(spec, np.ones(3), x)


def test_basis_matrix_shapes():
    spec = make_spec(-1.0, 1.0, 5, 3)
    xs = np.zeros((4, 7))
    assert basis_matrix(spec, xs).shape == (4, 7, 8)
    assert basis_grad_matrix(spec, xs).shape == (4, 7, 8)
