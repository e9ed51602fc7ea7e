import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from sobolev_lab import corpus
from sobolev_lab.errors import DomainError, UnknownFunctionError
from sobolev_lab.grid import (
    AbsDev,
    Ball,
    Box,
    Grid,
    GridFunction,
    NodeMask,
    VectorField,
    ball_average,
    ball_weights,
    derivative,
    gradient_fd,
    interpolate,
    lp_norm,
    multi_indices,
    sample,
    unit_ball_volume,
    wkp_norm,
)


def grid2(m=41, lo=-1.0, hi=1.0):
    return Grid((lo, lo), (hi, hi), (m, m))


# --- construction -----------------------------------------------------------


def test_grid_rejects_too_few_nodes():
    with pytest.raises(DomainError):
        Grid((0.0,), (1.0,), (2,))


def test_grid_rejects_reversed_bounds():
    with pytest.raises(DomainError):
        Grid((1.0,), (0.0,), (5,))


def test_spacing_is_exact_and_last_node_hits_upper():
    g = Grid((-0.3, 0.0), (0.7, 2.0), (11, 5))
    assert g.spacing == ((0.7 + 0.3) / 10, 0.5)
    assert g.axis(0)[-1] == 0.7
    assert g.points().shape == (11, 5, 2)


def test_centered_grid_has_exact_center_node():
    g = Grid.centered((0.1, -0.3), 0.05, 0.003)
    i = g.nearest_index((0.1, -0.3))
    assert g.axis(0)[i[0]] == 0.1 and g.axis(1)[i[1]] == -0.3


def test_gridfunction_rejects_nonfinite():
    g = Grid((0.0,), (1.0,), (5,))
    with pytest.raises(DomainError):
        GridFunction(g, [0, 1, np.inf, 0, 0])


def test_gridfunction_mask_turns_undefined_nodes_to_nan():
    g = Grid((0.0,), (1.0,), (5,))
    f = GridFunction(g, [np.nan, 1, 2, 3, 4], mask=[False, True, True, True, True])
    assert np.isnan(f.values[0])
    assert not f.values.flags.writeable


# --- sampling ---------------------------------------------------------------


def test_sample_constant():
    f = sample("const", grid2(9))
    assert np.all(f.values == 1.0)


def test_sample_abs_1d_node():
    g = Grid((-1.0,), (1.0,), (5,))
    f = sample("abs_1d", g)
    assert f.values[3] == 0.5


def test_sample_abs_2d_is_euclidean():
    g = Grid((-5.0, -5.0), (5.0, 5.0), (11, 11))
    f = sample("abs_nd", g)
    assert f.values[8, 9] == 5.0


def test_sample_unknown_id():
    with pytest.raises(UnknownFunctionError):
        sample("no_such_function", grid2(5))


# --- finite differences -----------------------------------------------------


def test_gradient_of_constant_vanishes():
    g = gradient_fd(sample("const", grid2(9)))
    assert np.all(g.values == 0.0)


def test_gradient_of_square_at_interior_node():
    g = Grid((0.0, -1.0), (2.0, 1.0), (9, 5))
    f = sample(lambda y: y[..., 0] ** 2, g)
    grad = gradient_fd(f)
    i = g.nearest_index((1.0, 0.0))
    np.testing.assert_allclose(grad.values[i], [2.0, 0.0], atol=1e-14)


def test_gradient_of_linear_exact_everywhere():
    g = Grid((-1.0, 0.0), (1.0, 3.0), (7, 13))
    grad = gradient_fd(sample("linear", g))
    np.testing.assert_allclose(grad.values, np.broadcast_to([0.7, -1.3], grad.values.shape), atol=1e-13)


SMOOTH = ["gauss", "gauss_1d", "bump", "poly_3", "exp_x1"]


@pytest.mark.parametrize("fid", SMOOTH)
def test_gradient_second_order_refinement(fid):
    """Halving h divides the interior max error by at least 3.5."""
    e = corpus.get(fid)
    probes = np.array([[0.25] * e.n, [-0.5] + [0.125] * (e.n - 1), [0.5] * e.n])
    errs = []
    for m in (33, 65, 129):
        g = Grid((-1.0,) * e.n, (1.0,) * e.n, (m,) * e.n)
        grad = gradient_fd(sample(fid, g))
        idx = [g.nearest_index(x) for x in probes]
        got = np.array([grad.values[i] for i in idx])
        errs.append(np.max(np.abs(got - e.gradient(probes))))
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5


def test_derivative_rejects_bad_multiindex():
    with pytest.raises(DomainError):
        derivative(sample("gauss", grid2(9)), (1,))


def test_multi_indices_graded_order_and_count():
    idx = multi_indices(2, 2)
    assert idx == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert len(multi_indices(3, 3)) == math.comb(6, 3)
    assert multi_indices(2, 3, exact=True) == [(3, 0), (2, 1), (1, 2), (0, 3)]


# --- norms ------------------------------------------------------------------


@pytest.mark.parametrize("p", [1.0, 2.0, 3.5])
def test_lp_norm_of_constant_on_box(p):
    g = grid2(21)
    f = GridFunction(g, np.full(g.shape, -3.0))
    B = Box((-0.5, -0.3), (0.7, 0.4))
    assert lp_norm(f, p, B) == pytest.approx(3.0 * B.volume ** (1 / p), rel=1e-12)


def test_lp_norm_of_zero():
    g = grid2(9)
    assert lp_norm(GridFunction(g, np.zeros(g.shape)), 2.0, Box((-1, -1), (1, 1))) == 0.0


def test_lp_norm_of_identity_on_unit_interval():
    g = Grid((0.0,), (1.0,), (1025,))
    f = sample(lambda y: y[..., 0], g)
    assert lp_norm(f, 2.0, Box((0.0,), (1.0,))) == pytest.approx(1 / math.sqrt(3), abs=1e-6)


def test_lp_norm_empty_region():
    g = grid2(9)
    with pytest.raises(DomainError):
        lp_norm(sample("gauss", g), 1.0, Box((2.0, 2.0), (3.0, 3.0)))
    with pytest.raises(DomainError):
        lp_norm(sample("gauss", g), 1.0, NodeMask(np.zeros(g.shape, dtype=bool)))


def test_lp_norm_rejects_p_below_one():
    with pytest.raises(DomainError):
        lp_norm(sample("gauss", grid2(9)), 0.5, Box((-1, -1), (1, 1)))


def test_ball_region_volume_is_exact():
    g = grid2(41)
    f = GridFunction(g, np.ones(g.shape))
    assert lp_norm(f, 1.0, Ball((0.1, -0.05), 0.55)) == pytest.approx(math.pi * 0.55**2, rel=1e-12)


@pytest.mark.parametrize("p", [1.0, 2.0])
def test_wkp_norm_of_constant(p):
    g = grid2(21)
    f = GridFunction(g, np.full(g.shape, 2.0))
    B = Box((-0.5, -0.5), (0.5, 0.25))
    assert wkp_norm(f, 1, p, B) == pytest.approx(2.0 * B.volume ** (1 / p), rel=1e-12)


def test_wkp_norm_of_linear_function_p1():
    # int_B |a.y| by nested quadrature plus the per-partial gradient terms |a_i| |B|
    g = Grid((-1.0, -1.0), (1.0, 1.0), (401, 401))
    f = sample("linear", g)
    B = Box((-0.4, -0.2), (0.6, 0.5))
    a = (0.7, -1.3)

    def inner(y1):
        return quad(lambda y0: abs(a[0] * y0 + a[1] * y1), B.lower[0], B.upper[0],
                    points=[-a[1] * y1 / a[0]], epsabs=1e-13)[0]

    value = quad(inner, B.lower[1], B.upper[1], epsabs=1e-12)[0]
    expected = value + (abs(a[0]) + abs(a[1])) * B.volume
    assert wkp_norm(f, 1, 1.0, B) == pytest.approx(expected, rel=1e-4)


def test_wkp_norm_k0_is_lp_norm():
    g = grid2(21)
    f = sample("gauss", g)
    B = Ball((0.0, 0.0), 0.5)
    assert wkp_norm(f, 0, 2.0, B) == lp_norm(f, 2.0, B)


def test_wkp_norm_needs_stencil_room():
    g = grid2(21)
    with pytest.raises(DomainError):
        wkp_norm(sample("gauss", g), 1, 2.0, Box((-1.0, -1.0), (0.0, 0.0)))


fields = st.integers(0, 2**31 - 1)


@given(fields, st.floats(-5, 5), st.floats(1.0, 6.0))
def test_lp_norm_absolutely_homogeneous(seed, c, p):
    g = grid2(17)
    f = GridFunction(g, np.random.default_rng(seed).normal(size=g.shape))
    B = Ball((0.1, 0.0), 0.7)
    assert lp_norm(f * c, p, B) == pytest.approx(abs(c) * lp_norm(f, p, B), rel=1e-12, abs=1e-300)


@given(fields, st.floats(1.0, 6.0))
def test_lp_norm_triangle_inequality(seed, p):
    g = grid2(17)
    rng = np.random.default_rng(seed)
    f = GridFunction(g, rng.normal(size=g.shape))
    h = GridFunction(g, rng.normal(size=g.shape) * rng.uniform(0, 3))
    B = Box((-0.8, -0.6), (0.9, 0.4))
    lhs = lp_norm(f + h, p, B)
    assert lhs <= (lp_norm(f, p, B) + lp_norm(h, p, B)) * (1 + 1e-10)


@given(
    st.sampled_from(["gauss", "abs_nd", "bump", "poly_3", "exp_x1", "gauss*abs_nd"]),
    st.tuples(st.floats(-0.4, 0.4), st.floats(-0.4, 0.4)),
    st.floats(0.05, 0.5),
    st.floats(-1.0, 1.0),
    st.floats(1.0, 4.0),
    st.floats(0.0, 1.0),
)
def test_jensen_consistency(fid, x, r, c, p, frac):
    g = grid2(65)
    f = sample(fid, g)
    q = 1.0 + frac * (p - 1.0)
    lhs = ball_average(f, x, r, AbsDev(c, q))
    rhs = ball_average(f, x, r, AbsDev(c, p)) ** (q / p)
    assert lhs <= rhs + 1e-10


# --- ball averages ----------------------------------------------------------


# radii of at least 3 spacings, as every radius schedule guarantees
@given(st.tuples(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5)), st.floats(0.15, 0.45))
def test_ball_average_of_linear_is_center_value(x, r):
    f = sample("linear", grid2(41))
    assert ball_average(f, x, r) == pytest.approx(0.7 * x[0] - 1.3 * x[1], abs=1e-12)


def sign_field(m=401):
    g = Grid((-1.0,), (1.0,), (m,))
    return sample(lambda y: np.sign(y[..., 0]), g)


@pytest.mark.parametrize("m", [401, 4001, 40001])
def test_ball_average_sign_deviation_is_one(m):
    # the node at 0 holds sign(0) = 0, a defect of one dual cell
    h = 2.0 / (m - 1)
    dev = ball_average(sign_field(m), 0.0, 0.3, AbsDev(0.0, 1.0))
    assert 0.0 <= 1.0 - dev <= h / 0.3


def test_ball_average_sign_raw_is_zero():
    assert abs(ball_average(sign_field(), 0.0, 0.3)) < 1e-14


def test_ball_average_vector_field_componentwise():
    g = grid2(41)
    v = VectorField(g, np.stack([sample("linear", g).values, sample("const", g).values], axis=-1))
    np.testing.assert_allclose(ball_average(v, (0.2, 0.1), 0.3), [0.7 * 0.2 - 1.3 * 0.1, 1.0], atol=1e-12)


def test_ball_average_outside_domain():
    with pytest.raises(DomainError):
        ball_average(sample("gauss", grid2(9)), (0.9, 0.0), 0.3)


def test_ball_average_rejects_undefined_nodes():
    g = Grid((-1.0,), (1.0,), (41,))
    mask = np.ones(41, dtype=bool)
    mask[20] = False
    f = GridFunction(g, np.zeros(41), mask)
    with pytest.raises(DomainError):
        ball_average(f, 0.0, 0.2)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_ball_weights_integrate_quadratics_exactly(n):
    g = Grid((-1.0,) * n, (1.0,) * n, ({1: 201, 2: 61, 3: 25}[n],) * n)
    x = np.array([0.013, -0.021, 0.007][:n])
    r = 0.43
    slices, w = ball_weights(g, x, r)
    P = g.points()[slices] - x
    vol = unit_ball_volume(n) * r**n
    assert w.sum() == pytest.approx(vol, rel=1e-12)
    for i in range(n):
        assert np.sum(w * P[..., i]) == pytest.approx(0.0, abs=1e-13)
        assert np.sum(w * P[..., i] ** 2) == pytest.approx(vol * r**2 / (n + 2), rel=1e-11)


# --- interpolation ----------------------------------------------------------


@given(st.tuples(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9)))
def test_interpolation_exact_for_bicubic(y):
    g = grid2(21)
    fn = lambda P: 1 + P[..., 0] ** 3 - 2 * P[..., 0] * P[..., 1] ** 2 + P[..., 1] ** 3 * P[..., 0] ** 2
    f = sample(fn, g)
    assert interpolate(f, np.array([y]))[0] == pytest.approx(fn(np.array(y)), abs=1e-12)


def test_interpolation_outside_grid():
    with pytest.raises(DomainError):
        interpolate(sample("gauss", grid2(9)), np.array([[1.5, 0.0]]))
