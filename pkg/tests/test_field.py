import numpy as np
import pytest
from hypothesis import given, strategies as st

from eqgap import field
from eqgap.exceptions import OutOfSupport, ParseError
from eqgap.field import ControlGrid

from conftest import central_diff


def cubic_bspline(t):
    """Centred cubic B-spline, written piecewise (independent of the library's weights)."""
    t = np.abs(t)
    return np.where(t < 1, 2.0 / 3.0 - t**2 + 0.5 * t**3, np.where(t < 2, (2 - t) ** 3 / 6.0, 0.0))


def brute_force_u(grid, x):
    """Sum over every control point of c_k * prod_a B((x_a - p_ka) / h_a)."""
    pts = grid.control_points().reshape(-1, grid.d)
    c = grid.coeffs.reshape(-1, grid.d)
    w = np.prod(cubic_bspline((x[None, :] - pts) / grid.spacing), axis=1)
    return w @ c


def random_grid(rng, d, n=7):
    g = ControlGrid((n,) * d, rng.uniform(0.1, 0.3, d), rng.uniform(-1, 0, d), None)
    g.coeffs = 0.05 * rng.standard_normal(g.coeffs.shape)
    return g


def interior_points(grid, rng, m):
    lo, hi = grid.support_bounds()
    return rng.uniform(lo, hi - 1e-9, size=(m, grid.d))


@given(st.floats(0.0, 0.999999))
def test_weights_partition_of_unity(t):
    w, dw, ddw = field.bspline_weights(np.array(t))
    assert np.sum(w) == pytest.approx(1.0, abs=1e-15)
    assert np.sum(dw) == pytest.approx(0.0, abs=1e-14)
    assert np.sum(ddw) == pytest.approx(0.0, abs=1e-14)
    np.testing.assert_allclose(w, cubic_bspline(t - np.arange(-1, 3)), atol=1e-15)


@pytest.mark.parametrize("d", [2, 3])
def test_matches_brute_force_sum(rng, d):
    g = random_grid(rng, d)
    x = interior_points(g, rng, 10)
    u = field.sample_field(g, x).u
    for p, up in zip(x, u):
        np.testing.assert_allclose(up, brute_force_u(g, p), rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("d", [2, 3])
def test_zero_coefficients(rng, d):
    g = ControlGrid((6,) * d, [0.2] * d, [-0.5] * d, None)
    s = field.sample_field(g, interior_points(g, rng, 5))
    assert not np.any(s.u) and not np.any(s.G) and not np.any(s.H)


@pytest.mark.parametrize("d", [2, 3])
def test_affine_reproduction(rng, d):
    g = random_grid(rng, d)
    A = 0.3 * rng.standard_normal((d, d))
    b = rng.standard_normal(d)
    g.set_affine(A, b)
    x = interior_points(g, rng, 50)
    s = field.sample_field(g, x)
    np.testing.assert_allclose(s.u, x @ A.T + b, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(s.G, np.broadcast_to(A, s.G.shape), atol=1e-12)
    assert np.max(np.abs(s.H)) < 1e-10


@pytest.mark.parametrize("d", [2, 3])
def test_derivatives_match_fd(rng, d):
    g = random_grid(rng, d)
    for x in interior_points(g, rng, 5):
        s = field.sample_field(g, x)
        fdG = central_diff(lambda y: field.sample_field(g, y).u, x, h=1e-6)
        fdH = central_diff(lambda y: field.sample_field(g, y).G, x, h=1e-6)
        assert np.max(np.abs(s.G - fdG)) <= 1e-6 * max(1.0, np.max(np.abs(s.G)))
        assert np.max(np.abs(s.H - fdH)) <= 1e-6 * max(1.0, np.max(np.abs(s.H)))
        np.testing.assert_allclose(s.H, np.swapaxes(s.H, -1, -2), atol=1e-12)


def test_single_point_and_batch_agree(rng):
    g = random_grid(rng, 2)
    x = interior_points(g, rng, 4)
    batch = field.sample_field(g, x)
    for i in range(4):
        one = field.sample_field(g, x[i])
        np.testing.assert_allclose(one.u, batch.u[i], rtol=1e-13, atol=1e-16)
        np.testing.assert_allclose(one.H, batch.H[i], rtol=1e-13, atol=1e-13)


def test_lower_order_skips_derivatives(rng):
    g = random_grid(rng, 2)
    x = interior_points(g, rng, 3)
    s0 = field.sample_field(g, x, order=0)
    s1 = field.sample_field(g, x, order=1)
    s2 = field.sample_field(g, x)
    assert s0.G is None and s1.H is None
    np.testing.assert_allclose(s0.u, s2.u, rtol=1e-14)
    np.testing.assert_allclose(s1.G, s2.G, rtol=1e-14)
    np.testing.assert_allclose(field.displacement(g, x), s2.u, rtol=1e-14)


def test_out_of_support(rng):
    g = random_grid(rng, 2)
    lo, _ = g.support_bounds()
    with pytest.raises(OutOfSupport):
        field.sample_field(g, lo - 1e-6)


def test_covering_grid_supports_box():
    lo, hi = np.array([-0.5, -0.25]), np.array([0.5, 0.25])
    g = ControlGrid.covering(lo, hi, 1 / 16)
    slo, shi = g.support_bounds()
    assert np.all(slo <= lo) and np.all(shi > hi)
    corners = np.array([[lo[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
    field.sample_field(g, corners)


# -- parameter gradients ------------------------------------------------------------


def test_contributions_partition_of_unity(rng):
    g = random_grid(rng, 2)
    x = interior_points(g, rng, 1)
    idx, vals = field.param_gradient_contributions(g, x, dL_du=np.array([[1.0, 0.0]]))
    assert idx.shape == (1, 16) and vals.shape == (1, 16, 2)
    assert np.all(vals[..., 1] == 0)
    assert np.sum(vals[..., 0]) == pytest.approx(1.0, abs=1e-14)
    assert np.all(vals[..., 0] >= 0)


def test_zero_sensitivities_give_zero_contributions(rng):
    g = random_grid(rng, 3)
    x = interior_points(g, rng, 4)
    _, vals = field.param_gradient_contributions(
        g, x, np.zeros((4, 3)), np.zeros((4, 3, 3)), np.zeros((4, 3, 3, 3))
    )
    assert not np.any(vals)


@pytest.mark.parametrize("d", [2, 3])
def test_param_gradient_matches_fd(rng, d):
    """A quadratic functional of (u, G, H) differentiated w.r.t. every coefficient."""
    g = random_grid(rng, d, n=5)
    x = interior_points(g, rng, 6)
    Wu = rng.standard_normal((6, d))
    WG = rng.standard_normal((6, d, d))
    WH = rng.standard_normal((6, d, d, d))
    WH = WH + np.swapaxes(WH, -1, -2)

    def loss(c):
        s = field.sample_field(g.copy(c), x)
        return 0.5 * (np.sum(Wu * s.u**2) + np.sum(WG * s.G**2) + np.sum(WH * s.H**2))

    s = field.sample_field(g, x)
    grad = field.param_gradient(g, x, Wu * s.u, WG * s.G, WH * s.H)
    fd = central_diff(loss, g.coeffs, h=1e-6)
    assert np.max(np.abs(grad - fd)) <= 1e-6 * np.max(np.abs(grad))


def test_accumulate_is_deterministic(rng):
    g = random_grid(rng, 2, n=8)
    x = interior_points(g, rng, 5000)
    dL = rng.standard_normal((5000, 2))
    a = field.param_gradient(g, x, dL)
    b = field.param_gradient(g, x, dL)
    assert a.tobytes() == b.tobytes()
    # reduction equals the brute-force sum of per-point contributions
    idx, vals = field.param_gradient_contributions(g, x, dL)
    dense = np.zeros((g.n_coeffs, 2))
    np.add.at(dense, idx.ravel(), vals.reshape(-1, 2))
    np.testing.assert_allclose(a.reshape(-1, 2), dense, rtol=1e-12, atol=1e-13)


# -- serialization -----------------------------------------------------------------


@pytest.mark.parametrize("d", [2, 3])
def test_eqgf_round_trip(tmp_path, rng, d):
    g = random_grid(rng, d)
    path = tmp_path / "f.eqgf"
    g.save(path)
    h = ControlGrid.load(path)
    assert h.dims == g.dims
    assert h.coeffs.tobytes() == g.coeffs.tobytes()
    np.testing.assert_array_equal(h.spacing, g.spacing)
    np.testing.assert_array_equal(h.origin, g.origin)
    assert path.read_bytes()[:4] == b"EQGF"


def test_eqgf_layout(rng):
    g = ControlGrid((4, 5), [0.5, 0.25], [1.0, 2.0], None)
    g.coeffs = np.arange(40, dtype=float).reshape(4, 5, 2)
    data = g.to_bytes()
    header = 4 + 8 + 2 * 4 + 2 * 8 + 2 * 8
    assert len(data) == header + 40 * 8
    assert np.frombuffer(data[header:], "<f8")[:4].tolist() == [0.0, 1.0, 2.0, 3.0]


def test_eqgf_rejects_bad_files(rng):
    g = random_grid(rng, 2)
    data = g.to_bytes()
    with pytest.raises(ParseError):
        ControlGrid.from_bytes(b"XXXX" + data[4:])
    with pytest.raises(ParseError):
        ControlGrid.from_bytes(data[:-8])


def test_grid_validation():
    with pytest.raises(ValueError):
        ControlGrid((3, 5), [1, 1], [0, 0], None)
    with pytest.raises(ValueError):
        ControlGrid((5, 5), [1, -1], [0, 0], None)
    with pytest.raises(ValueError):
        ControlGrid((5, 5), [1, 1], [0, 0], np.zeros((5, 5, 3)))
