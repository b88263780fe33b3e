import numpy as np
import pytest
from hypothesis import given, strategies as st

from eqgap import losses
from eqgap.exceptions import DegenerateBatch, InvalidBeta

from conftest import central_diff


def test_mse_examples():
    assert losses.mse_batch([1.0, 2.0], [1.0, 2.0])[0] == 0.0
    assert losses.mse_batch([0.0, 1.0], [1.0, 1.0])[0] == 0.5


def test_mse_gradient(rng):
    f, m = rng.standard_normal(30), rng.standard_normal(30)
    _, g = losses.mse_batch(f, m)
    fd = central_diff(lambda v: losses.mse_batch(f, v)[0], m, h=1e-5)
    np.testing.assert_allclose(g, fd, rtol=1e-8, atol=1e-10)


def test_ncc_examples(rng):
    f = rng.standard_normal(50)
    assert losses.ncc_batch(f, 3.0 * f + 2.0)[0] == pytest.approx(0.0, abs=1e-14)
    assert losses.ncc_batch(f, -f)[0] == pytest.approx(2.0, abs=1e-14)


def test_ncc_gradient(rng):
    f, m = rng.standard_normal(40), rng.standard_normal(40)
    _, g = losses.ncc_batch(f, m)
    fd = central_diff(lambda v: losses.ncc_batch(f, v)[0], m, h=1e-6)
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9)


@given(st.floats(0.01, 100.0), st.floats(-50.0, 50.0))
def test_ncc_affine_invariance(a, b):
    rng = np.random.default_rng(3)
    f, m = rng.standard_normal(64), rng.standard_normal(64)
    loss, g = losses.ncc_batch(f, m)
    loss2, g2 = losses.ncc_batch(f, a * m + b)
    assert loss2 == pytest.approx(loss, abs=1e-12)
    np.testing.assert_allclose(g2, g / a, rtol=1e-8, atol=1e-12)


def test_ncc_degenerate():
    with pytest.raises(DegenerateBatch):
        losses.ncc_batch([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(DegenerateBatch):
        losses.ncc_batch([1.0, 2.0], [5.0, 5.0])
    with pytest.raises(DegenerateBatch):
        losses.ncc_batch([1.0], [2.0])


def test_bending_examples():
    assert losses.bending_energy_point(np.zeros((2, 2, 2)))[0] == 0.0
    H = np.zeros((2, 2, 2))
    H[0, 0, 1] = H[0, 1, 0] = 1.0
    assert losses.bending_energy_point(H)[0] == 2.0


def test_bending_sensitivity(rng):
    H = rng.standard_normal((3, 3, 3))
    H = H + np.swapaxes(H, -1, -2)
    _, dH = losses.bending_energy_point(H)
    fd = central_diff(lambda h: losses.bending_energy_point(h)[0], H, h=1e-5)
    np.testing.assert_allclose(dH, fd, rtol=1e-9, atol=1e-9)


def test_total_loss_examples():
    assert losses.total_loss(0.4, 10.0, 0.0) == 0.4
    assert losses.total_loss(0.4, 10.0, 1.0) == 10.0
    assert losses.total_loss(1.0, 3.0, 0.5) == 2.0


@pytest.mark.parametrize("beta", [-0.1, 1.5, float("nan")])
def test_invalid_beta(beta):
    with pytest.raises(InvalidBeta):
        losses.total_loss(1.0, 1.0, beta)
