import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from eqgap import EquilibriumGapRegistration
from eqgap.exceptions import InvalidPoisson
from eqgap.validation import check_image, check_mask, check_points

FAST = dict(batch_size=300, iterations=10, learning_rate=1e-3, seed=4)


def blobs(n=32, shift=1.5):
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    c = (n - 1) / 2
    fixed = np.exp(-((i - c) ** 2 + (j - c) ** 2) / 40.0)
    moving = np.exp(-((i - c - shift) ** 2 + (j - c) ** 2) / 40.0)
    return fixed, moving


@pytest.fixture(scope="module")
def fitted():
    fixed, moving = blobs()
    return EquilibriumGapRegistration(**FAST).fit(fixed, moving)


def test_params_round_trip():
    est = EquilibriumGapRegistration(beta=0.2, regularizer="bending")
    params = est.get_params()
    assert params["beta"] == 0.2 and params["regularizer"] == "bending" and params["poisson"] == 0.0
    est.set_params(poisson=0.3)
    twin = clone(est)
    assert twin.get_params() == est.get_params() and twin is not est


def test_make_config_converts_material():
    cfg = EquilibriumGapRegistration(youngs=1.0, poisson=0.3).make_config()
    assert cfg.material.mu == pytest.approx(1 / 2.6)
    with pytest.raises(InvalidPoisson):
        EquilibriumGapRegistration(poisson=0.5).make_config()


def test_not_fitted():
    with pytest.raises(NotFittedError):
        EquilibriumGapRegistration().transform([[0.0, 0.0]])


def test_fit_attributes(fitted):
    assert fitted.n_features_in_ == 2
    assert fitted.history_.shape == (10, 4)
    lo, hi = fitted.audit_bounds_
    assert np.all(lo < hi)


def test_transform_predict_consistent(fitted):
    X = np.array([[3.0, 4.0], [15.5, 16.0], [20.0, 1.0]])
    np.testing.assert_allclose(fitted.transform(X) - X, fitted.predict(X), atol=1e-12)
    assert fitted.fit_transform is not None  # TransformerMixin surface


def test_audit_and_save(fitted, tmp_path):
    mn, frac = fitted.jacobian_audit(16)
    assert mn > 0 and frac == 0
    fitted.save_field(tmp_path / "f.eqgf")
    from eqgap import ControlGrid

    np.testing.assert_array_equal(ControlGrid.load(tmp_path / "f.eqgf").coeffs, fitted.grid_.coeffs)


def test_point_validation(fitted):
    with pytest.raises(ValueError):
        fitted.transform([[0.0, 1.0, 2.0]])
    with pytest.raises(ValueError):
        fitted.transform([[np.nan, 1.0]])


def test_input_helpers():
    with pytest.raises(ValueError):
        check_image(np.zeros(5))
    img = check_image(np.zeros((4, 4)))
    assert check_mask(None, img) is None
    with pytest.raises(ValueError):
        check_mask(np.ones((3, 4)), img)
    assert check_mask(np.eye(4) * 5, img).voxels.max() == 1.0
    assert check_points([[1, 2]], 2).dtype == np.float64


def test_seeded_fits_identical():
    fixed, moving = blobs(24)
    a = EquilibriumGapRegistration(**FAST).fit(fixed, moving)
    b = EquilibriumGapRegistration(**FAST).fit(fixed, moving)
    assert a.grid_.coeffs.tobytes() == b.grid_.coeffs.tobytes()
