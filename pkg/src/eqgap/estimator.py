"""scikit-learn style wrapper around :func:`eqgap.engine.register`."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import engine, evaluation
from .mechanics import lame_from_youngs
from .validation import check_image, check_mask, check_points


class EquilibriumGapRegistration(TransformerMixin, BaseEstimator):
    """Deformable registration with an equilibrium-gap or bending regularizer.

    ``fit(fixed, moving)`` estimates the field; ``transform`` maps world
    points through ``phi(x) = x + u(x)`` and ``predict`` returns ``u(x)``.
    Material parameters are given as Young's modulus and Poisson ratio.
    """

    def __init__(
        self,
        beta=0.001,
        similarity="mse",
        regularizer="physics",
        youngs=1.0,
        poisson=0.0,
        batch_size=10000,
        iterations=10000,
        learning_rate=1e-4,
        seed=0,
        determinism=True,
        control_spacing=None,
    ):
        self.beta = beta
        self.similarity = similarity
        self.regularizer = regularizer
        self.youngs = youngs
        self.poisson = poisson
        self.batch_size = batch_size
        self.iterations = iterations
        self.learning_rate = learning_rate
        self.seed = seed
        self.determinism = determinism
        self.control_spacing = control_spacing

    def make_config(self):
        return engine.RegistrationConfig(
            beta=self.beta,
            similarity=self.similarity,
            regularizer=self.regularizer,
            material=lame_from_youngs(self.youngs, self.poisson),
            batch_size=int(self.batch_size),
            iterations=int(self.iterations),
            learning_rate=self.learning_rate,
            seed=int(self.seed),
            determinism=bool(self.determinism),
            control_spacing=self.control_spacing,
        )

    def fit(self, X, y, mask=None, callback=None):
        """``X`` is the fixed image, ``y`` the moving image (arrays or Images)."""
        fixed = check_image(X, "fixed")
        moving = check_image(y, "moving")
        roi = check_mask(mask, fixed)
        res = engine.register(fixed, moving, roi, self.make_config(), callback=callback)
        self.grid_ = res.grid
        self.coord_map_ = res.coord_map
        self.history_ = np.asarray(res.history)
        self.diagnostics_ = dict(res.diagnostics)
        self.n_features_in_ = fixed.d
        self.audit_bounds_ = engine.normalized_bounds(fixed, res.coord_map)
        return self

    def transform(self, X):
        """Warp world points ``X`` (n, d)."""
        check_is_fitted(self, "grid_")
        X = check_points(X, self.n_features_in_)
        return evaluation.warp_world(self.grid_, X, self.coord_map_)

    def predict(self, X):
        """Displacement ``u`` (world units) at world points ``X`` (n, d)."""
        return self.transform(X) - check_points(X, self.n_features_in_)

    def jacobian_audit(self, n_per_axis=None):
        """(min J, fraction of J <= 0) over a dense grid covering the fixed image."""
        check_is_fitted(self, "grid_")
        lo, hi = self.audit_bounds_
        return evaluation.domain_audit(self.grid_, lo, hi, n_per_axis)

    def save_field(self, path):
        check_is_fitted(self, "grid_")
        self.grid_.save(path)
