"""Input checks shared by the estimator and the command line."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ConfigError
from .image import Image, Mask


def check_image(img, name="image"):
    if isinstance(img, Image):
        return img
    arr = np.asarray(img, dtype=float)
    if arr.ndim not in (2, 3):
        raise ValueError(f"{name} must be a 2D or 3D array or Image, got shape {arr.shape}")
    return Image(arr)


def check_mask(mask, fixed):
    if mask is None:
        return None
    if not isinstance(mask, Mask):
        mask = Mask(np.asarray(getattr(mask, "voxels", mask)), fixed.spacing, fixed.origin)
    if mask.dims != fixed.dims:
        raise ValueError(f"mask dims {mask.dims} differ from fixed image dims {fixed.dims}")
    return mask


def check_points(X, d):
    """Finite float array of shape (n, d)."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != d:
        raise ValueError(f"expected points with {d} columns, got {X.shape[1]}")
    return X


def check_positive(value, name):
    if not value > 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value
