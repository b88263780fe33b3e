"""Images, masks and landmark files.

Voxel arrays are indexed ``voxels[i, j, k]`` with ``i`` running along the
first MetaImage axis (``x``), which is the fastest-varying index on disk.
Continuous voxel coordinates follow the same order; world coordinates are
``origin + index * spacing`` (mm).
"""

import logging
import os
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .exceptions import EmptyMask, OutOfBounds, ParseError, SizeMismatch

logger = logging.getLogger(__name__)

MET_TYPES = {
    "MET_UCHAR": np.dtype("<u1"),
    "MET_CHAR": np.dtype("<i1"),
    "MET_SHORT": np.dtype("<i2"),
    "MET_USHORT": np.dtype("<u2"),
    "MET_INT": np.dtype("<i4"),
    "MET_FLOAT": np.dtype("<f4"),
    "MET_DOUBLE": np.dtype("<f8"),
}


@dataclass
class Image:
    voxels: np.ndarray
    spacing: np.ndarray = None
    origin: np.ndarray = None

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels, dtype=float)
        d = self.voxels.ndim
        self.spacing = np.ones(d) if self.spacing is None else np.asarray(self.spacing, dtype=float).reshape(d)
        self.origin = np.zeros(d) if self.origin is None else np.asarray(self.origin, dtype=float).reshape(d)
        if d not in (2, 3):
            raise ValueError(f"only 2D and 3D images are supported, got {d}D")
        if any(n < 2 for n in self.voxels.shape):
            raise ValueError(f"need at least 2 voxels per axis, got {self.voxels.shape}")
        if np.any(self.spacing <= 0):
            raise ValueError("spacing must be positive")

    @property
    def dims(self):
        return self.voxels.shape

    @property
    def d(self):
        return self.voxels.ndim

    def same_geometry(self, other, tol=1e-6):
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing, atol=tol)
            and np.allclose(self.origin, other.origin, atol=tol)
        )

    def voxel_to_world(self, x):
        return self.origin + np.asarray(x, dtype=float) * self.spacing

    def world_to_voxel(self, x):
        return (np.asarray(x, dtype=float) - self.origin) / self.spacing


class Mask(Image):
    """Binary image; any nonzero voxel counts as inside."""

    def __post_init__(self):
        super().__post_init__()
        self.voxels = (self.voxels != 0).astype(float)


@dataclass
class LandmarkSet:
    """Landmarks in 0-based continuous voxel coordinates."""

    points: np.ndarray
    spacing: np.ndarray = None
    origin: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))

    def __len__(self):
        return self.points.shape[0]


# -- MetaImage -----------------------------------------------------------------


def read_metaimage_header(path):
    header = {}
    with open(path, "r", encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected 'Key = Value', got {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            header[key] = val
            if key == "ElementDataFile":
                break
    return header


def _floats(text, n, key, path):
    try:
        vals = [float(v) for v in text.split()]
    except ValueError:
        raise ParseError(f"{path}: bad {key} value {text!r}") from None
    if len(vals) != n:
        raise ParseError(f"{path}: {key} has {len(vals)} entries, expected {n}")
    return vals


def load_metaimage(path, cls=Image):
    """Read a ``.mhd`` header and its raw data file."""
    header = read_metaimage_header(path)
    for key in ("NDims", "DimSize", "ElementType", "ElementDataFile"):
        if key not in header:
            raise ParseError(f"{path}: missing {key}")
    try:
        ndims = int(header["NDims"])
    except ValueError:
        raise ParseError(f"{path}: bad NDims {header['NDims']!r}") from None
    dims = [int(v) for v in _floats(header["DimSize"], ndims, "DimSize", path)]
    if "ElementSpacing" in header:
        spacing = _floats(header["ElementSpacing"], ndims, "ElementSpacing", path)
    else:
        logger.warning("%s: no ElementSpacing, assuming 1.0 per axis", path)
        spacing = [1.0] * ndims
    origin = [0.0] * ndims
    for key in ("Offset", "Origin", "Position"):
        if key in header:
            origin = _floats(header[key], ndims, key, path)
            break
    etype = header["ElementType"]
    if etype not in MET_TYPES:
        raise ParseError(f"{path}: unsupported ElementType {etype}")
    dtype = MET_TYPES[etype]
    if header.get("ElementByteOrderMSB", header.get("BinaryDataByteOrderMSB", "False")).lower() == "true":
        dtype = dtype.newbyteorder(">")
    if header.get("CompressedData", "False").lower() == "true":
        raise ParseError(f"{path}: compressed MetaImage data is not supported")

    data_file = header["ElementDataFile"]
    if data_file.upper() == "LOCAL":
        raise ParseError(f"{path}: inline (LOCAL) data is not supported")
    raw_path = os.path.join(os.path.dirname(os.path.abspath(path)), data_file)
    if not os.path.exists(raw_path):
        raise ParseError(f"{path}: data file {data_file} not found")
    raw = np.fromfile(raw_path, dtype=dtype)
    expected = int(np.prod(dims))
    if raw.size * dtype.itemsize != os.path.getsize(raw_path) or raw.size != expected:
        raise SizeMismatch(
            f"{raw_path}: {os.path.getsize(raw_path)} bytes, expected {expected * dtype.itemsize}"
        )
    voxels = raw.reshape(dims[::-1]).transpose().astype(float)
    return cls(voxels, spacing, origin)


def save_metaimage(img, path, element_type="MET_FLOAT"):
    """Write ``img`` as ``path`` (.mhd) plus a sibling .raw file."""
    dtype = MET_TYPES[element_type]
    base = os.path.splitext(path)[0]
    raw_name = os.path.basename(base) + ".raw"
    d = img.d
    lines = [
        "ObjectType = Image",
        f"NDims = {d}",
        "BinaryData = True",
        "BinaryDataByteOrderMSB = False",
        "CompressedData = False",
        f"Offset = {' '.join(repr(float(v)) for v in img.origin)}",
        f"ElementSpacing = {' '.join(repr(float(v)) for v in img.spacing)}",
        f"DimSize = {' '.join(str(n) for n in img.dims)}",
        f"ElementType = {element_type}",
        f"ElementDataFile = {raw_name}",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    img.voxels.transpose().astype(dtype).tofile(os.path.join(os.path.dirname(os.path.abspath(path)), raw_name))


def load_mask(path):
    return load_metaimage(path, cls=Mask)


# -- interpolation -------------------------------------------------------------


def sample_linear(img, x):
    """Multilinear interpolation at continuous voxel coordinates ``x`` (n, d).

    Returns ``(values, grads, clamped)``: ``grads`` is the exact in-cell
    derivative per voxel unit; points outside ``[0, dims - 1]`` are clamped
    to the boundary (zero gradient along the clamped axes) and flagged in
    the boolean ``clamped`` array.
    """
    d = img.d
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = x.reshape(-1, d)
    upper = np.asarray(img.dims, dtype=float) - 1.0
    xc = np.clip(x, 0.0, upper)
    outside = x != xc
    clamped = np.any(outside, axis=1)
    i0 = np.minimum(np.floor(xc).astype(np.int64), np.asarray(img.dims) - 2)
    frac = xc - i0

    flat = img.voxels.ravel()
    strides = np.array([int(np.prod(img.dims[a + 1:])) for a in range(d)], dtype=np.int64)
    base = i0 @ strides
    hi = [frac[:, a] for a in range(d)]
    lo = [1.0 - h for h in hi]
    value = np.zeros(x.shape[0])
    grad = np.zeros_like(x)
    for corner in product((0, 1), repeat=d):
        v = flat[base + int(np.dot(corner, strides))]
        w = [hi[a] if c else lo[a] for a, c in enumerate(corner)]
        value += v * np.prod(w, axis=0)
        for a in range(d):
            others = [w[b] for b in range(d) if b != a]
            g = v if not others else v * np.prod(others, axis=0)
            if corner[a]:
                grad[:, a] += g
            else:
                grad[:, a] -= g
    grad[outside] = 0.0
    if single:
        return value[0], grad[0], bool(clamped[0])
    return value, grad, clamped


def mask_points(mask):
    """Voxel coordinates of all inside voxels in C (raster) order."""
    pts = np.argwhere(mask.voxels != 0).astype(float)
    if pts.size == 0:
        raise EmptyMask("mask has no nonzero voxels")
    return pts


# -- landmarks -------------------------------------------------------------------


def load_landmarks(path, dims=None, spacing=None, origin=None):
    """Read whitespace-separated 1-based voxel indices, one landmark per line."""
    pts = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                pts.append([float(v) for v in line.replace(",", " ").split()])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric landmark {line!r}") from None
    if not pts:
        raise ParseError(f"{path}: no landmarks")
    if len({len(p) for p in pts}) != 1:
        raise ParseError(f"{path}: inconsistent landmark dimensionality")
    pts = np.asarray(pts) - 1.0
    hi = np.inf if dims is None else np.asarray(dims, dtype=float) - 1.0
    bad = np.any((pts < 0) | (pts > hi), axis=1)
    if np.any(bad):
        first = int(np.flatnonzero(bad)[0])
        raise OutOfBounds(f"{path}: landmark {first + 1} ({pts[first] + 1}) is outside the image")
    return LandmarkSet(pts, spacing, origin)


def save_landmarks(lms, path):
    """Write landmarks back in the 1-based on-disk convention."""
    with open(path, "w") as fh:
        for p in lms.points + 1.0:
            fh.write(" ".join(f"{v:g}" for v in p) + "\n")
