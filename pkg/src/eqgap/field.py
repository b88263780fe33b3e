"""Cubic B-spline free-form displacement fields.

The displacement ``u(x) = sum_k c_k B_k(x)`` is a tensor product of uniform
cubic B-splines over a regular lattice of control points.  Values, first and
second derivatives are exact, and because ``u`` is linear in the
coefficients, gradients of any pointwise loss flow back to the coefficients
through :func:`param_gradient`.
"""

import struct
from dataclasses import dataclass
from itertools import product

import numpy as np

from .exceptions import OutOfSupport, ParseError

EQGF_MAGIC = b"EQGF"
EQGF_VERSION = 1
PADDING = 2


def bspline_weights(t):
    """Uniform cubic B-spline weights on the 4 supporting control points.

    ``t`` is the local coordinate in [0, 1) inside a knot cell. Returns the
    values, first and second derivatives (w.r.t. ``t``), each with a
    trailing axis of length 4.
    """
    t = np.asarray(t, dtype=float)
    t2 = t * t
    t3 = t2 * t
    s = 1.0 - t
    w = np.stack([s * s * s, 3 * t3 - 6 * t2 + 4, -3 * t3 + 3 * t2 + 3 * t + 1, t3], axis=-1) / 6.0
    dw = np.stack([-0.5 * s * s, 1.5 * t2 - 2 * t, -1.5 * t2 + t + 0.5, 0.5 * t2], axis=-1)
    ddw = np.stack([s, 3 * t - 2, -3 * t + 1, t], axis=-1)
    return w, dw, ddw


@dataclass
class FieldSample:
    """Displacement ``u`` (..., d), gradient ``G`` (..., d, d), Hessian ``H`` (..., d, d, d)."""

    u: np.ndarray
    G: np.ndarray
    H: np.ndarray

    def __add__(self, other):
        return FieldSample(self.u + other.u, self.G + other.G, self.H + other.H)

    def __getitem__(self, idx):
        return FieldSample(self.u[idx], self.G[idx], self.H[idx])


@dataclass
class ControlGrid:
    """Regular lattice of B-spline displacement coefficients.

    Control point ``k`` (a d-tuple) sits at ``origin + k * spacing``;
    ``coeffs`` has shape ``dims + (d,)``.
    """

    dims: tuple
    spacing: np.ndarray
    origin: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        self.dims = tuple(int(n) for n in self.dims)
        d = len(self.dims)
        self.spacing = np.asarray(self.spacing, dtype=float).reshape(d)
        self.origin = np.asarray(self.origin, dtype=float).reshape(d)
        if self.coeffs is None:
            self.coeffs = np.zeros(self.dims + (d,))
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if any(n < 4 for n in self.dims):
            raise ValueError(f"need at least 4 control points per axis, got {self.dims}")
        if np.any(self.spacing <= 0):
            raise ValueError("control spacing must be positive")
        if self.coeffs.shape != self.dims + (d,):
            raise ValueError(f"coeffs shape {self.coeffs.shape} != {self.dims + (d,)}")

    @property
    def d(self):
        return len(self.dims)

    @property
    def n_coeffs(self):
        return int(np.prod(self.dims))

    @classmethod
    def covering(cls, lower, upper, spacing, padding=PADDING):
        """Zero grid whose support covers the box [lower, upper] with ``padding`` extra points per side."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        spacing = np.broadcast_to(np.asarray(spacing, dtype=float), lower.shape).copy()
        n_cells = np.maximum(1, np.ceil((upper - lower) / spacing - 1e-9)).astype(int)
        dims = tuple(int(n) + 1 + 2 * padding for n in n_cells)
        origin = lower - padding * spacing
        return cls(dims, spacing, origin, None)

    def copy(self, coeffs=None):
        return ControlGrid(self.dims, self.spacing.copy(), self.origin.copy(),
                           self.coeffs.copy() if coeffs is None else coeffs)

    def control_points(self):
        axes = [self.origin[a] + self.spacing[a] * np.arange(n) for a, n in enumerate(self.dims)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def set_affine(self, A, b):
        """Set coefficients so that u(x) = A x + b (exactly reproduced)."""
        p = self.control_points()
        self.coeffs = p @ np.asarray(A, dtype=float).T + np.asarray(b, dtype=float)
        return self

    def support_bounds(self):
        """Box in which every point has full cubic support."""
        lo = self.origin + self.spacing
        hi = self.origin + self.spacing * (np.asarray(self.dims) - 2)
        return lo, hi

    # -- serialization ------------------------------------------------------

    def to_bytes(self):
        d = self.d
        header = EQGF_MAGIC + struct.pack("<II", EQGF_VERSION, d)
        header += struct.pack(f"<{d}I", *self.dims)
        header += struct.pack(f"<{d}d", *self.spacing)
        header += struct.pack(f"<{d}d", *self.origin)
        return header + np.ascontiguousarray(self.coeffs, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, data):
        if data[:4] != EQGF_MAGIC:
            raise ParseError("not an EQGF file (bad magic)")
        version, d = struct.unpack_from("<II", data, 4)
        if version != EQGF_VERSION:
            raise ParseError(f"unsupported EQGF version {version}")
        off = 12
        dims = struct.unpack_from(f"<{d}I", data, off)
        off += 4 * d
        spacing = struct.unpack_from(f"<{d}d", data, off)
        off += 8 * d
        origin = struct.unpack_from(f"<{d}d", data, off)
        off += 8 * d
        expected = int(np.prod(dims)) * d * 8
        if len(data) - off != expected:
            raise ParseError(f"EQGF payload has {len(data) - off} bytes, expected {expected}")
        coeffs = np.frombuffer(data, dtype="<f8", offset=off).reshape(tuple(dims) + (d,)).astype(float)
        return cls(dims, spacing, origin, coeffs)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


# -- evaluation --------------------------------------------------------------


def _derivative_rows(d, order):
    """Per-axis derivative counts for each stacked basis row.

    Row 0 is the value, rows ``1 + j`` the first derivatives and rows
    ``1 + d + j * d + l`` the second derivatives (all (j, l), symmetric).
    """
    rows = [(0,) * d]
    if order >= 1:
        rows += [tuple(int(a == j) for a in range(d)) for j in range(d)]
    if order >= 2:
        rows += [tuple(int(a == j) + int(a == l) for a in range(d)) for j in range(d) for l in range(d)]
    return rows


def _basis(grid, x, order=2):
    """Support indices (4**d, n) and stacked basis values (rows, 4**d, n) at ``x`` (n, d).

    The point axis is last so that every elementwise product runs over a
    long contiguous axis.
    """
    d = grid.d
    t = (x - grid.origin) / grid.spacing
    cell = np.floor(t).astype(np.int64)
    frac = t - cell
    base = cell - 1
    dims = np.asarray(grid.dims)
    bad = np.any((base < 0) | (base + 3 > dims - 1), axis=-1)
    if np.any(bad):
        raise OutOfSupport(f"{int(bad.sum())} point(s) outside the control grid support")

    n = x.shape[0]
    k = order + 1
    inv_h = 1.0 / grid.spacing
    # (d, order + 1, 4, n): per-axis weights and their derivatives
    per_axis = np.empty((d, k, 4, n))
    for m, wts in enumerate(bspline_weights(frac.T)[:k]):
        per_axis[:, m] = wts.transpose(0, 2, 1) * (inv_h**m)[:, None, None]

    strides = np.array([int(np.prod(grid.dims[a + 1:])) for a in range(d)], dtype=np.int64)
    offsets = np.array([np.dot(m, strides) for m in product(range(4), repeat=d)], dtype=np.int64)
    idx = offsets[:, None] + (base @ strides)[None, :]

    # outer product over axes of every derivative-order combination, then
    # pick the combinations needed for each stacked row
    full = per_axis[0]
    for a in range(1, d):
        m, s = full.shape[:2]
        full = (full[:, None, :, None, :] * per_axis[a][None, :, None, :, :]).reshape(m * k, s * 4, n)
    rows = _derivative_rows(d, order)
    select = [int(np.ravel_multi_index(c, (k,) * d)) for c in rows]
    return idx, full[select]


def _as_points(x, d):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = x.reshape(-1, d)
    return x, single


def evaluate_basis(grid, x, order=2):
    """Precompute support indices and basis values for repeated use at ``x`` (n, d)."""
    x = np.asarray(x, dtype=float).reshape(-1, grid.d)
    return _basis(grid, x, order=order)


def sample_from_basis(grid, basis):
    d = grid.d
    idx, B = basis
    n_rows = B.shape[0]
    coeffs = grid.coeffs.reshape(-1, d)
    # vals[r, i, n] = sum_s B[r, s, n] c_i[idx[s, n]]
    vals = np.stack([np.einsum("rsn,sn->rn", B, coeffs[:, i][idx]) for i in range(d)], axis=1)
    n = vals.shape[-1]
    u = vals[0].T
    G = vals[1:1 + d].transpose(2, 1, 0) if n_rows > 1 else None
    H = vals[1 + d:].reshape(d, d, d, n).transpose(3, 2, 0, 1) if n_rows > 1 + d else None
    return FieldSample(u, G, H)


def contributions_from_basis(grid, basis, dL_du=None, dL_dG=None, dL_dH=None):
    """Contributions ``(idx, vals)`` with ``idx`` (4**d, n) and ``vals`` (4**d, n, d)."""
    d = grid.d
    idx, B = basis
    n_rows, _, n = B.shape
    dL = np.zeros((n_rows, d, n))
    if dL_du is not None:
        dL[0] = np.reshape(dL_du, (n, d)).T
    if dL_dG is not None:
        dL[1:1 + d] = np.reshape(dL_dG, (n, d, d)).transpose(2, 1, 0)
    if dL_dH is not None:
        if n_rows <= 1 + d:
            raise ValueError("basis was evaluated without second derivatives")
        dL[1 + d:] = np.reshape(dL_dH, (n, d, d, d)).transpose(2, 3, 1, 0).reshape(d * d, d, n)
    vals = np.stack([np.einsum("rsn,rn->sn", B, dL[:, i]) for i in range(d)], axis=-1)
    return idx, vals


def sample_field(grid, x, order=2):
    """Evaluate u, grad u and the Hessian at points ``x`` ((d,) or (n, d)).

    ``order`` limits the derivatives computed (0: u only, 1: u and G).
    """
    x, single = _as_points(x, grid.d)
    out = sample_from_basis(grid, _basis(grid, x, order=order))
    return out[0] if single else out


def displacement(grid, x):
    return sample_field(grid, x, order=0).u


def param_gradient_contributions(grid, x, dL_du=None, dL_dG=None, dL_dH=None):
    """Per-point, per-support coefficient gradient contributions.

    Returns ``(idx, vals)`` with ``idx`` (n, 4**d) flat coefficient indices
    and ``vals`` (n, 4**d, d).  ``dL_dH`` is the symmetric full-array
    sensitivity; summing over all (j, l) is the same as weighting the
    unique j <= l slots by (2 - delta_jl).
    """
    x, _ = _as_points(x, grid.d)
    order = 2 if dL_dH is not None else (1 if dL_dG is not None else 0)
    idx, vals = contributions_from_basis(grid, _basis(grid, x, order=order), dL_du, dL_dG, dL_dH)
    return idx.T, vals.transpose(1, 0, 2)


def accumulate(grid, idx, vals):
    """Ordered (deterministic) reduction of contributions into a dense array."""
    d = grid.d
    flat = idx.ravel()
    out = np.empty((grid.n_coeffs, d))
    v = vals.reshape(-1, d)
    for i in range(d):
        out[:, i] = np.bincount(flat, weights=v[:, i], minlength=grid.n_coeffs)
    return out.reshape(grid.dims + (d,))


def param_gradient(grid, x, dL_du=None, dL_dG=None, dL_dH=None):
    """Dense gradient of a pointwise-summed loss with respect to ``grid.coeffs``."""
    idx, vals = param_gradient_contributions(grid, x, dL_du, dL_dG, dL_dH)
    return accumulate(grid, idx, vals)
