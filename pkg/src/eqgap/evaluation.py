"""Registration accuracy measures and exports.

Fields are evaluated in normalized coordinates; every function that takes
world or voxel positions also takes the :class:`~eqgap.engine.CoordinateMap`
the field was optimized in (identity when omitted).
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import field, tensor
from .engine import CoordinateMap


def _cmap(cmap, d):
    if cmap is None:
        return CoordinateMap((0.0,) * d, 1.0)
    return cmap


def warp_world(grid, x, cmap=None):
    """phi(x) = x + u(x) for world positions ``x`` (n, d)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    cmap = _cmap(cmap, x.shape[1])
    y = cmap.to_normalized(x)
    return cmap.to_world(y + field.displacement(grid, y))


def displacement_world(grid, x, cmap=None):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return warp_world(grid, x, cmap) - x


@dataclass
class TreReport:
    tre: np.ndarray

    def __post_init__(self):
        self.tre = np.asarray(self.tre, dtype=float).reshape(-1)
        if np.any(self.tre < 0):
            raise ValueError("TRE values must be non-negative")

    @property
    def mean(self):
        return float(np.mean(self.tre))

    @property
    def std(self):
        return float(np.std(self.tre))

    def curve(self):
        return cumulative_tre(self)


def snap(v):
    """Round half away from zero."""
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def tre_snap(fixed_lms, moving_lms, grid, spacing, origin=None, cmap=None, snap_to_voxel=True):
    """Snap-to-voxel target registration error in mm.

    Fixed landmarks (0-based voxel coordinates) are mapped forward through
    phi, rounded to the nearest voxel and compared with their paired moving
    landmarks.
    """
    fixed = np.atleast_2d(getattr(fixed_lms, "points", fixed_lms))
    moving = np.atleast_2d(getattr(moving_lms, "points", moving_lms))
    if fixed.shape != moving.shape:
        raise ValueError(f"landmark sets differ in shape: {fixed.shape} vs {moving.shape}")
    spacing = np.asarray(spacing, dtype=float)
    origin = np.zeros_like(spacing) if origin is None else np.asarray(origin, dtype=float)
    world = origin + fixed * spacing
    warped = (warp_world(grid, world, cmap) - origin) / spacing
    if snap_to_voxel:
        warped = snap(warped)
    return TreReport(np.linalg.norm((warped - moving) * spacing, axis=1))


def percent_error(grid, nodes, truth, cmap=None):
    """Per-node displacement error as a percentage of unit length: (mean, q1, q3, errors).

    Quartiles interpolate linearly between order statistics.
    """
    pred = displacement_world(grid, nodes, cmap)
    err = 100.0 * np.linalg.norm(pred - np.asarray(truth, dtype=float), axis=1)
    q1, q3 = np.percentile(err, [25, 75])
    return float(np.mean(err)), float(q1), float(q3), err


def cumulative_tre(report):
    """Rows (tre, cumulative fraction) sorted by TRE."""
    tre = np.sort(getattr(report, "tre", report))
    if tre.size == 0:
        raise ValueError("empty TRE report")
    frac = np.arange(1, tre.size + 1) / tre.size
    return np.column_stack([tre, frac])


def write_cumulative_csv(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tre_mm", "fraction"])
        for t, f in cumulative_tre(report):
            w.writerow([repr(float(t)), repr(float(f))])


def audit_points(lower, upper, n_per_axis):
    axes = [np.linspace(lo, hi, n_per_axis) for lo, hi in zip(lower, upper)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))


def jacobian_audit(grid, points, chunk=65536):
    """Minimum det(I + grad u) and the fraction of non-positive values over ``points`` (normalized coords)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    mins, bad = [], 0
    for start in range(0, len(points), chunk):
        s = field.sample_field(grid, points[start:start + chunk], order=1)
        J = tensor.det(s.G + np.eye(grid.d))
        mins.append(float(np.min(J)))
        bad += int(np.sum(J <= 0))
    return min(mins), bad / len(points)


def domain_audit(grid, lower, upper, n_per_axis=None):
    """Audit over a dense grid spanning [lower, upper]: 256 per axis in 2D, 64 in 3D."""
    if n_per_axis is None:
        n_per_axis = 256 if grid.d == 2 else 64
    return jacobian_audit(grid, audit_points(lower, upper, n_per_axis))


def warp_grid_lines(grid, lower, upper, n_rows=11, n_cols=11, samples_per_segment=64, cmap=None):
    """Uniform 2D grid lines in world coordinates, forward-warped through phi.

    Returns a list of ``(orientation, index, points)`` polylines: ``n_rows``
    horizontal then ``n_cols`` vertical.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    ys = np.linspace(lower[1], upper[1], n_rows)
    xs = np.linspace(lower[0], upper[0], n_cols)
    t_x = np.linspace(lower[0], upper[0], (n_cols - 1) * samples_per_segment + 1)
    t_y = np.linspace(lower[1], upper[1], (n_rows - 1) * samples_per_segment + 1)
    lines = []
    for i, y in enumerate(ys):
        pts = np.column_stack([t_x, np.full_like(t_x, y)])
        lines.append(("row", i, warp_world(grid, pts, cmap)))
    for j, x in enumerate(xs):
        pts = np.column_stack([np.full_like(t_y, x), t_y])
        lines.append(("col", j, warp_world(grid, pts, cmap)))
    return lines


def warp_grid_export(grid, path, lower, upper, n_rows=11, n_cols=11, samples_per_segment=64, cmap=None):
    lines = warp_grid_lines(grid, lower, upper, n_rows, n_cols, samples_per_segment, cmap)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["line", "orientation", "index", "point", "x", "y"])
        for k, (orient, idx, pts) in enumerate(lines):
            for p, (x, y) in enumerate(pts):
                w.writerow([k, orient, idx, p, repr(float(x)), repr(float(y))])
    return len(lines)
