"""Stochastic optimization of the weighted registration objective.

``(1 - beta) * similarity + beta * regularizer`` is minimized over the
coefficients of a cubic B-spline displacement field with Adam, using random
batches of points drawn from the fixed image (or a region-of-interest mask).
"""

import csv
import logging
import math
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from . import field, image, losses, mechanics, tensor
from .exceptions import ConfigError
from .mechanics import MaterialParams

logger = logging.getLogger(__name__)

# Barrier used in place of the gap penalty where det(F) <= J_FLOOR.
J_FLOOR = 0.05
BARRIER_WEIGHT = 1e3

SIMILARITY_CHOICES = ("mse", "ncc")
REGULARIZER_CHOICES = ("bending", "physics")


@dataclass(frozen=True)
class CoordinateMap:
    """Isotropic map between world (mm) and normalized coordinates."""

    center: tuple
    scale: float

    def to_normalized(self, x):
        return (np.asarray(x, dtype=float) - np.asarray(self.center)) * self.scale

    def to_world(self, y):
        return np.asarray(y, dtype=float) / self.scale + np.asarray(self.center)


def normalize_coords(img):
    """World coordinates centred on the image and divided by its longest extent."""
    extent = np.asarray(img.dims, dtype=float) * img.spacing
    center = img.origin + 0.5 * (np.asarray(img.dims, dtype=float) - 1.0) * img.spacing
    return CoordinateMap(tuple(float(c) for c in center), float(1.0 / extent.max()))


def normalized_bounds(img, cmap):
    half = 0.5 * np.asarray(img.dims, dtype=float) * img.spacing * cmap.scale
    return -half, half


@dataclass
class RegistrationConfig:
    beta: float = 0.001
    similarity: str = "mse"
    regularizer: str = "physics"
    material: MaterialParams = mechanics.DEFAULT_MATERIAL
    batch_size: int = 10000
    iterations: int = 10000
    learning_rate: float = 1e-4
    seed: int = 0
    determinism: bool = True
    control_spacing: float = None

    def __post_init__(self):
        losses.check_beta(self.beta)
        self.similarity = self.similarity.lower()
        self.regularizer = self.regularizer.lower()
        if self.similarity not in SIMILARITY_CHOICES:
            raise ConfigError(f"similarity must be one of {SIMILARITY_CHOICES}, got {self.similarity!r}")
        if self.regularizer not in REGULARIZER_CHOICES:
            raise ConfigError(f"regularizer must be one of {REGULARIZER_CHOICES}, got {self.regularizer!r}")
        if self.batch_size < 1 or self.iterations < 1:
            raise ConfigError("batch_size and iterations must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.control_spacing is not None and not self.control_spacing > 0:
            raise ConfigError("control_spacing must be positive")

    def as_dict(self):
        out = asdict(self)
        out["material"] = {"mu": self.material.mu, "lam": self.material.lam}
        return out


def default_control_spacing(img, cmap):
    """1/16 of the domain for 2D images, 8 voxels of the coarsest axis in 3D."""
    if img.d == 2:
        return 1.0 / 16.0
    return 8.0 * float(np.max(img.spacing)) * cmap.scale


# -- sampling --------------------------------------------------------------


def sample_batch(points, n, rng):
    """Draw ``n`` voxel positions with replacement, jittered within their cell."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("need a non-empty (m, d) array of points")
    pick = rng.integers(0, points.shape[0], size=n)
    return points[pick] + rng.uniform(-0.5, 0.5, size=(n, points.shape[1]))


def sample_domain(dims, n, rng):
    """Like :func:`sample_batch` over every voxel of a grid, without materializing it."""
    dims = np.asarray(dims)
    centers = rng.integers(0, dims, size=(n, dims.size))
    return centers + rng.uniform(-0.5, 0.5, size=(n, dims.size))


# -- optimizer ---------------------------------------------------------------


@dataclass
class TrainState:
    coeffs: np.ndarray
    m: np.ndarray = None
    v: np.ndarray = None
    step: int = 0
    history: list = dc_field(default_factory=list)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros_like(self.coeffs)
        if self.v is None:
            self.v = np.zeros_like(self.coeffs)
        if self.m.shape != self.coeffs.shape or self.v.shape != self.coeffs.shape:
            raise ValueError("moment arrays must match the coefficient array")


def adam_step(state, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update, applied in place; returns ``state``."""
    grads = np.asarray(grads, dtype=float)
    if grads.shape != state.coeffs.shape:
        raise ValueError(f"gradient shape {grads.shape} != {state.coeffs.shape}")
    state.step += 1
    state.m *= beta1
    state.m += (1.0 - beta1) * grads
    state.v *= beta2
    state.v += (1.0 - beta2) * grads * grads
    m_hat = state.m / (1.0 - beta1**state.step)
    v_hat = state.v / (1.0 - beta2**state.step)
    state.coeffs -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


# -- regularizers -----------------------------------------------------------


def physics_penalty(sample, material):
    """Gap penalty per point with the low-Jacobian barrier; returns (pen, dG, dH, n_barrier)."""
    G, H = sample.G, sample.H
    F = G + np.eye(G.shape[-1])
    J = tensor.det(F)
    ok = J > J_FLOOR
    pen = np.empty(G.shape[0])
    dG = np.zeros_like(G)
    dH = np.zeros_like(H)
    if np.all(ok):
        dG, dH, pen = mechanics.gap_sensitivities(mechanics.Kinematics(G, H), material, return_penalty=True)
        return pen, dG, dH, 0
    if np.any(ok):
        gG, gH, gp = mechanics.gap_sensitivities(mechanics.Kinematics(G[ok], H[ok]), material, return_penalty=True)
        pen[ok], dG[ok], dH[ok] = gp, gG, gH
    bad = ~ok
    gapJ = J_FLOOR - J[bad]
    pen[bad] = BARRIER_WEIGHT * gapJ * gapJ
    cof = tensor.assemble(tensor.cofactor(F[bad]))
    dG[bad] = (-2.0 * BARRIER_WEIGHT * gapJ)[:, None, None] * cof
    return pen, dG, dH, int(bad.sum())


def bending_penalty(sample):
    val, dH = losses.bending_energy_point(sample.H)
    return val, None, dH


# -- main loop ----------------------------------------------------------------


@dataclass
class RegistrationResult:
    grid: field.ControlGrid
    coord_map: CoordinateMap
    history: list
    diagnostics: dict


def _check_pair(fixed, moving):
    if fixed.d != moving.d:
        raise ValueError(f"fixed is {fixed.d}D but moving is {moving.d}D")


@dataclass
class BatchResult:
    sim: float
    reg: float
    total: float
    grads: np.ndarray
    clamped: int = 0
    barrier_points: int = 0


def batch_objective(grid, fixed, moving, pts, cfg, cmap):
    """Weighted objective on one batch of fixed-image voxel positions and its coefficient gradient.

    ``pts`` are continuous voxel coordinates of the fixed image; the field
    is evaluated at their normalized positions.
    """
    beta = cfg.beta
    use_sim = beta < 1.0
    use_reg = beta > 0.0
    x = cmap.to_normalized(fixed.voxel_to_world(pts))
    basis = field.evaluate_basis(grid, x, order=2 if use_reg else 0)
    sample = field.sample_from_basis(grid, basis)
    n = x.shape[0]

    out = BatchResult(0.0, 0.0, 0.0, None)
    dL_du = dL_dG = dL_dH = None
    if use_sim:
        f_vals = image.sample_linear(fixed, pts)[0]
        center = np.asarray(cmap.center)
        y_vox = ((x + sample.u) / cmap.scale + center - moving.origin) / moving.spacing
        m_vals, m_grad, clamped = image.sample_linear(moving, y_vox)
        out.clamped = int(clamped.sum())
        sim, dsim = losses.SIMILARITIES[cfg.similarity](f_vals, m_vals)
        out.sim = float(sim)
        vox_per_norm = 1.0 / (cmap.scale * moving.spacing)
        dL_du = ((1.0 - beta) * dsim)[:, None] * m_grad * vox_per_norm
    if use_reg:
        if cfg.regularizer == "physics":
            pen, dG, dH, out.barrier_points = physics_penalty(sample, cfg.material)
        else:
            pen, dG, dH = bending_penalty(sample)
        out.reg = float(np.mean(pen))
        w = beta / n
        dL_dG = None if dG is None else w * dG
        dL_dH = w * dH

    idx, vals = field.contributions_from_basis(grid, basis, dL_du, dL_dG, dL_dH)
    out.grads = field.accumulate(grid, idx, vals)
    out.total = losses.total_loss(out.sim, out.reg, beta)
    return out


def setup_grid(fixed, cfg):
    """Coordinate map and a zero control grid covering the fixed image."""
    cmap = normalize_coords(fixed)
    lo, hi = normalized_bounds(fixed, cmap)
    spacing = cfg.control_spacing or default_control_spacing(fixed, cmap)
    return cmap, field.ControlGrid.covering(lo, hi, spacing)


def register(fixed, moving, roi=None, cfg=None, callback=None):
    """Optimize a B-spline field aligning ``fixed`` to ``moving``.

    ``roi`` is an optional :class:`~eqgap.image.Mask` on the fixed grid;
    points are drawn from the whole fixed domain when it is ``None``.
    ``callback(iteration, state)`` is invoked after every update.
    """
    cfg = cfg or RegistrationConfig()
    _check_pair(fixed, moving)
    cmap, grid = setup_grid(fixed, cfg)

    roi_points = None
    if roi is not None:
        if roi.dims != fixed.dims:
            raise ValueError(f"mask dims {roi.dims} differ from fixed image dims {fixed.dims}")
        roi_points = image.mask_points(roi)

    rng = np.random.default_rng(cfg.seed)
    state = TrainState(grid.coeffs.copy())
    diag = {"clamped_samples": 0, "barrier_points": 0}

    for it in range(cfg.iterations):
        if roi_points is None:
            pts = sample_domain(fixed.dims, cfg.batch_size, rng)
        else:
            pts = sample_batch(roi_points, cfg.batch_size, rng)
        grid.coeffs = state.coeffs
        res = batch_objective(grid, fixed, moving, pts, cfg, cmap)
        diag["clamped_samples"] += res.clamped
        diag["barrier_points"] += res.barrier_points
        adam_step(state, res.grads, cfg.learning_rate)
        state.history.append((it, res.sim, res.reg, res.total))
        if not math.isfinite(res.total):
            raise FloatingPointError(f"non-finite loss at iteration {it}")
        if callback is not None:
            callback(it, state)

    grid.coeffs = state.coeffs
    if diag["clamped_samples"]:
        logger.info("%d moving-image samples were clamped to the boundary", diag["clamped_samples"])
    return RegistrationResult(grid, cmap, state.history, diag)


def write_history_csv(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "sim", "reg", "total"])
        for it, sim, reg, total in history:
            w.writerow([it, repr(sim), repr(reg), repr(total)])


def read_history_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [(int(r["iteration"]), float(r["sim"]), float(r["reg"]), float(r["total"])) for r in rows]
