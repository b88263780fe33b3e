"""Synthetic hyperelastic registration benchmark.

A unit square of compressible Neo-Hookean material (plane strain) is
deformed by prescribing a random, smooth displacement on its whole boundary
(a sum of Gaussian radial basis functions).  The equilibrium state is found
with a finite-element Newton solver on a structured quad mesh, and the
undeformed and deformed domains are rasterized into a fixed/moving pair of
binary images.  Nodal displacements are the ground truth.
"""

import csv
import logging
import os
from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RectBivariateSpline

from . import mechanics
from .exceptions import NonConvergence, NonPositiveJacobian
from .image import Image, load_metaimage, save_metaimage
from .mechanics import Kinematics, MaterialParams

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger(__name__)

N_KERNELS = 12
SIGMA_BOUNDS = (0.1, 0.3)
AMPLITUDE_BOUND = 0.1
CANVAS = (-0.5, 1.5)
EDGE_SUBDIVISIONS = 8


def synth_material():
    """E = 1, nu = 0.3 through the standard conversion."""
    return mechanics.lame_from_youngs(1.0, 0.3)


# -- boundary data ---------------------------------------------------------------


@dataclass
class RbfField:
    centers: np.ndarray  # (12, 2)
    widths: np.ndarray  # (12,)
    amplitudes: np.ndarray  # (12, 2)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        self.widths = np.asarray(self.widths, dtype=float).reshape(-1)
        self.amplitudes = np.asarray(self.amplitudes, dtype=float).reshape(-1, 2)
        if not (len(self.centers) == len(self.widths) == len(self.amplitudes)):
            raise ValueError("centers, widths and amplitudes must have equal length")
        if np.any(self.widths <= 0):
            raise ValueError("RBF widths must be positive")

    def __call__(self, x):
        return eval_rbf(self, x)


def gen_rbf_field(seed, n_kernels=N_KERNELS, sigma_bounds=SIGMA_BOUNDS, amplitude=AMPLITUDE_BOUND):
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.0, 1.0, size=(n_kernels, 2))
    widths = rng.uniform(*sigma_bounds, size=n_kernels)
    amps = rng.uniform(-amplitude, amplitude, size=(n_kernels, 2))
    return RbfField(centers, widths, amps)


def eval_rbf(f, x):
    """Sum of Gaussian kernels ``amp * exp(-|x - c|^2 / (2 sigma^2))`` at ``x`` ((2,) or (n, 2))."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = x.reshape(-1, 2)
    r2 = np.sum((x[:, None, :] - f.centers[None, :, :]) ** 2, axis=-1)
    k = np.exp(-r2 / (2.0 * f.widths**2))
    u = k @ f.amplitudes
    return u[0] if single else u


# -- mesh ------------------------------------------------------------------------


def _lagrange_1d(p, s):
    """Lagrange basis on p + 1 equispaced nodes of [-1, 1]: values and derivatives at ``s``."""
    nodes = np.linspace(-1.0, 1.0, p + 1)
    s = np.asarray(s, dtype=float)
    L = np.ones(s.shape + (p + 1,))
    dL = np.zeros(s.shape + (p + 1,))
    for a in range(p + 1):
        others = [b for b in range(p + 1) if b != a]
        for b in others:
            L[..., a] *= (s - nodes[b]) / (nodes[a] - nodes[b])
        for c in others:
            term = np.full(s.shape, 1.0 / (nodes[a] - nodes[c]))
            for b in others:
                if b != c:
                    term = term * (s - nodes[b]) / (nodes[a] - nodes[b])
            dL[..., a] += term
    return L, dL


def _local_lattice(p):
    """Local (a, b) lattice positions: corners counterclockwise, then edges, then interior."""
    corners = [(0, 0), (p, 0), (p, p), (0, p)]
    rest = []
    if p == 2:
        rest = [(1, 0), (2, 1), (1, 2), (0, 1), (1, 1)]
    elif p != 1:
        raise ValueError("element order must be 1 or 2")
    return corners + rest


@dataclass
class FeMesh:
    """Structured quad mesh of the unit square, ``n`` elements per side."""

    n: int
    order: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one element per side")
        self.lattice = _local_lattice(self.order)

    @property
    def n_side(self):
        return self.n * self.order + 1

    @property
    def n_nodes(self):
        return self.n_side**2

    @property
    def n_elements(self):
        return self.n * self.n

    @property
    def h(self):
        return 1.0 / self.n

    def node_id(self, ix, iy):
        return np.asarray(iy) * self.n_side + np.asarray(ix)

    @cached_property
    def nodes(self):
        s = np.linspace(0.0, 1.0, self.n_side)
        X, Y = np.meshgrid(s, s, indexing="xy")
        return np.stack([X.ravel(), Y.ravel()], axis=1)

    @cached_property
    def elements(self):
        p = self.order
        ex, ey = np.meshgrid(np.arange(self.n), np.arange(self.n), indexing="xy")
        ex, ey = ex.ravel(), ey.ravel()
        cols = [self.node_id(ex * p + a, ey * p + b) for a, b in self.lattice]
        return np.stack(cols, axis=1)

    @cached_property
    def boundary_nodes(self):
        ns = self.n_side
        ix, iy = np.meshgrid(np.arange(ns), np.arange(ns), indexing="xy")
        on = (ix == 0) | (iy == 0) | (ix == ns - 1) | (iy == ns - 1)
        return np.flatnonzero(on.ravel())

    @cached_property
    def free_nodes(self):
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    def shape_functions(self, xi):
        """Values (g, nen) and reference gradients (g, nen, 2) at local points ``xi`` (g, 2)."""
        xi = np.asarray(xi, dtype=float).reshape(-1, 2)
        Lx, dLx = _lagrange_1d(self.order, xi[:, 0])
        Ly, dLy = _lagrange_1d(self.order, xi[:, 1])
        N = np.stack([Lx[:, a] * Ly[:, b] for a, b in self.lattice], axis=1)
        dN = np.stack(
            [np.stack([dLx[:, a] * Ly[:, b], Lx[:, a] * dLy[:, b]], axis=-1) for a, b in self.lattice],
            axis=1,
        )
        return N, dN

    @cached_property
    def quadrature(self):
        """Gauss points (g, 2), physical weights (g,), N (g, nen) and dN/dX (g, nen, 2)."""
        pts, wts = np.polynomial.legendre.leggauss(self.order + 1)
        xi = np.array([(a, b) for b in pts for a in pts])
        w = np.array([wa * wb for wb in wts for wa in wts])
        N, dN = self.shape_functions(xi)
        jac = self.h / 2.0
        return xi, w * jac * jac, N, dN / jac

    @cached_property
    def _sparsity(self):
        nen = self.elements.shape[1]
        dofs = np.stack([2 * self.elements, 2 * self.elements + 1], axis=-1).reshape(-1, 2 * nen)
        rows = np.repeat(dofs, 2 * nen, axis=1).ravel()
        cols = np.tile(dofs, (1, 2 * nen)).ravel()
        return dofs, rows, cols


@dataclass
class FeSolution:
    mesh: FeMesh
    displacement: np.ndarray  # (n_nodes, 2)
    material: MaterialParams
    report: dict = dc_field(default_factory=dict)
    bc: RbfField = None

    def grid_values(self):
        """Nodal displacements as (n_side, n_side, 2) arrays indexed [ix, iy]."""
        ns = self.mesh.n_side
        return self.displacement.reshape(ns, ns, 2).transpose(1, 0, 2)


# -- assembly ----------------------------------------------------------------------


def _gauss_gradients(mesh, state):
    _, w, _, dN = mesh.quadrature
    ue = state.reshape(-1, 2)[mesh.elements]  # (E, nen, 2)
    G = np.einsum("eni,gnJ->egiJ", ue, dN)
    return G + np.eye(2), w, dN


def _check_elements(F):
    J = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    bad = np.any(J <= 0, axis=1)
    if np.any(bad):
        raise NonPositiveJacobian(
            f"det(F) <= 0 in {int(bad.sum())} element(s)", where=np.flatnonzero(bad)
        )
    return J


def fe_residual(mesh, state, p):
    """Assembled internal-force vector (2 * n_nodes,) for nodal displacements ``state``."""
    F, w, dN = _gauss_gradients(mesh, state)
    _check_elements(F)
    P = mechanics.pk1_stress(F, p)
    re = np.einsum("g,egiJ,gnJ->eni", w, P, dN)
    dofs, _, _ = mesh._sparsity
    return np.bincount(dofs.ravel(), weights=re.reshape(-1), minlength=2 * mesh.n_nodes)


def fe_assemble(mesh, state, p):
    """Residual vector and consistent tangent (CSR) at nodal displacements ``state``."""
    state = np.asarray(state, dtype=float).reshape(-1)
    F, w, dN = _gauss_gradients(mesh, state)
    _check_elements(F)
    P = mechanics.pk1_stress(F, p)
    A = mechanics.pk1_tangent(F, p)
    re = np.einsum("g,egiJ,gnJ->eni", w, P, dN)
    ke = np.einsum("g,gnJ,egiJkL,gmL->enimk", w, dN, A, dN)
    nen = dN.shape[1]
    ke = ke.reshape(-1, 2 * nen, 2 * nen)
    dofs, rows, cols = mesh._sparsity
    ndof = 2 * mesh.n_nodes
    residual = np.bincount(dofs.ravel(), weights=re.reshape(-1), minlength=ndof)
    K = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(ndof, ndof)).tocsr()
    return residual, K


def fe_strain_energy(sol):
    F, w, _ = _gauss_gradients(sol.mesh, sol.displacement.reshape(-1))
    psi = mechanics.strain_energy(F, sol.material)
    return float(np.sum(psi * w))


def fe_jacobians(sol):
    """det(F) at every Gauss point (E, g) with the matching quadrature weights."""
    F, w, _ = _gauss_gradients(sol.mesh, sol.displacement.reshape(-1))
    return _check_elements(F), w


def mean_jacobian(sol):
    """Area-weighted mean of det(F) over the unit square (deformed area)."""
    J, w = fe_jacobians(sol)
    return float(np.sum(J * w))


# -- Newton solver -------------------------------------------------------------------


def _dofs(nodes):
    return np.stack([2 * nodes, 2 * nodes + 1], axis=1).ravel()


def _try_solve(mesh, bc_values, p, n_steps, tol, max_iter):
    ndof = 2 * mesh.n_nodes
    bdofs = _dofs(mesh.boundary_nodes)
    fdofs = _dofs(mesh.free_nodes)
    u = np.zeros(ndof)
    total_iters = 0
    res_norm = 0.0
    for step in range(1, n_steps + 1):
        target = bc_values * (step / n_steps)
        delta_b = target - u[bdofs]
        for it in range(max_iter):
            total_iters += 1
            r, K = fe_assemble(mesh, u, p)
            rhs = -r[fdofs]
            if np.any(delta_b):
                rhs -= K[fdofs][:, bdofs] @ delta_b
            res_norm = float(np.max(np.abs(r[fdofs])))
            if not np.any(delta_b) and res_norm < tol:
                break
            du_f = spla.spsolve(K[fdofs][:, fdofs].tocsc(), rhs)
            alpha = 1.0
            for _ in range(10):
                trial = u.copy()
                trial[fdofs] += alpha * du_f
                trial[bdofs] += alpha * delta_b
                try:
                    _check_elements(_gauss_gradients(mesh, trial)[0])
                    break
                except NonPositiveJacobian:
                    alpha *= 0.5
            else:
                raise NonConvergence("no admissible Newton step", {"step": step, "iterations": total_iters})
            u = trial
            delta_b = delta_b * (1.0 - alpha)
        else:
            raise NonConvergence(
                f"Newton did not converge in load step {step}/{n_steps}",
                {"step": step, "iterations": total_iters, "residual": res_norm},
            )
    return u, {"iterations": total_iters, "residual": res_norm, "load_steps": n_steps}


def fe_solve_newton(mesh, bc, p, tol=1e-10, max_iter=30, load_schedule=(1, 2, 5, 10)):
    """Solve the plane-strain Dirichlet problem with boundary displacement ``bc``.

    ``bc`` is a callable mapping (n, 2) positions to displacements (e.g. an
    :class:`RbfField`).  Boundary data are ramped in as many load increments
    as needed from ``load_schedule`` (at most 10).
    """
    Xb = mesh.nodes[mesh.boundary_nodes]
    bc_values = np.asarray(bc(Xb), dtype=float).reshape(-1)
    last = None
    for n_steps in load_schedule:
        try:
            u, report = _try_solve(mesh, bc_values, p, n_steps, tol, max_iter)
        except (NonConvergence, NonPositiveJacobian) as exc:
            last = exc
            logger.debug("solve with %d load steps failed: %s", n_steps, exc)
            continue
        sol = FeSolution(mesh, u.reshape(-1, 2), p, report, bc if isinstance(bc, RbfField) else None)
        fe_jacobians(sol)
        return sol
    report = getattr(last, "report", {})
    raise NonConvergence(f"FE solve failed after load schedule {load_schedule}: {last}", report)


def harmonic_extension(mesh, bc):
    """Componentwise Laplace solution with the same Dirichlet data (a non-equilibrium comparison field)."""
    _, w, _, dN = mesh.quadrature
    el = mesh.elements
    ke = np.broadcast_to(np.einsum("g,gnJ,gmJ->nm", w, dN, dN), (len(el),) + (dN.shape[1],) * 2)
    nen = el.shape[1]
    rows = np.repeat(el, nen, axis=1).ravel()
    cols = np.tile(el, (1, nen)).ravel()
    K = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(mesh.n_nodes,) * 2).tocsr()
    b, f = mesh.boundary_nodes, mesh.free_nodes
    ub = np.asarray(bc(mesh.nodes[b]), dtype=float)
    u = np.zeros((mesh.n_nodes, 2))
    u[b] = ub
    Kff = K[f][:, f].tocsc()
    Kfb = K[f][:, b]
    for c in range(2):
        u[f, c] = spla.spsolve(Kff, -(Kfb @ ub[:, c]))
    return u


# -- smooth interpolation of nodal data ---------------------------------------------


def interpolated_kinematics(mesh, displacement, points):
    """u, G and H at ``points`` from a bicubic spline through nodal displacements."""
    s = np.linspace(0.0, 1.0, mesh.n_side)
    grid = np.asarray(displacement).reshape(mesh.n_side, mesh.n_side, 2).transpose(1, 0, 2)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    u = np.zeros((len(pts), 2))
    G = np.zeros((len(pts), 2, 2))
    H = np.zeros((len(pts), 2, 2, 2))
    for i in range(2):
        spl = RectBivariateSpline(s, s, grid[:, :, i], kx=3, ky=3, s=0)
        ev = lambda dx, dy: spl.ev(pts[:, 0], pts[:, 1], dx=dx, dy=dy)  # noqa: E731
        u[:, i] = ev(0, 0)
        G[:, i, 0], G[:, i, 1] = ev(1, 0), ev(0, 1)
        H[:, i, 0, 0] = ev(2, 0)
        H[:, i, 1, 1] = ev(0, 2)
        H[:, i, 0, 1] = H[:, i, 1, 0] = ev(1, 1)
    return u, Kinematics(G, H)


def element_centers(mesh, lo=0.0, hi=1.0):
    c = (np.arange(mesh.n) + 0.5) * mesh.h
    X, Y = np.meshgrid(c, c, indexing="xy")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    keep = np.all((pts >= lo) & (pts <= hi), axis=1)
    return pts[keep]


def interior_gap_norms(mesh, displacement, p, lo=0.25, hi=0.75):
    """Equilibrium-gap norms of the interpolated nodal field at interior element centres."""
    pts = element_centers(mesh, lo, hi)
    _, kin = interpolated_kinematics(mesh, displacement, pts)
    return np.linalg.norm(mechanics.equilibrium_gap(kin, p), axis=1)


# -- rasterization ------------------------------------------------------------------


def boundary_polyline(mesh, displacement=None, subdivisions=EDGE_SUBDIVISIONS):
    """Closed counterclockwise boundary (reference and deformed), each element edge subdivided."""
    p = mesh.order
    ns = mesh.n_side
    n = mesh.n
    # walk the lattice boundary counterclockwise: bottom, right, top, left
    walks = [
        [(k, 0) for k in range(ns)],
        [(ns - 1, k) for k in range(ns)],
        [(ns - 1 - k, ns - 1) for k in range(ns)],
        [(0, ns - 1 - k) for k in range(ns)],
    ]
    u = np.zeros((mesh.n_nodes, 2)) if displacement is None else np.asarray(displacement).reshape(-1, 2)
    s = np.arange(subdivisions) / subdivisions
    L, _ = _lagrange_1d(p, 2.0 * s - 1.0)  # (sub, p + 1)
    ref, cur = [], []
    for side in walks:
        for e in range(n):
            ids = mesh.node_id(*np.array(side[e * p:e * p + p + 1]).T)
            X = mesh.nodes[ids]
            x = X + u[ids]
            ref.append(L @ X)
            cur.append(L @ x)
    return np.concatenate(ref), np.concatenate(cur)


def canvas_geometry(resolution):
    h = (CANVAS[1] - CANVAS[0]) / resolution
    origin = CANVAS[0] + 0.5 * h
    return np.array([h, h]), np.array([origin, origin])


def fill_polygon(poly, resolution):
    """Even-odd scanline fill of a closed polygon on the canvas; voxels indexed [ix, iy]."""
    spacing, origin = canvas_geometry(resolution)
    centers = origin[0] + spacing[0] * np.arange(resolution)
    p0 = poly
    p1 = np.roll(poly, -1, axis=0)
    out = np.zeros((resolution, resolution), dtype=np.uint8)
    for iy, yc in enumerate(centers):
        y0, y1 = p0[:, 1], p1[:, 1]
        cross = ((y0 <= yc) & (yc < y1)) | ((y1 <= yc) & (yc < y0))
        if not np.any(cross):
            continue
        a, b = p0[cross], p1[cross]
        xs = np.sort(a[:, 0] + (yc - a[:, 1]) * (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1]))
        n_right = xs.size - np.searchsorted(xs, centers, side="right")
        out[:, iy] = n_right % 2
    return out


def rasterize_pair(sol, resolution=256):
    """Binary fixed (reference square) and moving (deformed domain) images on the canvas."""
    ref, cur = boundary_polyline(sol.mesh, sol.displacement)
    spacing, origin = canvas_geometry(resolution)
    fixed = Image(fill_polygon(ref, resolution), spacing, origin)
    moving = Image(fill_polygon(cur, resolution), spacing, origin)
    return fixed, moving


# -- scenarios ----------------------------------------------------------------------


@dataclass
class Scenario:
    solution: FeSolution
    fixed: Image
    moving: Image
    meta: dict

    @property
    def nodes(self):
        return self.solution.mesh.nodes

    @property
    def truth(self):
        return self.solution.displacement


def generate_scenario(seed, n_elements=120, order=1, resolution=256, max_redraws=10, material=None):
    """Draw RBF boundary data until the FE problem converges, then rasterize."""
    material = material or synth_material()
    mesh = FeMesh(n_elements, order)
    attempts = []
    for attempt in range(max_redraws + 1):
        draw_seed = int(seed) if attempt == 0 else int(np.random.SeedSequence([int(seed), attempt]).generate_state(1)[0])
        bc = gen_rbf_field(draw_seed)
        try:
            sol = fe_solve_newton(mesh, bc, material)
        except NonConvergence as exc:
            attempts.append(draw_seed)
            logger.info("seed %d draw %d rejected: %s", seed, draw_seed, exc)
            continue
        fixed, moving = rasterize_pair(sol, resolution)
        meta = {
            "seed": int(seed),
            "draw_seed": draw_seed,
            "rejected_draws": len(attempts),
            "youngs": 1.0,
            "poisson": 0.3,
            "mu": material.mu,
            "lambda": material.lam,
            "elements_per_side": n_elements,
            "element_order": order,
            "nodes": mesh.n_nodes,
            "resolution": resolution,
            "canvas_min": CANVAS[0],
            "canvas_max": CANVAS[1],
            "rbf_kernels": N_KERNELS,
            "rbf_sigma_min": SIGMA_BOUNDS[0],
            "rbf_sigma_max": SIGMA_BOUNDS[1],
            "rbf_amplitude_bound": AMPLITUDE_BOUND,
            "newton_iterations": sol.report["iterations"],
            "newton_residual": sol.report["residual"],
            "load_steps": sol.report["load_steps"],
            "mean_jacobian": mean_jacobian(sol),
            "mean_displacement": float(np.mean(np.linalg.norm(sol.displacement, axis=1))),
        }
        return Scenario(sol, fixed, moving, meta)
    raise NonConvergence(f"seed {seed}: no converged draw in {max_redraws + 1} attempts", {"draws": attempts})


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_scenario(scenario, path):
    os.makedirs(path, exist_ok=True)
    save_metaimage(scenario.fixed, os.path.join(path, "fixed.mhd"), "MET_UCHAR")
    save_metaimage(scenario.moving, os.path.join(path, "moving.mhd"), "MET_UCHAR")
    with open(os.path.join(path, "ground_truth.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "ux", "uy"])
        for (x, y), (ux, uy) in zip(scenario.nodes, scenario.truth):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(ux)), repr(float(uy))])
    with open(os.path.join(path, "meta.toml"), "w") as fh:
        for k, v in scenario.meta.items():
            fh.write(f"{k} = {_toml_value(v)}\n")
    return path


def read_ground_truth(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, :2], data[:, 2:4]


def load_scenario(path):
    """Return a dict with ``fixed``, ``moving``, ``nodes``, ``truth`` and ``meta``."""
    nodes, truth = read_ground_truth(os.path.join(path, "ground_truth.csv"))
    with open(os.path.join(path, "meta.toml"), "rb") as fh:
        meta = tomllib.load(fh)
    return {
        "fixed": load_metaimage(os.path.join(path, "fixed.mhd")),
        "moving": load_metaimage(os.path.join(path, "moving.mhd")),
        "nodes": nodes,
        "truth": truth,
        "meta": meta,
    }
