"""Compressible Neo-Hookean law and the pointwise equilibrium gap.

Strain energy::

    psi = lam/4 (J^2 - 1 - 2 ln J) + mu/2 (I_C - 3 - 2 ln J)

First Piola-Kirchhoff stress::

    P = lam/2 (J^2 - 1) F^-T + mu (F - F^-T)

and its divergence, written in terms of the displacement gradient ``G`` and
Hessian ``H[i, j, k] = d^2 u_i / dx_j dx_k``::

    div P = lam/2 (2 J F^-T grad J + (J^2 - 1) div F^-T) + mu (div F - div F^-T)

In 2D the plane-strain embedding is used: ``F`` is padded to 3x3 with
``F_33 = 1``, which adds 1 to ``I_C`` and leaves ``J`` and the in-plane
divergence unchanged.

All public functions take numpy arrays with optional leading batch axes.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor
from .exceptions import InvalidPoisson, NonPositiveJacobian
from .tensor import Dual


@dataclass(frozen=True)
class MaterialParams:
    mu: float
    lam: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")

    def scaled(self, c):
        return MaterialParams(self.mu * c, self.lam * c)


def lame_from_youngs(E, nu):
    """Convert Young's modulus and Poisson ratio to Lame parameters."""
    if not E > 0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if nu >= 0.5:
        raise InvalidPoisson(f"Poisson ratio must be < 0.5, got {nu}")
    if nu < 0:
        raise InvalidPoisson(f"Poisson ratio must be >= 0, got {nu}")
    mu = E / (2.0 * (1.0 + nu))
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return MaterialParams(mu=mu, lam=lam)


#: Material used for regularization by default (E = 1, nu = 0).
DEFAULT_MATERIAL = MaterialParams(mu=0.5, lam=0.0)


@dataclass
class Kinematics:
    """Displacement gradient ``G`` (..., d, d) and Hessian ``H`` (..., d, d, d)."""

    G: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=float)
        self.H = np.asarray(self.H, dtype=float)
        d = self.G.shape[-1]
        if self.G.shape[-2:] != (d, d) or self.H.shape[-3:] != (d, d, d):
            raise ValueError(f"inconsistent shapes G{self.G.shape} H{self.H.shape}")

    @property
    def d(self):
        return self.G.shape[-1]

    @property
    def F(self):
        return self.G + np.eye(self.d)


def _check_jacobian(J):
    Jv = tensor.value(J)
    bad = ~(Jv > 0)
    if np.any(bad):
        where = np.flatnonzero(np.atleast_1d(bad))
        raise NonPositiveJacobian(
            f"det(F) <= 0 at {where.size} point(s), min J = {np.min(Jv):.3g}", where=where
        )


def _hessian_entries(H):
    d = H.shape[-1]
    return [[[H[..., i, j, k] for k in range(d)] for j in range(d)] for i in range(d)]


# -- constitutive law --------------------------------------------------------


def strain_energy(F, p):
    F = np.asarray(F, dtype=float)
    f, d = tensor.entries(F)
    J = tensor.det(f)
    _check_jacobian(J)
    I_C = tensor.frob_norm_sq(f) + (1.0 if d == 2 else 0.0)
    lnJ = np.log(J)
    return p.lam / 4.0 * (J * J - 1.0 - 2.0 * lnJ) + p.mu / 2.0 * (I_C - 3.0 - 2.0 * lnJ)


def pk1_stress(F, p):
    F = np.asarray(F, dtype=float)
    J = tensor.det(F)
    _check_jacobian(J)
    FinvT = tensor.transpose(tensor.inv(F))
    J = np.asarray(J)[..., None, None]
    return p.lam / 2.0 * (J * J - 1.0) * FinvT + p.mu * (F - FinvT)


def pk1_tangent(F, p):
    """Consistent tangent ``A[..., i, J, k, L] = dP_iJ / dF_kL``."""
    F = np.asarray(F, dtype=float)
    d = F.shape[-1]
    J = tensor.det(F)
    _check_jacobian(J)
    Finv = tensor.inv(F)
    J = np.asarray(J)[..., None, None, None, None]
    eye = np.eye(d)
    term_mu = p.mu * np.einsum("ik,JL->iJkL", eye, eye)
    # d(F^-T)_iJ / dF_kL = -Finv_Jk Finv_Li
    swap = np.einsum("...Jk,...Li->...iJkL", Finv, Finv)
    outer = np.einsum("...Ji,...Lk->...iJkL", Finv, Finv)
    return term_mu + (p.mu - p.lam / 2.0 * (J * J - 1.0)) * swap + p.lam * J * J * outer


# -- divergence terms (entry form, dual-friendly) ---------------------------


def _div_F(h, d):
    return [_sum(h[i][j][j] for j in range(d)) for i in range(d)]


def _grad_J(J, finv, h, d):
    # dJ/dx_k = J tr(F^-1 dF/dx_k) = J sum_ab Finv_ba H_abk
    return [J * _sum(finv[b][a] * h[a][b][k] for a in range(d) for b in range(d)) for k in range(d)]


def _div_FinvT(finv, h, d):
    # (F^-T)_ij = Finv_ji and d(F^-1)/dx_k = -F^-1 (dF/dx_k) F^-1, so
    # div(F^-T)_i = -sum_b w_b Finv_bi with w_b = sum_ja Finv_ja H_abj
    w = [_sum(finv[j][a] * h[a][b][j] for j in range(d) for a in range(d)) for b in range(d)]
    return [-_sum(w[b] * finv[b][i] for b in range(d)) for i in range(d)]


def _sum(terms):
    terms = iter(terms)
    acc = next(terms)
    for t in terms:
        acc = acc + t
    return acc


def _gap_entries(g, h, mu, lam, d):
    f = [[g[i][j] + (1.0 if i == j else 0.0) for j in range(d)] for i in range(d)]
    J = tensor.det(f)
    finv = tensor.inv(f)
    div_f = _div_F(h, d)
    div_fit = _div_FinvT(finv, h, d)
    if lam == 0.0:
        return [mu * (div_f[i] - div_fit[i]) for i in range(d)]
    grad_j = _grad_J(J, finv, h, d)
    c_fit = lam / 2.0 * (J * J - 1.0) - mu
    c_gj = lam * J
    gap = []
    for i in range(d):
        fit_gj = _sum(finv[k][i] * grad_j[k] for k in range(d))
        gap.append(mu * div_f[i] + c_gj * fit_gj + c_fit * div_fit[i])
    return gap


def div_F(k):
    """Divergence of F: the Laplacian of each displacement component."""
    return np.einsum("...ijj->...i", k.H)


def grad_J(F, k):
    F = np.asarray(F, dtype=float)
    J = tensor.det(F)
    _check_jacobian(J)
    d = F.shape[-1]
    finv, _ = tensor.entries(tensor.inv(F))
    return np.stack(_grad_J(J, finv, _hessian_entries(k.H), d), axis=-1)


def div_FinvT(F, k):
    F = np.asarray(F, dtype=float)
    _check_jacobian(tensor.det(F))
    d = F.shape[-1]
    finv, _ = tensor.entries(tensor.inv(F))
    return np.stack(_div_FinvT(finv, _hessian_entries(k.H), d), axis=-1)


def equilibrium_gap(k, p):
    """Pointwise residual div P for the displacement described by ``k``."""
    d = k.d
    _check_jacobian(tensor.det(k.F))
    g, _ = tensor.entries(k.G)
    gap = _gap_entries(g, _hessian_entries(k.H), p.mu, p.lam, d)
    return np.stack([np.broadcast_to(np.asarray(x, dtype=float), k.G.shape[:-2]) for x in gap], axis=-1)


def gap_penalty(k, p):
    gap = equilibrium_gap(k, p)
    return np.sum(gap * gap, axis=-1)


def unique_hessian_index(d):
    """List of (j, l) pairs with j <= l, the independent Hessian slots."""
    return [(j, l) for j in range(d) for l in range(j, d)]


def gap_sensitivities(k, p, return_penalty=False):
    """Exact partials of :func:`gap_penalty` with respect to G and H.

    Forward-mode duals are seeded on the d*d entries of ``G`` and the
    d*d(d+1)/2 independent entries of ``H``.  The Hessian sensitivity is
    returned as a symmetric full array: entry ``[i, j, l]`` is the partial
    with respect to ``H[i, j, l]`` treating ``H[i, l, j]`` as a separate
    variable, so the derivative with respect to the shared value is
    ``(2 - delta_jl)`` times it.
    """
    d = k.d
    _check_jacobian(tensor.det(k.F))
    pairs = unique_hessian_index(d)
    n_g = d * d
    n_seeds = n_g + d * len(pairs)
    batch = k.G.shape[:-2]

    g_duals = Dual.seed(k.G.reshape(batch + (n_g,)), n_seeds)
    g = [[g_duals[i * d + j] for j in range(d)] for i in range(d)]
    h = [[[None] * d for _ in range(d)] for _ in range(d)]
    seed = n_g
    for i in range(d):
        for j, l in pairs:
            der = np.zeros((n_seeds,) + batch)
            der[seed] = 1.0
            x = Dual(k.H[..., i, j, l], der)
            h[i][j][l] = x
            h[i][l][j] = x
            seed += 1

    gap = _gap_entries(g, h, p.mu, p.lam, d)
    penalty = _sum(x * x for x in gap)
    der = np.moveaxis(penalty.der, 0, -1)
    dG = der[..., :n_g].reshape(batch + (d, d))
    dH = np.zeros(batch + (d, d, d))
    seed = n_g
    for i in range(d):
        for j, l in pairs:
            if j == l:
                dH[..., i, j, j] = der[..., seed]
            else:
                dH[..., i, j, l] = dH[..., i, l, j] = 0.5 * der[..., seed]
            seed += 1
    if return_penalty:
        return dG, dH, penalty.val
    return dG, dH
