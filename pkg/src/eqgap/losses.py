"""Similarity metrics, the bending-energy baseline and the weighted objective.

Every function returns the loss together with the sensitivities the
optimizer needs, so the engine can chain them into coefficient gradients.
"""

import numpy as np

from .exceptions import DegenerateBatch, InvalidBeta

NCC_EPS_VAR = 1e-12


def mse_batch(f, m):
    f = np.asarray(f, dtype=float)
    m = np.asarray(m, dtype=float)
    n = f.size
    r = m - f
    return float(np.dot(r, r) / n), 2.0 * r / n


def ncc_batch(f, m):
    """Global normalized cross-correlation loss ``1 - rho`` over a batch."""
    f = np.asarray(f, dtype=float)
    m = np.asarray(m, dtype=float)
    n = f.size
    if n < 2:
        raise DegenerateBatch("NCC needs at least two samples")
    fc = f - f.mean()
    mc = m - m.mean()
    s_ff = np.dot(fc, fc)
    s_mm = np.dot(mc, mc)
    if np.sqrt(s_ff / n) <= NCC_EPS_VAR or np.sqrt(s_mm / n) <= NCC_EPS_VAR:
        raise DegenerateBatch("constant intensities in NCC batch")
    norm = np.sqrt(s_ff * s_mm)
    rho = np.dot(fc, mc) / norm
    drho = fc / norm - rho * mc / s_mm
    return float(1.0 - rho), -drho


SIMILARITIES = {"mse": mse_batch, "ncc": ncc_batch}


def bending_energy_point(H):
    """Thin-plate bending energy at each point, full double sum over (j, k).

    Returns ``(value, dvalue_dH)``; the sensitivity uses the same symmetric
    full-array convention as :func:`eqgap.mechanics.gap_sensitivities`.
    """
    H = np.asarray(H, dtype=float)
    return np.sum(H * H, axis=(-3, -2, -1)), 2.0 * H


def check_beta(beta):
    if not (0.0 <= beta <= 1.0):
        raise InvalidBeta(f"beta must lie in [0, 1], got {beta}")
    return float(beta)


def total_loss(sim, reg, beta):
    """(1 - beta) * sim + beta * reg."""
    beta = check_beta(beta)
    return (1.0 - beta) * sim + beta * reg
