"""Discrete Gagliardo energy and the fractional p-Laplacian on grid fields.

Fields are full-length arrays over all grid nodes.  With ``K`` the pair
table, ``E(u) = (1/2p) sum_{i != j} K_ij |u_i - u_j|^p`` over ordered pairs,
and the operator is the weighted gradient of ``E``::

    (A u)_i = (1/m_i) sum_j K_ij |u_i - u_j|^(p-2) (u_i - u_j)

so that ``sum_i m_i (A u)_i v_i`` is the derivative of ``E`` at ``u`` in any
direction ``v`` vanishing outside the domain.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from . import backend
from .errors import ConfigurationError


class EnergyValue(NamedTuple):
    energy: float
    seminorm_p: float


def _check_p(kernel, p):
    if p is None:
        return kernel.p
    if not math.isclose(float(p), kernel.p, rel_tol=0, abs_tol=1e-14):
        raise ConfigurationError(f"p={p} differs from the kernel's p={kernel.p}")
    return kernel.p


def _split(u, grid):
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.size,):
        raise ConfigurationError(f"field has shape {u.shape}, grid has {grid.size} nodes")
    u_ext = u[grid.exterior]
    return u[grid.interior], (None if not np.any(u_ext) else u_ext)


def pair_sum_interior(u_int, kernel, u_ext=None):
    """Ordered-pair sum ``sum_{i != j} K_ij |u_i - u_j|^p`` from interior values.

    ``u_ext`` is the exterior datum (``None`` means zero).
    """
    p = kernel.p
    total = 0.0
    for sl, blk in kernel.iter_interior_rows():
        total += backend.pair_power_sum(blk, u_int[sl], u_int, p)
    if u_ext is None:
        total += 2.0 * float(np.dot(kernel.kappa, np.abs(u_int) ** p))
    else:
        for sl, blk in kernel.iter_exterior_rows():
            total += 2.0 * backend.pair_power_sum(blk, u_int[sl], u_ext, p)
    return total


def energy_interior(u_int, kernel, u_ext=None):
    """``E`` of the field with interior values ``u_int`` and exterior datum ``u_ext``."""
    return pair_sum_interior(u_int, kernel, u_ext) / (2.0 * kernel.p)


def gradient_interior(u_int, kernel, u_ext=None):
    """Gradient of ``E`` with respect to interior values: ``sum_j K_ij psi(u_i - u_j)``."""
    p = kernel.p
    out = np.empty(len(u_int))
    for sl, blk in kernel.iter_interior_rows():
        out[sl] = backend.row_flux(blk, u_int[sl], u_int, p)
    if u_ext is None:
        out += kernel.kappa * np.sign(u_int) * np.abs(u_int) ** (p - 1.0)
    else:
        for sl, blk in kernel.iter_exterior_rows():
            out[sl] += backend.row_flux(blk, u_int[sl], u_ext, p)
    return out


def hessian_interior(u_int, kernel, floor=0.0, secant_pairs=None, secant_nodes=None):
    """Hessian of ``E`` in the interior values (zero exterior datum).

    Pair terms use ``max(|u_i - u_j|, floor)^(p-2)``; for ``p < 2`` a positive
    floor keeps the matrix finite.  On the pairs in ``secant_pairs`` (boolean
    matrix) and the exterior terms of ``secant_nodes`` the curvature
    ``(p-1) |t|^(p-2)`` is replaced by ``max(p-1, 1) |t|^(p-2)``, which
    majorises the secant slope ``psi(t)/t``; there the floor is dropped
    (except at ``t = 0``) so the majorant stays sharp for tiny ``t``.
    Requires a dense kernel.
    """
    p = kernel.p
    K = kernel.interior_block
    C = backend.hessian_weights(K, u_int, u_int, p, floor)
    np.fill_diagonal(C, 0.0)
    lift = max(p - 1.0, 1.0)
    if secant_pairs is not None and lift != p - 1.0:
        D = np.abs(u_int[:, None] - u_int[None, :])
        mask = secant_pairs & (D > 0)
        if np.any(mask):
            C = C.copy()
            C[mask] = lift * K[mask] * D[mask] ** (p - 2.0)
    if p == 2.0:
        ext = kernel.kappa.copy()
    else:
        a = np.abs(u_int)
        ext = (p - 1.0) * kernel.kappa * np.maximum(a, floor) ** (p - 2.0)
        if secant_nodes is not None and lift != p - 1.0:
            mask = secant_nodes & (a > 0)
            ext = np.where(mask, lift * kernel.kappa * np.where(mask, a, 1.0) ** (p - 2.0), ext)
    H = -C
    H[np.diag_indices_from(H)] = C.sum(axis=1) + ext
    return H


def gagliardo_seminorm(u, kernel, p=None):
    """``[u]_{s,p} = (sum over ordered pairs K_ij |u_i - u_j|^p)^(1/p)``."""
    p = _check_p(kernel, p)
    u_int, u_ext = _split(u, kernel.grid)
    return pair_sum_interior(u_int, kernel, u_ext) ** (1.0 / p)


def energy(u, kernel, p=None):
    """Energy ``E = [u]^p / (2p)`` together with the seminorm."""
    p = _check_p(kernel, p)
    u_int, u_ext = _split(u, kernel.grid)
    total = pair_sum_interior(u_int, kernel, u_ext)
    return EnergyValue(total / (2.0 * p), total ** (1.0 / p))


def apply_operator(u, kernel, p=None):
    """``A u`` at interior nodes; exterior entries are 0.

    For ``p < 2`` the summand is taken as 0 where ``u_i = u_j``.
    """
    _check_p(kernel, p)
    grid = kernel.grid
    u_int, u_ext = _split(u, grid)
    out = np.zeros(grid.size)
    out[grid.interior] = gradient_interior(u_int, kernel, u_ext) / grid.weights[grid.interior]
    return out


def weighted_pairing(grid, a, b):
    """``sum_i m_i a_i b_i`` over interior nodes."""
    I = grid.interior
    return float(np.sum(grid.weights[I] * np.asarray(a)[I] * np.asarray(b)[I]))


def sobolev_exponent(p, s, d, p_tilde=None):
    """Sobolev exponent ``q_s``: ``(1/p - s/d)^(-1)``, ``p_tilde`` or ``inf``.

    Raises
    ------
    ConfigurationError
        If ``p = d/s`` and no ``p_tilde >= p`` is supplied.
    """
    p, s, d = float(p), float(s), int(d)
    if not p > 1.0 or not 0.0 < s < 1.0:
        raise ConfigurationError(f"need p > 1 and 0 < s < 1, got p={p}, s={s}")
    critical = d / s
    if math.isclose(p, critical, rel_tol=1e-12):
        if p_tilde is None:
            raise ConfigurationError(
                f"p = d/s = {critical:g}: the embedding exponent p_tilde must be supplied"
            )
        if not float(p_tilde) >= p:
            raise ConfigurationError(f"p_tilde={p_tilde} must be at least p={p}")
        return float(p_tilde)
    if p < critical:
        return 1.0 / (1.0 / p - s / d)
    return math.inf
