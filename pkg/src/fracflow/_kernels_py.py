"""Pure numpy versions of the pair-sum kernels in ``_kernels.pyx``.

Same signatures and semantics; ``nthreads`` is accepted and ignored.
"""

import numpy as np


def row_flux(K, urow, ucol, p, nthreads=1):
    D = urow[:, None] - ucol[None, :]
    if p == 2.0:
        return np.einsum("ij,ij->i", K, D)
    return np.einsum("ij,ij->i", K, np.sign(D) * np.abs(D) ** (p - 1.0))


def pair_power_sum(K, urow, ucol, p, nthreads=1):
    D = np.abs(urow[:, None] - ucol[None, :])
    if p == 2.0:
        rows = np.einsum("ij,ij->i", K, D * D)
    else:
        rows = np.einsum("ij,ij->i", K, D**p)
    return float(np.sum(rows))


def hessian_weights(K, urow, ucol, p, floor, nthreads=1):
    if p == 2.0:
        return np.array(K, dtype=np.float64, copy=True)
    D = np.maximum(np.abs(urow[:, None] - ucol[None, :]), floor)
    return (p - 1.0) * K * D ** (p - 2.0)


def pair_weights(xrow, mrow, xcol, mcol, exponent, nthreads=1):
    diff = xrow[:, None, :] - xcol[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    out = np.zeros_like(r2)
    nz = r2 > 0.0
    out[nz] = r2[nz] ** (-0.5 * exponent)
    return out * mrow[:, None] * mcol[None, :]
