"""Selects the pair-sum kernel implementation at import time.

The compiled extension ``fracflow._kernels`` is used when it has been built;
otherwise (or when ``FRACFLOW_BACKEND=python``) the numpy fallback is used.
``FRACFLOW_THREADS`` caps the number of OpenMP threads the compiled kernels
may use.
"""

import logging
import os

import numpy as np

from . import _kernels_py

log = logging.getLogger(__name__)

_IMPLEMENTATIONS = {"python": _kernels_py}

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None
else:
    _IMPLEMENTATIONS["compiled"] = _compiled


def _thread_cap():
    raw = os.environ.get("FRACFLOW_THREADS", "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        log.warning("ignoring non-integer FRACFLOW_THREADS=%r", raw)
        return os.cpu_count() or 1
    return max(1, n)


def _select():
    wanted = os.environ.get("FRACFLOW_BACKEND", "").strip().lower()
    if wanted == "python" or _compiled is None:
        if wanted == "compiled":
            log.warning("FRACFLOW_BACKEND=compiled but the extension is not built")
        return "python"
    return "compiled"


BACKEND = _select()
THREADS = _thread_cap()


def available():
    """Names of the kernel implementations importable in this environment."""
    return sorted(_IMPLEMENTATIONS)


def implementation(name=None):
    """Kernel module for ``name`` (default: the active backend)."""
    return _IMPLEMENTATIONS[name or BACKEND]


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def row_flux(K, urow, ucol, p):
    """out[i] = sum_j K[i, j] psi(urow[i] - ucol[j]) with psi(t) = |t|^(p-2) t."""
    return implementation().row_flux(_c(K), _c(urow), _c(ucol), float(p), THREADS)


def pair_power_sum(K, urow, ucol, p):
    """sum_{i,j} K[i, j] |urow[i] - ucol[j]|^p."""
    return float(implementation().pair_power_sum(_c(K), _c(urow), _c(ucol), float(p), THREADS))


def hessian_weights(K, urow, ucol, p, floor):
    """(p - 1) K[i, j] max(|urow[i] - ucol[j]|, floor)^(p-2)."""
    return implementation().hessian_weights(
        _c(K), _c(urow), _c(ucol), float(p), float(floor), THREADS
    )


def pair_weights(xrow, mrow, xcol, mcol, exponent):
    """mrow[i] mcol[j] |xrow[i] - xcol[j]|^(-exponent), zero for coincident points."""
    return implementation().pair_weights(
        _c(xrow), _c(mrow), _c(xcol), _c(mcol), float(exponent), THREADS
    )
