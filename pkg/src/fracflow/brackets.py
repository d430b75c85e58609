"""Brackets, the level-set truncator and the convex test family ``J_0``.

All sums run over interior nodes with the grid's quadrature weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .nonlinearity import signed_power


def truncate(lam, r):
    """Signed soft threshold ``G_lam(r) = [|r| - lam]^+ sign(r)``."""
    if lam < 0:
        raise ConfigurationError(f"truncation level must be nonnegative, got {lam}")
    r = np.asarray(r, dtype=float)
    return np.sign(r) * np.maximum(np.abs(r) - lam, 0.0)


def _interior(grid, *fields):
    I = grid.interior
    return (grid.weights[I],) + tuple(np.asarray(f, dtype=float)[I] for f in fields)


def q_bracket(q, grid, u, v):
    """``[u, v]_q``: one-sided derivative of ``(1/q) ||.||_q^q`` at ``u`` along ``v``.

    For ``q > 1`` this is ``sum m |u|^(q-2) u v``; for ``q = 1`` it is
    ``sum_{u != 0} m sign(u) v + sum_{u = 0} m |v|``.
    """
    q = float(q)
    if q < 1:
        raise ConfigurationError(f"bracket exponent must be >= 1, got {q}")
    m, u, v = _interior(grid, u, v)
    if q > 1:
        return float(np.sum(m * signed_power(u, q - 1.0) * v))
    zero = u == 0
    return float(np.sum(m[~zero] * np.sign(u[~zero]) * v[~zero]) + np.sum(m[zero] * np.abs(v[zero])))


def plus_bracket(grid, u, v):
    """``[u, v]_+``: one-sided derivative of ``||[.]^+||_1`` at ``u`` along ``v``."""
    m, u, v = _interior(grid, u, v)
    pos = u > 0
    zero = u == 0
    return float(np.sum(m[pos] * v[pos]) + np.sum(m[zero] * np.maximum(v[zero], 0.0)))


def bracket(nu, grid, u, v):
    """``[u, v]_nu`` for ``nu`` in ``{"+", 1, q > 1}``."""
    if nu == "+":
        return plus_bracket(grid, u, v)
    return q_bracket(nu, grid, u, v)


@dataclass(frozen=True)
class JZeroFunction:
    """Convex ``j`` with ``j(0) = 0``.

    kinds: ``power_plus`` (``([r]^+)^q``), ``shifted_plus`` (``[[r]^+ - k]^+``)
    and ``abs_power`` (``|r|^q``).
    """

    kind: str
    param: float

    def __post_init__(self):
        if self.kind in ("power_plus", "abs_power"):
            if self.param < 1:
                raise ConfigurationError(f"{self.kind} needs q >= 1, got {self.param}")
        elif self.kind == "shifted_plus":
            if self.param < 0:
                raise ConfigurationError(f"shifted_plus needs k >= 0, got {self.param}")
        else:
            raise ConfigurationError(f"unknown J_0 kind {self.kind!r}")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "power_plus":
            return np.maximum(r, 0.0) ** self.param
        if self.kind == "abs_power":
            return np.abs(r) ** self.param
        return np.maximum(np.maximum(r, 0.0) - self.param, 0.0)

    def __str__(self):
        return f"{self.kind}({self.param:g})"


def j_integral(j, grid, u):
    """``sum_i m_i j(u_i)`` over interior nodes."""
    m, u = _interior(grid, u)
    return float(np.sum(m * j(u)))


def positive_part_norm(grid, u):
    """``||[u]^+||_1``."""
    m, u = _interior(grid, u)
    return float(np.sum(m * np.maximum(u, 0.0)))


def truncation_power_inequality(m, lam, a, b, p, rtol=1e-12):
    """Check ``|a_l^m - b_l^m| <= |a^m - b^m|`` and
    ``(a^m - b^m)^(p-1) (a_l^m - b_l^m) >= |a_l^m - b_l^m|^p``
    where ``a_l = G_lam(a)`` and powers are signed.

    Vectorised over ``a``, ``b`` (and the other arguments); returns a boolean
    array.  ``rtol`` absorbs floating-point rounding relative to the size
    of the terms involved.
    """
    m = np.asarray(m, dtype=float)
    if np.any(m < 1):
        raise ConfigurationError("the truncation inequality is only claimed for m >= 1")
    lam = np.asarray(lam, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    p = np.asarray(p, dtype=float)
    al = np.sign(a) * np.maximum(np.abs(a) - lam, 0.0)
    bl = np.sign(b) * np.maximum(np.abs(b) - lam, 0.0)
    D = signed_power(a, m) - signed_power(b, m)
    Dl = signed_power(al, m) - signed_power(bl, m)
    scale = np.abs(signed_power(a, m)) + np.abs(signed_power(b, m))
    first = np.abs(Dl) <= np.abs(D) + rtol * scale
    lhs = signed_power(D, p - 1.0) * Dl
    rhs = np.abs(Dl) ** p
    second = lhs >= rhs - rtol * p * np.maximum(scale, 1e-300) ** p
    return first & second
