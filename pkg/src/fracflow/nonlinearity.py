"""The constitutive map phi, its inverse beta, primitives, and the perturbation f.

Everything here is vectorised over numpy arrays and returns arrays of the
same shape (scalars in, 0-d arrays or floats out).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError, NumericalError


def signed_power(r, e):
    """``|r|^(e-1) r`` with the value 0 at 0 for every ``e > 0``."""
    r = np.asarray(r, dtype=float)
    return np.sign(r) * np.abs(r) ** e


class Phi:
    """Strictly increasing ``phi`` with ``phi(0) = 0``.

    Use :meth:`power` for ``phi(r) = |r|^(m-1) r`` or :meth:`tabulated` for a
    piecewise-linear interpolant of a monotone table.
    """

    kind: str

    # construction -------------------------------------------------------

    @classmethod
    def power(cls, m):
        m = float(m)
        if not m > 0:
            raise ConfigurationError(f"power-law exponent m must be positive, got {m}")
        self = cls.__new__(cls)
        self.kind = "power"
        self.m = m
        return self

    @classmethod
    def tabulated(cls, r, values):
        r = np.asarray(r, dtype=float)
        v = np.asarray(values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or len(r) < 2:
            raise ConfigurationError("phi table needs two equal-length columns with >= 2 rows")
        if np.any(np.diff(r) <= 0):
            raise ConfigurationError("phi table abscissae must be strictly increasing")
        if np.any(np.diff(v) <= 0):
            raise ConfigurationError("phi table values must be strictly increasing")
        if not r[0] <= 0.0 <= r[-1]:
            raise ConfigurationError("phi table must bracket r = 0")
        if abs(np.interp(0.0, r, v)) > 1e-12 * max(1.0, np.max(np.abs(v))):
            raise ConfigurationError("phi table must satisfy phi(0) = 0")
        self = cls.__new__(cls)
        self.kind = "tabulated"
        self.m = None
        self._r = r
        self._v = v
        self._slope = np.diff(v) / np.diff(r)
        # cumulative integrals of phi over r and of beta over w, exact for
        # piecewise-linear data, shifted so both vanish at 0
        self._Phi_nodes = _cumtrapz(r, v)
        self._Phi_nodes -= _piecewise_quadratic(0.0, r, v, self._Phi_nodes)
        self._B_nodes = _cumtrapz(v, r)
        self._B_nodes -= _piecewise_quadratic(0.0, v, r, self._B_nodes)
        return self

    @classmethod
    def from_file(cls, path):
        try:
            data = np.loadtxt(Path(path), ndmin=2)
        except (OSError, ValueError) as exc:
            raise ConfigurationError(f"cannot read phi table {path}: {exc}") from None
        if data.shape[1] != 2:
            raise ConfigurationError(f"phi table {path} must have exactly two columns")
        return cls.tabulated(data[:, 0], data[:, 1])

    def __repr__(self):
        if self.kind == "power":
            return f"power({self.m:g})"
        return f"tabulated({len(self._r)} rows on [{self._r[0]:g}, {self._r[-1]:g}])"

    # range checks ---------------------------------------------------------

    def _check(self, x, lo, hi, what):
        if np.any(x < lo) or np.any(x > hi):
            bad = x[(x < lo) | (x > hi)]
            raise DomainError(
                f"{what} argument {bad.flat[0]:g} outside tabulated range [{lo:g}, {hi:g}]"
            )

    @property
    def r_range(self):
        if self.kind == "power":
            return (-np.inf, np.inf)
        return (self._r[0], self._r[-1])

    @property
    def w_range(self):
        if self.kind == "power":
            return (-np.inf, np.inf)
        return (self._v[0], self._v[-1])

    # evaluation -----------------------------------------------------------

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "power":
            return signed_power(r, self.m)
        self._check(r, *self.r_range, "phi")
        return np.interp(r, self._r, self._v)

    def beta(self, w):
        """Inverse map ``beta = phi^{-1}``."""
        w = np.asarray(w, dtype=float)
        if self.kind == "power":
            return signed_power(w, 1.0 / self.m)
        self._check(w, *self.w_range, "beta")
        return np.interp(w, self._v, self._r)

    def derivative(self, r):
        """``phi'(r)``; infinite at 0 for power laws with m < 1."""
        r = np.asarray(r, dtype=float)
        if self.kind == "power":
            with np.errstate(divide="ignore"):
                return self.m * np.abs(r) ** (self.m - 1.0)
        self._check(r, *self.r_range, "phi'")
        k = np.clip(np.searchsorted(self._r, r, side="right") - 1, 0, len(self._slope) - 1)
        return self._slope[k]

    def beta_derivative(self, w):
        """``beta'(w)``; infinite at 0 for power laws with m > 1."""
        w = np.asarray(w, dtype=float)
        if self.kind == "power":
            with np.errstate(divide="ignore"):
                return np.abs(w) ** (1.0 / self.m - 1.0) / self.m
        self._check(w, *self.w_range, "beta'")
        k = np.clip(np.searchsorted(self._v, w, side="right") - 1, 0, len(self._slope) - 1)
        return 1.0 / self._slope[k]

    def primitive(self, r):
        """``Phi(r) = int_0^r phi``."""
        r = np.asarray(r, dtype=float)
        if self.kind == "power":
            return np.abs(r) ** (self.m + 1.0) / (self.m + 1.0)
        self._check(r, *self.r_range, "Phi")
        return _piecewise_quadratic(r, self._r, self._v, self._Phi_nodes)

    def beta_primitive(self, w):
        """``B(w) = int_0^w beta``; convex with ``B' = beta``."""
        w = np.asarray(w, dtype=float)
        if self.kind == "power":
            e = 1.0 / self.m + 1.0
            return np.abs(w) ** e / e
        self._check(w, *self.w_range, "B")
        return _piecewise_quadratic(w, self._v, self._r, self._B_nodes)


def _cumtrapz(x, y):
    out = np.zeros_like(x)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


def _piecewise_quadratic(t, x, y, cum):
    """Integral of the linear interpolant of (x, y) from x[0] to t (plus ``cum`` offset)."""
    t = np.asarray(t, dtype=float)
    k = np.clip(np.searchsorted(x, t, side="right") - 1, 0, len(x) - 2)
    yt = np.interp(t, x, y)
    return cum[k] + 0.5 * (t - x[k]) * (y[k] + yt)


_PHI_SPEC = re.compile(r"^\s*(power|table)\s*\(\s*([^)]*?)\s*\)\s*$")


def parse_phi(text, base_dir=None):
    """Parse ``power(m)`` or ``table(path)``; relative paths resolve against ``base_dir``."""
    match = _PHI_SPEC.match(text)
    if match is None:
        raise ConfigurationError(f"unrecognised phi specification {text!r}")
    kind, arg = match.groups()
    if kind == "power":
        try:
            return Phi.power(float(arg))
        except ValueError:
            raise ConfigurationError(f"power() needs a number, got {arg!r}") from None
    path = Path(arg)
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    return Phi.from_file(path)


def phi_eval(phi, r):
    return phi(r)


def beta_eval(phi, w):
    return phi.beta(w)


def phi_primitive(phi, r):
    return phi.primitive(r)


def _bisect(h, dh, target, lo, hi, tol, max_iter):
    """Root of the nondecreasing ``h(x) = target`` inside ``[lo, hi]`` (vectorised).

    Bisection to a relative bracket width ``tol`` followed by one Newton
    step with derivative ``dh`` that is kept only if it stays in the bracket.
    """
    if np.any(h(lo) > target) or np.any(h(hi) < target):
        raise DomainError("Yosida equation has no root inside the tabulated range of beta")
    scale = np.maximum(np.maximum(np.abs(lo), np.abs(hi)), np.finfo(float).tiny)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        neg = h(mid) < target
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
        if np.all(hi - lo <= tol * scale):
            break
    else:
        width = float(np.max((hi - lo) / scale))
        raise NumericalError(
            "Yosida bisection did not converge", bracket_width=width, iterations=max_iter
        )
    x = 0.5 * (lo + hi)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        step = (h(x) - target) / dh(x)
    polished = x - np.where(np.isfinite(step), step, 0.0)
    inside = (polished >= lo) & (polished <= hi)
    return np.where(inside, polished, x)


def yosida_resolvent(phi, lam, r, tol=1e-15, max_iter=200):
    """Solve ``y + lam * beta(y) = r`` for ``y`` (vectorised).

    The root lies between 0 and ``r`` because ``beta`` has the sign of its
    argument.  For power laws with ``m > 1`` ``beta`` has infinite slope at
    0, so the equivalent ``phi(z) + lam z = r`` is solved for ``z = beta(y)``
    instead, which is well conditioned there; ``y = phi(z)``.
    """
    lam = float(lam)
    if not lam > 0:
        raise ConfigurationError(f"Yosida parameter must be positive, got {lam}")
    r = np.asarray(r, dtype=float)
    if phi.kind == "power" and phi.m > 1:
        z = _bisect(
            lambda z: phi(z) + lam * z,
            lambda z: phi.derivative(z) + lam,
            r,
            # widened by a few ulps so rounding in r / lam cannot exclude the root
            np.minimum(r, 0.0) / lam * (1.0 + 1e-12),
            np.maximum(r, 0.0) / lam * (1.0 + 1e-12),
            tol,
            max_iter,
        )
        return np.where(r == 0, 0.0, phi(z))
    wlo, whi = phi.w_range
    return _bisect(
        lambda y: y + lam * phi.beta(y),
        lambda y: 1.0 + lam * phi.beta_derivative(y),
        r,
        np.maximum(np.minimum(r, 0.0), wlo),
        np.minimum(np.maximum(r, 0.0), whi),
        tol,
        max_iter,
    )


def yosida_beta(phi, lam, r):
    """Yosida approximation ``beta_lam(r) = (r - J_lam(r)) / lam`` of ``beta``."""
    r = np.asarray(r, dtype=float)
    y = yosida_resolvent(phi, lam, r)
    return (r - y) / float(lam)


# --------------------------------------------------------------------------
# perturbation


_RULES = {
    "zero": lambda c, x, u: np.zeros_like(u),
    "linear": lambda c, x, u: c * u,
    "sine": lambda c, x, u: c * np.sin(u),
    "tanh": lambda c, x, u: c * np.tanh(u),
}


@dataclass(frozen=True)
class Perturbation:
    """Lipschitz absorption/reaction term ``f(x, u)`` with ``f(x, 0) = 0``.

    ``kind`` selects ``0``, ``c u``, ``c sin u`` or ``c tanh u``; the Lipschitz
    constant is ``|c|``.  A custom ``rule(x, u)`` may be supplied together
    with its Lipschitz constant.
    """

    kind: str = "zero"
    c: float = 0.0
    rule: object = None
    lipschitz: float | None = None

    def __post_init__(self):
        if self.rule is None and self.kind not in _RULES:
            raise ConfigurationError(f"unknown perturbation kind {self.kind!r}")
        if self.rule is not None and self.lipschitz is None:
            raise ConfigurationError("a custom perturbation rule needs its Lipschitz constant")

    @property
    def omega(self):
        if self.rule is not None:
            return float(self.lipschitz)
        return 0.0 if self.kind == "zero" else abs(float(self.c))

    def __call__(self, x, u):
        u = np.asarray(u, dtype=float)
        if self.rule is not None:
            return np.asarray(self.rule(x, u), dtype=float)
        return _RULES[self.kind](float(self.c), x, u)

    def __str__(self):
        if self.rule is not None:
            return f"custom(omega={self.omega:g})"
        return "zero" if self.kind == "zero" else f"{self.kind}({self.c:g})"


_PERT_SPEC = re.compile(r"^\s*(zero|linear|sine|tanh)\s*(?:\(\s*([^)]*?)\s*\))?\s*$")


def parse_perturbation(text):
    """Parse ``zero``, ``linear(c)``, ``sine(c)`` or ``tanh(c)``."""
    match = _PERT_SPEC.match(text)
    if match is None:
        raise ConfigurationError(f"unrecognised perturbation {text!r}")
    kind, arg = match.groups()
    if kind == "zero":
        return Perturbation()
    if arg is None:
        raise ConfigurationError(f"{kind}() needs a coefficient")
    try:
        return Perturbation(kind, float(arg))
    except ValueError:
        raise ConfigurationError(f"{kind}() needs a number, got {arg!r}") from None


def nemytskii(pert, grid, u):
    """Pointwise superposition ``(F u)_i = f(x_i, u_i)`` at every node."""
    u = np.asarray(u, dtype=float)
    x = grid.nodes[:, 0] if grid.dim == 1 else grid.nodes
    return pert(x, u)
