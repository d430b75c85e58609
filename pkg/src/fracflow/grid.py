"""Lattice discretization of the domain and the singular pair-kernel table.

Nodes are the points ``k h`` (``k`` integer) strictly inside the truncation
ball of radius ``R_ext``.  Nodes inside the open domain are interior; every
other node (including nodes exactly on the boundary) is exterior and carries
the Dirichlet datum.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import ConfigurationError

#: above this many nodes the kernel is evaluated block by block on demand
DENSE_LIMIT = 5000


# --------------------------------------------------------------------------
# geometries


@dataclass(frozen=True)
class Interval:
    a: float
    b: float
    dim: int = field(default=1, init=False)

    def __post_init__(self):
        if not self.a < self.b:
            raise ConfigurationError(f"interval needs a < b, got ({self.a}, {self.b})")

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float).reshape(-1, 1)[:, 0]
        return (x > self.a + tol) & (x < self.b - tol)

    def bounding_radius(self):
        return max(abs(self.a), abs(self.b))

    def measure(self):
        return self.b - self.a

    def __str__(self):
        return f"interval({self.a:g},{self.b:g})"


@dataclass(frozen=True)
class Box:
    a1: float
    b1: float
    a2: float
    b2: float
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        if not (self.a1 < self.b1 and self.a2 < self.b2):
            raise ConfigurationError("box needs a1 < b1 and a2 < b2")

    def contains(self, x, tol=0.0):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return (
            (x[:, 0] > self.a1 + tol)
            & (x[:, 0] < self.b1 - tol)
            & (x[:, 1] > self.a2 + tol)
            & (x[:, 1] < self.b2 - tol)
        )

    def bounding_radius(self):
        return max(math.hypot(x, y) for x in (self.a1, self.b1) for y in (self.a2, self.b2))

    def measure(self):
        return (self.b1 - self.a1) * (self.b2 - self.a2)

    def __str__(self):
        return f"box({self.a1:g},{self.b1:g},{self.a2:g},{self.b2:g})"


@dataclass(frozen=True)
class Disk:
    cx: float
    cy: float
    r: float
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        if not self.r > 0:
            raise ConfigurationError(f"disk radius must be positive, got {self.r}")

    def contains(self, x, tol=0.0):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.hypot(x[:, 0] - self.cx, x[:, 1] - self.cy) < self.r - tol

    def bounding_radius(self):
        return math.hypot(self.cx, self.cy) + self.r

    def measure(self):
        return math.pi * self.r**2

    def __str__(self):
        return f"disk({self.cx:g},{self.cy:g},{self.r:g})"


_GEOMETRY_SPEC = re.compile(r"^\s*(interval|box|disk)\s*\(([^)]*)\)\s*$")
_GEOMETRY_ARITY = {"interval": (Interval, 2), "box": (Box, 4), "disk": (Disk, 3)}


def parse_geometry(text):
    """Parse ``interval(a,b)``, ``box(a1,b1,a2,b2)`` or ``disk(cx,cy,r)``."""
    match = _GEOMETRY_SPEC.match(text)
    if match is None:
        raise ConfigurationError(f"unrecognised geometry {text!r}")
    kind, args = match.groups()
    cls, arity = _GEOMETRY_ARITY[kind]
    try:
        values = [float(a) for a in args.split(",")]
    except ValueError:
        raise ConfigurationError(f"non-numeric argument in geometry {text!r}") from None
    if len(values) != arity:
        raise ConfigurationError(f"{kind} takes {arity} arguments, got {len(values)}")
    return cls(*values)


# --------------------------------------------------------------------------
# grid


@dataclass(frozen=True, eq=False)
class Grid:
    """Collocation nodes with cell weights and the interior/exterior split.

    Attributes
    ----------
    dim : int
        Spatial dimension, 1 or 2.
    nodes : ndarray, shape (N, dim)
        Node coordinates.
    weights : ndarray, shape (N,)
        Quadrature weight (cell measure) of every node.
    interior_mask : ndarray of bool, shape (N,)
        True for nodes inside the domain.
    exterior_radius : float
        Radius of the ball the lattice is clipped to.
    spacing : float
        Lattice spacing ``h``.
    geometry : optional
        The domain the grid was built from, if any.
    """

    dim: int
    nodes: np.ndarray
    weights: np.ndarray
    interior_mask: np.ndarray
    exterior_radius: float
    spacing: float
    geometry: object = None

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float).reshape(len(self.nodes), -1)
        weights = np.array(self.weights, dtype=float)
        mask = np.array(self.interior_mask, dtype=bool)
        if self.dim not in (1, 2) or nodes.shape[1] != self.dim:
            raise ConfigurationError(f"nodes must be {self.dim}-dimensional and dim in {{1, 2}}")
        if weights.shape != (len(nodes),) or mask.shape != (len(nodes),):
            raise ConfigurationError("weights and interior_mask must have one entry per node")
        if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise ConfigurationError("node weights must be finite and positive")
        if not mask.any():
            raise ConfigurationError("grid has no interior nodes")
        for name, arr in (("nodes", nodes), ("weights", weights), ("interior_mask", mask)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        interior = np.flatnonzero(mask)
        exterior = np.flatnonzero(~mask)
        interior.setflags(write=False)
        exterior.setflags(write=False)
        object.__setattr__(self, "interior", interior)
        object.__setattr__(self, "exterior", exterior)

    @property
    def size(self):
        return len(self.weights)

    @property
    def n_interior(self):
        return len(self.interior)

    def zeros(self):
        """A field that vanishes at every node."""
        return np.zeros(self.size)

    def restrict(self, u):
        """Interior values of a full-length field."""
        return np.asarray(u, dtype=float)[self.interior]

    def extend(self, u_int, exterior_values=None):
        """Full-length field from interior values (exterior zero unless given)."""
        out = np.zeros(self.size)
        out[self.interior] = u_int
        if exterior_values is not None:
            out[self.exterior] = np.asarray(exterior_values, dtype=float)[self.exterior]
        return out


def build_grid(geometry, h, R_ext):
    """Uniform lattice of spacing ``h`` clipped to the open ball of radius ``R_ext``.

    Parameters
    ----------
    geometry : Interval, Box, Disk or str
        The domain; strings are parsed with :func:`parse_geometry`.
    h : float
        Lattice spacing.
    R_ext : float
        Truncation radius; must exceed the distance from the origin to the
        farthest point of the domain.

    Returns
    -------
    Grid
        Nodes ``k h`` with ``|k h| < R_ext``, weights ``h**dim``.

    Raises
    ------
    ConfigurationError
        On non-positive ``h``, a truncation ball that does not contain the
        domain, or a lattice with no node inside the domain.
    """
    if isinstance(geometry, str):
        geometry = parse_geometry(geometry)
    h = float(h)
    R_ext = float(R_ext)
    if not h > 0:
        raise ConfigurationError(f"spacing h must be positive, got {h}")
    if not R_ext > geometry.bounding_radius():
        raise ConfigurationError(
            f"R_ext={R_ext} must exceed the domain's bounding radius "
            f"{geometry.bounding_radius()}"
        )
    tol = 1e-9 * h
    kmax = int(math.floor(R_ext / h))
    ks = np.arange(-kmax, kmax + 1)
    if geometry.dim == 1:
        pts = (ks * h)[:, None]
    else:
        kx, ky = np.meshgrid(ks, ks, indexing="ij")
        pts = np.column_stack([kx.ravel() * h, ky.ravel() * h])
    pts = pts[np.linalg.norm(pts, axis=1) < R_ext - tol]
    mask = geometry.contains(pts, tol=tol)
    if not mask.any():
        raise ConfigurationError(f"no lattice node of spacing h={h} lies inside {geometry}")
    weights = np.full(len(pts), h**geometry.dim)
    return Grid(geometry.dim, pts, weights, mask, R_ext, h, geometry)


# --------------------------------------------------------------------------
# kernel


class KernelTable:
    """Pair weights ``K_ij = m_i m_j |x_i - x_j|^(-d-sp)``.

    Only pairs with at least one interior endpoint are represented, split
    into the interior-interior block ``K_II`` and the interior-exterior block
    ``K_IE``.  Self pairs are omitted (their Gagliardo difference is zero).
    The row sums ``kappa`` of ``K_IE`` are cached because exterior data is
    zero in the homogeneous problem.
    """

    def __init__(self, grid, s, p):
        s = float(s)
        p = float(p)
        if not 0.0 < s < 1.0:
            raise ConfigurationError(f"s must lie in (0, 1), got {s}")
        if not p > 1.0:
            raise ConfigurationError(f"p must exceed 1, got {p}")
        self.grid = grid
        self.s = s
        self.p = p
        self.d = grid.dim
        self.exponent = grid.dim + s * p
        self.dense = grid.size <= DENSE_LIMIT
        self._II = None
        self._IE = None
        if self.dense:
            self._II = self._block(grid.interior, grid.interior)
            self._IE = self._block(grid.interior, grid.exterior)
            self._II.setflags(write=False)
            self._IE.setflags(write=False)
            self.kappa = self._IE.sum(axis=1)
        else:
            self.kappa = np.concatenate(
                [blk.sum(axis=1) for _, blk in self.iter_exterior_rows()]
            )
        self.kappa.setflags(write=False)

    @property
    def params(self):
        return (self.s, self.p, self.d)

    def _block(self, rows, cols):
        g = self.grid
        return backend.pair_weights(
            g.nodes[rows], g.weights[rows], g.nodes[cols], g.weights[cols], self.exponent
        )

    def _require_dense(self, what):
        if not self.dense:
            raise ConfigurationError(
                f"{what} needs a dense kernel; grid has {self.grid.size} > {DENSE_LIMIT} nodes"
            )

    @property
    def interior_block(self):
        """Dense ``K_II`` (interior rows and columns)."""
        self._require_dense("interior_block")
        return self._II

    @property
    def exterior_block(self):
        """Dense ``K_IE`` (interior rows, exterior columns)."""
        self._require_dense("exterior_block")
        return self._IE

    def _chunk_rows(self):
        n = self.grid.n_interior
        step = max(1, 4_000_000 // max(self.grid.size, 1))
        for start in range(0, n, step):
            yield slice(start, min(n, start + step))

    def iter_interior_rows(self):
        """Yield ``(row_slice, K_II[row_slice])`` without holding the whole block."""
        g = self.grid
        for sl in self._chunk_rows():
            if self.dense:
                yield sl, self._II[sl]
            else:
                yield sl, self._block(g.interior[sl], g.interior)

    def iter_exterior_rows(self):
        """Yield ``(row_slice, K_IE[row_slice])`` without holding the whole block."""
        g = self.grid
        for sl in self._chunk_rows():
            if self.dense:
                yield sl, self._IE[sl]
            else:
                yield sl, self._block(g.interior[sl], g.exterior)

    def pair(self, i, j):
        """Weight of the node pair ``(i, j)`` in full-grid numbering (0 for self and ext-ext)."""
        g = self.grid
        if i == j or not (g.interior_mask[i] or g.interior_mask[j]):
            return 0.0
        r = np.linalg.norm(g.nodes[i] - g.nodes[j])
        return float(g.weights[i] * g.weights[j] * r ** (-self.exponent))

    def to_dense(self):
        """Full symmetric ``N x N`` matrix of pair weights (tests and small grids only)."""
        self._require_dense("to_dense")
        g = self.grid
        K = np.zeros((g.size, g.size))
        K[np.ix_(g.interior, g.interior)] = self._II
        K[np.ix_(g.interior, g.exterior)] = self._IE
        K[np.ix_(g.exterior, g.interior)] = self._IE.T
        return K


def build_kernel(grid, s, p):
    """Kernel table for ``grid`` with fractional order ``s`` and power ``p``."""
    return KernelTable(grid, s, p)


def sphere_measure(d):
    """Surface measure of the unit sphere in R^d (2 in 1D, 2 pi in 2D)."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def tail_correction(grid, node, s, p):
    """Bound on the kernel mass outside the truncation ball seen from ``node``.

    Returns ``|S^{d-1}| * (R_ext - |x|)^{-sp} / (sp)``, the integral of
    ``|x - y|^{-d-sp}`` over ``|x - y| > R_ext - |x|``, which contains the
    complement of the truncation ball.  Reported as a diagnostic only.
    """
    if not grid.interior_mask[node]:
        raise ConfigurationError(f"node {node} is not interior")
    sp = float(s) * float(p)
    gap = grid.exterior_radius - float(np.linalg.norm(grid.nodes[node]))
    if gap <= 0:
        raise ConfigurationError(f"node {node} is not inside the truncation ball")
    return sphere_measure(grid.dim) * gap ** (-sp) / sp


def tail_bound(grid, s, p):
    """``sum_i m_i tail_i`` over interior nodes; bounds the truncated energy per unit ``|u|_inf^p``."""
    return float(
        sum(grid.weights[i] * tail_correction(grid, i, s, p) for i in grid.interior)
    )
