"""Finite measure spaces: weighted nodes on the real line.

Every level of a chain lives on a :class:`MeasureSpace`.  Continuous levels
are discretized with composite Gauss-Legendre rules; discrete levels carry
user-given atoms.  Either way the space is just ``nodes`` with positive
``weights`` and all integrals are finite weighted sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MeasureError

__all__ = [
    "MeasureSpace",
    "composite_rule",
    "discrete_space",
    "gauss_legendre_rule",
    "legendre_nodes",
]

DISCRETE = "discrete"
QUADRATURE = "quadrature"

_NEWTON_TOL = 1e-15
_NEWTON_MAXITER = 100


@dataclass(frozen=True, eq=False)
class MeasureSpace:
    """A level's state space as ascending nodes with strictly positive weights.

    ``intervals``, ``order`` and ``panels`` are only set for quadrature spaces
    and record the rule the nodes came from.
    """

    nodes: np.ndarray
    weights: np.ndarray
    kind: str = DISCRETE
    intervals: tuple[tuple[float, float], ...] = ()
    order: int = 0
    panels: int = 0
    _edges: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float).ravel()
        weights = np.array(self.weights, dtype=float).ravel()
        if nodes.size < 1:
            raise MeasureError("a measure space needs at least one node")
        if nodes.size != weights.size:
            raise MeasureError(f"length mismatch: {nodes.size} nodes, {weights.size} weights")
        if not (np.all(np.isfinite(nodes)) and np.all(np.isfinite(weights))):
            raise MeasureError("nodes and weights must be finite")
        if np.any(weights <= 0):
            raise MeasureError("weights must be strictly positive")
        if np.any(np.diff(nodes) <= 0):
            raise MeasureError("nodes must be strictly increasing (duplicate or unsorted points)")
        nodes.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.nodes.size

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def support(self) -> tuple[tuple[float, float], ...]:
        """Closed intervals covering the space (single points for atoms)."""
        if self.kind == QUADRATURE:
            return self.intervals
        return tuple((float(x), float(x)) for x in self.nodes)

    @property
    def panel_edges(self) -> tuple[float, ...]:
        return self._edges

    def integrate(self, values) -> float:
        """Weighted sum of ``values`` sampled at the nodes, in node order."""
        values = np.asarray(values, dtype=float)
        return float(np.sum(self.weights * values))

    def contains(self, x) -> np.ndarray:
        """Boolean mask: is each ``x`` inside the support of the space."""
        x = np.asarray(x, dtype=float)
        if self.kind == DISCRETE:
            return np.isin(x, self.nodes)
        inside = np.zeros(x.shape, dtype=bool)
        for a, b in self.intervals:
            inside |= (x >= a) & (x <= b)
        return inside

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        """Whether the space is invariant under x -> -x."""
        if self.kind == QUADRATURE:
            ivs = sorted(self.intervals)
            mirrored = sorted((-b, -a) for a, b in self.intervals)
            scale = max(1.0, max(abs(v) for iv in ivs for v in iv))
            return len(ivs) == len(mirrored) and all(
                abs(p[0] - q[0]) <= tol * scale and abs(p[1] - q[1]) <= tol * scale
                for p, q in zip(ivs, mirrored)
            )
        scale = max(1.0, float(np.max(np.abs(self.nodes))))
        return bool(
            np.allclose(self.nodes, -self.nodes[::-1], rtol=0, atol=tol * scale)
            and np.allclose(self.weights, self.weights[::-1], rtol=tol, atol=0)
        )

    def splits_panel(self, x: float) -> bool:
        """True if ``x`` falls strictly inside a quadrature panel.

        An indicator function with a jump at such a point is only resolved to
        O(1/order) accuracy by the rule.
        """
        if self.kind != QUADRATURE or not np.isfinite(x):
            return False
        edges = np.asarray(self._edges)
        if not self.contains(np.array([x]))[0]:
            return False
        scale = max(1.0, abs(x))
        return not np.any(np.abs(edges - x) <= 1e-12 * scale)


def legendre_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration."""
    if order < 1:
        raise MeasureError(f"quadrature order must be positive, got {order}")
    n = order
    nodes = np.empty(n)
    weights = np.empty(n)
    for i in range((n + 1) // 2):
        # Tricomi's initial guess for the i-th largest root
        x = math.cos(math.pi * (i + 0.75) / (n + 0.5))
        for _ in range(_NEWTON_MAXITER):
            p0, p1 = 1.0, x
            for k in range(2, n + 1):
                p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
            # p1 = P_n(x), p0 = P_{n-1}(x)
            dp = n * (x * p1 - p0) / (x * x - 1.0)
            dx = p1 / dp
            x -= dx
            if abs(dx) <= _NEWTON_TOL:
                break
        p0, p1 = 1.0, x
        for k in range(2, n + 1):
            p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
        dp = n * (x * p1 - p0) / (x * x - 1.0)
        w = 2.0 / ((1.0 - x * x) * dp * dp)
        nodes[n - 1 - i] = x
        nodes[i] = -x
        weights[n - 1 - i] = w
        weights[i] = w
    if n % 2 == 1:
        nodes[n // 2] = 0.0
    return nodes, weights


def _check_interval(a: float, b: float):
    if not (np.isfinite(a) and np.isfinite(b)):
        raise MeasureError(f"interval ({a}, {b}) must be finite; truncate unbounded supports first")
    if not a < b:
        raise MeasureError(f"interval needs a < b, got ({a}, {b})")


def gauss_legendre_rule(order: int, a: float, b: float) -> MeasureSpace:
    """``order``-point Gauss-Legendre rule mapped to [a, b]."""
    _check_interval(a, b)
    t, w = legendre_nodes(order)
    half = 0.5 * (b - a)
    nodes = 0.5 * (a + b) + half * t
    return MeasureSpace(
        nodes, half * w, QUADRATURE,
        intervals=((float(a), float(b)),), order=order, panels=1, _edges=(float(a), float(b)),
    )


def composite_rule(order: int, intervals, panels: int = 1, breakpoints=()) -> MeasureSpace:
    """Panel-wise Gauss-Legendre rule over a union of disjoint intervals.

    Each interval is cut at any ``breakpoints`` lying inside it, and every
    resulting piece is divided into ``panels`` equal panels carrying an
    ``order``-point rule.  Cutting at breakpoints lets indicator functions of
    regions with those endpoints be integrated without a split panel.
    """
    if panels < 1:
        raise MeasureError(f"panels must be positive, got {panels}")
    ivs = sorted((float(a), float(b)) for a, b in intervals)
    if not ivs:
        raise MeasureError("at least one interval is required")
    for a, b in ivs:
        _check_interval(a, b)
    for (_, b0), (a1, _) in zip(ivs, ivs[1:]):
        if a1 < b0:
            raise MeasureError(f"intervals overlap near {a1}")
    t, w = legendre_nodes(order)
    cuts = sorted({float(p) for p in breakpoints if np.isfinite(p)})
    nodes, weights, edges = [], [], set()
    for a, b in ivs:
        pieces = [a] + [p for p in cuts if a < p < b] + [b]
        for lo, hi in zip(pieces, pieces[1:]):
            grid = np.linspace(lo, hi, panels + 1)
            edges.update(grid.tolist())
            for pa, pb in zip(grid, grid[1:]):
                half = 0.5 * (pb - pa)
                nodes.append(0.5 * (pa + pb) + half * t)
                weights.append(half * w)
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    order_idx = np.argsort(nodes, kind="stable")
    return MeasureSpace(
        nodes[order_idx], weights[order_idx], QUADRATURE,
        intervals=tuple(ivs), order=order, panels=panels, _edges=tuple(sorted(edges)),
    )


def discrete_space(points, weights) -> MeasureSpace:
    """Finite atomic measure ``sum_k weights[k] * delta(points[k])``."""
    points = np.asarray(points, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    if points.size != weights.size:
        raise MeasureError(f"length mismatch: {points.size} points, {weights.size} weights")
    if np.unique(points).size != points.size:
        raise MeasureError("duplicate points in discrete space")
    idx = np.argsort(points, kind="stable")
    return MeasureSpace(points[idx], weights[idx], DISCRETE)
