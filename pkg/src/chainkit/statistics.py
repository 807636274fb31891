"""Observables of a chain: densities, correlators, gaps, Janossy densities.

Everything here is a finite determinant on the discretized levels.  A
perturbation ``rho`` on each level is a signed combination of weighted
indicator sets and point masses; :func:`fredholm_det` evaluates
``det(I - Kcheck rho)`` and :func:`weighted_G` the ``N x N`` matrix of chain
integrals with every level measure replaced by ``(1 - rho_j) dmu_j``.  The two
computations share no code beyond the end-level functions and raw couplings,
which is what makes :func:`verify_identity` a real check.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .biorthogonal import BiorthogonalSystem
from .chain import ChainSpec, coupling_values, transfer_matrix
from .errors import ChainkitError
from .kernel import BlockKernel
from .measure import DISCRETE

__all__ = [
    "CountingGF",
    "IdentityReport",
    "LevelRho",
    "RhoSpec",
    "correlator",
    "correlator_inclusion_exclusion",
    "counting_generating_function",
    "fredholm_det",
    "fredholm_slogdet",
    "gap_probability",
    "janossy_density",
    "joint_density_batch",
    "joint_density_kernel",
    "joint_density_product",
    "verify_identity",
    "weighted_G",
]


def _as_intervals(region) -> tuple[tuple[float, float], ...]:
    if region is None:
        return ()
    out = []
    for iv in region:
        if np.ndim(iv) == 0:
            out.append((float(iv), float(iv)))
            continue
        a, b = (float(v) for v in iv)
        if a > b:
            raise ValueError(f"region interval needs a <= b, got ({a}, {b})")
        out.append((a, b))
    return tuple(out)


def in_region(x, region) -> np.ndarray:
    """Closed-interval membership of ``x`` in a union of intervals."""
    x = np.asarray(x, dtype=float)
    mask = np.zeros(x.shape, dtype=bool)
    for a, b in _as_intervals(region):
        mask |= (x >= a) & (x <= b)
    return mask


@dataclass(frozen=True)
class LevelRho:
    """``rho_j = sum weight * chi_region + sum weight * delta_location``.

    Atoms are ``(weight, location)`` pairs; sets are ``(weight, region)`` with
    ``region`` a sequence of closed intervals ``(a, b)`` (a bare number or
    ``(x, x)`` selects a single node on a discrete level).
    """

    atoms: tuple[tuple[float, float], ...] = ()
    sets: tuple[tuple[float, tuple[tuple[float, float], ...]], ...] = ()

    def __post_init__(self):
        atoms = tuple((float(w), float(x)) for w, x in self.atoms)
        locs = [x for _, x in atoms]
        if len(set(locs)) != len(locs):
            raise ValueError("atom locations within a level must be distinct")
        sets = tuple((float(w), _as_intervals(r)) for w, r in self.sets)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "sets", sets)

    @property
    def is_zero(self) -> bool:
        return not self.atoms and not self.sets


@dataclass(frozen=True)
class RhoSpec:
    levels: tuple[LevelRho, ...]

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))

    @classmethod
    def zero(cls, m: int) -> "RhoSpec":
        return cls(tuple(LevelRho() for _ in range(m)))

    @classmethod
    def indicator(cls, regions, weight: float = 1.0) -> "RhoSpec":
        """``weight * chi_{J_j}`` on each level; empty regions give zero."""
        return cls(tuple(
            LevelRho(sets=((weight, r),) if _as_intervals(r) else ()) for r in regions
        ))

    @property
    def m(self) -> int:
        return len(self.levels)


@dataclass
class _RhoMeasure:
    """``rho * dmu`` resolved on one level: grid part plus off-grid atoms."""

    grid: np.ndarray
    points: np.ndarray
    masses: np.ndarray


def _resolve(spec: ChainSpec, rho: RhoSpec) -> list[_RhoMeasure]:
    if rho.m != spec.m:
        raise ValueError(f"rho has {rho.m} levels, chain has {spec.m}")
    out = []
    for j, (space, lr) in enumerate(zip(spec.spaces, rho.levels)):
        coeff = np.zeros(space.size)
        for weight, region in lr.sets:
            for a, b in region:
                for end in (a, b):
                    if space.splits_panel(end):
                        warnings.warn(
                            f"level {j + 1}: region endpoint {end} cuts a quadrature panel; "
                            "add it as a breakpoint", RuntimeWarning, stacklevel=3,
                        )
            coeff += weight * in_region(space.nodes, region)
        grid = coeff * space.weights
        points, masses = [], []
        for weight, x in lr.atoms:
            if space.kind == DISCRETE:
                hit = np.flatnonzero(space.nodes == x)
                if hit.size != 1:
                    raise ValueError(f"level {j + 1}: atom at {x} is not a node of the discrete space")
                grid[hit[0]] += weight
            else:
                if not space.contains(np.array([x]))[0]:
                    raise ValueError(f"level {j + 1}: atom at {x} lies outside the space support")
                points.append(x)
                masses.append(weight)
        out.append(_RhoMeasure(grid, np.array(points, dtype=float), np.array(masses, dtype=float)))
    return out


# --- Andreief side -----------------------------------------------------------

def weighted_G(spec: ChainSpec, bio: BiorthogonalSystem, rho: RhoSpec) -> np.ndarray:
    """``G_ab = <psi_a^(1)| (1-rho_1) w* (1-rho_2) ... w* (1-rho_m) |phi_b^(m)>``.

    Each level measure becomes the signed measure ``dmu_j - rho_j dmu_j``:
    grid weights scaled by ``1 - rho`` plus negative point masses at
    off-grid atoms.  Functions are carried level to level by direct coupling
    sums over those points.
    """
    resolved = _resolve(spec, rho)
    pts, nus = [], []
    for space, r in zip(spec.spaces, resolved):
        pts.append(np.concatenate([space.nodes, r.points]))
        nus.append(np.concatenate([space.weights - r.grid, -r.masses]))
    v = bio.psi_first(pts[0])
    for j in range(spec.m - 1):
        A = transfer_matrix(spec, j, y=pts[j + 1], x=pts[j])
        v = (v * nus[j]) @ A.T
    return (v * nus[-1]) @ bio.phi_last(pts[-1]).T


# --- Fredholm side -----------------------------------------------------------

def _fredholm_matrix(kernel: BlockKernel, rho: RhoSpec) -> np.ndarray:
    spec = kernel.spec
    resolved = _resolve(spec, rho)
    grid_mass = np.concatenate([r.grid for r in resolved])
    Kc = kernel.assemble("kcheck")
    n_extra = sum(r.points.size for r in resolved)
    if n_extra == 0:
        M = Kc * grid_mass[None, :]
    else:
        ev = kernel.evaluator
        nodes = [s.nodes for s in spec.spaces]
        extra = [r.points for r in resolved]
        cross = _cross_blocks(ev, nodes, extra)
        back = _cross_blocks(ev, extra, nodes)
        corner = ev.matrix(extra)
        full = np.block([[Kc, cross], [back, corner]])
        mass = np.concatenate([grid_mass] + [r.masses for r in resolved])
        M = full * mass[None, :]
    return np.eye(M.shape[0]) - M


def _cross_blocks(ev, rows, cols) -> np.ndarray:
    """Kcheck between two level-major point lists (rows at ``rows``, columns at ``cols``)."""
    m = len(rows)
    blocks = [[ev.kcheck(i, j, rows[i], cols[j]) if rows[i].size and cols[j].size
               else np.zeros((rows[i].size, cols[j].size)) for j in range(m)] for i in range(m)]
    return np.block(blocks)


def fredholm_det(kernel: BlockKernel, rho: RhoSpec) -> float:
    """``det(I - Kcheck rho)`` on the direct sum of the level grids (plus atoms)."""
    return float(np.linalg.det(_fredholm_matrix(kernel, rho)))


def fredholm_slogdet(kernel: BlockKernel, rho: RhoSpec) -> tuple[float, float]:
    """Sign and log-magnitude of ``det(I - Kcheck rho)`` for underflow-prone cases."""
    sign, logabs = np.linalg.slogdet(_fredholm_matrix(kernel, rho))
    return float(sign), float(logabs)


@dataclass(frozen=True)
class IdentityReport:
    lhs: float
    rhs: float
    abs_diff: float
    rel_diff: float
    N: int
    m: int
    grid_sizes: tuple[int, ...]

    def ok(self, tol: float) -> bool:
        return self.rel_diff <= tol


def verify_identity(spec: ChainSpec, bio: BiorthogonalSystem, kernel: BlockKernel, rho: RhoSpec) -> IdentityReport:
    """Compare ``det G`` with ``det(I - Kcheck rho)``."""
    lhs = float(np.linalg.det(weighted_G(spec, bio, rho)))
    rhs = fredholm_det(kernel, rho)
    diff = abs(lhs - rhs)
    return IdentityReport(lhs, rhs, diff, diff / max(1.0, abs(lhs)), spec.N, spec.m,
                          tuple(s.size for s in spec.spaces))


# --- densities and correlators ----------------------------------------------

def joint_density_batch(spec: ChainSpec, bio: BiorthogonalSystem, X) -> np.ndarray:
    """Product-of-determinants density at a stack of configurations.

    ``X`` has shape ``(B, m, N)``; returns ``B`` values of
    ``det psi^(1) * det phi^(m) * prod_j det w_{j+1,j}``.
    """
    X = np.asarray(X, dtype=float)
    B, m, N = X.shape
    psi = bio.psi_first(X[:, 0, :].ravel()).reshape(N, B, N).transpose(1, 0, 2)
    phi = bio.phi_last(X[:, m - 1, :].ravel()).reshape(N, B, N).transpose(1, 0, 2)
    val = np.linalg.det(psi) * np.linalg.det(phi)
    for j in range(m - 1):
        val = val * np.linalg.det(coupling_values(spec, j, X[:, j + 1, :], X[:, j, :]))
    return val


def _check_points(spec: ChainSpec, points, exact: bool):
    pts = [np.atleast_1d(np.asarray(p, dtype=float)) for p in points]
    if len(pts) != spec.m:
        raise ValueError(f"need point lists for {spec.m} levels, got {len(pts)}")
    for j, p in enumerate(pts):
        if exact and p.size != spec.N:
            raise ValueError(f"level {j + 1}: need exactly N={spec.N} points, got {p.size}")
        if p.size > spec.N:
            raise ValueError(f"level {j + 1}: at most N={spec.N} points, got {p.size}")
    return pts


def joint_density_product(spec: ChainSpec, bio: BiorthogonalSystem, points) -> float:
    pts = _check_points(spec, points, exact=True)
    return float(joint_density_batch(spec, bio, np.stack(pts)[None])[0])


def joint_density_kernel(kernel: BlockKernel, points) -> float:
    """``det`` of the ``Nm x Nm`` matrix ``Kcheck_ij(x_a^(i), x_b^(j))``."""
    pts = _check_points(kernel.spec, points, exact=True)
    return float(np.linalg.det(kernel.evaluator.matrix(pts)))


def correlator(kernel: BlockKernel, points) -> float:
    """Bare determinant of Kcheck at the given points (k_j points on level j).

    This is the correlation intensity with respect to ``prod dmu``; it equals
    ``prod_j N!/(N-k_j)!`` times the marginal of the ordered joint density.
    """
    pts = _check_points(kernel.spec, points, exact=False)
    if sum(p.size for p in pts) == 0:
        return 1.0
    return float(np.linalg.det(kernel.evaluator.matrix(pts)))


def correlator_inclusion_exclusion(kernel: BlockKernel, points) -> float:
    """Correlator as the ``prod z`` coefficient of ``det(I - Kcheck rho)``.

    Uses ``rho_j = -sum_l z_jl delta_{X_jl}``; the determinant is multilinear
    in the atom weights, so the coefficient is an alternating sum over 0/1
    weight patterns.
    """
    pts = _check_points(kernel.spec, points, exact=False)
    atoms = [(j, float(x)) for j, p in enumerate(pts) for x in p]
    total = 0.0
    for pattern in itertools.product((0, 1), repeat=len(atoms)):
        levels = [[] for _ in pts]
        for on, (j, x) in zip(pattern, atoms):
            if on:
                levels[j].append((-1.0, x))
        rho = RhoSpec(tuple(LevelRho(atoms=tuple(a)) for a in levels))
        sign = (-1) ** (len(atoms) - sum(pattern))
        total += sign * fredholm_det(kernel, rho)
    return total


# --- gaps, counting statistics, Janossy --------------------------------------

def gap_probability(kernel: BlockKernel, regions) -> float:
    """Probability of no points in ``J_j`` on every level: ``det(I - Kcheck chi_J)``."""
    return fredholm_det(kernel, RhoSpec.indicator(regions))


@dataclass
class CountingGF:
    """Generating function ``F(z) = det(I - Kcheck sum z_jl chi_{J_jl})``.

    ``F`` is a polynomial of degree at most ``N`` in each ``u = 1 - z``, and
    the coefficient of ``prod u^k`` is the probability of exactly ``k_jl``
    points in ``J_jl``.
    """

    kernel: BlockKernel
    regions: list
    variables: list = field(init=False)
    _coeffs: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        spec = self.kernel.spec
        if len(self.regions) != spec.m:
            raise ValueError(f"need region lists for {spec.m} levels")
        self.variables = []
        for j, level in enumerate(self.regions):
            ivs = [_as_intervals(r) for r in (level or [])]
            nodes = spec.spaces[j].nodes
            masks = [in_region(nodes, r) for r in ivs]
            for p, q in itertools.combinations(range(len(masks)), 2):
                if np.any(masks[p] & masks[q]):
                    raise ValueError(f"level {j + 1}: counting regions {p + 1} and {q + 1} overlap")
            self.variables.extend((j, r) for r in ivs)

    def __call__(self, z) -> float:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if z.size != len(self.variables):
            raise ValueError(f"expected {len(self.variables)} variables, got {z.size}")
        sets = [[] for _ in range(self.kernel.m)]
        for zi, (j, r) in zip(z, self.variables):
            sets[j].append((float(zi), r))
        return fredholm_det(self.kernel, RhoSpec(tuple(LevelRho(sets=tuple(s)) for s in sets)))

    @property
    def degree(self) -> int:
        return self.kernel.spec.N

    def coefficients(self) -> np.ndarray:
        """Tensor of ``P(k_1, ..., k_L)``, one axis of length ``N+1`` per variable."""
        if self._coeffs is None:
            n = self.degree + 1
            L = len(self.variables)
            # Chebyshev points of the first kind for u = 1 - z on [-1, 1]
            u = np.cos(np.pi * (np.arange(n) + 0.5) / n)
            values = np.empty((n,) * L)
            for idx in itertools.product(range(n), repeat=L):
                values[idx] = self(1.0 - u[list(idx)]) if L else self(np.empty(0))
            inv = np.linalg.inv(np.vander(u, n, increasing=True))
            coeffs = values
            for axis in range(L):
                coeffs = np.moveaxis(np.tensordot(inv, np.moveaxis(coeffs, axis, 0), axes=1), 0, axis)
            self._coeffs = coeffs
        return self._coeffs

    def probability(self, counts) -> float:
        counts = tuple(int(k) for k in counts)
        if len(counts) != len(self.variables):
            raise ValueError(f"expected {len(self.variables)} counts, got {len(counts)}")
        if any(k < 0 for k in counts):
            raise ValueError("counts must be nonnegative")
        if any(k > self.degree for k in counts):
            raise ValueError(f"count exceeds degree N={self.degree}")
        return float(self.coefficients()[counts])

    def probabilities(self) -> dict:
        c = self.coefficients()
        return {idx: float(c[idx]) for idx in itertools.product(range(self.degree + 1), repeat=len(self.variables))}


def counting_generating_function(kernel: BlockKernel, regions) -> CountingGF:
    """``regions[j]`` lists the disjoint regions ``J_jl`` on level ``j``."""
    return CountingGF(kernel, list(regions))


def janossy_density(kernel: BlockKernel, regions, points, restrict: bool = True) -> tuple[float, float]:
    """Janossy density of points ``x^(j)_a`` for the regions ``J_j``.

    Returns ``(relative, absolute)``: ``relative`` is the determinant of the
    resolvent kernel of ``(1 - Kcheck chi_J)^{-1} Kcheck chi_J`` at the
    points; ``absolute`` multiplies it by the gap probability
    ``det(I - Kcheck chi_J)``.

    With ``restrict=False`` the trailing ``chi_J`` is dropped, i.e. the
    kernel of ``(1 - Kcheck chi_J)^{-1} Kcheck`` is used.  The two agree for
    points inside ``J``; the unrestricted form also gives the density of
    points placed outside ``J`` with no points at all in ``J``.
    """
    spec = kernel.spec
    pts = _check_points(spec, points, exact=False)
    ivs = [_as_intervals(r) for r in regions]
    rho = RhoSpec.indicator(ivs)
    resolved = _resolve(spec, rho)
    mass = np.concatenate([r.grid for r in resolved])
    Kc = kernel.assemble("kcheck")
    B = np.eye(Kc.shape[0]) - Kc * mass[None, :]
    gap = float(np.linalg.det(B))
    k = sum(p.size for p in pts)
    if k == 0:
        return 1.0, gap
    if gap == 0.0 or not np.isfinite(np.linalg.cond(B)) or np.linalg.cond(B) > 1e15:
        raise ChainkitError("I - Kcheck chi_J is singular: the gap probability vanishes")
    ev = kernel.evaluator
    nodes = [s.nodes for s in spec.spaces]
    cols = _cross_blocks(ev, nodes, pts)
    rows = _cross_blocks(ev, pts, nodes)
    X = np.linalg.solve(B, cols)
    R = ev.matrix(pts) + (rows * mass[None, :]) @ X
    if restrict:
        chi = np.concatenate([in_region(p, r) for p, r in zip(pts, ivs)]).astype(float)
        R = R * chi[None, :]
    rel = float(np.linalg.det(R))
    return rel, rel * gap


def factorial_ratio(N: int, k: int) -> int:
    return math.factorial(N) // math.factorial(N - k)
