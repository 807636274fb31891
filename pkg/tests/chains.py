"""Chain factories shared by the test modules."""

from __future__ import annotations

import warnings

import numpy as np

from chainkit.chain import BasisFamily, ChainSpec, Coupling, Potential
from chainkit.ensemble import Ensemble
from chainkit.errors import DegenerateEnsembleError
from chainkit.measure import composite_rule, discrete_space
from chainkit.statistics import LevelRho, RhoSpec

FAMILIES = ("general", "cosh-even", "sinh-odd")


def gaussian_chain(m=2, N=2, order=64, L=8.0, breakpoints=(-1.0, 1.0), couplings=None, basis="all",
                   potential=None, panels=1):
    space = composite_rule(order, [(-L, L)], panels=panels, breakpoints=breakpoints)
    potential = potential or Potential.quadratic()
    couplings = couplings or [Coupling.exponential()] * (m - 1)
    spec = ChainSpec(m, N, [space] * m, [potential] * m, couplings, BasisFamily(basis))
    return Ensemble.build(spec)


def two_point_chain(m=1, N=1, points=(0.0, 1.0), weights=(1.0, 1.0), potential=None):
    space = discrete_space(points, weights)
    potential = potential or Potential.quadratic()
    spec = ChainSpec(m, N, [space] * m, [potential] * m, [Coupling.exponential()] * (m - 1))
    return Ensemble.build(spec)


def _distinct(rng, n, lo, hi, gap=0.1):
    while True:
        x = np.sort(rng.uniform(lo, hi, n))
        if n < 2 or np.min(np.diff(x)) > gap:
            return x


def _symmetric_nodes(rng, n, positives_needed):
    """Node set closed under negation with at least ``positives_needed`` positive nodes."""
    half = max(n // 2, positives_needed)
    pos = _distinct(rng, half, 0.4, 2.4, gap=0.4)
    nodes = np.concatenate([-pos[::-1], pos])
    if n % 2 and len(nodes) < n:
        nodes = np.concatenate([-pos[::-1], [0.0], pos])
    return nodes


def random_discrete_spec(rng, m, N, family="general"):
    """Random Discrete-space chain; the family picks couplings and basis."""
    spaces, potentials, couplings = [], [], []
    for _ in range(m):
        n = int(rng.integers(3, 7))
        if family == "general":
            nodes = _distinct(rng, max(n, N), -1.4, 1.4)
            weights = rng.uniform(0.2, 1.5, nodes.size)
            potentials.append(Potential.polynomial(list(rng.uniform(-0.5, 0.5, 2)) + [rng.uniform(0.2, 1.0)]))
        else:
            nodes = _symmetric_nodes(rng, n, N)
            w_half = rng.uniform(0.2, 1.5, (nodes.size + 1) // 2)
            weights = np.concatenate([w_half, w_half[: nodes.size // 2][::-1]])
            potentials.append(Potential.quartic(rng.uniform(0.2, 1.0), rng.uniform(0.0, 0.3)))
        spaces.append(discrete_space(nodes, weights))
    for _ in range(m - 1):
        if family == "cosh-even":
            couplings.append(Coupling.cosh())
        elif family == "sinh-odd":
            couplings.append(Coupling.sinh())
        else:
            kind = rng.integers(3)
            if kind == 0:
                couplings.append(Coupling.exponential())
            elif kind == 1:
                couplings.append(Coupling.power_law(rng.uniform(-0.4, 0.4), rng.uniform(-1.0, 2.0)))
            else:
                couplings.append(Coupling.series(rng.uniform(-1.0, 1.0, int(rng.integers(1, 6)))))
    basis = {"general": "all", "cosh-even": "even", "sinh-odd": "odd"}[family]
    return ChainSpec(m, N, spaces, potentials, couplings, BasisFamily(basis))


MAX_CONDITION = 1e6


def random_discrete_ensemble(rng, m, N, family="general"):
    """Draw until the moment matrix is comfortably nonsingular.

    Draws with a moment-matrix condition number above ``MAX_CONDITION`` are
    redrawn: past that point float64 rounding in the monomial basis, not the
    method, sets the agreement of the identities under test.
    """
    while True:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                ens = Ensemble.build(random_discrete_spec(rng, m, N, family))
        except DegenerateEnsembleError:
            continue
        if ens.moments.condition <= MAX_CONDITION:
            return ens


def random_rho(rng, spec):
    """Mixed atoms-plus-sets perturbation on a discrete chain."""
    levels = []
    for space in spec.spaces:
        nodes = space.nodes
        k = int(rng.integers(0, min(3, nodes.size) + 1))
        locs = rng.choice(nodes, size=k, replace=False)
        atoms = tuple((float(rng.uniform(-1.0, 1.0)), float(x)) for x in locs)
        sets = []
        for _ in range(int(rng.integers(0, 3))):
            a, b = np.sort(rng.uniform(nodes[0] - 0.1, nodes[-1] + 0.1, 2))
            sets.append((float(rng.uniform(-1.0, 1.0)), ((float(a), float(b)),)))
        levels.append(LevelRho(atoms=atoms, sets=tuple(sets)))
    return RhoSpec(tuple(levels))


def random_points(rng, spec, k=None):
    """``k`` distinct points per level drawn inside each level's support (N by default)."""
    k = spec.N if k is None else k
    pts = []
    for space in spec.spaces:
        lo, hi = space.nodes[0], space.nodes[-1]
        pts.append(_distinct(rng, k, lo, hi, gap=1e-3))
    return pts
