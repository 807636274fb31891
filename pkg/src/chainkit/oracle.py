"""Ground truth straight from the product-of-determinants density.

Nothing in here touches the block kernel.  :func:`enumerate_configurations`
sums the density over every configuration of a small discrete chain, and
:func:`mcmc_sample` runs random-walk Metropolis on continuous chains.
"""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .biorthogonal import BiorthogonalSystem
from .chain import ChainSpec, transfer_matrix
from .errors import ChainkitError, PositivityError
from .measure import DISCRETE
from .statistics import in_region, joint_density_batch

__all__ = [
    "EnumerationTable",
    "MCMCResult",
    "enumerate_configurations",
    "mcmc_sample",
]

MAX_CONFIGURATIONS = 10**6
NEGATIVE_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class EnumerationTable:
    """Probability of every unordered configuration of a discrete chain.

    ``subsets[j]`` is a ``(C(n_j, N), N)`` array of node indices, and
    ``masses`` a tensor with one axis per level indexed by those subsets.
    """

    subsets: tuple[np.ndarray, ...]
    masses: np.ndarray
    spec: ChainSpec = field(repr=False)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def configurations(self) -> Iterator[tuple[tuple[tuple[int, ...], ...], float]]:
        """Yield ``(per-level node-index tuples, probability)``."""
        for idx in itertools.product(*(range(s.shape[0]) for s in self.subsets)):
            conf = tuple(tuple(int(v) for v in self.subsets[j][i]) for j, i in enumerate(idx))
            yield conf, float(self.masses[idx])

    def _level_masks(self, selector) -> list[np.ndarray]:
        """Per-level boolean table ``subset -> selector(level, node_set)``."""
        return [
            np.array([selector(j, s) for s in subs], dtype=bool)
            for j, subs in enumerate(self.subsets)
        ]

    def _sum_where(self, masks) -> float:
        total = self.masses
        for mask in reversed(masks):
            total = total[..., mask].sum(axis=-1)
        return float(total)

    def node_sets(self, j: int, region) -> set:
        nodes = self.spec.spaces[j].nodes
        return set(np.flatnonzero(in_region(nodes, region)).tolist())

    def gap(self, regions) -> float:
        """Mass of configurations with no point in ``regions[j]`` on any level."""
        bad = [self.node_sets(j, r) for j, r in enumerate(regions)]
        return self._sum_where(self._level_masks(lambda j, s: not bad[j].intersection(s.tolist())))

    def inclusion(self, points) -> float:
        """Mass of configurations containing every given point."""
        want = [self._indices(j, p) for j, p in enumerate(points)]
        return self._sum_where(self._level_masks(lambda j, s: want[j] <= set(s.tolist())))

    def ordered_marginal(self, points) -> float:
        """Marginal of the ordered joint density (w.r.t. ``prod dmu``) at the points.

        Each level contributes ``(N - k_j)! / N!`` relative to the unordered
        inclusion probability, and the measure weights of the fixed points
        are divided out.
        """
        N = self.spec.N
        factor = 1.0
        for j, p in enumerate(points):
            k = len(np.atleast_1d(p))
            factor *= math.factorial(N - k) / math.factorial(N)
            for i in self._indices(j, p):
                factor /= self.spec.spaces[j].weights[i]
        return self.inclusion(points) * factor

    def counts(self, regions) -> dict:
        """Distribution of the point counts in each region ``regions[j][l]``."""
        flat = [(j, self.node_sets(j, r)) for j, level in enumerate(regions) for r in (level or [])]
        out: dict = {}
        for conf, mass in self.configurations():
            key = tuple(len(sel.intersection(conf[j])) for j, sel in flat)
            out[key] = out.get(key, 0.0) + mass
        return out

    def janossy(self, regions, points) -> float:
        """Mass of configurations whose intersection with ``J_j`` is exactly the points.

        Points outside ``J_j`` are required to be present as well.
        """
        inside = [self.node_sets(j, r) for j, r in enumerate(regions)]
        want = [self._indices(j, p) for j, p in enumerate(points)]
        mask = self._level_masks(
            lambda j, s: want[j] <= set(s.tolist()) and inside[j].intersection(s.tolist()) <= want[j]
        )
        return self._sum_where(mask)

    def _indices(self, j: int, points) -> set:
        nodes = self.spec.spaces[j].nodes
        out = set()
        for x in np.atleast_1d(np.asarray(points, dtype=float)):
            hit = np.flatnonzero(nodes == x)
            if hit.size != 1:
                raise ValueError(f"level {j + 1}: {x} is not a node")
            out.add(int(hit[0]))
        return out


def enumerate_configurations(spec: ChainSpec, bio: BiorthogonalSystem, check_positive: bool = True) -> EnumerationTable:
    """Exact probabilities of all unordered configurations.

    The density is symmetric under relabelling within a level, so each
    unordered configuration carries ``(N!)^m`` orderings of ``P / (N!)^m``,
    i.e. mass ``P(sorted) * prod dmu``.
    """
    N, m = spec.N, spec.m
    for j, s in enumerate(spec.spaces):
        if s.kind != DISCRETE:
            raise ChainkitError(f"level {j + 1} is not discrete; enumeration needs discrete spaces")
    subsets = tuple(np.array(list(itertools.combinations(range(s.size), N)), dtype=int) for s in spec.spaces)
    count = math.prod(s.shape[0] for s in subsets)
    if count > MAX_CONFIGURATIONS:
        raise ChainkitError(f"{count} configurations exceed the enumeration limit {MAX_CONFIGURATIONS}")

    def level_measure(j):
        return np.prod(spec.spaces[j].weights[subsets[j]], axis=1)

    # det(psi_a^(1)(x_b)) for every level-1 subset, etc.
    first = np.linalg.det(bio.psi1[:, subsets[0]].transpose(1, 0, 2)) * level_measure(0)
    last = np.linalg.det(bio.phim[:, subsets[-1]].transpose(1, 0, 2))
    masses = first
    for j in range(m - 1):
        A = transfer_matrix(spec, j)
        # pair[t, s] = det A[subset_t of level j+1, subset_s of level j]
        blocks = A[subsets[j + 1][:, None, :, None], subsets[j][None, :, None, :]]
        pair = np.linalg.det(blocks)
        masses = masses[..., None] * pair.T * level_measure(j + 1)
    masses = np.asarray(masses * last, dtype=float)

    if check_positive:
        worst = float(masses.min())
        if worst < -NEGATIVE_TOL:
            raise PositivityError(f"negative configuration mass {worst:.3g}: measure is not positive")
        if worst < 0:
            warnings.warn(f"clamping negative rounding mass {worst:.3g}", RuntimeWarning)
            masses = np.maximum(masses, 0.0)
    return EnumerationTable(subsets, masses, spec)


@dataclass
class MCMCResult:
    """Samples and diagnostics of a Metropolis run.

    ``samples`` has shape ``(chains, kept_steps, m, N)``; ``signs`` holds the
    density sign at each kept sample.
    """

    samples: np.ndarray
    signs: np.ndarray
    acceptance_rate: float
    step_size: float
    negative_fraction: float
    seed: int

    def estimate(self, indicator) -> tuple[float, float]:
        """Sign-weighted mean of ``indicator(samples)`` and its standard error.

        ``indicator`` maps the ``(chains, steps, m, N)`` array to
        ``(chains, steps)`` values.  The error is the spread of per-chain
        means, which are independent.
        """
        vals = np.asarray(indicator(self.samples), dtype=float) * self.signs
        per_chain = vals.mean(axis=1) / self.signs.mean(axis=1)
        n = per_chain.size
        mean = float(per_chain.mean())
        err = float(per_chain.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
        return mean, err

    def gap_estimate(self, regions) -> tuple[float, float]:
        def no_points(s):
            hit = np.zeros(s.shape[:2], dtype=bool)
            for j, r in enumerate(regions):
                hit |= in_region(s[:, :, j, :], r).any(axis=-1)
            return ~hit
        return self.estimate(no_points)

    def write_csv(self, fh, chain: int = 0):
        """Rows ``(step, level, particle, coordinate)`` for one chain, 1-based indices."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "level", "particle", "x"])
        steps, m, N = self.samples.shape[1:]
        for t in range(steps):
            for j in range(m):
                for a in range(N):
                    w.writerow([t, j + 1, a + 1, format(float(self.samples[chain, t, j, a]), ".17g")])


def mcmc_sample(spec: ChainSpec, bio: BiorthogonalSystem, steps: int, seed: int, chains: int = 64,
                burn_in: int | None = None, thin: int = 1, step_size: float = 0.5,
                max_negative: float = 0.01) -> MCMCResult:
    """Random-walk Metropolis on the ``m*N`` coordinates targeting ``|P|``.

    ``steps`` is the total number of post-burn-in proposals summed over all
    ``chains``.  Each proposal moves every coordinate by an isotropic
    Gaussian step; the step size is tuned during burn-in toward 30-50%
    acceptance and then frozen.  Proposals leaving the support are rejected.
    Uses numpy's PCG64 generator so runs are reproducible from ``seed``.
    """
    m, N = spec.m, spec.N
    per_chain = max(1, steps // chains)
    burn_in = per_chain // 10 if burn_in is None else burn_in
    rng = np.random.Generator(np.random.PCG64(seed))

    def density(X):
        inside = np.ones(X.shape[0], dtype=bool)
        for j, space in enumerate(spec.spaces):
            inside &= space.contains(X[:, j, :]).all(axis=-1)
        out = np.zeros(X.shape[0])
        if inside.any():
            out[inside] = joint_density_batch(spec, bio, X[inside])
        return out

    # start from configurations drawn from the level grids with positive density
    X = np.empty((chains, m, N))
    for c in range(chains):
        for _ in range(1000):
            for j, space in enumerate(spec.spaces):
                X[c, j] = np.sort(rng.choice(space.nodes, size=N, replace=False, p=space.weights / space.weights.sum()))
            if density(X[c:c + 1])[0] != 0.0:
                break
        else:
            raise ChainkitError("could not find a starting configuration with nonzero density")
    cur = density(X)

    kept = per_chain // thin
    samples = np.empty((chains, kept, m, N))
    signs = np.empty((chains, kept))
    accepted = 0
    window_acc, window = 0, 0
    for t in range(burn_in + per_chain):
        prop = X + step_size * rng.standard_normal(X.shape)
        new = density(prop)
        u = rng.random(chains)
        accept = (u * np.abs(cur) < np.abs(new)) & (new != 0.0)
        X[accept] = prop[accept]
        cur[accept] = new[accept]
        if t < burn_in:
            window_acc += int(accept.sum())
            window += chains
            if window >= 50 * chains:
                rate = window_acc / window
                if rate < 0.3:
                    step_size *= 0.8
                elif rate > 0.5:
                    step_size *= 1.2
                window_acc, window = 0, 0
            continue
        s = t - burn_in
        accepted += int(accept.sum())
        if s % thin == 0 and s // thin < kept:
            samples[:, s // thin] = X
            signs[:, s // thin] = np.sign(cur)
    negative = float(np.mean(signs < 0))
    if negative > max_negative:
        raise PositivityError(f"{negative:.2%} of samples have negative density: measure is not positive")
    return MCMCResult(samples, signs, accepted / (chains * per_chain), step_size, negative, seed)
