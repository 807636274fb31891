"""Propagated bases and the m x m block kernel ``K - W``.

Grid functions are pushed through the chain with the Nystrom convention: the
discrete operator of a kernel ``k(x, y)`` acting on level ``j`` is
``k(x, y_c) * weight_c`` summed over the nodes ``y_c``.  No square-root
symmetrization is applied, so stored blocks are raw kernel values.

Off-grid evaluation (needed for point correlators, densities and atoms on
quadrature levels) goes through :class:`KernelEvaluator`, which applies the
same one-step integral formulas to arbitrary points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .biorthogonal import BiorthogonalSystem
from .chain import ChainSpec, transfer_matrix
from .errors import PropagationError

__all__ = [
    "BlockKernel",
    "KernelEvaluator",
    "PropagatedSystem",
    "build_block_kernel",
    "propagate",
]


@dataclass(frozen=True, eq=False)
class PropagatedSystem:
    """``psi[j]`` and ``phi[j]`` are ``N x n_j`` grid values at level ``j``."""

    psi: tuple[np.ndarray, ...]
    phi: tuple[np.ndarray, ...]
    dualization_residual: float
    spec: ChainSpec
    bio: BiorthogonalSystem


def duality_matrix(spec: ChainSpec, psi: np.ndarray, phi: np.ndarray, j: int) -> np.ndarray:
    return (psi * spec.spaces[j].weights) @ phi.T


def propagate(spec: ChainSpec, bio: BiorthogonalSystem) -> PropagatedSystem:
    """Apply the couplings to ``psi^(1)`` upward and their transposes to ``phi^(m)`` downward."""
    transfers = [transfer_matrix(spec, j) for j in range(spec.m - 1)]
    psi = [bio.psi1]
    for j, A in enumerate(transfers):
        psi.append(psi[-1] @ (spec.spaces[j].weights[:, None] * A.T))
    phi = [bio.phim]
    for j in reversed(range(spec.m - 1)):
        phi.insert(0, phi[0] @ (spec.spaces[j + 1].weights[:, None] * transfers[j]))
    for arr in psi + phi:
        if not np.all(np.isfinite(arr)):
            raise PropagationError("non-finite values in propagated bases")
    eye = np.eye(spec.N)
    residual = max(
        float(np.max(np.abs(duality_matrix(spec, psi[j], phi[j], j) - eye))) for j in range(spec.m)
    )
    return PropagatedSystem(tuple(psi), tuple(phi), residual, spec, bio)


class KernelEvaluator:
    """Kernel values at arbitrary points, built on the propagated grid data."""

    def __init__(self, prop: PropagatedSystem):
        self.prop = prop
        self.spec = prop.spec
        self.bio = prop.bio

    def psi(self, j: int, x) -> np.ndarray:
        """``psi_a^(j)(x)``, shape ``N x len(x)``."""
        if j == 0:
            return self.bio.psi_first(x)
        spec = self.spec
        A = transfer_matrix(spec, j - 1, y=x)
        return self.prop.psi[j - 1] @ (spec.spaces[j - 1].weights[:, None] * A.T)

    def phi(self, j: int, x) -> np.ndarray:
        """``phi_a^(j)(x)``, shape ``N x len(x)``."""
        spec = self.spec
        if j == spec.m - 1:
            return self.bio.phi_last(x)
        A = transfer_matrix(spec, j, x=x)
        return self.prop.phi[j + 1] @ (spec.spaces[j + 1].weights[:, None] * A)

    def w(self, i: int, j: int, x, y) -> np.ndarray:
        """Composite coupling ``w_ij(x, y)``; identically zero unless ``i > j``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if i <= j:
            return np.zeros((x.size, y.size))
        spec = self.spec
        if i == j + 1:
            return transfer_matrix(spec, j, y=x, x=y)
        col = transfer_matrix(spec, j, x=y)
        for level in range(j + 1, i - 1):
            col = transfer_matrix(spec, level) @ (spec.spaces[level].weights[:, None] * col)
        row = transfer_matrix(spec, i - 1, y=x)
        return row @ (spec.spaces[i - 1].weights[:, None] * col)

    def K(self, i: int, j: int, x, y) -> np.ndarray:
        return self.psi(i, x).T @ self.phi(j, y)

    def kcheck(self, i: int, j: int, x, y) -> np.ndarray:
        return self.K(i, j, x, y) - self.w(i, j, x, y)

    def matrix(self, points) -> np.ndarray:
        """Kcheck at the double-indexed point list, level-major.

        ``points[j]`` holds the level-``j`` points; rows and columns are
        ordered ``(level 0, a=0..), (level 1, a=0..), ...``.
        """
        pts = [np.atleast_1d(np.asarray(p, dtype=float)) for p in points]
        sizes = [p.size for p in pts]
        total = sum(sizes)
        out = np.zeros((total, total))
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        for i, xi in enumerate(pts):
            if xi.size == 0:
                continue
            for j, xj in enumerate(pts):
                if xj.size == 0:
                    continue
                out[offsets[i]:offsets[i + 1], offsets[j]:offsets[j + 1]] = self.kcheck(i, j, xi, xj)
        return out


@dataclass(frozen=True, eq=False)
class BlockKernel:
    """Dense grid blocks of ``K``, ``W`` and ``Kcheck = K - W``.

    ``K_blocks[i][j]`` has shape ``n_i x n_j``.  ``W_blocks[i][j]`` is an exact
    zero array for ``i <= j``.
    """

    K_blocks: tuple[tuple[np.ndarray, ...], ...]
    W_blocks: tuple[tuple[np.ndarray, ...], ...]
    Kcheck_blocks: tuple[tuple[np.ndarray, ...], ...]
    level_sizes: tuple[int, ...]
    prop: PropagatedSystem = field(repr=False)

    @property
    def spec(self) -> ChainSpec:
        return self.prop.spec

    @property
    def bio(self) -> BiorthogonalSystem:
        return self.prop.bio

    @property
    def m(self) -> int:
        return len(self.level_sizes)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.level_sizes)]).astype(int)

    @property
    def evaluator(self) -> KernelEvaluator:
        return KernelEvaluator(self.prop)

    def assemble(self, which: str = "kcheck") -> np.ndarray:
        """Full ``(sum n_j) x (sum n_j)`` matrix of the chosen blocks."""
        blocks = {"kcheck": self.Kcheck_blocks, "K": self.K_blocks, "W": self.W_blocks}[which]
        return np.block([list(row) for row in blocks])

    def dump(self, directory, prefix: str = "kcheck") -> list[Path]:
        """Write each Kcheck block as ``{prefix}_{i}_{j}.csv`` (1-based indices)."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for i, row in enumerate(self.Kcheck_blocks):
            for j, block in enumerate(row):
                path = directory / f"{prefix}_{i + 1}_{j + 1}.csv"
                np.savetxt(path, block, delimiter=",", fmt="%.17g")
                paths.append(path)
        return paths


def build_block_kernel(spec: ChainSpec, prop: PropagatedSystem) -> BlockKernel:
    m = spec.m
    sizes = tuple(s.size for s in spec.spaces)
    transfers = [transfer_matrix(spec, j) for j in range(m - 1)]
    K = [[prop.psi[i].T @ prop.phi[j] for j in range(m)] for i in range(m)]
    W = [[np.zeros((sizes[i], sizes[j])) for j in range(m)] for i in range(m)]
    for j in range(m - 1):
        W[j + 1][j] = transfers[j]
        for i in range(j + 2, m):
            W[i][j] = transfers[i - 1] @ (spec.spaces[i - 1].weights[:, None] * W[i - 1][j])
    Kc = [[K[i][j] - W[i][j] for j in range(m)] for i in range(m)]

    def freeze(rows):
        return tuple(tuple(r) for r in rows)

    return BlockKernel(freeze(K), freeze(W), freeze(Kc), sizes, prop)
