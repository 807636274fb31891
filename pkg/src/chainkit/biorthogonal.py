"""Biorthogonal polynomial systems for a chain.

The moment matrix pairs level-1 monomials, pushed through every coupling,
with level-m monomials.  A pivot-free LDU factorization of it gives monic
``p_a`` and normalized ``s_a`` whose end functions are biorthonormal across
the whole chain.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .chain import ChainSpec, transfer_matrix
from .errors import DegenerateEnsembleError, PropagationError

__all__ = [
    "BiorthogonalSystem",
    "ChainMomentMatrix",
    "biorthogonalize",
    "build_system",
    "chain_moment_matrix",
    "ldu_nopivot",
    "refine_duality",
]

CONDITION_WARN = 1e12
MINOR_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ChainMomentMatrix:
    entries: np.ndarray
    condition: float
    spec: ChainSpec


@dataclass(frozen=True, eq=False)
class BiorthogonalSystem:
    """Coefficient matrices and end-level grid values.

    Row ``a`` of ``P`` holds the monomial coefficients of ``p_a``; column ``b``
    of ``S`` those of ``s_b``.  ``psi1`` and ``phim`` are ``N x n`` arrays of
    ``psi_a^(1)`` on the level-1 grid and ``phi_a^(m)`` on the level-m grid.
    """

    P: np.ndarray
    S: np.ndarray
    psi1: np.ndarray
    phim: np.ndarray
    residual: float
    spec: ChainSpec

    def psi_first(self, x) -> np.ndarray:
        """``psi_a^(1)(x)`` at arbitrary points, ``N x len(x)``."""
        spec = self.spec
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return (self.P @ spec.basis.monomials(spec.N, x)) * spec.half_weight(0, x)

    def phi_last(self, x) -> np.ndarray:
        """``phi_a^(m)(x)`` at arbitrary points, ``N x len(x)``."""
        spec = self.spec
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return (self.S.T @ spec.basis.monomials(spec.N, x)) * spec.half_weight(spec.m - 1, x)

    @property
    def p_degrees(self) -> np.ndarray:
        return self.spec.basis.degrees(self.spec.N)


def _propagate_forward(spec: ChainSpec, values: np.ndarray) -> np.ndarray:
    """Push ``N x n_1`` grid functions from level 1 to level m."""
    for j in range(spec.m - 1):
        A = transfer_matrix(spec, j)
        values = values @ (spec.spaces[j].weights[:, None] * A.T)
        if not np.all(np.isfinite(values)):
            raise PropagationError(f"overflow propagating to level {j + 2}")
    return values


def chain_moment_matrix(spec: ChainSpec) -> ChainMomentMatrix:
    """``T_ab`` = full chain integral of ``m_a e^{-V_1/2} ... m_b e^{-V_m/2}``."""
    N = spec.N
    first = spec.spaces[0]
    last = spec.spaces[-1]
    left = spec.basis.monomials(N, first.nodes) * spec.half_weight(0, first.nodes)
    left = _propagate_forward(spec, left)
    right = spec.basis.monomials(N, last.nodes) * spec.half_weight(spec.m - 1, last.nodes)
    T = (left * last.weights) @ right.T
    if not np.all(np.isfinite(T)):
        raise PropagationError("moment matrix has non-finite entries")
    cond = float(np.linalg.cond(T))
    if cond > CONDITION_WARN:
        warnings.warn(f"moment matrix condition number {cond:.3g} exceeds {CONDITION_WARN:g}", RuntimeWarning)
    return ChainMomentMatrix(T, cond, spec)


def ldu_nopivot(T: np.ndarray, tol: float = MINOR_TOL):
    """Doolittle ``T = L D U`` without row or column exchanges.

    ``L`` is unit lower and ``U`` unit upper triangular.  A pivot below
    ``tol`` times the largest entry of ``T`` means the corresponding leading
    principal minor vanishes and raises :class:`DegenerateEnsembleError`
    with its 1-based index.
    """
    T = np.array(T, dtype=float)
    n = T.shape[0]
    scale = max(float(np.max(np.abs(T))), np.finfo(float).tiny)
    L = np.eye(n)
    U = np.eye(n)
    d = np.zeros(n)
    work = T.copy()
    for k in range(n):
        piv = work[k, k]
        if abs(piv) <= tol * scale:
            raise DegenerateEnsembleError(k + 1)
        d[k] = piv
        L[k + 1:, k] = work[k + 1:, k] / piv
        U[k, k + 1:] = work[k, k + 1:] / piv
        work[k + 1:, k + 1:] -= np.outer(work[k + 1:, k], work[k, k + 1:]) / piv
    return L, d, U


def biorthogonalize(T: ChainMomentMatrix) -> BiorthogonalSystem:
    spec = T.spec
    L, d, U = ldu_nopivot(T.entries)
    n = L.shape[0]
    eye = np.eye(n)
    P = np.linalg.solve(L, eye)
    P = np.tril(P)
    np.fill_diagonal(P, 1.0)
    S = np.triu(np.linalg.solve(U, eye)) / d[None, :]
    residual = float(np.max(np.abs(P @ T.entries @ S - eye)))
    first, last = spec.spaces[0], spec.spaces[-1]
    psi1 = (P @ spec.basis.monomials(spec.N, first.nodes)) * spec.half_weight(0, first.nodes)
    phim = (S.T @ spec.basis.monomials(spec.N, last.nodes)) * spec.half_weight(spec.m - 1, last.nodes)
    return BiorthogonalSystem(P, S, psi1, phim, residual, spec)


def refine_duality(bio: BiorthogonalSystem, T: ChainMomentMatrix) -> BiorthogonalSystem:
    """One correction step against the grid values themselves.

    Rounding in ``P`` and ``S`` leaves the discrete pairing ``D`` of
    ``psi^(m)`` with ``phi^(m)`` slightly off the identity, and every
    determinant identity downstream inherits that error.  Splitting
    ``D = L_D (d U_D)`` and dividing it out keeps ``P`` unit lower and ``S``
    upper triangular.
    """
    spec = bio.spec
    eye = np.eye(spec.N)
    D = (_propagate_forward(spec, bio.psi1) * spec.spaces[-1].weights) @ bio.phim.T
    L_D, d_D, U_D = ldu_nopivot(D)
    inv_L = np.linalg.solve(L_D, eye)
    inv_U = np.linalg.solve(d_D[:, None] * U_D, eye)
    P = np.tril(inv_L @ bio.P)
    np.fill_diagonal(P, 1.0)
    S = np.triu(bio.S @ inv_U)
    residual = float(np.max(np.abs(P @ T.entries @ S - eye)))
    return BiorthogonalSystem(P, S, inv_L @ bio.psi1, inv_U.T @ bio.phim, residual, spec)


def build_system(spec: ChainSpec) -> BiorthogonalSystem:
    T = chain_moment_matrix(spec)
    return refine_duality(biorthogonalize(T), T)
