"""Ensemble declaration: levels, potentials, couplings and end-level bases.

A chain has ``m`` levels carrying ``N`` points each.  Level ``j`` has a
measure space and a potential ``V_j``; consecutive levels are linked by a
coupling ``f(x*y)``.  The full two-level kernel used everywhere downstream is

    w_{j+1,j}(y, x) = f_j(x*y) * exp(-(V_j(x) + V_{j+1}(y)) / 2)

so the potentials are split symmetrically between the couplings and the end
functions ``psi^(1) = p * exp(-V_1/2)``, ``phi^(m) = s * exp(-V_m/2)``.

Levels and couplings are indexed from 0 in the Python API.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import ChainSpecError, CouplingError
from .measure import QUADRATURE, MeasureSpace

__all__ = [
    "BasisFamily",
    "ChainSpec",
    "Coupling",
    "coupling_values",
    "Potential",
    "eval_coupling",
    "transfer_matrix",
    "validate_chain",
]

EXPONENTIAL = "exponential"
COSH = "cosh"
SINH = "sinh"
POWER = "power"
SERIES = "series"
COUPLING_KINDS = (EXPONENTIAL, COSH, SINH, POWER, SERIES)

ANY = "any"
EVEN = "even"

_PROBE = np.linspace(0.1, 3.0, 7)


@dataclass(frozen=True)
class Potential:
    """Confining potential ``V(x)``.

    Polynomial potentials keep their ``coefficients`` (ascending powers) so a
    config can be written back out; arbitrary callables are accepted through
    ``func`` but cannot be serialized.
    """

    coefficients: tuple[float, ...] | None = (0.0,)
    parity: str = ANY
    func: Callable | None = field(default=None, compare=False)
    name: str = "custom-poly"

    def __post_init__(self):
        if self.parity not in (ANY, EVEN):
            raise ValueError(f"unknown parity {self.parity!r}")
        if self.func is None and self.coefficients is None:
            raise ValueError("a potential needs coefficients or a callable")
        if self.coefficients is not None:
            object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if self.parity == EVEN:
            left, right = self(-_PROBE), self(_PROBE)
            scale = np.maximum(1.0, np.abs(right))
            if np.any(np.abs(left - right) > 1e-12 * scale):
                raise ValueError("potential declared even but V(x) != V(-x) on the probe grid")

    @classmethod
    def quadratic(cls, c: float = 1.0) -> "Potential":
        return cls((0.0, 0.0, c), EVEN, name="quadratic")

    @classmethod
    def quartic(cls, c2: float, c4: float) -> "Potential":
        return cls((0.0, 0.0, c2, 0.0, c4), EVEN, name="quartic")

    @classmethod
    def polynomial(cls, coefficients: Sequence[float]) -> "Potential":
        coeffs = tuple(float(c) for c in coefficients)
        even = all(c == 0.0 for c in coeffs[1::2])
        return cls(coeffs, EVEN if even else ANY, name="custom-poly")

    @classmethod
    def zero(cls) -> "Potential":
        return cls((0.0,), EVEN, name="custom-poly")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.func is not None:
            return np.asarray(self.func(x), dtype=float)
        return np.polynomial.polynomial.polyval(x, self.coefficients)


@dataclass(frozen=True)
class Coupling:
    """Nearest-neighbour coupling ``f(t)`` of the product ``t = x*y``.

    ``z``, ``a`` and ``N`` parametrize the power law ``(1 - z t)^(N-a-1)``;
    ``N`` is filled in from the chain when it is validated.  ``ratios`` are
    the ``r(1..K)`` of a series ``1 + sum_k r(1)...r(k) t^k``.
    """

    kind: str = EXPONENTIAL
    z: float = 0.0
    a: float = 0.0
    N: int | None = None
    ratios: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in COUPLING_KINDS:
            raise ValueError(f"unknown coupling {self.kind!r}; expected one of {COUPLING_KINDS}")
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))

    @classmethod
    def exponential(cls):
        return cls(EXPONENTIAL)

    @classmethod
    def cosh(cls):
        return cls(COSH)

    @classmethod
    def sinh(cls):
        return cls(SINH)

    @classmethod
    def power_law(cls, z: float, a: float, N: int | None = None):
        return cls(POWER, z=float(z), a=float(a), N=N)

    @classmethod
    def series(cls, ratios: Sequence[float]):
        return cls(SERIES, ratios=tuple(ratios))

    @classmethod
    def series_from_rule(cls, rule: Callable[[int], float], terms: int = 64, span: float | None = None,
                         tol: float = 1e-14):
        """Truncate ``1 + sum_k r(1)...r(k) t^k`` after ``terms`` terms.

        With ``span`` given, the first dropped term at ``|t| = span`` must be
        below ``tol`` relative to the partial sum.
        """
        ratios = tuple(float(rule(i)) for i in range(1, terms + 1))
        c = cls.series(ratios)
        if span is not None:
            coeffs = c.series_coefficients()
            head = abs(np.polynomial.polynomial.polyval(span, coeffs))
            tail = abs(coeffs[-1] * rule(terms + 1)) * span ** (terms + 1)
            if not tail <= tol * max(1.0, head):
                raise CouplingError(f"series tail {tail:.3g} at |t|={span} exceeds {tol:g}; raise terms")
        return c

    def series_coefficients(self) -> np.ndarray:
        return np.concatenate([[1.0], np.cumprod(self.ratios)]) if self.ratios else np.ones(1)

    @property
    def exponent(self) -> float:
        if self.N is None:
            raise CouplingError("power-law coupling needs N; validate the chain first")
        return self.N - self.a - 1.0

    def log_abs_sign(self, t) -> tuple[np.ndarray, np.ndarray]:
        """``(log|f(t)|, sign f(t))`` elementwise; zeros give ``(-inf, 0)``."""
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            if self.kind == EXPONENTIAL:
                return t.copy(), np.ones_like(t)
            if self.kind == COSH:
                at = np.abs(t)
                return at + np.log1p(np.exp(-2.0 * at)), np.ones_like(t)
            if self.kind == SINH:
                at = np.abs(t)
                return at + np.log(-np.expm1(-2.0 * at)), np.sign(t)
            if self.kind == POWER:
                base = 1.0 - self.z * t
                if np.any(base <= 0) or np.any(np.abs(self.z * t) >= 1.0):
                    raise CouplingError(f"power-law pole crossed: |z*x*y| >= 1 for z={self.z}")
                e = self.exponent
                return e * np.log1p(-self.z * t), np.ones_like(t)
            vals = np.polynomial.polynomial.polyval(t, self.series_coefficients())
            if not np.all(np.isfinite(vals)):
                raise CouplingError("series coupling overflowed")
            return np.log(np.abs(vals)), np.sign(vals)

    def __call__(self, x, y):
        return eval_coupling(self, x, y)


def eval_coupling(c: Coupling, x, y):
    """Bare coupling value ``f(x*y)`` (no potential factors)."""
    t = np.multiply(x, y, dtype=float)
    if c.kind == EXPONENTIAL:
        out = np.exp(t)
    elif c.kind == COSH:
        out = 2.0 * np.cosh(t)
    elif c.kind == SINH:
        out = 2.0 * np.sinh(t)
    elif c.kind == POWER:
        if np.any(np.abs(c.z * t) >= 1.0):
            raise CouplingError(f"power-law pole crossed: |z*x*y| >= 1 for z={c.z}")
        out = np.power(1.0 - c.z * t, c.exponent)
    else:
        out = np.polynomial.polynomial.polyval(t, c.series_coefficients())
    if not np.all(np.isfinite(out)):
        raise CouplingError(f"{c.kind} coupling overflowed")
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class BasisFamily:
    """Monomials used at the end levels: all, even or odd degrees."""

    tag: str = "all"

    def __post_init__(self):
        if self.tag not in ("all", "even", "odd"):
            raise ValueError(f"unknown basis family {self.tag!r}")

    def degree(self, a: int) -> int:
        """Degree of the ``a``-th function, ``a`` counted from 1."""
        if a < 1:
            raise ValueError("basis index starts at 1")
        return {"all": a - 1, "even": 2 * (a - 1), "odd": 2 * a - 1}[self.tag]

    def degrees(self, N: int) -> np.ndarray:
        return np.array([self.degree(a) for a in range(1, N + 1)])

    def monomials(self, N: int, x) -> np.ndarray:
        """``N x len(x)`` array of the first ``N`` monomials at ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.power.outer(x, self.degrees(N)).T


@dataclass(frozen=True)
class ChainSpec:
    m: int
    N: int
    spaces: tuple[MeasureSpace, ...]
    potentials: tuple[Potential, ...]
    couplings: tuple[Coupling, ...] = ()
    basis: BasisFamily = BasisFamily("all")

    def __post_init__(self):
        object.__setattr__(self, "spaces", tuple(self.spaces))
        object.__setattr__(self, "potentials", tuple(self.potentials))
        object.__setattr__(self, "couplings", tuple(self.couplings))
        if isinstance(self.basis, str):
            object.__setattr__(self, "basis", BasisFamily(self.basis))

    def half_weight(self, j: int, x) -> np.ndarray:
        """``exp(-V_j(x)/2)``."""
        return np.exp(-0.5 * self.potentials[j](x))

    def with_spaces(self, spaces) -> "ChainSpec":
        return replace(self, spaces=tuple(spaces))


def coupling_values(spec: ChainSpec, j: int, y, x) -> np.ndarray:
    """Broadcast ``w_{j+1,j}(y[..., r], x[..., c])`` to shape ``(..., len_y, len_x)``.

    Includes the potential factors.  The exponent is formed in log space so
    ``exp(x*y)`` never overflows on its own.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    log_f, sign = spec.couplings[j].log_abs_sign(y[..., :, None] * x[..., None, :])
    expo = (log_f - 0.5 * spec.potentials[j + 1](y)[..., :, None]
            - 0.5 * spec.potentials[j](x)[..., None, :])
    with np.errstate(over="ignore"):
        out = sign * np.exp(expo)
    out[sign == 0] = 0.0
    if not np.all(np.isfinite(out)):
        raise CouplingError(f"coupling {j + 1} overflowed; reduce truncation or coupling growth")
    return out


def transfer_matrix(spec: ChainSpec, j: int, y=None, x=None) -> np.ndarray:
    """Kernel values ``w_{j+1,j}(y_r, x_c)`` including the potential factors.

    Rows run over level ``j+1`` points ``y`` and columns over level ``j``
    points ``x``; both default to the level grids.
    """
    x = spec.spaces[j].nodes if x is None else np.atleast_1d(np.asarray(x, dtype=float))
    y = spec.spaces[j + 1].nodes if y is None else np.atleast_1d(np.asarray(y, dtype=float))
    return coupling_values(spec, j, y, x)


def validate_chain(spec: ChainSpec) -> ChainSpec:
    """Check every ChainSpec invariant, collecting all violations.

    Returns the spec with power-law couplings bound to ``spec.N``; raises
    :class:`ChainSpecError` listing every problem otherwise.
    """
    problems = []
    if spec.m < 1:
        problems.append(f"m must be >= 1, got {spec.m}")
    if spec.N < 1:
        problems.append(f"N must be >= 1, got {spec.N}")
    if len(spec.spaces) != spec.m:
        problems.append(f"spaces length must be m={spec.m}, got {len(spec.spaces)}")
    if len(spec.potentials) != spec.m:
        problems.append(f"potentials length must be m={spec.m}, got {len(spec.potentials)}")
    if len(spec.couplings) != max(spec.m - 1, 0):
        problems.append(f"couplings length must be m-1={spec.m - 1}, got {len(spec.couplings)}")
    if problems:
        raise ChainSpecError(problems)

    couplings = tuple(
        replace(c, N=spec.N) if c.kind == POWER else c for c in spec.couplings
    )
    spec = replace(spec, couplings=couplings)

    for j, space in enumerate(spec.spaces):
        if space.size < spec.N:
            problems.append(f"level {j + 1}: {space.size} nodes cannot hold N={spec.N} distinct points")
        with np.errstate(over="ignore", invalid="ignore"):
            v = spec.potentials[j](space.nodes)
            hw = np.exp(-0.5 * v)
        if not np.all(np.isfinite(v)) or not np.all(np.isfinite(hw)):
            problems.append(f"level {j + 1}: exp(-V/2) is not finite at every node")
        if spec.basis.tag != "all":
            if spec.potentials[j].parity != EVEN:
                problems.append(f"level {j + 1}: {spec.basis.tag} basis needs an even potential (parity violation)")
            if not space.is_symmetric():
                what = "interval list" if space.kind == QUADRATURE else "node set"
                problems.append(f"level {j + 1}: {spec.basis.tag} basis needs a symmetric {what} (parity violation)")

    for j, c in enumerate(spec.couplings):
        if c.kind == POWER:
            xmax = float(np.max(np.abs(spec.spaces[j].nodes)))
            ymax = float(np.max(np.abs(spec.spaces[j + 1].nodes)))
            if abs(c.z) * xmax * ymax >= 1.0:
                problems.append(f"coupling {j + 1}: |z*x*y| reaches {abs(c.z) * xmax * ymax:.6g} >= 1 on the grids")
        elif c.kind == SERIES:
            xmax = float(np.max(np.abs(spec.spaces[j].nodes)))
            ymax = float(np.max(np.abs(spec.spaces[j + 1].nodes)))
            vals = np.polynomial.polynomial.polyval(xmax * ymax, np.abs(c.series_coefficients()))
            if not math.isfinite(vals):
                problems.append(f"coupling {j + 1}: series overflows on the grids")

    if problems:
        raise ChainSpecError(problems)
    return spec
