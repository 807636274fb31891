"""Plain-text chain configuration.

Line-oriented ``key = value`` pairs.  Global keys come first; per-level keys
go under ``[level j]`` and couplings under ``[coupling j]`` (1-based).  ``#``
starts a comment.  Example::

    m = 2
    N = 2
    quad_order = 64

    [level 1]
    potential = quadratic 1
    space = line
    region = -1 1

    [level 2]
    potential = quadratic 1
    region = -1 1

    [coupling 1]
    coupling = exponential

Global keys: ``m``, ``N`` (required), ``basis`` (all|even|odd),
``quad_order`` (64), ``truncation`` (8), ``panels`` (1), ``seed`` (0),
``tolerance`` (1e-8), ``steps`` (10000), ``chains`` (64).

Level keys: ``potential`` (``quadratic [c]``, ``quartic c2 c4``,
``custom-poly c0 c1 ... ck``); ``space`` (``line``, ``interval a b[; c d]``,
``discrete x1:w1,x2:w2,...``); ``region`` (``a b[; c d]``);
``points`` (``x1, x2, ...``).  Repeatable level keys: ``rho_set``
(``weight a b[; c d]``), ``rho_atom`` (``weight x``), ``count_region``
(``a b[; c d]``, one counting variable each).

Coupling key: ``coupling`` (``exponential``, ``cosh``, ``sinh``,
``power z a``, ``series r1 r2 ...``).

Intervals accept ``inf``/``-inf``; on ``line`` levels they are clipped to
``[-truncation, truncation]`` and every finite region endpoint becomes a
quadrature breakpoint.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .chain import BasisFamily, ChainSpec, Coupling, Potential
from .errors import ConfigError, MeasureError
from .measure import composite_rule, discrete_space
from .statistics import LevelRho, RhoSpec

__all__ = ["Config", "LevelConfig", "emit_config", "parse_config"]

_SECTION = re.compile(r"^\[\s*(level|coupling)\s+(\d+)\s*\]$")

GLOBAL_DEFAULTS = {
    "basis": "all",
    "quad_order": 64,
    "truncation": 8.0,
    "panels": 1,
    "seed": 0,
    "tolerance": 1e-8,
    "steps": 10000,
    "chains": 64,
}
LEVEL_SINGLE = ("potential", "space", "region", "points")
LEVEL_MULTI = ("rho_set", "rho_atom", "count_region")

Interval = tuple[float, float]


@dataclass(frozen=True)
class LevelConfig:
    potential: tuple = ("quadratic", 1.0)
    space: tuple = ("line",)
    region: tuple[Interval, ...] = ()
    points: tuple[float, ...] = ()
    rho_sets: tuple[tuple[float, tuple[Interval, ...]], ...] = ()
    rho_atoms: tuple[tuple[float, float], ...] = ()
    count_regions: tuple[tuple[Interval, ...], ...] = ()


@dataclass(frozen=True)
class Config:
    m: int
    N: int
    basis: str = "all"
    quad_order: int = 64
    truncation: float = 8.0
    panels: int = 1
    seed: int = 0
    tolerance: float = 1e-8
    steps: int = 10000
    chains: int = 64
    levels: tuple[LevelConfig, ...] = ()
    couplings: tuple[tuple, ...] = ()

    # --- construction of library objects ---

    def _clip(self, intervals, space) -> tuple[Interval, ...]:
        if space[0] != "line":
            return tuple(intervals)
        L = self.truncation
        out = []
        for a, b in intervals:
            a, b = max(a, -L), min(b, L)
            if a <= b:
                out.append((a, b))
        return tuple(out)

    def breakpoints(self, j: int) -> list[float]:
        lv = self.levels[j]
        regions = [lv.region] + [r for _, r in lv.rho_sets] + list(lv.count_regions)
        return sorted({v for r in regions for iv in r for v in iv if np.isfinite(v)})

    def build_space(self, j: int):
        kind, *args = self.levels[j].space
        if kind == "discrete":
            pts, wts = zip(*args[0])
            return discrete_space(pts, wts)
        if kind == "line":
            intervals = [(-self.truncation, self.truncation)]
        else:
            intervals = self._clip(args[0], ("line",))
        return composite_rule(self.quad_order, intervals, self.panels, breakpoints=self.breakpoints(j))

    def build_potential(self, j: int) -> Potential:
        kind, *args = self.levels[j].potential
        if kind == "quadratic":
            return Potential.quadratic(*args)
        if kind == "quartic":
            return Potential.quartic(*args)
        return Potential.polynomial(args)

    def build_coupling(self, j: int) -> Coupling:
        kind, *args = self.couplings[j]
        if kind == "power":
            return Coupling.power_law(*args)
        if kind == "series":
            return Coupling.series(args)
        return Coupling(kind)

    def chain_spec(self) -> ChainSpec:
        try:
            spaces = [self.build_space(j) for j in range(self.m)]
        except MeasureError as exc:
            raise ConfigError(str(exc)) from exc
        return ChainSpec(
            self.m, self.N, spaces,
            [self.build_potential(j) for j in range(self.m)],
            [self.build_coupling(j) for j in range(self.m - 1)],
            BasisFamily(self.basis),
        )

    def regions(self) -> list[tuple[Interval, ...]]:
        return [self._clip(lv.region, lv.space) for lv in self.levels]

    def points(self) -> list[tuple[float, ...]]:
        return [lv.points for lv in self.levels]

    def rho(self) -> RhoSpec:
        return RhoSpec(tuple(
            LevelRho(atoms=lv.rho_atoms, sets=tuple((w, self._clip(r, lv.space)) for w, r in lv.rho_sets))
            for lv in self.levels
        ))

    def count_regions(self) -> list[list[tuple[Interval, ...]]]:
        return [[self._clip(r, lv.space) for r in lv.count_regions] for lv in self.levels]


# --- parsing ---------------------------------------------------------------

def _float(tok: str, line: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ConfigError(f"expected a number, got {tok!r}", line) from None


def _int(tok: str, line: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ConfigError(f"expected an integer, got {tok!r}", line) from None


def _intervals(text: str, line: int) -> tuple[Interval, ...]:
    out = []
    for part in text.split(";"):
        toks = part.split()
        if not toks:
            continue
        if len(toks) != 2:
            raise ConfigError(f"interval needs two endpoints, got {part.strip()!r}", line)
        a, b = _float(toks[0], line), _float(toks[1], line)
        if a > b:
            raise ConfigError(f"interval ({a}, {b}) has a > b", line)
        out.append((a, b))
    return tuple(out)


def _potential(text: str, line: int) -> tuple:
    toks = text.split()
    if not toks:
        raise ConfigError("empty potential", line)
    kind, args = toks[0], [_float(t, line) for t in toks[1:]]
    if kind == "quadratic":
        if len(args) > 1:
            raise ConfigError("quadratic takes at most one coefficient", line)
        return ("quadratic", args[0] if args else 1.0)
    if kind == "quartic":
        if len(args) != 2:
            raise ConfigError("quartic needs c2 c4", line)
        return ("quartic", *args)
    if kind == "custom-poly":
        if not args:
            raise ConfigError("custom-poly needs coefficients c0..ck", line)
        return ("custom-poly", *args)
    raise ConfigError(f"unknown potential {kind!r}", line)


def _space(text: str, line: int) -> tuple:
    toks = text.split(None, 1)
    if not toks:
        raise ConfigError("empty space", line)
    kind = toks[0]
    rest = toks[1] if len(toks) > 1 else ""
    if kind == "line":
        if rest.strip():
            raise ConfigError("line takes no arguments", line)
        return ("line",)
    if kind == "interval":
        ivs = _intervals(rest, line)
        if not ivs:
            raise ConfigError("interval needs endpoints", line)
        return ("interval", ivs)
    if kind == "discrete":
        atoms = []
        for item in rest.replace(" ", "").split(","):
            if not item:
                continue
            if ":" not in item:
                raise ConfigError(f"discrete atom needs x:w, got {item!r}", line)
            x, w = item.split(":", 1)
            atoms.append((_float(x, line), _float(w, line)))
        if not atoms:
            raise ConfigError("discrete space needs atoms", line)
        try:
            discrete_space(*zip(*atoms))
        except MeasureError as exc:
            raise ConfigError(str(exc), line) from None
        return ("discrete", tuple(atoms))
    raise ConfigError(f"unknown space {kind!r}", line)


def _coupling(text: str, line: int) -> tuple:
    toks = text.split()
    if not toks:
        raise ConfigError("empty coupling", line)
    kind, args = toks[0], [_float(t, line) for t in toks[1:]]
    if kind in ("exponential", "cosh", "sinh"):
        if args:
            raise ConfigError(f"{kind} takes no parameters", line)
        return (kind,)
    if kind == "power":
        if len(args) != 2:
            raise ConfigError("power needs z a", line)
        return ("power", *args)
    if kind == "series":
        return ("series", *args)
    raise ConfigError(f"unknown coupling {kind!r}", line)


def parse_config(text: str) -> Config:
    """Parse config text; syntax problems raise :class:`ConfigError` with the line number."""
    glob: dict = {}
    levels: dict[int, dict] = {}
    couplings: dict[int, tuple] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            mt = _SECTION.match(line)
            if not mt:
                raise ConfigError(f"bad section header {line!r}", lineno)
            kind, idx = mt.group(1), int(mt.group(2))
            if idx < 1:
                raise ConfigError("section indices start at 1", lineno)
            if kind == "level":
                if idx in levels:
                    raise ConfigError(f"duplicate section [level {idx}]", lineno)
                levels[idx] = {"_line": lineno}
            elif idx in couplings:
                raise ConfigError(f"duplicate section [coupling {idx}]", lineno)
            section = (kind, idx)
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {line!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if section is None:
            if key in glob:
                raise ConfigError(f"duplicate key {key!r}", lineno)
            if key in ("m", "N", "quad_order", "panels", "seed", "steps", "chains"):
                glob[key] = _int(value, lineno)
            elif key in ("truncation", "tolerance"):
                glob[key] = _float(value, lineno)
            elif key == "basis":
                if value not in ("all", "even", "odd"):
                    raise ConfigError(f"basis must be all, even or odd, got {value!r}", lineno)
                glob[key] = value
            else:
                raise ConfigError(f"unknown key {key!r}", lineno)
        elif section[0] == "coupling":
            if key != "coupling":
                raise ConfigError(f"unknown key {key!r} in [coupling {section[1]}]", lineno)
            if section[1] in couplings:
                raise ConfigError("duplicate coupling key", lineno)
            couplings[section[1]] = _coupling(value, lineno)
        else:
            lv = levels[section[1]]
            if key in LEVEL_SINGLE:
                if key in lv:
                    raise ConfigError(f"duplicate key {key!r}", lineno)
                if key == "potential":
                    lv[key] = _potential(value, lineno)
                elif key == "space":
                    lv[key] = _space(value, lineno)
                elif key == "region":
                    lv[key] = _intervals(value, lineno)
                else:
                    lv[key] = tuple(_float(t, lineno) for t in value.replace(",", " ").split())
            elif key == "rho_set":
                toks = value.split(None, 1)
                if len(toks) != 2:
                    raise ConfigError("rho_set needs weight and intervals", lineno)
                lv.setdefault("rho_sets", []).append((_float(toks[0], lineno), _intervals(toks[1], lineno)))
            elif key == "rho_atom":
                toks = value.split()
                if len(toks) != 2:
                    raise ConfigError("rho_atom needs weight and location", lineno)
                lv.setdefault("rho_atoms", []).append((_float(toks[0], lineno), _float(toks[1], lineno)))
            elif key == "count_region":
                lv.setdefault("count_regions", []).append(_intervals(value, lineno))
            else:
                raise ConfigError(f"unknown key {key!r} in [level {section[1]}]", lineno)

    for key in ("m", "N"):
        if key not in glob:
            raise ConfigError(f"missing required key {key!r}")
    m = glob["m"]
    if m < 1 or glob["N"] < 1:
        raise ConfigError("m and N must be positive")
    for idx in levels:
        if idx > m:
            raise ConfigError(f"[level {idx}] exceeds m={m}", levels[idx]["_line"])
    for idx in couplings:
        if idx > m - 1:
            raise ConfigError(f"[coupling {idx}] exceeds m-1={m - 1}")
    for idx in range(1, m):
        if idx not in couplings:
            raise ConfigError(f"missing section [coupling {idx}]")
    if glob.get("seed", 0) < 0 or glob.get("seed", 0) >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    for key in ("quad_order", "panels", "chains", "steps"):
        if glob.get(key, 1) < 1:
            raise ConfigError(f"{key} must be positive")
    if glob.get("truncation", 1.0) <= 0:
        raise ConfigError("truncation must be positive")

    level_objs = []
    for idx in range(1, m + 1):
        lv = levels.get(idx, {})
        level_objs.append(LevelConfig(
            potential=lv.get("potential", ("quadratic", 1.0)),
            space=lv.get("space", ("line",)),
            region=lv.get("region", ()),
            points=lv.get("points", ()),
            rho_sets=tuple(lv.get("rho_sets", ())),
            rho_atoms=tuple(lv.get("rho_atoms", ())),
            count_regions=tuple(lv.get("count_regions", ())),
        ))
    values = {**GLOBAL_DEFAULTS, **glob}
    return Config(
        levels=tuple(level_objs),
        couplings=tuple(couplings[i] for i in range(1, m)),
        **values,
    )


# --- emitting --------------------------------------------------------------

def _num(x: float) -> str:
    return repr(float(x))


def _ivs(ivs) -> str:
    return "; ".join(f"{_num(a)} {_num(b)}" for a, b in ivs)


def emit_config(cfg: Config) -> str:
    """Serialize so that ``parse_config(emit_config(cfg)) == cfg``."""
    out = []
    for f in fields(cfg):
        if f.name in ("levels", "couplings"):
            continue
        v = getattr(cfg, f.name)
        out.append(f"{f.name} = {_num(v) if isinstance(v, float) else v}")
    for j, lv in enumerate(cfg.levels, start=1):
        out.append("")
        out.append(f"[level {j}]")
        kind, *args = lv.potential
        out.append(f"potential = {' '.join([kind] + [_num(a) for a in args])}")
        kind, *args = lv.space
        if kind == "line":
            out.append("space = line")
        elif kind == "interval":
            out.append(f"space = interval {_ivs(args[0])}")
        else:
            out.append("space = discrete " + ",".join(f"{_num(x)}:{_num(w)}" for x, w in args[0]))
        if lv.region:
            out.append(f"region = {_ivs(lv.region)}")
        if lv.points:
            out.append("points = " + ", ".join(_num(x) for x in lv.points))
        for w, r in lv.rho_sets:
            out.append(f"rho_set = {_num(w)} {_ivs(r)}")
        for w, x in lv.rho_atoms:
            out.append(f"rho_atom = {_num(w)} {_num(x)}")
        for r in lv.count_regions:
            out.append(f"count_region = {_ivs(r)}")
    for j, c in enumerate(cfg.couplings, start=1):
        kind, *args = c
        out.append("")
        out.append(f"[coupling {j}]")
        out.append(f"coupling = {' '.join([kind] + [_num(a) for a in args])}")
    return "\n".join(out) + "\n"


def with_overrides(cfg: Config, **kw) -> Config:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
