"""The parameter space ``X``, its measure as quadrature weights, and weights.

``X`` has a coarse sheet ``{inf} x R^(d-1) x R^d`` carrying ``ds dt`` and a
fine part ``[-1,1]* x R^(d-1) x R^d`` carrying ``da/|a|^(d+1) ds dt``.

Discretization
--------------
* Scales: for each sign and dyadic level ``j < J`` the octave
  ``(2^-(j+1), 2^-j]`` is split into ``cells_per_octave`` geometric sub-cells.
  A cell ``(lo, hi]`` has the exact weight ``(lo^-d - hi^-d)/d`` and a
  representative scale (arithmetic or geometric midpoint).
* Shears: a centered lattice with spacing ``ds`` and radius ``rho`` per axis,
  node weight ``prod ds_i``.
* Translations: the spatial grid with weight ``(L/n)^d``.

Enumeration order is fixed: coarse shear nodes first, then fine cells by
``(sign +/-, level, sub-cell)``, each followed by its shear nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import GridSpec

COARSE = math.inf


class ParamError(ValueError):
    """Invalid parameter-space discretization."""


@dataclass(frozen=True)
class ParamPoint:
    """A point ``(alpha, s, t)`` of ``X``; ``alpha = inf`` marks the coarse sheet."""

    alpha: float
    shear: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        alpha = float(self.alpha)
        if not math.isinf(alpha) and (alpha == 0 or abs(alpha) > 1):
            raise ParamError(f"fine scale must satisfy 0 < |a| <= 1, got {alpha}")
        if math.isinf(alpha) and alpha < 0:
            raise ParamError("coarse scale is +inf")
        s = np.asarray(self.shear, dtype=float).reshape(-1)
        t = np.asarray(self.translation, dtype=float).reshape(-1)
        if t.size != s.size + 1:
            raise ParamError("translation must have one more component than shear")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "shear", s)
        object.__setattr__(self, "translation", t)

    @property
    def is_coarse(self) -> bool:
        return math.isinf(self.alpha)

    @property
    def d(self) -> int:
        return self.translation.size


def coarse_point(shear, translation) -> ParamPoint:
    return ParamPoint(COARSE, shear, translation)


@dataclass(frozen=True)
class ScaleCell:
    """One fine scale cell ``sign * (lo, hi]`` with its closed-form weight."""

    sign: int
    level: int
    sub: int
    lo: float
    hi: float
    rep: float
    weight: float


def cell_weight(lo: float, hi: float, d: int) -> float:
    """``int_lo^hi da / a^(d+1) = (lo^-d - hi^-d)/d`` for ``0 < lo < hi``."""
    return (lo ** (-d) - hi ** (-d)) / d


def build_scale_cells(J: int, d: int, cells_per_octave: int = 1, representative: str = "midpoint") -> list[ScaleCell]:
    """Scale cells partitioning ``+-(2^-J, 1]``."""
    if int(J) != J or J < 1:
        raise ParamError(f"J must be a positive integer, got {J}")
    if int(cells_per_octave) != cells_per_octave or cells_per_octave < 1:
        raise ParamError("cells_per_octave must be a positive integer")
    if representative not in ("midpoint", "geometric"):
        raise ParamError(f"unknown scale representative {representative!r}")
    K = int(cells_per_octave)
    cells = []
    for sign in (1, -1):
        for j in range(int(J)):
            for k in range(K):
                hi = 2.0 ** (-(j + k / K))
                lo = 2.0 ** (-(j + (k + 1) / K))
                rep = 0.5 * (lo + hi) if representative == "midpoint" else math.sqrt(lo * hi)
                cells.append(ScaleCell(sign, j, k, lo, hi, sign * rep, cell_weight(lo, hi, d)))
    return cells


@dataclass(frozen=True)
class ShearGrid:
    """Centered shear lattice with per-axis spacing and radius."""

    spacing: np.ndarray
    radius: np.ndarray
    nodes: np.ndarray = field(repr=False)

    @property
    def weight(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def count(self) -> int:
        return int(self.nodes.shape[0])


def build_shear_grid(d: int, spacing, radius) -> ShearGrid:
    spacing = np.broadcast_to(np.asarray(spacing, dtype=float), (d - 1,)).copy()
    radius = np.broadcast_to(np.asarray(radius, dtype=float), (d - 1,)).copy()
    if np.any(spacing <= 0):
        raise ParamError("shear spacing must be positive")
    axes = []
    for ds, rho in zip(spacing, radius):
        m = math.floor(rho / ds + 1e-9) if rho >= 0 else -1
        axes.append(ds * np.arange(-m, m + 1))
    if any(ax.size == 0 for ax in axes):
        raise ParamError("empty shear lattice")
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.reshape(-1) for m in mesh], axis=1)
    for arr in (spacing, radius, nodes):
        arr.setflags(write=False)
    return ShearGrid(spacing, radius, nodes)


@dataclass(frozen=True)
class PlaneSpec:
    """One ``(scale, shear)`` plane of the discretized parameter space."""

    index: int
    alpha: float
    shear: np.ndarray
    weight: float  # scale-cell weight times shear-node weight
    cell: int  # index into ParamGrid.cells, -1 for the coarse sheet

    @property
    def is_coarse(self) -> bool:
        return math.isinf(self.alpha)


@dataclass(frozen=True)
class ParamGrid:
    """Discretization of ``X`` on top of a signal grid."""

    grid: GridSpec
    J: int
    cells_per_octave: int
    representative: str
    cells: tuple[ScaleCell, ...]
    shears: ShearGrid
    planes: tuple[PlaneSpec, ...] = field(repr=False)

    @property
    def translation_weight(self) -> float:
        return self.grid.cell_volume

    @property
    def n_planes(self) -> int:
        return len(self.planes)

    def fine_scale_mass(self) -> float:
        return float(sum(c.weight for c in self.cells))

    def fine_mass(self) -> float:
        """Total fine-part weight including shear and translation mass."""
        return self.fine_scale_mass() * self.shears.count * self.shears.weight * self.grid.L**self.grid.d

    def describe(self) -> dict:
        return {
            "J": self.J,
            "cells_per_octave": self.cells_per_octave,
            "scale_representative": self.representative,
            "shear_spacing": [float(v) for v in self.shears.spacing],
            "shear_radius": [float(v) for v in self.shears.radius],
        }


def build_param_grid(
    J: int,
    shear_spacing,
    shear_radius,
    grid: GridSpec,
    cells_per_octave: int = 1,
    representative: str = "midpoint",
) -> ParamGrid:
    """Enumerate the planes of the discretized parameter space."""
    d = grid.d
    cells = tuple(build_scale_cells(J, d, cells_per_octave, representative))
    shears = build_shear_grid(d, shear_spacing, shear_radius)
    planes = []
    for s in shears.nodes:
        planes.append(PlaneSpec(len(planes), COARSE, s, shears.weight, -1))
    for ci, cell in enumerate(cells):
        for s in shears.nodes:
            planes.append(PlaneSpec(len(planes), cell.rep, s, cell.weight * shears.weight, ci))
    return ParamGrid(grid, int(J), int(cells_per_octave), representative, cells, shears, tuple(planes))


# ------------------------------------------------------------ weights

def _alpha(x) -> float:
    return x.alpha if isinstance(x, (ParamPoint, PlaneSpec)) else float(x)


def v_r(point, r: float) -> float:
    """Weight ``1`` on the coarse sheet and ``|a|^-r`` on fine scales."""
    if r < 0:
        raise ParamError("r must be non-negative")
    a = _alpha(point)
    return 1.0 if math.isinf(a) else abs(a) ** (-r)


def v_r_array(alpha, r: float) -> np.ndarray:
    """Vectorized :func:`v_r` over scale values (``inf`` = coarse)."""
    alpha = np.asarray(alpha, dtype=float)
    out = np.ones(alpha.shape)
    fine = np.isfinite(alpha)
    out[fine] = np.abs(alpha[fine]) ** (-r)
    return out


def m_v(x, y, r: float) -> float:
    """Moderate kernel weight ``max(v(x)/v(y), v(y)/v(x))`` for ``v = v_r``."""
    vx, vy = v_r(x, r), v_r(y, r)
    return max(vx / vy, vy / vx)


def m_v_array(ax, ay, r: float) -> np.ndarray:
    vx, vy = v_r_array(ax, r), v_r_array(ay, r)
    return np.maximum(vx / vy, vy / vx)


def m_v_printed_fine(a, a2, r: float):
    """Closed form printed for two fine scales: ``max(|a|/|a'|, |a'|/|a|)^(-r)``."""
    a, a2 = np.abs(np.asarray(a, float)), np.abs(np.asarray(a2, float))
    return np.maximum(a / a2, a2 / a) ** (-r)


@dataclass(frozen=True)
class WeightIdentityReport:
    """Outcome of :func:`weight_identity_check`.

    The coarse/coarse and fine/coarse identities are exact; the printed
    fine/fine closed form is compared against the definition and its
    discrepancy reported (the definition gives the ratio to the power ``+r``).
    """

    r: float
    n_samples: int
    coarse_coarse_max_err: float
    fine_coarse_max_err: float
    fine_fine_definition_vs_plus_r: float
    fine_fine_printed_max_gap: float
    printed_below_one: int
    example: tuple[float, float, float, float]

    @property
    def exact_identities_hold(self) -> bool:
        return self.coarse_coarse_max_err == 0.0 and self.fine_coarse_max_err == 0.0

    @property
    def printed_form_flagged(self) -> bool:
        return self.fine_fine_printed_max_gap > 0.0


def weight_identity_check(samples: int | Sequence, r: float, seed: int = 0) -> WeightIdentityReport:
    """Compare the moderate weight with its closed forms on random scales.

    ``samples`` is either a count (fine scales drawn log-uniformly from
    ``[1e-4, 1]`` with random signs) or an ``(m, 2)`` array of fine scale pairs.
    """
    if np.ndim(samples) == 0:
        rng = np.random.default_rng(seed)
        m = int(samples)
        mags = 10.0 ** rng.uniform(-4.0, 0.0, size=(m, 2))
        signs = rng.choice([-1.0, 1.0], size=(m, 2))
        pairs = mags * signs
    else:
        pairs = np.asarray(samples, dtype=float).reshape(-1, 2)
    a, a2 = pairs[:, 0], pairs[:, 1]
    inf = np.full(a.shape, math.inf)
    cc = np.max(np.abs(m_v_array(inf, inf, r) - 1.0))
    fc = max(
        np.max(np.abs(m_v_array(a, inf, r) - np.abs(a) ** (-r))),
        np.max(np.abs(m_v_array(inf, a, r) - np.abs(a) ** (-r))),
    )
    definition = m_v_array(a, a2, r)
    plus = np.maximum(np.abs(a) / np.abs(a2), np.abs(a2) / np.abs(a)) ** r
    printed = m_v_printed_fine(a, a2, r)
    rel = np.abs(definition - plus) / plus
    gap = np.abs(definition - printed)
    example_def = m_v(0.25, 0.5, r)
    example_printed = float(m_v_printed_fine(0.25, 0.5, r))
    return WeightIdentityReport(
        r=float(r),
        n_samples=int(a.size),
        coarse_coarse_max_err=float(cc),
        fine_coarse_max_err=float(fc),
        fine_fine_definition_vs_plus_r=float(np.max(rel)),
        fine_fine_printed_max_gap=float(np.max(gap)),
        printed_below_one=int(np.sum(printed < 1.0)),
        example=(0.25, 0.5, example_def, example_printed),
    )
