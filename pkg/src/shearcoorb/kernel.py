"""Reproducing kernel, discrete kernel operators and kernel-class estimates.

Continuum inner products
------------------------
An :class:`Atom` is a window (``psi`` or ``phi``) moved by scale ``a``, shear
``s`` and translation ``t``:
``atom_hat(xi) = |a|^((2-1/d)/2) W(A_a S_s^T xi) exp(-2 pi i xi.t)``. The
windows are even in every cross coordinate, so only ``|a|`` matters. For two
atoms the inner product factorizes for each ``xi_1`` into one-dimensional
cross integrals

``G_i(xi_1) = int q_i(r_A (eta + xi_1 s_Ai)) q_i(r_B (eta + xi_1 s_Bi)) exp(-2 pi i eta dt_i) d eta``

with ``r = |a|^(1/d)``. Every integrand is smooth and vanishes to all orders
at the ends of its support, so composite Gauss-Legendre rules on the exact
support intervals converge very fast. This is the engine behind
:func:`kernel_eval_direct`, :func:`kernel_eval_reduced` and
:func:`gramian_eval`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from ._io import atomic_write_text
from .frame import check_nyquist, frame_element_spectral, group_compose, group_inverse, matrix_A, matrix_S
from .grid import GridSpec, translation_phase
from .paramspace import ParamPoint, v_r_array
from .transform import CoeffField, TransformConfig, TransformError, analyze, pmap, synthesize_spectrum
from .windows import SpectralWindowPair

PANEL_NODES = 64
INNER_NODES = 64


class KernelError(ValueError):
    """Invalid kernel request."""


@lru_cache(maxsize=16)
def _gl(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(int(n))


def _gl_on(lo: float, hi: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = _gl(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


# ------------------------------------------------------------------ atoms

@dataclass(frozen=True, eq=False)
class Atom:
    """A window of ``pair`` moved by ``(a, s, t)``; ``window`` is ``psi`` or ``phi``."""

    pair: SpectralWindowPair
    window: str
    a: float
    s: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        if self.window not in ("psi", "phi"):
            raise KernelError(f"unknown window {self.window!r}")
        a = abs(float(self.a))
        if not (0 < a < math.inf):
            raise KernelError("atom scale must be finite and nonzero")
        d = self.pair.d
        s = np.asarray(self.s, dtype=float).reshape(d - 1)
        t = np.asarray(self.t, dtype=float).reshape(d)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "t", t)

    @property
    def d(self) -> int:
        return self.pair.d

    @property
    def r(self) -> float:
        return self.a ** (1.0 / self.d)

    @property
    def amplitude(self) -> float:
        """Scale normalization times the cross amplitude of the window."""
        cross = self.pair.psi.scale2 if self.window == "psi" else abs(self.pair.psi.scale2)
        return self.a ** ((2.0 - 1.0 / self.d) / 2.0) * cross

    def half_widths(self) -> np.ndarray:
        """Support half widths of the cross factors in ``eta``."""
        return np.asarray(self.pair.params.b) / self.r

    def radial(self, x) -> np.ndarray:
        """The ``xi_1`` factor ``w1(a xi_1)``."""
        x = np.asarray(x, dtype=float)
        if self.window == "psi":
            return self.pair.psi.psi1(self.a * x)
        return self.pair.phi_profile(self.a * x)

    def cross(self, i: int, eta) -> np.ndarray:
        return self.pair.psi.psi2_factor(self.r * np.asarray(eta, dtype=float), i)

    def xi1_intervals(self) -> list[tuple[float, float]]:
        p = self.pair.params
        lo, hi = p.a0 / self.a, p.a1 / self.a
        if self.window == "psi":
            return [(-hi, -lo), (lo, hi)]
        return [(-hi, hi)]

    def xi1_breaks(self) -> list[float]:
        if self.window == "phi":
            x = self.pair.params.a0 / self.a
            return [-x, 0.0, x]
        return []

    def spectral(self, xi) -> np.ndarray:
        """Atom in frequency at points ``xi`` of shape ``(..., d)``."""
        xi = np.asarray(xi, dtype=float)
        out = self.amplitude * self.radial(xi[..., 0]).astype(complex)
        for i in range(self.d - 1):
            out = out * self.cross(i, xi[..., i + 1] + xi[..., 0] * self.s[i])
        return out * np.exp(-2j * np.pi * (xi @ self.t))


def point_atom(point: ParamPoint, pair: SpectralWindowPair) -> Atom:
    """The frame element of ``point`` as an atom."""
    if point.is_coarse:
        return Atom(pair, "phi", 1.0, point.shear, point.translation)
    return Atom(pair, "psi", point.alpha, point.shear, point.translation)


def _intersect(a: list[tuple[float, float]], b: list[tuple[float, float]]) -> list[tuple[float, float]]:
    out = []
    for lo1, hi1 in a:
        for lo2, hi2 in b:
            lo, hi = max(lo1, lo2), min(hi1, hi2)
            if hi > lo:
                out.append((lo, hi))
    return sorted(out)


def _cross_integrals(B: Atom, A: Atom, i: int, x: np.ndarray, dt: float, n_inner: int) -> np.ndarray:
    """``G_i`` at the ``xi_1`` nodes ``x`` (vectorized over ``x``)."""
    hA, hB = A.half_widths()[i], B.half_widths()[i]
    lo = np.maximum(-hA - x * A.s[i], -hB - x * B.s[i])
    hi = np.minimum(hA - x * A.s[i], hB - x * B.s[i])
    width = np.maximum(hi - lo, 0.0)
    n = n_inner + int(math.ceil(4.0 * abs(dt) * float(np.max(width, initial=0.0))))
    u, w = _gl(n)
    eta = lo[:, None] + 0.5 * width[:, None] * (u[None, :] + 1.0)
    vals = A.cross(i, eta + (x * A.s[i])[:, None]) * B.cross(i, eta + (x * B.s[i])[:, None])
    if dt != 0.0:
        vals = vals * np.exp(-2j * np.pi * dt * eta)
    return 0.5 * width * (vals @ w)


def atom_inner(B: Atom, A: Atom, panel_nodes: int = PANEL_NODES, inner_nodes: int = INNER_NODES) -> complex:
    """Continuum inner product ``<B, A> = int B_hat conj(A_hat) d xi``."""
    if A.d != B.d:
        raise KernelError("atoms live in different dimensions")
    d = A.d
    ds = B.s - A.s
    dt = B.t - A.t
    hA, hB = A.half_widths(), B.half_widths()
    pieces = _intersect(A.xi1_intervals(), B.xi1_intervals())
    cut = math.inf
    breaks = set(A.xi1_breaks() + B.xi1_breaks())
    for i in range(d - 1):
        if ds[i] != 0.0:
            cut = min(cut, (hA[i] + hB[i]) / abs(ds[i]))
            x = abs(hA[i] - hB[i]) / abs(ds[i])
            breaks.update((-x, x))
    pieces = _intersect(pieces, [(-cut, cut)])
    if not pieces:
        return 0j
    rate = abs(dt[0]) + float(np.sum(np.abs(dt[1:]) * np.maximum(np.abs(A.s), np.abs(B.s))))
    xs, ws = [], []
    for lo, hi in pieces:
        edges = [lo] + sorted(b for b in breaks if lo < b < hi) + [hi]
        for e0, e1 in zip(edges[:-1], edges[1:]):
            panels = max(1, int(math.ceil((e1 - e0) * rate / 2.0)))
            for k in range(panels):
                x, w = _gl_on(e0 + (e1 - e0) * k / panels, e0 + (e1 - e0) * (k + 1) / panels, panel_nodes)
                xs.append(x)
                ws.append(w)
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    vals = (B.radial(x) * A.radial(x)).astype(complex)
    if dt[0] != 0.0:
        vals = vals * np.exp(-2j * np.pi * dt[0] * x)
    for i in range(d - 1):
        vals = vals * _cross_integrals(B, A, i, x, float(dt[i + 1]), inner_nodes)
    return complex(A.amplitude * B.amplitude * np.sum(w * vals))


# ------------------------------------------------------------ kernel values

def _check_points(points: Iterable[ParamPoint], pair: SpectralWindowPair, grid: GridSpec | None, margin: float) -> None:
    for p in points:
        if p.d != pair.d:
            raise KernelError("parameter dimension does not match the window pair")
        if grid is not None:
            if grid.d != pair.d:
                raise KernelError("grid dimension does not match the window pair")
            check_nyquist(p.alpha, pair, grid, margin)


def kernel_eval_direct(x: ParamPoint, y: ParamPoint, pair: SpectralWindowPair, grid: GridSpec | None = None,
                       method: str = "quadrature", margin: float = 0.0) -> complex:
    """``R(x, y) = <psi_y, psi_x>``.

    ``method="quadrature"`` integrates the continuum inner product;
    ``method="lattice"`` sums the sampled spectral elements over the grid's
    frequency lattice with weight ``(1/L)^d`` (the kernel of the discrete
    frame, periodic in the translations). Both check that the dilated bands
    fit below the grid's Nyquist frequency when a grid is given.
    """
    _check_points((x, y), pair, grid, margin)
    if method == "quadrature":
        return atom_inner(point_atom(y, pair), point_atom(x, pair))
    if method == "lattice":
        if grid is None:
            raise KernelError("the lattice method needs a grid")
        ex = frame_element_spectral(x, pair, grid, None) * translation_phase(grid, x.translation)
        ey = frame_element_spectral(y, pair, grid, None) * translation_phase(grid, y.translation)
        return complex(np.vdot(ex, ey) * grid.dual_cell_volume)
    raise KernelError(f"unknown method {method!r}")


def gramian_eval(pair_a: SpectralWindowPair, pair_b: SpectralWindowPair, x: ParamPoint, y: ParamPoint,
                 grid: GridSpec | None = None) -> complex:
    """Mixed kernel ``<psi~_y, psi_x>`` with ``psi`` from ``pair_a`` and ``psi~`` from ``pair_b``."""
    if pair_a.d != pair_b.d:
        raise KernelError("grid mismatch: window pairs of different dimensions")
    _check_points((x,), pair_a, grid, 0.0)
    _check_points((y,), pair_b, grid, 0.0)
    return atom_inner(point_atom(y, pair_b), point_atom(x, pair_a))


@dataclass(frozen=True)
class ReducedArguments:
    """Which single-window transform evaluates ``R(x, y)`` and at which point.

    ``R(x, y) = <W_y, atom(W_x; scale, shear, translation)>`` where ``W`` is
    ``Phi`` on the coarse sheet and ``Psi`` otherwise.
    """

    case: str  # "coarse-coarse", "fine-coarse", "coarse-fine" or "fine-fine" as (x, y)
    scale: float
    shear: np.ndarray
    translation: np.ndarray


def reduced_arguments(x: ParamPoint, y: ParamPoint) -> ReducedArguments:
    """Composed parameters ``y^-1 o x`` used by :func:`kernel_eval_reduced`.

    With ``a = 1`` standing for the coarse sheet and only ``|a|`` entering,
    the arguments are ``(a_x/a_y, |a_y|^(1/d-1)(s_x - s_y), A_(a_y)^-1 S_(s_y)^-1 (t_x - t_y))``.
    """
    d = x.d
    ax = 1.0 if x.is_coarse else abs(x.alpha)
    ay = 1.0 if y.is_coarse else abs(y.alpha)
    scale = ax / ay
    shear = ay ** (1.0 / d - 1.0) * (x.shear - y.shear)
    trans = np.linalg.solve(matrix_S(y.shear) @ matrix_A(ay, d), x.translation - y.translation)
    case = ("coarse" if x.is_coarse else "fine") + "-" + ("coarse" if y.is_coarse else "fine")
    return ReducedArguments(case, scale, shear, trans)


def kernel_eval_reduced(x: ParamPoint, y: ParamPoint, pair: SpectralWindowPair, grid: GridSpec | None = None,
                        margin: float = 0.0) -> complex:
    """``R(x, y)`` as one single-window transform at the composed parameter.

    The value is ``<W_y, atom(W_x at y^-1 o x)>``; for two fine points this is
    the shearlet transform of ``Psi`` itself at
    ``(a/a', |a'|^(1/d-1)(s-s'), A_(a')^-1 S_(s')^-1 (t-t'))``. The result is
    complex; the acceptance comparison uses magnitudes.
    """
    _check_points((x, y), pair, grid, margin)
    g = reduced_arguments(x, y)
    d = pair.d
    wy = "phi" if y.is_coarse else "psi"
    wx = "phi" if x.is_coarse else "psi"
    base = Atom(pair, wy, 1.0, np.zeros(d - 1), np.zeros(d))
    moved = Atom(pair, wx, g.scale, g.shear, g.translation)
    return atom_inner(base, moved)


def group_reduction(x: ParamPoint, y: ParamPoint) -> tuple[float, np.ndarray, np.ndarray]:
    """``y^-1 o x`` by the group law (reference for :func:`reduced_arguments`)."""
    ax = 1.0 if x.is_coarse else abs(x.alpha)
    ay = 1.0 if y.is_coarse else abs(y.alpha)
    return group_compose(group_inverse((ay, y.shear, y.translation)), (ax, x.shear, x.translation))


# ------------------------------------------------------------ discrete kernels

class DiscreteKernel:
    """Kernel operator on coefficient fields of one parameter grid.

    ``K(F)(x) = sum_y K(x, y) F(y) mu(y)`` with the plane weight times the
    translation cell as ``mu``.
    """

    is_frame_kernel = False

    def __init__(self, config_hash: str):
        self.config_hash = config_hash

    def apply(self, F: CoeffField) -> CoeffField:  # pragma: no cover - interface
        raise NotImplementedError

    @staticmethod
    def frame(cfg: TransformConfig) -> "FrameKernel":
        return FrameKernel(cfg)

    @staticmethod
    def identity(cfg: TransformConfig, scale: complex = 1.0) -> "DiagonalKernel":
        return DiagonalKernel(cfg.config_hash, scale)

    @staticmethod
    def zero(cfg: TransformConfig) -> "DiagonalKernel":
        return DiagonalKernel(cfg.config_hash, 0.0)


class FrameKernel(DiscreteKernel):
    """The discrete reproducing kernel ``R(x, y) = <psi_y, psi_x>`` of ``cfg``.

    Applied in factorized form: ``R(F) = analyze(synthesize(F))``. Entries
    equal :func:`kernel_eval_direct` with ``method="lattice"``.
    """

    is_frame_kernel = True

    def __init__(self, cfg: TransformConfig):
        super().__init__(cfg.config_hash)
        self.cfg = cfg

    def apply(self, F: CoeffField) -> CoeffField:
        from .grid import SPECTRAL, VolumeField

        ghat = synthesize_spectrum(F, self.cfg)
        g = VolumeField(self.cfg.grid, np.fft.fftshift(ghat), SPECTRAL)
        return analyze(g, self.cfg)


class DiagonalKernel(DiscreteKernel):
    """``K(x, y) = c * delta_(x, y) / mu(y)``, so that ``K(F) = c F``."""

    def __init__(self, config_hash: str, scale: complex = 1.0):
        super().__init__(config_hash)
        self.scale = scale

    def apply(self, F: CoeffField) -> CoeffField:
        if self.scale == 0:
            z = np.zeros(F.pgrid.grid.shape, dtype=complex)
            return CoeffField(F.pgrid, (z,) * F.pgrid.n_planes, F.config_hash)
        return F.scaled(self.scale)


def kernel_apply(K, F):
    """Apply a discrete kernel to a coefficient field or a sampled vector.

    ``K`` is a :class:`DiscreteKernel` (for a :class:`CoeffField`) or a
    :class:`SampledKernel` (for a plain vector on its points).
    """
    if isinstance(K, SampledKernel):
        return K.apply(F)
    if not isinstance(F, CoeffField):
        raise KernelError("coefficient field expected")
    if K.config_hash != F.config_hash:
        raise TransformError("grid mismatch: kernel and coefficients belong to different grids")
    return K.apply(F)


# ------------------------------------------------------------ sampled kernels

@dataclass(frozen=True)
class SampledKernel:
    """A kernel on finitely many points with measure ``mu`` and weight ``v``."""

    matrix: np.ndarray
    mu: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        K = np.asarray(self.matrix, dtype=complex)
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        v = np.asarray(self.v, dtype=float).reshape(-1)
        if K.shape != (mu.size, mu.size) or v.size != mu.size:
            raise KernelError("matrix, measure and weight sizes disagree")
        if np.any(mu < 0) or np.any(v <= 0):
            raise KernelError("measure must be non-negative and weight positive")
        object.__setattr__(self, "matrix", K)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "v", v)

    @property
    def m(self) -> np.ndarray:
        v = self.v
        return np.maximum(v[:, None] / v[None, :], v[None, :] / v[:, None])

    def apply(self, F) -> np.ndarray:
        return self.matrix @ (np.asarray(F) * self.mu)

    def aq_norm(self, q: float) -> float:
        """``||K m_v||_(A_q)``: largest row/column ``L_q(mu)`` norm."""
        km = np.abs(self.matrix) * self.m
        if math.isinf(q):
            rows = np.max(np.where(self.mu[None, :] > 0, km, 0.0), axis=1, initial=0.0)
            cols = np.max(np.where(self.mu[:, None] > 0, km, 0.0), axis=0, initial=0.0)
            return float(max(np.max(rows, initial=0.0), np.max(cols, initial=0.0)))
        rows = (km**q @ self.mu) ** (1.0 / q)
        cols = (self.mu @ km**q) ** (1.0 / q)
        return float(max(np.max(rows, initial=0.0), np.max(cols, initial=0.0)))

    def lpv_norm(self, F, p: float, weight_sign: int = 1) -> float:
        return _sampled_lpv(np.asarray(F), self.mu, self.v ** weight_sign, p)


def _sampled_lpv(F: np.ndarray, mu: np.ndarray, v: np.ndarray, p: float) -> float:
    vals = np.abs(F) * v
    if math.isinf(p):
        return float(np.max(np.where(mu > 0, vals, 0.0), initial=0.0))
    return float(np.sum(mu * vals**p) ** (1.0 / p))


# ------------------------------------------------------------ inequalities

def _check_conjugate(exps: Sequence) -> None:
    exps = [np.asarray(e, dtype=float) for e in exps]
    if any(np.any(~(e > 0)) for e in exps):
        raise KernelError("exponents must be positive")
    if np.any(np.abs(sum(1.0 / e for e in exps) - 1.0) > 1e-12):
        raise KernelError("exponent constraint violated: reciprocals must sum to 1")


def young_check(a, b, p, q, rtol: float = 1e-12) -> bool | np.ndarray:
    """``a b <= a^p/p + b^q/q`` for ``1/p + 1/q = 1`` and ``a, b >= 0``.

    Arguments and exponents broadcast; the result is a bool or a bool array.
    """
    _check_conjugate((p, q))
    a, b = np.asarray(a, float), np.asarray(b, float)
    if np.any(a < 0) or np.any(b < 0):
        raise KernelError("arguments must be non-negative")
    with np.errstate(over="ignore"):  # an infinite right side satisfies the bound
        rhs = a**p / p + b**q / q
    ok = a * b <= rhs * (1.0 + rtol) + 1e-300
    return bool(ok) if ok.ndim == 0 else ok


def three_way_young_check(a, b, c, p, q, r, rtol: float = 1e-12) -> bool | np.ndarray:
    """``a b c <= a^p/p + b^q/q + c^r/r`` for ``1/p + 1/q + 1/r = 1`` (broadcasting)."""
    _check_conjugate((p, q, r))
    a, b, c = (np.asarray(v, float) for v in (a, b, c))
    if np.any(a < 0) or np.any(b < 0) or np.any(c < 0):
        raise KernelError("arguments must be non-negative")
    with np.errstate(over="ignore"):
        rhs = a**p / p + b**q / q + c**r / r
    ok = a * b * c <= rhs * (1.0 + rtol) + 1e-300
    return bool(ok) if ok.ndim == 0 else ok


@dataclass(frozen=True)
class SchurReport:
    n_instances: int
    schur_violations: int
    embedding_checks: int
    embedding_violations: int
    worst_schur_ratio: float
    worst_embedding_ratio: float

    @property
    def passed(self) -> bool:
        return self.schur_violations == 0 and self.embedding_violations == 0


def schur_bound(K: SampledKernel, F, p: float) -> tuple[float, float]:
    """``(||K(F)||_(p,v), ||K||_(A_(1,m_v)) ||F||_(p,v))``."""
    lhs = K.lpv_norm(K.apply(F), p)
    rhs = K.aq_norm(1.0) * K.lpv_norm(F, p)
    return lhs, rhs


def embedding_constant(K: SampledKernel, p: float, r: float, eps: float | None = None) -> float:
    """Bound for ``||K||_(L_(p,v) -> L_(r,v))`` with ``1 < p < r <= inf``.

    For finite ``r`` this is ``max(1, ||K||^(a alpha), ||K||^(c beta))`` with
    kernel norms taken in ``A_(a alpha, m_v)`` and ``A_(c beta, m_v)``, where
    ``alpha = r``, ``beta = p'``, ``a = 1/r + eps``, ``c = 1/r' - eps`` and
    ``0 < eps < 1/p - 1/r`` (default: the midpoint). The bound applies to
    inputs of unit ``L_(p,v)`` norm. For ``r = inf`` Hoelder's inequality
    gives the homogeneous constant ``||K||_(A_(p', m_v))``.
    """
    if not (1 < p < r):
        raise KernelError("need 1 < p < r")
    pp = p / (p - 1.0)
    if math.isinf(r):
        return K.aq_norm(pp)
    gap = 1.0 / p - 1.0 / r
    eps = 0.5 * gap if eps is None else float(eps)
    if not (0 < eps < gap):
        raise KernelError("eps must lie in (0, 1/p - 1/r)")
    rp = r / (r - 1.0)
    a_alpha = (1.0 / r + eps) * r
    c_beta = (1.0 / rp - eps) * pp
    return max(1.0, K.aq_norm(a_alpha) ** a_alpha, K.aq_norm(c_beta) ** c_beta)


def schur_bound_check(kernels: Sequence[SampledKernel], fields: Sequence[np.ndarray], p_values: Sequence[float],
                      r_pairs: Sequence[tuple[float, float]] = ((1.5, 2.0), (1.5, 3.0), (2.0, 4.0), (1.5, math.inf), (2.0, math.inf)),
                      rtol: float = 1e-10) -> SchurReport:
    """Check Schur's bound and the ``L_(p,v) -> L_(r,v)`` embedding bound.

    Every kernel is paired with the field of the same index. Schur's bound is
    checked for each ``p`` in ``p_values``; the embedding bound for each
    ``(p, r)`` in ``r_pairs`` after normalizing the field to unit
    ``L_(p,v)`` norm.
    """
    n_viol, e_viol, e_checks = 0, 0, 0
    worst_s, worst_e = 0.0, 0.0
    for K, F in zip(kernels, fields):
        for p in p_values:
            lhs, rhs = schur_bound(K, F, p)
            if rhs > 0:
                worst_s = max(worst_s, lhs / rhs)
            if lhs > rhs * (1 + rtol) + 1e-300:
                n_viol += 1
        for p, r in r_pairs:
            nrm = K.lpv_norm(F, p)
            if nrm == 0:
                continue
            G = np.asarray(F) / nrm
            lhs = K.lpv_norm(K.apply(G), r)
            C = embedding_constant(K, p, r)
            e_checks += 1
            worst_e = max(worst_e, lhs / C)
            if lhs > C * (1 + rtol):
                e_viol += 1
    return SchurReport(len(kernels), n_viol, e_checks, e_viol, worst_s, worst_e)


def random_sampled_kernel(rng: np.random.Generator, n: int, r: float = 1.0, rank: int | None = None) -> SampledKernel:
    """Random kernel on ``n`` points with random scales (weight ``v_r``) and measure."""
    alpha = np.where(rng.random(n) < 0.2, math.inf, 10.0 ** rng.uniform(-2, 0, n))
    v = v_r_array(alpha, r)
    mu = rng.uniform(0.0, 1.0, n) / n
    if rank is None:
        K = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        K = K * (rng.random((n, n)) < 0.5)
    else:
        U = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
        K = U @ U.conj().T
    return SampledKernel(K, mu, v)


# ------------------------------------------------------------ A_q estimates

BLOCKS = ("inf-inf", "inf-fine", "fine-inf", "fine-fine")


@dataclass
class KernelEstimate:
    """Truncated estimates of ``||R||_(A_(q, m_(v_r)))`` by block.

    ``blocks[name][k]`` is the block value at ``rho[k]``: the largest sampled
    ``(int |R m_v|^q d mu(y))^(1/q)`` over ``x`` in the first sheet with ``y``
    restricted to the second sheet. ``estimate[k]`` is the maximum over the
    computed blocks.
    """

    q: float
    r: float
    rho: list[float]
    blocks: dict[str, list[float]]
    alpha_samples: list[float] = field(default_factory=list)
    method: str = "plancherel"
    flags: tuple[str, ...] = ()

    @property
    def estimate(self) -> list[float]:
        return [max(vals[k] for vals in self.blocks.values()) for k in range(len(self.rho))]

    @property
    def complete(self) -> bool:
        return set(self.blocks) == set(BLOCKS)

    def rel_changes(self, values: Sequence[float]) -> list[float]:
        out = [math.nan]
        for prev, cur in zip(values[:-1], values[1:]):
            out.append(abs(cur - prev) / abs(prev) if prev != 0 else math.inf)
        return out

    def last_rel_change(self, block: str | None = None) -> float:
        vals = self.estimate if block is None else self.blocks[block]
        return self.rel_changes(vals)[-1]

    def rows(self) -> list[dict]:
        out = []
        for name, vals in list(self.blocks.items()) + [("estimate", self.estimate)]:
            for rho, val, ch in zip(self.rho, vals, self.rel_changes(vals)):
                out.append({"q": self.q, "r": self.r, "block": name, "rho": rho, "value": val, "rel_change": ch})
        return out


def write_estimates_csv(path, estimates: Iterable[KernelEstimate]) -> Path:
    """CSV with columns ``q, r, block, rho, value, rel_change``."""
    import io

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["q", "r", "block", "rho", "value", "rel_change"], lineterminator="\n")
    writer.writeheader()
    for est in estimates:
        for row in est.rows():
            writer.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})
    return atomic_write_text(path, buf.getvalue())


class _CrossTables:
    """Cumulative integrals ``Q_i(u) = int_(-b_i)^u q_i^2`` as cubic splines."""

    def __init__(self, pair: SpectralWindowPair, n: int = 4097):
        self.b = np.asarray(pair.params.b)
        self.splines = []
        self.norms = []
        for i, bi in enumerate(self.b):
            u = np.linspace(-bi, bi, n)
            x, w = _gl(48)
            # cumulative integral panel by panel with Gauss-Legendre
            lo, hi = u[:-1], u[1:]
            nodes = lo[:, None] + 0.5 * (hi - lo)[:, None] * (x[None, :] + 1.0)
            panel = (pair.psi.psi2_factor(nodes, i) ** 2 @ w) * 0.5 * (hi - lo)
            cum = np.concatenate([[0.0], np.cumsum(panel)])
            self.splines.append(CubicSpline(u, cum))
            self.norms.append(float(cum[-1]))

    def Q(self, i: int, u) -> np.ndarray:
        bi = self.b[i]
        u = np.clip(np.asarray(u, dtype=float), -bi, bi)
        return self.splines[i](u)


def _plancherel_block_integral(pair: SpectralWindowPair, tables: _CrossTables, wa: str, wb: str, scale: float,
                               rho: float, panels: int = 16, nodes: int = 24, eta_nodes: int = 64) -> float:
    """``int_(|s_i| <= rho) int |<A, B_(scale, s, t)>|^2 dt ds`` with ``A`` at the identity.

    The translation integral is removed by Plancherel and the shear integral
    per axis by the cumulative tables.
    """
    d = pair.d
    A = Atom(pair, wa, 1.0, np.zeros(d - 1), np.zeros(d))
    B = Atom(pair, wb, scale, np.zeros(d - 1), np.zeros(d))
    pieces = [iv for iv in _intersect(A.xi1_intervals(), B.xi1_intervals()) if iv[1] > 0]
    pieces = [(max(lo, 0.0), hi) for lo, hi in pieces]
    if not pieces:
        return 0.0
    xs, ws = [], []
    for lo, hi in pieces:
        for k in range(panels):
            x, w = _gl_on(lo + (hi - lo) * k / panels, lo + (hi - lo) * (k + 1) / panels, nodes)
            xs.append(x)
            ws.append(w)
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    vals = (A.radial(x) * B.radial(x)) ** 2
    r = B.r
    for i in range(d - 1):
        bi = tables.b[i]
        eta, we = _gl_on(-bi, bi, eta_nodes)
        qa = pair.psi.psi2_factor(eta, i) ** 2
        if math.isinf(rho):
            H = tables.norms[i] * float(qa @ we) / (r * x)
        else:
            up = tables.Q(i, r * (eta[None, :] + x[:, None] * rho))
            dn = tables.Q(i, r * (eta[None, :] - x[:, None] * rho))
            H = ((up - dn) * qa[None, :]) @ we / (r * x)
        vals = vals * H
    return float(2.0 * (A.amplitude * B.amplitude) ** 2 * np.sum(w * vals))


def _fft_t_integral(pair: SpectralWindowPair, wa: str, wb: str, scale: float, s: np.ndarray, q: float, n_k: int) -> float:
    """``int |<A, B_(scale, s, t)>|^q dt`` from a dedicated FFT lattice on the product support."""
    d = pair.d
    A = Atom(pair, wa, 1.0, np.zeros(d - 1), np.zeros(d))
    B = Atom(pair, wb, scale, s, np.zeros(d))
    hA, hB = A.half_widths(), B.half_widths()
    cut = math.inf
    for i in range(d - 1):
        if s[i] != 0:
            cut = min(cut, (hA[i] + hB[i]) / abs(s[i]))
    pieces = _intersect(_intersect(A.xi1_intervals(), B.xi1_intervals()), [(-cut, cut)])
    if not pieces:
        return 0.0
    c1 = max(max(abs(lo), abs(hi)) for lo, hi in pieces)
    halves = [c1] + list(hA)
    axes = [(-h + (np.arange(n_k) + 0.5) * (2 * h / n_k)) for h in halves]
    mesh = np.meshgrid(*axes, indexing="ij", sparse=True)
    prod = A.amplitude * B.amplitude * A.radial(mesh[0]) * B.radial(mesh[0])
    for i in range(d - 1):
        prod = prod * A.cross(i, mesh[i + 1]) * B.cross(i, mesh[i + 1] + mesh[0] * s[i])
    steps = [2 * h / n_k for h in halves]
    dvol = float(np.prod(steps))
    f = np.fft.ifftn(np.broadcast_to(prod, (n_k,) * d)) * (n_k**d * dvol)
    dt_vol = float(np.prod([1.0 / (n_k * st) for st in steps]))
    return float(np.sum(np.abs(f) ** q) * dt_vol)


def _shear_nodes(rho_max: float, schedule: Sequence[float], n: int) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Nonnegative shear nodes with Gauss-Legendre weights on doubling panels."""
    edges = {0.0, *schedule}
    e = min(0.25, min(schedule))
    while e < rho_max:
        edges.add(e)
        e *= 2
    edges = sorted(x for x in edges if x <= rho_max)
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = _gl_on(lo, hi, n)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws), edges


def aq_norm_estimate(pair: SpectralWindowPair, q: float, r: float, rho_schedule: Sequence[float] = (1.0, 2.0, 4.0, 8.0),
                     **kwargs) -> KernelEstimate:
    """Estimate ``||R||_(A_(q, m_(v_r)))``; see :func:`aq_norm_estimates`."""
    return aq_norm_estimates(pair, q, [r], rho_schedule, **kwargs)[0]


def aq_norm_estimates(pair: SpectralWindowPair, q: float, r_values: Sequence[float], rho_schedule: Sequence[float] = (1.0, 2.0, 4.0, 8.0),
                     alpha_samples: int | Sequence[float] = 48, blocks: Sequence[str] | None = None,
                     method: str = "auto", n_k: int = 32, shear_nodes: int = 6, scale_nodes: int = 12,
                     workers: int = 1) -> list[KernelEstimate]:
    """Estimate ``||R||_(A_(q, m_(v_r)))`` block by block along a shear truncation schedule.

    One estimate is returned per entry of ``r_values``; the block integrals do
    not depend on ``r`` and are computed once.

    Left invariance of ``mu`` and covariance of ``R`` reduce every block
    integral to one over the composed parameter ``(a', s', t')``; with the
    weight ``v_r`` the integrand then depends on ``x`` only through its scale
    ``alpha``, so the essential supremum is a maximum over sampled ``alpha``.
    ``m_v(alpha, alpha a') = max(|a'|^r, |a'|^-r)`` and ``m_v(alpha, inf) = |alpha|^-r``.

    ``method="plancherel"`` (``q = 2`` only) integrates translations by
    Plancherel and shears in closed form per axis. ``method="fft"`` handles any
    ``q >= 1``: translation integrals on a dedicated FFT lattice of ``n_k``
    points per axis, shear integrals by Gauss-Legendre panels on
    ``[0, rho]`` (reflection symmetric). ``q = 1`` is a diagnostic; the
    estimate carries the flag ``diagnostic-q1``.
    """
    if not (q >= 1):
        raise KernelError("q must be >= 1")
    if any(r < 0 for r in r_values):
        raise KernelError("r must be non-negative")
    rho = [float(x) for x in rho_schedule]
    if not rho or any(x <= 0 for x in rho) or sorted(rho) != rho:
        raise KernelError("rho schedule must be positive and increasing")
    blocks = list(BLOCKS) if blocks is None else list(blocks)
    for b in blocks:
        if b not in BLOCKS:
            raise KernelError(f"unknown block {b!r}")
    if method == "auto":
        method = "plancherel" if q == 2 else "fft"
    if method == "plancherel" and q != 2:
        raise KernelError("the Plancherel route needs q = 2")
    p = pair.params
    d = pair.d
    lo_a, hi_a = p.a0 / p.a1, p.a1 / p.a0
    if np.ndim(alpha_samples) == 0:
        alphas = np.geomspace(lo_a / 2.0, 1.0, int(alpha_samples))
    else:
        alphas = np.sort(np.abs(np.asarray(alpha_samples, dtype=float)))
    # scale panels in log a' over the support, with breaks at 1/alpha
    breaks = np.log(np.concatenate([np.geomspace(lo_a, hi_a, 9), 1.0 / alphas[(1 / alphas > lo_a) & (1 / alphas < hi_a)], [1.0]]))
    breaks = np.unique(np.clip(breaks, math.log(lo_a), math.log(hi_a)))
    u_nodes, u_w, u_panel = [], [], []
    for k, (u0, u1) in enumerate(zip(breaks[:-1], breaks[1:])):
        x, w = _gl_on(u0, u1, scale_nodes)
        u_nodes.append(x)
        u_w.append(w)
        u_panel.append(np.full(x.size, k))
    a_nodes = np.exp(np.concatenate(u_nodes))
    # measure da/|a|^(d+1) on both signs, in log a: 2 e^(-d u) du
    a_w = 2.0 * np.concatenate(u_w) * a_nodes ** (-d)

    need = {
        "inf-inf": [("phi", "phi", 1.0)],
        "inf-fine": [("phi", "psi", a) for a in a_nodes[a_nodes <= 1.0]],
        "fine-inf": [("phi", "psi", float(a)) for a in alphas if a >= lo_a],
        "fine-fine": [("psi", "psi", float(a)) for a in a_nodes],
    }
    jobs = []
    for b in blocks:
        for job in need[b]:
            if job not in jobs:
                jobs.append(job)

    if method == "plancherel":
        tables = _CrossTables(pair)

        def run(job):
            wa, wb, a = job
            return [_plancherel_block_integral(pair, tables, wa, wb, a, rr) for rr in rho]
    else:
        s_x, s_w, _ = _shear_nodes(rho[-1], rho, shear_nodes)
        grids = np.meshgrid(*([s_x] * (d - 1)), indexing="ij")
        s_all = np.stack([g.reshape(-1) for g in grids], axis=1)
        w_all = np.ones(s_all.shape[0])
        for g in np.meshgrid(*([s_w] * (d - 1)), indexing="ij"):
            w_all = w_all * g.reshape(-1)
        w_all = w_all * 2.0 ** (d - 1)
        smax = np.max(s_all, axis=1)

        def run(job):
            wa, wb, a = job
            vals = np.array([_fft_t_integral(pair, wa, wb, a, s, q, n_k) for s in s_all])
            return [float(np.sum((w_all * vals)[smax <= rr + 1e-12])) for rr in rho]

    results = dict(zip(jobs, pmap(run, jobs, workers)))
    flags = ("diagnostic-q1",) if q == 1 else ()
    return [KernelEstimate(float(q), float(r), rho, _assemble(results, blocks, rho, q, float(r), alphas, a_nodes, a_w, lo_a),
                           [float(a) for a in alphas], method, flags) for r in r_values]


def _assemble(results, blocks, rho, q, r, alphas, a_nodes, a_w, lo_a) -> dict[str, list[float]]:
    out: dict[str, list[float]] = {}
    for b in blocks:
        vals = []
        for k in range(len(rho)):
            if b == "inf-inf":
                total = results[("phi", "phi", 1.0)][k]
            elif b == "inf-fine":
                sel = a_nodes <= 1.0
                terms = [w * a ** (-q * r) * results[("phi", "psi", a)][k] for a, w in zip(a_nodes[sel], a_w[sel])]
                total = math.fsum(terms)
            elif b == "fine-inf":
                total = max([a ** (-q * r) * results[("phi", "psi", float(a))][k] for a in alphas if a >= lo_a], default=0.0)
            else:
                weights = np.maximum(a_nodes, 1.0 / a_nodes) ** (q * r)
                per = np.array([results[("psi", "psi", float(a))][k] for a in a_nodes]) * a_w * weights
                total = max(math.fsum(per[a_nodes <= 1.0 / al + 1e-12]) for al in alphas)
            vals.append(float(total) ** (1.0 / q))
        out[b] = vals
    return out
