"""Band-limited shearlet window ``Psi_hat`` and coarse window ``Phi_hat``.

The shearlet window is a tensor product ``psi1(xi_1) * psi2(xi_2..xi_d)``:

* ``psi1(x) = |x|^(d/2) * exp(c / ((|x|-a0)(|x|-a1)))`` for ``a0 < |x| < a1``
  and 0 otherwise, with ``c = ((a1-a0)/2)**2``. For ``(a0, a1) = (1, 3)``
  this is ``exp(1/((x-1)(x-3)))``; for other bands ``c`` keeps the bump shape
  (exponent ``-1`` at the band center) instead of letting it collapse.
* ``psi2(u) = prod_i exp(1/((u_i/b_i)^2 - 1))`` on the box ``Q_b``.

The coarse window is ``Phi_hat(xi) = xi_1^((d-1)/2) * |psi2(xi~)| * phi1(xi_1)``
with ``phi1(x)^2 = 2 * int_{max(|x|,a0)}^{a1} psi1(w)^2 / w^d dw``. For odd
``d`` the factor ``xi_1^((d-1)/2)`` is a monomial, which keeps ``Phi_hat``
smooth at ``xi_1 = 0``; its parity in ``xi_1`` is ``(-1)^((d-1)/2)``.

Since ``psi1(w)^2 / w^d = exp(2c/((w-a0)(w-a1)))`` the tail integral is
evaluated directly by Gauss-Legendre quadrature, which is accurate to about
1e-14 and smooth in ``x``. A dense table of ``phi1`` on ``[0, a1]`` is kept
for file round trips, monotone cubic interpolation and derivative probes.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from ._io import atomic_write_text

TABLE_SIZE = 8192
QUAD_TOL = 1e-10
PAIR_FORMAT = "SHCOPAIR1"

_GL_TAIL = np.polynomial.legendre.leggauss(96)


class WindowError(ValueError):
    """Invalid window parameters or a degenerate window."""


class QuadratureError(RuntimeError):
    """A 1-D quadrature did not reach the requested tolerance."""


@dataclass(frozen=True)
class WindowParams:
    """Support parameters of the window pair.

    Parameters
    ----------
    d : int
        Odd space dimension.
    a0, a1 : float
        Band edges of ``psi1``, ``0 < a0 < a1``.
    b : tuple of float
        Half widths of the cross box ``Q_b`` (``d - 1`` entries); a scalar is
        broadcast. Defaults to all ones.
    """

    d: int = 3
    a0: float = 1.0
    a1: float = 3.0
    b: tuple[float, ...] | float | None = None

    def __post_init__(self):
        d = int(self.d)
        if d < 3 or d % 2 == 0:
            raise WindowError("odd dimension required (d odd and >= 3)")
        a0, a1 = float(self.a0), float(self.a1)
        if not (0 < a0 < a1):
            raise WindowError(f"band edges must satisfy 0 < a0 < a1, got ({a0}, {a1})")
        if self.b is None:
            b = (1.0,) * (d - 1)
        elif np.ndim(self.b) == 0:
            b = (float(self.b),) * (d - 1)
        else:
            b = tuple(float(v) for v in self.b)
        if len(b) != d - 1 or any(not (v > 0) for v in b):
            raise WindowError(f"b must hold {d - 1} positive half widths, got {b}")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "a0", a0)
        object.__setattr__(self, "a1", a1)
        object.__setattr__(self, "b", b)

    @property
    def sharpness(self) -> float:
        """Exponent numerator ``c = ((a1 - a0)/2)**2``."""
        return ((self.a1 - self.a0) / 2.0) ** 2

    def to_dict(self) -> dict:
        return {"d": self.d, "a0": self.a0, "a1": self.a1, "b": list(self.b)}


def _bump(u):
    """``exp(1/(u^2-1))`` on ``|u| < 1``, 0 elsewhere."""
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(1.0 / (ui * ui - 1.0))
    return out


@dataclass(frozen=True)
class PsiHat:
    """The shearlet window ``scale1*psi1 (x) scale2*psi2`` (real, even)."""

    params: WindowParams
    scale1: float = 1.0
    scale2: float = 1.0

    @property
    def d(self) -> int:
        return self.params.d

    def band_core(self, x):
        """``exp(c/((|x|-a0)(|x|-a1)))`` inside the band, 0 outside."""
        p = self.params
        ax = np.abs(np.asarray(x, dtype=float))
        out = np.zeros(ax.shape)
        inside = (ax > p.a0) & (ax < p.a1)
        xi = ax[inside]
        out[inside] = np.exp(p.sharpness / ((xi - p.a0) * (xi - p.a1)))
        return out

    def psi1(self, x):
        ax = np.abs(np.asarray(x, dtype=float))
        return self.scale1 * ax ** (self.d / 2.0) * self.band_core(ax)

    def psi2_factor(self, u, axis: int):
        """Unscaled cross factor ``exp(1/((u/b_i)^2-1))`` of one axis."""
        return _bump(np.asarray(u, dtype=float) / self.params.b[axis])

    def psi2(self, xt):
        """``psi2`` at points with the ``d-1`` cross coordinates in the last axis."""
        xt = np.asarray(xt, dtype=float)
        out = np.full(xt.shape[:-1], float(self.scale2))
        for i in range(self.d - 1):
            out = out * self.psi2_factor(xt[..., i], i)
        return out

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        return self.psi1(xi[..., 0]) * self.psi2(xi[..., 1:])

    def scaled(self, factor1: float = 1.0, factor2: float = 1.0) -> "PsiHat":
        return PsiHat(self.params, self.scale1 * factor1, self.scale2 * factor2)


def _tail_integral(psi: PsiHat, y) -> np.ndarray:
    """``int_y^{a1} band_core(w)^2 dw`` for ``y >= a0`` (vectorized, unscaled)."""
    p = psi.params
    y = np.atleast_1d(np.asarray(y, dtype=float))
    lo = np.clip(y, p.a0, p.a1)
    nodes, weights = _GL_TAIL
    half = 0.5 * (p.a1 - lo)[:, None]
    w = lo[:, None] + half * (nodes[None, :] + 1.0)
    vals = psi.band_core(w) ** 2
    return np.sum(vals * weights[None, :] * half, axis=1)


def build_psi_hat(params: WindowParams) -> PsiHat:
    """Unnormalized shearlet window for ``params``."""
    return PsiHat(params)


@dataclass(frozen=True)
class SpectralWindowPair:
    """The pair ``(Phi_hat, Psi_hat)`` with the dense ``phi1`` table.

    Attributes
    ----------
    psi : PsiHat
        Shearlet window, including its amplitude factors.
    phi1_table : ndarray
        ``phi1`` sampled at ``TABLE_SIZE`` equispaced points of ``[0, a1]``.
    c_psi : float
        Admissibility constant ``int |Psi_hat|^2 / |xi_1|^d``.
    """

    psi: PsiHat
    phi1_table: np.ndarray = field(repr=False)
    c_psi: float

    @property
    def params(self) -> WindowParams:
        return self.psi.params

    @property
    def d(self) -> int:
        return self.psi.d

    @property
    def table_step(self) -> float:
        return self.params.a1 / (len(self.phi1_table) - 1)

    def phi1(self, x):
        """``phi1`` by direct quadrature of the tail integral."""
        x = np.asarray(x, dtype=float)
        ax = np.abs(x).reshape(-1)
        out = np.zeros(ax.shape)
        inside = ax < self.params.a1
        if np.any(inside):
            vals, inverse = np.unique(np.maximum(ax[inside], self.params.a0), return_inverse=True)
            tail = _tail_integral(self.psi, vals)
            out[inside] = (abs(self.psi.scale1) * np.sqrt(2.0 * tail))[inverse]
        return out.reshape(x.shape)

    @cached_property
    def _interp(self) -> PchipInterpolator:
        xs = np.linspace(0.0, self.params.a1, len(self.phi1_table))
        return PchipInterpolator(xs, self.phi1_table, extrapolate=False)

    def phi1_interp(self, x):
        """``phi1`` by monotone cubic interpolation of the dense table."""
        ax = np.abs(np.asarray(x, dtype=float))
        out = self._interp(np.minimum(ax, self.params.a1))
        return np.where(ax >= self.params.a1, 0.0, out)

    def phi_profile(self, x):
        """``x^((d-1)/2) * phi1(x)``, the ``xi_1`` factor of ``Phi_hat``."""
        x = np.asarray(x, dtype=float)
        return x ** ((self.d - 1) // 2) * self.phi1(x)

    def psi_hat(self, xi):
        return self.psi(xi)

    def phi_hat(self, xi):
        xi = np.asarray(xi, dtype=float)
        return self.phi_profile(xi[..., 0]) * np.abs(self.psi.psi2(xi[..., 1:]))

    # ---- separable evaluation on open meshes -------------------------------

    def psi_hat_transformed(self, a: float, s, mesh: Sequence[np.ndarray]) -> np.ndarray:
        """``Psi_hat(A_a S_s^T xi)`` on an open mesh (one array per axis)."""
        d = self.d
        s = np.asarray(s, dtype=float).reshape(d - 1)
        root = math.copysign(abs(a) ** (1.0 / d), a)
        out = self.psi.scale2 * self.psi.psi1(a * mesh[0])
        for i in range(d - 1):
            out = out * self.psi.psi2_factor(root * (mesh[i + 1] + mesh[0] * s[i]), i)
        return out

    def phi_hat_transformed(self, a: float, s, mesh: Sequence[np.ndarray]) -> np.ndarray:
        """``Phi_hat(A_a S_s^T xi)``; ``a = 1`` gives ``Phi_hat(S_s^T xi)``."""
        d = self.d
        s = np.asarray(s, dtype=float).reshape(d - 1)
        root = math.copysign(abs(a) ** (1.0 / d), a)
        out = abs(self.psi.scale2) * self.phi_profile(a * mesh[0])
        for i in range(d - 1):
            out = out * self.psi.psi2_factor(root * (mesh[i + 1] + mesh[0] * s[i]), i)
        return out

    def norm_sq(self, window: str = "psi") -> float:
        """Continuum ``||Psi||_2^2`` (or ``||Phi||_2^2``) by 1-D quadrature."""
        cross = cross_norm_sq(self.psi)
        if window == "psi":
            g = lambda x: self.psi.psi1(x) ** 2
            val = 2.0 * _quad(g, self.params.a0, self.params.a1)
        elif window == "phi":
            g = lambda x: float(self.phi_profile(x)) ** 2
            val = 2.0 * _quad(g, 0.0, self.params.a1, points=[self.params.a0])
        else:
            raise ValueError(f"unknown window {window!r}")
        return val * cross


def _quad(func, lo, hi, points=None) -> float:
    val, err = integrate.quad(
        lambda x: float(func(x)), lo, hi, epsabs=QUAD_TOL, epsrel=1e-12, limit=200,
        points=points,
    )
    if not np.isfinite(val) or err > max(QUAD_TOL, 1e-9 * abs(val)):
        raise QuadratureError(f"quadrature did not converge on [{lo}, {hi}] (err={err:g})")
    return val


def cross_norm_sq(psi: PsiHat) -> float:
    """``int_{Q_b} psi2^2`` as a product of 1-D adaptive quadratures."""
    total = psi.scale2**2
    for i, bi in enumerate(psi.params.b):
        total *= _quad(lambda u, i=i: psi.psi2_factor(u, i) ** 2, -bi, bi)
    return float(total)


def admissibility_constant(psi: PsiHat, d: int | None = None) -> float:
    """``c_psi = int |Psi_hat|^2 / |xi_1|^d`` as a product of two factors.

    Both factors are computed by adaptive quadrature (tolerance 1e-10). A zero
    window gives 0.
    """
    d = psi.d if d is None else int(d)
    p = psi.params
    if psi.scale1 == 0 or psi.scale2 == 0:
        return 0.0

    def radial(x):
        return psi.psi1(x) ** 2 / abs(x) ** d

    head = 2.0 * _quad(radial, p.a0, p.a1)
    return float(head * cross_norm_sq(psi))


def build_phi_hat(psi: PsiHat, params: WindowParams | None = None) -> SpectralWindowPair:
    """Coarse window belonging to ``psi``, with its dense ``phi1`` table."""
    if params is not None and params != psi.params:
        raise WindowError("params do not match the shearlet window")
    xs = np.linspace(0.0, psi.params.a1, TABLE_SIZE)
    scratch = SpectralWindowPair(psi, np.zeros(TABLE_SIZE), 0.0)
    table = scratch.phi1(xs)
    table[-1] = 0.0
    table.setflags(write=False)
    return SpectralWindowPair(psi, table, admissibility_constant(psi))


def normalize_pair(pair: SpectralWindowPair) -> SpectralWindowPair:
    """Rescale to ``||psi2||_2 = 1`` and ``int psi1^2/|w|^d = 1`` and rebuild.

    The result satisfies the Calderon condition with value 1 and does not
    depend on the input amplitudes.
    """
    psi = pair.psi
    if psi.scale1 == 0 or psi.scale2 == 0:
        raise WindowError("cannot normalize a zero window")
    p = psi.params
    head = 2.0 * _quad(lambda x: psi.psi1(x) ** 2 / abs(x) ** p.d, p.a0, p.a1)
    cross = cross_norm_sq(psi)
    s1 = abs(psi.scale1) / math.sqrt(head)
    s2 = abs(psi.scale2) / math.sqrt(cross)
    return build_phi_hat(PsiHat(p, s1, s2))


def default_pair(params: WindowParams | None = None) -> SpectralWindowPair:
    """Normalized pair for ``params`` (defaults: ``d=3, a0=1, a1=3, b=1``)."""
    params = WindowParams() if params is None else params
    return normalize_pair(build_phi_hat(build_psi_hat(params)))


# ------------------------------------------------------------ Calderon check

@dataclass(frozen=True)
class CalderonReport:
    y: np.ndarray
    coarse_term: np.ndarray
    fine_term: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.coarse_term + self.fine_term

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.total - 1.0)))

    @property
    def stdev(self) -> float:
        return float(np.std(self.total))


def calderon_check(pair: SpectralWindowPair, y_samples, sigma_quadrature: int = 128) -> CalderonReport:
    """Evaluate the Calderon sum at each sample ``y``.

    The sum is ``int_{Q_b} |Phi_hat(y, s)|^2 ds / |y|^(d-1)`` plus
    ``int_{|xi_1|<|y|} int_{Q_b} |Psi_hat|^2 / |xi_1|^d``. Cross integrals use
    ``sigma_quadrature`` Gauss-Legendre nodes per axis on ``[-b_i, b_i]``; the
    ``xi_1`` integral uses the same rule on ``[a0, min(|y|, a1)]``.
    Use :attr:`CalderonReport.max_deviation` for the acceptance number.
    """
    y = np.asarray(y_samples, dtype=float).reshape(-1)
    if np.any(y == 0):
        raise WindowError("y = 0 is not an admissible sample")
    psi = pair.psi
    p = pair.params
    d = p.d
    nodes, weights = np.polynomial.legendre.leggauss(int(sigma_quadrature))
    cross = psi.scale2**2
    for i, bi in enumerate(p.b):
        u = bi * nodes
        cross *= float(np.sum(weights * bi * psi.psi2_factor(u, i) ** 2))
    coarse = pair.phi_profile(np.abs(y)) ** 2 / np.abs(y) ** (d - 1) * cross
    top = np.clip(np.abs(y), p.a0, p.a1)
    half = 0.5 * (top - p.a0)[:, None]
    w = p.a0 + half * (nodes[None, :] + 1.0)
    radial = psi.psi1(w) ** 2 / w**d
    fine = 2.0 * np.sum(radial * weights[None, :] * half, axis=1) * cross
    return CalderonReport(y, coarse, fine)


# ------------------------------------------------------------ support boxes

@dataclass(frozen=True)
class SupportBoxes:
    """Parameter sets outside which window products vanish.

    ``a_band_psi``: scales where ``Psi_hat * Psi_hat(A_a S_s^T .)`` can be
    nonzero (together with ``|s_i| <= d1_i``); ``a_band_phi``: the same for
    ``Phi_hat * Psi_hat(A_a S_s^T .)`` with ``|a| <= 1`` and ``|s_i| <= d2_i``.
    """

    params: WindowParams
    a_band_psi: tuple[float, float]
    a_band_phi: tuple[float, float]
    d1: np.ndarray
    d2: np.ndarray

    def psi_psi_possible(self, a: float, s) -> bool:
        lo, hi = self.a_band_psi
        s = np.abs(np.asarray(s, dtype=float))
        return bool(lo <= abs(a) <= hi and np.all(s <= self.d1))

    def phi_psi_possible(self, a: float, s) -> bool:
        lo, hi = self.a_band_phi
        s = np.abs(np.asarray(s, dtype=float))
        return bool(lo <= abs(a) <= hi and np.all(s <= self.d2))

    def omega_contains(self, s, x) -> np.ndarray:
        """Membership in the clipped box containing ``supp Phi_hat Phi_hat(S_s^T .)``."""
        p = self.params
        s = np.asarray(s, dtype=float)
        x = np.asarray(x, dtype=float)
        ok = np.abs(x[..., 0]) <= p.a1
        for i, bi in enumerate(p.b):
            lo = np.maximum(-bi, -bi - s[i] * x[..., 0])
            hi = np.minimum(bi, bi - s[i] * x[..., 0])
            ok = ok & (x[..., i + 1] >= lo) & (x[..., i + 1] <= hi)
        return ok


def support_boxes(params: WindowParams) -> SupportBoxes:
    p = params
    radius = (1.0 / p.a0 + p.a0 ** (-(1.0 + 1.0 / p.d)) * p.a1 ** (1.0 / p.d)) * np.asarray(p.b)
    radius.setflags(write=False)
    return SupportBoxes(
        params=p,
        a_band_psi=(p.a0 / p.a1, p.a1 / p.a0),
        a_band_phi=(p.a0 / p.a1, 1.0),
        d1=radius,
        d2=radius.copy(),
    )


@dataclass(frozen=True)
class SupportScan:
    max_leak: float
    n_out_of_box: int
    control_max: float
    n_in_box: int


def support_violation_scan(pair: SpectralWindowPair, boxes: SupportBoxes, a_samples, s_samples, grid) -> SupportScan:
    """Largest window product over the lattice for ``(a, s)`` outside the boxes.

    Every combination of ``a_samples`` and ``s_samples`` is visited. Products
    ``Psi_hat * Psi_hat(A_a S_s^T .)`` are tested against the ``Psi``/``Psi``
    box; for ``|a| <= 1`` the product ``Phi_hat * Psi_hat(A_a S_s^T .)`` is
    tested against the ``Phi``/``Psi`` box. In-box combinations feed the
    positive control ``control_max``.
    """
    from .grid import spectral_mesh

    mesh = spectral_mesh(grid)
    d = grid.d
    base_psi = pair.psi_hat_transformed(1.0, np.zeros(d - 1), mesh)
    base_phi = pair.phi_hat_transformed(1.0, np.zeros(d - 1), mesh)
    leak, control = 0.0, 0.0
    n_out, n_in = 0, 0
    for a in np.asarray(a_samples, dtype=float).reshape(-1):
        for s in np.asarray(s_samples, dtype=float).reshape(-1, d - 1):
            moved = pair.psi_hat_transformed(a, s, mesh)
            val = float(np.max(np.abs(base_psi * moved)))
            if boxes.psi_psi_possible(a, s):
                control = max(control, val)
                n_in += 1
            else:
                leak = max(leak, val)
                n_out += 1
            if abs(a) <= 1.0:
                val = float(np.max(np.abs(base_phi * moved)))
                if boxes.phi_psi_possible(a, s):
                    control = max(control, val)
                    n_in += 1
                else:
                    leak = max(leak, val)
                    n_out += 1
    return SupportScan(leak, n_out, control, n_in)


# ------------------------------------------------------------ smoothness

_STENCILS = {
    0: (np.array([0]), np.array([1.0]), 0),
    1: (np.array([-1, 1]), np.array([-0.5, 0.5]), 1),
    2: (np.array([-1, 0, 1]), np.array([1.0, -2.0, 1.0]), 2),
    3: (np.array([-2, -1, 1, 2]), np.array([-0.5, 1.0, -1.0, 0.5]), 3),
}


@dataclass(frozen=True)
class SmoothnessTable:
    """``|D^n phi1|`` at ``a1 - h`` and ``a0 + h`` (rows: h, columns: n)."""

    h: np.ndarray
    near_a1: np.ndarray
    near_a0: np.ndarray

    def monotone_a1(self) -> np.ndarray:
        """Per order: strictly decreasing along the h sequence."""
        return np.all(np.diff(self.near_a1, axis=0) < 0, axis=0)

    def decay_ratio_a1(self) -> np.ndarray:
        """Per order: last value divided by the first."""
        return self.near_a1[-1] / self.near_a1[0]

    def passes(self, ratio_limit: float = 1e-3) -> bool:
        return bool(np.all(self.monotone_a1()) and np.all(self.decay_ratio_a1() <= ratio_limit))


def smoothness_probe(pair: SpectralWindowPair, max_order: int = 3, h_sequence=(0.2, 0.1, 0.05, 0.025)) -> SmoothnessTable:
    """Central finite differences of the dense ``phi1`` table near the band edges.

    The stencil step is the table resolution; each probe point is snapped to
    the nearest table node.
    """
    if not 0 <= max_order <= 3:
        raise WindowError("max_order must be in 0..3")
    table = np.asarray(pair.phi1_table, dtype=float)
    step = pair.table_step
    p = pair.params
    h = np.asarray(h_sequence, dtype=float)
    if np.any(h < 4 * step):
        raise WindowError(f"h below profile resolution ({4 * step:g})")
    near_a1 = np.zeros((h.size, max_order + 1))
    near_a0 = np.zeros((h.size, max_order + 1))
    for row, hv in enumerate(h):
        for target, out in ((p.a1 - hv, near_a1), (p.a0 + hv, near_a0)):
            idx = int(round(target / step))
            for order in range(max_order + 1):
                offs, coef, power = _STENCILS[order]
                pos = idx + offs
                if pos.min() < 0 or pos.max() >= table.size:
                    raise WindowError("probe point too close to the table edge")
                out[row, order] = abs(float(np.dot(coef, table[pos]))) / step**power
    return SmoothnessTable(h, near_a1, near_a0)


# ------------------------------------------------------------ PAIR files

def pair_to_dict(pair: SpectralWindowPair) -> dict:
    table = np.ascontiguousarray(pair.phi1_table, dtype="<f8")
    return {
        "format": PAIR_FORMAT,
        "params": pair.params.to_dict(),
        "psi1_scale": float(pair.psi.scale1),
        "psi2_scale": float(pair.psi.scale2),
        "c_psi": float(pair.c_psi),
        "phi1_table": {
            "n": int(table.size),
            "x_max": float(pair.params.a1),
            "dtype": "f64-le",
            "data": base64.b64encode(table.tobytes()).decode("ascii"),
        },
    }


def pair_from_dict(data: dict) -> SpectralWindowPair:
    if data.get("format") != PAIR_FORMAT:
        raise WindowError("not a window pair file")
    prm = data["params"]
    params = WindowParams(prm["d"], prm["a0"], prm["a1"], tuple(prm["b"]))
    tab = data["phi1_table"]
    if tab.get("dtype") != "f64-le":
        raise WindowError(f"unsupported table dtype {tab.get('dtype')!r}")
    table = np.frombuffer(base64.b64decode(tab["data"]), dtype="<f8").astype(float)
    if table.size != int(tab["n"]):
        raise WindowError("phi1 table size mismatch")
    table.setflags(write=False)
    psi = PsiHat(params, float(data["psi1_scale"]), float(data["psi2_scale"]))
    return SpectralWindowPair(psi, table, float(data["c_psi"]))


def write_pair(path, pair: SpectralWindowPair) -> Path:
    return atomic_write_text(path, json.dumps(pair_to_dict(pair), sort_keys=True, indent=1))


def read_pair(path) -> SpectralWindowPair:
    return pair_from_dict(json.loads(Path(path).read_text()))
