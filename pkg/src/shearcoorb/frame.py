"""Scaling and shear matrices, the three operators, frame elements, group law.

``A_a = diag(a, sgn(a)|a|^(1/d) I)`` and ``S_s`` is unipotent upper
triangular with first row ``(1, s^T)``. Frame elements are generated in the
frequency domain:

* coarse ``(inf, s, t)``: ``Phi_hat(S_s^T xi) exp(-2 pi i xi.t)``
* fine ``(a, s, t)``: ``|a|^((2-1/d)/2) Psi_hat(A_a S_s^T xi) exp(-2 pi i xi.t)``

where ``A_a S_s^T xi = (a xi_1, sgn(a)|a|^(1/d) (xi~ + xi_1 s))``.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .grid import GridSpec, spectral_mesh
from .paramspace import ParamPoint
from .windows import SpectralWindowPair


class NyquistError(ValueError):
    """A dilated window band does not fit inside the spectral lattice."""


def signed_root(a: float, d: int) -> float:
    """Real ``d``-th root ``sgn(a)|a|^(1/d)``."""
    return math.copysign(abs(a) ** (1.0 / d), a)


def matrix_A(a: float, d: int) -> np.ndarray:
    if a == 0:
        raise ValueError("scale a must be nonzero")
    diag = np.full(d, signed_root(a, d))
    diag[0] = a
    return np.diag(diag)


def matrix_S(s) -> np.ndarray:
    s = np.asarray(s, dtype=float).reshape(-1)
    m = np.eye(s.size + 1)
    m[0, 1:] = s
    return m


def scaling_det(a: float, d: int) -> float:
    """``|det A_a| = |a|^(2-1/d)``."""
    if a == 0:
        raise ValueError("scale a must be nonzero")
    return abs(a) ** (2.0 - 1.0 / d)


def _apply_matrix(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.einsum("ij,...j->...i", m, x)


# -------------------------------------------------- operators on callables

def apply_translate(f: Callable, t) -> Callable:
    """``(T_t f)(x) = f(x - t)`` for a callable on points ``(..., d)``."""
    t = np.asarray(t, dtype=float)
    return lambda x: f(np.asarray(x, dtype=float) - t)


def apply_shear(f: Callable, s) -> Callable:
    """``(D_{S_s} f)(x) = f(S_{-s} x)``."""
    inv = matrix_S(-np.asarray(s, dtype=float))
    return lambda x: f(_apply_matrix(inv, np.asarray(x, dtype=float)))


def apply_dilate(f: Callable, a: float, d: int) -> Callable:
    """``(D_{A_a} f)(x) = |det A_a|^(-1/2) f(A_{1/a} x)``."""
    inv = matrix_A(1.0 / a, d)
    c = scaling_det(a, d) ** -0.5
    return lambda x: c * f(_apply_matrix(inv, np.asarray(x, dtype=float)))


def spectral_translate(fhat: Callable, t) -> Callable:
    """Fourier side of :func:`apply_translate`."""
    t = np.asarray(t, dtype=float)
    return lambda xi: np.exp(-2j * np.pi * (np.asarray(xi, dtype=float) @ t)) * fhat(xi)


def spectral_shear(fhat: Callable, s) -> Callable:
    """Fourier side of :func:`apply_shear`: ``fhat(S_s^T xi)``."""
    st = matrix_S(s).T
    return lambda xi: fhat(_apply_matrix(st, np.asarray(xi, dtype=float)))


def spectral_dilate(fhat: Callable, a: float, d: int) -> Callable:
    """Fourier side of :func:`apply_dilate`: ``|det A_a|^(1/2) fhat(A_a xi)``."""
    m = matrix_A(a, d)
    c = scaling_det(a, d) ** 0.5
    return lambda xi: c * fhat(_apply_matrix(m, np.asarray(xi, dtype=float)))


# -------------------------------------------------- frame elements

def check_nyquist(alpha: float, pair: SpectralWindowPair, grid: GridSpec, margin: float = 0.0) -> None:
    """Raise :class:`NyquistError` when the dilated band leaves the lattice."""
    top = pair.params.a1 if math.isinf(alpha) else pair.params.a1 / abs(alpha)
    if top * (1.0 + margin) > grid.nyquist:
        raise NyquistError(
            f"scale {alpha}: band up to |xi_1| = {top:.6g} (margin {margin}) exceeds "
            f"Nyquist {grid.nyquist:.6g}"
        )


def element_on_mesh(alpha: float, shear, pair: SpectralWindowPair, mesh) -> np.ndarray:
    """Spectral frame element at translation 0 on an open mesh (broadcast)."""
    d = pair.d
    if math.isinf(alpha):
        return pair.phi_hat_transformed(1.0, shear, mesh)
    return scaling_det(alpha, d) ** 0.5 * pair.psi_hat_transformed(alpha, shear, mesh)


def frame_element_spectral(
    point: ParamPoint, pair: SpectralWindowPair, grid: GridSpec, margin: float | None = 0.0,
    centered: bool = True,
) -> np.ndarray:
    """Frame element ``F psi_(alpha, s, 0)`` sampled on the spectral lattice.

    The translation of ``point`` is ignored; multiply by
    :func:`shearcoorb.grid.translation_phase` to include it. ``margin=None``
    skips the Nyquist check.
    """
    if point.d != grid.d or pair.d != grid.d:
        raise ValueError("dimension mismatch between point, pair and grid")
    if margin is not None:
        check_nyquist(point.alpha, pair, grid, margin)
    mesh = spectral_mesh(grid, centered)
    out = element_on_mesh(point.alpha, point.shear, pair, mesh)
    return np.broadcast_to(out, grid.shape).astype(float)


# -------------------------------------------------- group law

def group_compose(g, h):
    """``(a,s,t) o (a',s',t') = (a a', s + |a|^(1-1/d) s', t + S_s A_a t')``.

    Scales are not restricted to ``[-1, 1]``; callers handling points of
    ``X`` must check the result themselves.
    """
    a, s, t = g
    a2, s2, t2 = h
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    d = t.size
    a_new = a * a2
    s_new = s + abs(a) ** (1.0 - 1.0 / d) * np.asarray(s2, dtype=float)
    t_new = t + matrix_S(s) @ matrix_A(a, d) @ np.asarray(t2, dtype=float)
    return a_new, s_new, t_new


def group_inverse(g):
    """Inverse for :func:`group_compose`."""
    a, s, t = g
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    d = t.size
    a_inv = 1.0 / a
    s_inv = -abs(a) ** (1.0 / d - 1.0) * s
    t_inv = -matrix_A(a_inv, d) @ matrix_S(-s) @ t
    return a_inv, s_inv, t_inv


def outside_fine_sheet(g) -> bool:
    """True when a group element's scale lies outside ``[-1, 1]*``."""
    return not (0 < abs(g[0]) <= 1)
