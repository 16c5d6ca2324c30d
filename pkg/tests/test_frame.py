from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shearcoorb.frame import (
    NyquistError,
    apply_dilate,
    apply_shear,
    apply_translate,
    check_nyquist,
    frame_element_spectral,
    group_compose,
    group_inverse,
    matrix_A,
    matrix_S,
    outside_fine_sheet,
    scaling_det,
    signed_root,
    spectral_dilate,
    spectral_shear,
    spectral_translate,
)
from shearcoorb.grid import make_grid, spectral_mesh, translation_phase
from shearcoorb.paramspace import ParamPoint, coarse_point

scale = st.floats(0.05, 1.0) | st.floats(-1.0, -0.05)
vec2 = st.tuples(st.floats(-2, 2), st.floats(-2, 2))
vec3 = st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))


def gaussian(Q):
    """``exp(-pi x^T Q x)`` and its Fourier transform."""
    Q = np.asarray(Q, float)
    Qi = np.linalg.inv(Q)
    c = np.linalg.det(Q) ** -0.5
    f = lambda x: np.exp(-np.pi * np.einsum("...i,ij,...j->...", x, Q, x))
    fh = lambda xi: c * np.exp(-np.pi * np.einsum("...i,ij,...j->...", xi, Qi, xi))
    return f, fh


@settings(max_examples=40, deadline=None)
@given(a=scale)
def test_scaling_matrix(a):
    A = matrix_A(a, 3)
    assert abs(np.linalg.det(A)) == pytest.approx(scaling_det(a, 3), rel=1e-12)
    assert A[1, 1] == pytest.approx(signed_root(a, 3))
    np.testing.assert_allclose(matrix_A(1 / a, 3) @ A, np.eye(3), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(s=vec2, s2=vec2)
def test_shear_matrix_group(s, s2):
    S = matrix_S(s)
    assert np.linalg.det(S) == 1.0
    np.testing.assert_allclose(S @ matrix_S(s2), matrix_S(np.add(s, s2)), atol=1e-12)
    np.testing.assert_allclose(S @ matrix_S(np.negative(s)), np.eye(3), atol=1e-12)


def test_determinant_at_dyadic_scale():
    assert scaling_det(-1 / 8, 3) == pytest.approx(1 / 32, rel=1e-15)


def test_element_norm_and_support_on_lattice(pair):
    """Lattice energy of an element is ``||Psi||^2``; the band dilates to ``[a0/a, a1/a]``."""
    g = make_grid(3, 256, 16.0)
    e = frame_element_spectral(ParamPoint(0.5, [0.3, -0.2], [0, 0, 0]), pair, g)
    assert np.sum(e**2) * g.dual_cell_volume == pytest.approx(pair.norm_sq("psi"), abs=1e-6)
    xi1 = np.broadcast_to(np.abs(spectral_mesh(g)[0]), g.shape)[e != 0]
    assert xi1.min() > 2.0 and xi1.max() < 6.0


def test_matrix_rejects_zero_scale():
    with pytest.raises(ValueError):
        matrix_A(0.0, 3)
    with pytest.raises(ValueError):
        scaling_det(0.0, 3)


@settings(max_examples=25, deadline=None)
@given(a=scale, s=vec2, t=vec3)
def test_operators_match_their_fourier_sides(a, s, t):
    """Transform each operator applied to a Gaussian in closed form and compare."""
    Q = np.array([[1.0, 0.2, 0.0], [0.2, 1.5, 0.1], [0.0, 0.1, 0.8]])
    f, fh = gaussian(Q)
    rng = np.random.default_rng(0)
    xi = rng.uniform(-1.5, 1.5, (64, 3))
    # dilation
    Mi = matrix_A(1 / a, 3)
    _, gh = gaussian(Mi.T @ Q @ Mi)
    expected = scaling_det(a, 3) ** -0.5 * gh(xi)
    np.testing.assert_allclose(spectral_dilate(fh, a, 3)(xi), expected, rtol=1e-9, atol=1e-14)
    x = rng.uniform(-1, 1, (8, 3))
    np.testing.assert_allclose(apply_dilate(f, a, 3)(x), scaling_det(a, 3) ** -0.5 * gaussian(Mi.T @ Q @ Mi)[0](x))
    # shear
    Si = matrix_S(np.negative(s))
    _, gh = gaussian(Si.T @ Q @ Si)
    np.testing.assert_allclose(spectral_shear(fh, s)(xi), gh(xi), rtol=1e-9, atol=1e-14)
    np.testing.assert_allclose(apply_shear(f, s)(x), gaussian(Si.T @ Q @ Si)[0](x))
    # translation
    np.testing.assert_allclose(apply_translate(f, t)(x), f(x - np.asarray(t)))
    phase = np.exp(-2j * np.pi * xi @ np.asarray(t))
    np.testing.assert_allclose(spectral_translate(fh, t)(xi), phase * fh(xi))


def test_frame_element_equals_operator_composition(pair):
    g = make_grid(3, 32, 2.0)  # Nyquist 8
    mesh = spectral_mesh(g)
    pts = np.stack(np.meshgrid(*[m.reshape(-1) for m in mesh], indexing="ij"), axis=-1)
    for point in (ParamPoint(0.6, [0.3, -0.5], [0.2, 0.1, -0.4]), ParamPoint(-0.45, [1.0, 0.25], [0.0, 0.5, 0.5])):
        composed = spectral_translate(spectral_shear(spectral_dilate(pair.psi_hat, point.alpha, 3), point.shear),
                                      point.translation)
        element = frame_element_spectral(point, pair, g) * translation_phase(g, point.translation)
        np.testing.assert_allclose(element, composed(pts), atol=1e-12)
    c = coarse_point([0.5, -0.25], [1.0, 0.0, 0.0])
    composed = spectral_translate(spectral_shear(pair.phi_hat, c.shear), c.translation)
    element = frame_element_spectral(c, pair, g) * translation_phase(g, c.translation)
    np.testing.assert_allclose(element, composed(pts), atol=1e-12)


def test_frame_elements_are_real_and_sign_symmetric(pair):
    g = make_grid(3, 32, 2.0)  # Nyquist 8
    e_pos = frame_element_spectral(ParamPoint(0.7, [0.2, 0.1], [0, 0, 0]), pair, g)
    e_neg = frame_element_spectral(ParamPoint(-0.7, [0.2, 0.1], [0, 0, 0]), pair, g)
    assert e_pos.dtype == np.float64
    np.testing.assert_array_equal(e_pos, e_neg)


def test_nyquist_guard(pair):
    g = make_grid(3, 16, 2.0)  # Nyquist 4
    check_nyquist(math.inf, pair, g)
    with pytest.raises(NyquistError):
        check_nyquist(0.5, pair, g)  # band reaches 6
    with pytest.raises(NyquistError):
        frame_element_spectral(ParamPoint(0.5, [0, 0], [0, 0, 0]), pair, g)
    # margin=None skips the guard
    frame_element_spectral(ParamPoint(0.5, [0, 0], [0, 0, 0]), pair, g, margin=None)


@settings(max_examples=50, deadline=None)
@given(a=scale, b=scale, c=scale, s1=vec2, s2=vec2, s3=vec2, t1=vec3, t2=vec3, t3=vec3)
def test_group_law(a, b, c, s1, s2, s3, t1, t2, t3):
    g, h, k = (a, s1, t1), (b, s2, t2), (c, s3, t3)
    left = group_compose(group_compose(g, h), k)
    right = group_compose(g, group_compose(h, k))
    for u, v in zip(left, right):
        np.testing.assert_allclose(u, v, rtol=1e-9, atol=1e-9)
    e = group_compose(g, group_inverse(g))
    assert e[0] == pytest.approx(1.0)
    np.testing.assert_allclose(e[1], 0, atol=1e-12)
    np.testing.assert_allclose(e[2], 0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(a=scale, b=scale, s1=vec2, s2=vec2, t1=vec3, t2=vec3)
def test_group_law_matches_operator_composition(a, b, s1, s2, t1, t2):
    """``pi(g) pi(h) = pi(g o h)`` for ``pi(a,s,t) = T_t D_(S_s) D_(A_a)``, on the Fourier side."""
    def pi(g, fh):
        return spectral_translate(spectral_shear(spectral_dilate(fh, g[0], 3), g[1]), g[2])

    Q = np.diag([1.0, 2.0, 0.5])
    _, fh = gaussian(Q)
    xi = np.random.default_rng(1).uniform(-1, 1, (32, 3))
    g, h = (a, s1, t1), (b, s2, t2)
    lhs = pi(g, pi(h, fh))(xi)
    rhs = pi(group_compose(g, h), fh)(xi)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-8, atol=1e-12)


def test_outside_fine_sheet():
    assert outside_fine_sheet((1.5, None, None))
    assert not outside_fine_sheet((-0.5, None, None))
