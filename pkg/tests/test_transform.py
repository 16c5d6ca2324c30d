from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shearcoorb.frame import NyquistError, frame_element_spectral
from shearcoorb.grid import SPATIAL, VolumeField, make_grid
from shearcoorb.kernel import DiscreteKernel
from shearcoorb.paramspace import ParamPoint
from shearcoorb.transform import (
    CoeffField,
    KahanSum,
    TransformError,
    analyze,
    coeff_inner,
    coeff_norm_sq,
    frame_energy,
    make_config,
    parseval_ratio,
    pmap,
    read_scf,
    reproduce_check,
    synthesize,
    synthesize_spectrum,
    write_scf,
)


def random_field(grid, seed):
    rng = np.random.default_rng(seed)
    return VolumeField(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))


def l2_inner(f, g):
    f, g = f.to_spatial(), g.to_spatial()
    return np.vdot(g.values, f.values) * f.spec.cell_volume


def test_config_rejects_scales_beyond_nyquist(small_grid, small_pair):
    with pytest.raises(NyquistError):
        make_config(small_grid, small_pair, J=4, shear_spacing=0.5, shear_radius=1.0)


def test_config_hash_is_stable_and_sensitive(small_grid, small_pair, small_cfg):
    again = make_config(small_grid, small_pair, 2, 0.5, 1.0)
    assert again.config_hash == small_cfg.config_hash
    other = make_config(small_grid, small_pair, 2, 0.25, 1.0)
    assert other.config_hash != small_cfg.config_hash
    assert small_cfg.with_workers(4).config_hash == small_cfg.config_hash


def test_elements_match_frame_element(small_cfg):
    for m in (0, 7, 30, 124):
        pl = small_cfg.pgrid.planes[m]
        point = ParamPoint(pl.alpha, pl.shear, np.zeros(3))
        ref = frame_element_spectral(point, small_cfg.pair, small_cfg.grid, margin=None, centered=False)
        np.testing.assert_array_equal(small_cfg.element(m), ref)


def test_symbol_is_weighted_sum_of_squares(small_cfg):
    direct = np.zeros(small_cfg.grid.shape)
    for m, pl in enumerate(small_cfg.pgrid.planes):
        direct += pl.weight * small_cfg.element(m) ** 2
    np.testing.assert_allclose(small_cfg.symbol, direct, rtol=1e-13, atol=1e-15)


def test_analysis_shares_planes_of_opposite_scales(small_cfg, small_phantom):
    F = analyze(small_phantom, small_cfg)
    reps, ids = F.distinct()
    assert len(reps) == len(small_cfg.unique_elements[0]) < small_cfg.pgrid.n_planes
    by_key = {}
    for m, pl in enumerate(small_cfg.pgrid.planes):
        key = (abs(pl.alpha), tuple(pl.shear))
        by_key.setdefault(key, []).append(m)
    for ms in by_key.values():
        assert len({id(F.planes[m]) for m in ms}) == 1


def test_analysis_is_the_lattice_inner_product(small_cfg, small_phantom):
    """One coefficient against an explicit sum over the spectral lattice."""
    F = analyze(small_phantom, small_cfg)
    g = small_cfg.grid
    m = 60
    pl = small_cfg.pgrid.planes[m]
    t = np.array([1.5, -0.5, 2.0])
    k = tuple(int(round(v / g.dx)) % g.n for v in t)
    elem = frame_element_spectral(ParamPoint(pl.alpha, pl.shear, t), small_cfg.pair, g, margin=None)
    from shearcoorb.grid import translation_phase

    psi_hat = elem * translation_phase(g, t)
    expected = np.sum(small_phantom.values * np.conj(psi_hat)) * g.dual_cell_volume
    assert F.planes[m][k] == pytest.approx(expected, rel=1e-12, abs=1e-15)


@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_synthesis_is_the_adjoint_of_analysis(small_cfg, seed):
    f = random_field(small_cfg.grid, seed)
    F = CoeffField.random(small_cfg, seed + 1)
    lhs = coeff_inner(analyze(f, small_cfg), F)
    rhs = l2_inner(f, synthesize(F, small_cfg))
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_linearity(small_cfg):
    f, g = random_field(small_cfg.grid, 1), random_field(small_cfg.grid, 2)
    a, b = 0.3 - 1.2j, 2.5
    h = VolumeField(small_cfg.grid, a * f.values + b * g.values)
    F, G, H = analyze(f, small_cfg), analyze(g, small_cfg), analyze(h, small_cfg)
    combo = CoeffField.combine(a, F, b, G)
    assert max(np.max(np.abs(p - q)) for p, q in zip(combo.planes, H.planes)) < 1e-12 * max(
        np.max(np.abs(p)) for p in H.planes)
    s = synthesize(combo, small_cfg).values
    np.testing.assert_allclose(s, a * synthesize(F, small_cfg).values + b * synthesize(G, small_cfg).values,
                               atol=1e-12 * np.max(np.abs(s)))


@pytest.mark.parametrize("shift", [(1, 0, 0), (0, -3, 2), (5, 5, 5)])
def test_translation_covariance(small_cfg, small_phantom, shift):
    f = small_phantom.to_spatial()
    moved = VolumeField(small_cfg.grid, np.roll(f.values, shift, axis=(0, 1, 2)), SPATIAL)
    F, G = analyze(f, small_cfg), analyze(moved, small_cfg)
    for m in (0, 40, 100):
        np.testing.assert_allclose(G.planes[m], np.roll(F.planes[m], shift, axis=(0, 1, 2)), atol=1e-13)


def test_frame_energy_equals_symbol_form(small_cfg, small_phantom):
    F = analyze(small_phantom, small_cfg)
    res = parseval_ratio(small_phantom, small_cfg)
    assert frame_energy(F) == pytest.approx(res.energy, rel=1e-11)
    assert res.ratio == pytest.approx(res.energy / small_phantom.norm() ** 2, rel=1e-12)


def test_reproducing_residual_matches_closed_form(small_cfg, small_phantom):
    """For ``F = analyze(f)`` the residual is a spectral sum over the symbol ``C``."""
    F = analyze(small_phantom, small_cfg)
    res = reproduce_check(F, DiscreteKernel.frame(small_cfg), small_cfg)
    power = np.abs(np.fft.ifftshift(small_phantom.values)) ** 2
    C = small_cfg.symbol
    expected = math.sqrt(np.sum(power * (C - 1) ** 2 * C) / np.sum(power * C))
    assert res.rel_error == pytest.approx(expected, rel=1e-9)
    assert not res.flags


def test_frame_kernel_reproduces_synthesis(small_cfg):
    """Residual of the streamed kernel equals the explicit ``analyze(synthesize(F)) - F``."""
    F = CoeffField.random(small_cfg, 3)
    K = DiscreteKernel.frame(small_cfg)
    res = reproduce_check(F, K, small_cfg)
    KF = K.apply(F)
    diff = coeff_norm_sq(CoeffField.combine(1.0, KF, -1.0, F))
    assert res.residual_norm == pytest.approx(math.sqrt(diff), rel=1e-10)
    assert res.norm == pytest.approx(math.sqrt(coeff_norm_sq(F)), rel=1e-14)


def test_reproduce_check_edge_cases(small_cfg, small_grid, small_pair):
    zero = CoeffField.zeros(small_cfg)
    res = reproduce_check(zero, DiscreteKernel.frame(small_cfg), small_cfg)
    assert math.isnan(res.rel_error) and res.flags == ("zero-field",)
    F = CoeffField.random(small_cfg, 0)
    assert reproduce_check(F, DiscreteKernel.identity(small_cfg), small_cfg).rel_error == 0.0
    assert reproduce_check(F, DiscreteKernel.zero(small_cfg), small_cfg).rel_error == pytest.approx(1.0)
    other = make_config(small_grid, small_pair, 2, 0.25, 0.5)
    with pytest.raises(TransformError, match="grid mismatch"):
        reproduce_check(F, DiscreteKernel.frame(other), other)
    with pytest.raises(TransformError, match="grid mismatch"):
        reproduce_check(F, DiscreteKernel.identity(other), small_cfg)


def test_parseval_edge_cases(small_cfg):
    zero = VolumeField(small_cfg.grid, np.zeros(small_cfg.grid.shape))
    res = parseval_ratio(zero, small_cfg)
    assert math.isnan(res.ratio) and "zero-signal" in res.flags
    # a constant signal lives at xi = 0, which the symbol only partly covers
    const = VolumeField(small_cfg.grid, np.ones(small_cfg.grid.shape))
    assert "out-of-band" in parseval_ratio(const, small_cfg).flags


def test_mismatched_inputs_are_rejected(small_cfg, small_grid, small_pair):
    with pytest.raises(TransformError):
        analyze(VolumeField(make_grid(3, 8, 8.0), np.zeros((8, 8, 8))), small_cfg)
    F = CoeffField.random(make_config(small_grid, small_pair, 2, 0.25, 0.5), 0)
    with pytest.raises(TransformError):
        synthesize(F, small_cfg)
    with pytest.raises(TransformError):
        CoeffField(small_cfg.pgrid, F.planes[:3], small_cfg.config_hash)


def test_spectral_input_equals_spatial_input(small_cfg, small_phantom):
    a = analyze(small_phantom, small_cfg)
    b = analyze(small_phantom.to_spatial(), small_cfg)
    for m in (0, 50, 124):
        np.testing.assert_allclose(a.planes[m], b.planes[m], atol=1e-13)


def test_synthesis_spectrum_is_natural_order(small_cfg, small_phantom):
    F = analyze(small_phantom, small_cfg)
    ghat = synthesize_spectrum(F, small_cfg)
    g = synthesize(F, small_cfg).to_spectral()
    np.testing.assert_allclose(np.fft.fftshift(ghat), g.values, atol=1e-14)


def test_determinism_across_workers(small_cfg, small_phantom):
    ref_F = analyze(small_phantom, small_cfg)
    ref_g = synthesize(ref_F, small_cfg).values.tobytes()
    for w in (4, 8):
        cfg = small_cfg.with_workers(w)
        F = analyze(small_phantom, cfg)
        assert all(p.tobytes() == q.tobytes() for p, q in zip(F.planes, ref_F.planes))
        assert synthesize(F, cfg).values.tobytes() == ref_g


def test_scf_round_trip(tmp_path, small_cfg, small_phantom):
    F = analyze(small_phantom, small_cfg)
    path = write_scf(tmp_path / "c.scf", F)
    G = read_scf(path)
    assert G.config_hash == F.config_hash
    assert G.distinct()[1] == F.distinct()[1]
    assert all(p.tobytes() == q.tobytes() for p, q in zip(F.planes, G.planes))
    assert synthesize(G, small_cfg).values.tobytes() == synthesize(F, small_cfg).values.tobytes()


def test_scf_rejects_damaged_files(tmp_path, small_cfg):
    path = write_scf(tmp_path / "c.scf", CoeffField.zeros(small_cfg))
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises((TransformError, ValueError)):
        read_scf(path)
    path.write_bytes(b"VOL" + blob[3:])
    with pytest.raises(ValueError):
        read_scf(path)


def test_write_failure_leaves_no_file(tmp_path, small_cfg, monkeypatch):
    import shearcoorb.transform as tr

    F = CoeffField.random(small_cfg, 0)
    calls = {"n": 0}
    real = np.ascontiguousarray

    def failing(*args, **kw):  # fail after a few payload blocks were written
        calls["n"] += 1
        if calls["n"] == 5:
            raise OSError("disk full")
        return real(*args, **kw)

    monkeypatch.setattr(tr.np, "ascontiguousarray", failing)
    with pytest.raises(OSError):
        write_scf(tmp_path / "out.scf", F)
    monkeypatch.undo()
    assert calls["n"] == 5
    assert list(tmp_path.iterdir()) == []


def test_pmap_preserves_order():
    assert pmap(lambda x: x * x, list(range(50)), workers=8) == [x * x for x in range(50)]


def test_kahan_sum_recovers_small_terms():
    acc = KahanSum((1,))
    acc.add(np.array([1.0]))
    for _ in range(1000):
        acc.add(np.array([1e-16]))
    assert acc.total[0] == pytest.approx(1.0 + 1e-13, rel=1e-15)
