"""Builtin potential families, decay certification, W, and the gauge map."""

import numpy as np
import pytest

from magschro.grid import Field, inner, l2_norm, make_grid
from magschro.potentials import (BETA_SUPERPOLY, AnalyticPotential,
                                 PotentialData, apply_w, builtin_potential,
                                 gauge_transform, validate_decay)


def random_field(g, seed=0):
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    return Field(g, vals)


# builtin_potential

def test_zero_amplitude_gaussian_is_zero():
    g = make_grid(12, 6.0)
    p = builtin_potential("gaussian_bump", [0.0, 1.0], g)
    assert np.all(p.v == 0)
    assert np.all(p.a == 0)
    assert p.is_zero


def test_gaussian_min_at_center():
    g = make_grid(16, 8.0)
    p = builtin_potential("gaussian_bump", [-1.0, 1.0], g)
    assert np.min(p.v) == pytest.approx(-1.0)
    center = np.unravel_index(np.argmin(p.v), g.shape)
    assert all(abs(g.x1d[c]) <= g.h / 2 for c in center)


def test_coupled_well_linear_in_coupling():
    g = make_grid(12, 6.0)
    couplings = np.linspace(0.0, 10.0, 6)
    base = builtin_potential("coupled_well", [1.0, 1.0, 1.5], g)
    for c in couplings:
        p = builtin_potential("coupled_well", [c, 1.0, 1.5], g)
        assert np.allclose(p.v, c * base.v, atol=1e-14)
        assert np.all(p.a == 0)


def test_unknown_kind_rejected():
    g = make_grid(8, 4.0)
    with pytest.raises(ValueError):
        builtin_potential("mystery", [1.0], g)


def test_non_finite_params_rejected():
    g = make_grid(8, 4.0)
    with pytest.raises(ValueError):
        builtin_potential("gaussian_bump", [np.nan, 1.0], g)


def test_grad_a_consistency():
    g = make_grid(16, 8.0)
    p = builtin_potential("gaussian_bump", [-0.5, 1.2, 0.2, 1.2], g)
    from magschro.grid import spectral_gradient
    for i in range(3):
        grads = spectral_gradient(p.a[i], g)
        for j in range(3):
            num = np.linalg.norm(p.grad_a[i, j] - np.real(grads[j]))
            den = max(np.linalg.norm(p.grad_a[i, j]), 1e-30)
            assert num / den <= 1e-8


# validate_decay

def test_validate_decay_gaussian_superpolynomial():
    g = make_grid(12, 6.0)
    p = builtin_potential("gaussian_bump", [-0.5, 1.0, 0.2, 1.0], g)
    prof = validate_decay(p, np.linspace(2.0, 6.0, 7))
    assert prof.pass_
    assert prof.beta == BETA_SUPERPOLY


def test_validate_decay_inverse_square_fails():
    g = make_grid(12, 6.0)

    def v_an(pts):
        return 1.0 / (1.0 + np.sum(pts ** 2, axis=-1))

    def a_an(pts):
        return np.zeros(pts.shape)

    an = AnalyticPotential(v=v_an, a=a_an)
    x1, x2, x3 = g.x
    vgrid = 1.0 / (1.0 + g.r2)
    p = PotentialData(grid=g, a=np.zeros((3,) + g.shape),
                      v=vgrid, grad_a=None, analytic=an)
    prof = validate_decay(p, np.geomspace(5.0, 500.0, 12))
    assert prof.beta == pytest.approx(2.0, abs=0.05)
    assert not prof.pass_


def test_validate_decay_zero_potential_passes():
    g = make_grid(8, 4.0)
    p = builtin_potential("gaussian_bump", [0.0, 1.0], g)
    prof = validate_decay(p, np.linspace(2.0, 6.0, 5))
    assert prof.pass_


def test_validate_decay_requires_analytic():
    g = make_grid(8, 4.0)
    p = PotentialData(grid=g, a=np.zeros((3,) + g.shape),
                      v=np.zeros(g.shape), grad_a=None, analytic=None)
    with pytest.raises(ValueError, match="analytic"):
        validate_decay(p, [2.0, 3.0, 4.0])


def test_validate_decay_monotone_under_scaling():
    # scaling V by t > 1 never increases beta
    g = make_grid(12, 6.0)

    def make(scale):
        def v_an(pts):
            return scale / (1.0 + np.sum(pts ** 2, axis=-1)) ** 1.25

        def a_an(pts):
            return np.zeros(pts.shape)

        return PotentialData(grid=g, a=np.zeros((3,) + g.shape),
                             v=scale / (1.0 + g.r2) ** 1.25, grad_a=None,
                             analytic=AnalyticPotential(v=v_an, a=a_an))

    radii = np.geomspace(5.0, 500.0, 10)
    b1 = validate_decay(make(1.0), radii).beta
    b3 = validate_decay(make(3.0), radii).beta
    assert b3 <= b1 + 1e-9


# apply_w

def test_apply_w_zero_potential():
    g = make_grid(12, 6.0)
    p = builtin_potential("gaussian_bump", [0.0, 1.0], g)
    f = random_field(g, seed=1)
    assert np.all(apply_w(p, f).values == 0)


def test_apply_w_scalar_reduction():
    g = make_grid(12, 6.0)
    p = builtin_potential("coupled_well", [2.0, 1.0, 1.5], g)
    f = random_field(g, seed=2)
    out = apply_w(p, f)
    assert np.allclose(out.values, p.v * f.values, atol=1e-14)


def test_apply_w_symmetry():
    g = make_grid(12, 6.0)
    p = builtin_potential("gaussian_bump", [-0.5, 1.2, 0.4, 1.2], g)
    f = random_field(g, seed=3)
    u = random_field(g, seed=4)
    lhs = inner(apply_w(p, f), u)
    rhs = inner(f, apply_w(p, u))
    assert abs(lhs - rhs) / (f.norm() * u.norm()) <= 1e-10


def test_apply_w_linearity():
    g = make_grid(8, 4.0)
    p = builtin_potential("gaussian_bump", [-0.5, 1.0, 0.3, 1.0], g)
    f = random_field(g, seed=5)
    u = random_field(g, seed=6)
    c = 2.0 - 0.5j
    lhs = apply_w(p, Field(g, c * f.values + u.values)).values
    rhs = c * apply_w(p, f).values + apply_w(p, u).values
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_apply_w_grid_mismatch():
    p = builtin_potential("gaussian_bump", [-0.5, 1.0], make_grid(8, 4.0))
    f = random_field(make_grid(12, 6.0))
    with pytest.raises(ValueError):
        apply_w(p, f)


# gauge_transform

def test_gauge_transform_zero_a_identity():
    g = make_grid(12, 6.0)
    p = builtin_potential("coupled_well", [1.0, 1.0, 1.5], g)
    p2, phase = gauge_transform(p, 1)
    assert np.allclose(p2.a, 0.0, atol=1e-12)
    assert np.allclose(phase.values, 1.0, atol=1e-12)


def test_gauge_transform_pure_gauge():
    # A = (d1 Phi, 0, 0) for smooth periodic Phi gauges away entirely
    g = make_grid(16, 8.0)
    from magschro.grid import spectral_gradient
    phi = np.exp(-g.r2 / 4.0)
    d = spectral_gradient(phi, g)
    a = np.stack([np.real(d[0]), np.zeros(g.shape), np.zeros(g.shape)])
    p = PotentialData(grid=g, a=a, v=np.zeros(g.shape), grad_a=None)
    p2, _ = gauge_transform(p, 1)
    assert np.max(np.abs(p2.a[0])) <= 1e-10


def test_gauge_transform_kills_axis_component():
    g = make_grid(12, 6.0)
    p = builtin_potential("gaussian_bump", [-0.5, 1.2, 0.3, 1.2], g)
    for axis in (1, 2, 3):
        p2, phase = gauge_transform(p, axis)
        assert np.max(np.abs(p2.a[axis - 1])) <= 1e-10
        assert np.allclose(np.abs(phase.values), 1.0, atol=1e-12)


def band_limited_a(g, rng, kmax=2, amp=0.01):
    """Random vector potential supported on low Fourier modes.

    The low bandwidth keeps the gauge phase e^{i Phi} effectively
    band-limited too (harmonics decay factorially in the small amplitude),
    so the grid-level gauge equivalence holds to near round-off.
    """
    a = []
    for j in range(3):
        c = np.zeros(g.shape, dtype=complex)
        idx = range(-kmax, kmax + 1)
        for i1 in idx:
            for i2 in idx:
                for i3 in idx:
                    c[i1, i2, i3] = (rng.standard_normal()
                                     + 1j * rng.standard_normal())
        vals = np.real(np.fft.ifftn(c)) * g.n ** 1.5
        vals = vals - np.mean(vals, axis=j, keepdims=True)
        vals *= amp / np.max(np.abs(vals))
        a.append(vals)
    return np.stack(a)


def test_gauge_transform_spectrum_preserved():
    g = make_grid(12, 6.0)
    rng = np.random.default_rng(3)
    v = -0.5 * np.exp(-g.r2 / (2 * 1.44))
    p = PotentialData(grid=g, a=band_limited_a(g, rng), v=v, grad_a=None)
    p2, _ = gauge_transform(p, 1)
    from magschro.operators import OperatorHandle
    from magschro.operators import apply as op_apply
    from magschro.spectral import dense_matrix
    h1 = OperatorHandle(kind="full", grid=g, potential=p)
    h2 = OperatorHandle(kind="full", grid=g, potential=p2)
    m1 = dense_matrix(lambda u: op_apply(h1, Field(g, u)).values, g)
    m2 = dense_matrix(lambda u: op_apply(h2, Field(g, u)).values, g)
    e1 = np.linalg.eigvalsh(m1)[:5]
    e2 = np.linalg.eigvalsh(m2)[:5]
    assert np.max(np.abs(e1 - e2)) <= 1e-8


def test_gauge_invariance_of_magnetic_gradient():
    # h = 0.5 resolves e^{i Phi} well enough for 1e-8 relative agreement
    g = make_grid(24, 6.0)
    p = builtin_potential("gaussian_bump", [-0.5, 1.2, 0.3, 1.2], g)
    p2, phase = gauge_transform(p, 1)
    from magschro.operators import gradient_norm, magnetic_gradient
    f = Field(g, np.exp(-g.r2 / 2.0).astype(complex))
    fp = Field(g, phase.values * f.values)
    n1 = gradient_norm(magnetic_gradient(p, f))
    n2 = gradient_norm(magnetic_gradient(p2, fp))
    assert n2 == pytest.approx(n1, rel=1e-8)
