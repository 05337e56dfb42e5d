"""Grid, Fourier transforms, weighted norms, and the MSF1 snapshot format."""

import numpy as np
import pytest

from magschro.grid import (Field, WeightedNormSpec, fourier, inner,
                           inverse_fourier, make_grid, read_field,
                           spectral_gradient, weighted_norm, write_field)


def gaussian(g, width=1.0):
    return Field(g, np.exp(-g.r2 / (2.0 * width ** 2)).astype(complex))


def random_field(g, seed=0):
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    return Field(g, vals)


# make_grid

def test_make_grid_spacing():
    g = make_grid(16, 8.0)
    assert g.h == 1.0


def test_make_grid_nyquist():
    g = make_grid(32, 16.0)
    assert g.h == 1.0
    assert np.max(np.abs(g.freq1d)) == pytest.approx(np.pi / g.h)


def test_make_grid_rejects_odd_n():
    with pytest.raises(ValueError, match="even"):
        make_grid(5, 8.0)


def test_make_grid_rejects_tiny_n_and_bad_l():
    with pytest.raises(ValueError):
        make_grid(2, 8.0)
    with pytest.raises(ValueError):
        make_grid(16, 0.0)
    with pytest.raises(ValueError):
        make_grid(16, -1.0)


# fourier / inverse_fourier

def test_fourier_zero_field():
    g = make_grid(8, 4.0)
    f = Field(g, np.zeros(g.shape, dtype=complex))
    assert np.all(fourier(f).values == 0)


def test_fourier_plane_wave_is_delta():
    g = make_grid(16, 8.0)
    x1, x2, x3 = g.x
    xi0 = (2.0 * np.pi / (2 * g.l)) * np.array([2.0, -1.0, 3.0])
    f = Field(g, np.exp(1j * (xi0[0] * x1 + xi0[1] * x2 + xi0[2] * x3)))
    ft = np.abs(fourier(f).values)
    peak = np.unravel_index(np.argmax(ft), g.shape)
    masked = ft.copy()
    masked[peak] = 0.0
    assert np.max(masked) <= 1e-10 * ft[peak]


def test_fourier_round_trip():
    g = make_grid(16, 8.0)
    f = random_field(g, seed=1)
    back = inverse_fourier(fourier(f))
    rel = np.linalg.norm(back.values - f.values) / np.linalg.norm(f.values)
    assert rel <= 1e-12


def test_fourier_unitary():
    g = make_grid(16, 8.0)
    f = random_field(g, seed=2)
    assert fourier(f).norm() == pytest.approx(f.norm(), rel=1e-12)


# weighted_norm

def test_weighted_norm_zero_field():
    g = make_grid(8, 4.0)
    f = Field(g, np.zeros(g.shape, dtype=complex))
    assert weighted_norm(f, WeightedNormSpec(sigma=2.0, s=1.0)) == 0.0


def test_weighted_norm_constant():
    g = make_grid(16, 8.0)
    f = Field(g, np.ones(g.shape, dtype=complex))
    assert weighted_norm(f, WeightedNormSpec(0.0, 0.0)) == pytest.approx(64.0)


def test_weighted_norm_gaussian():
    # continuum value ||e^{-|x|^2/2}||_2 = pi^{3/4}
    g = make_grid(32, 8.0)
    f = gaussian(g)
    val = weighted_norm(f, WeightedNormSpec(0.0, 0.0))
    assert val == pytest.approx(np.pi ** 0.75, abs=1e-6)


def test_weighted_norm_plain_l2_agreement():
    g = make_grid(12, 6.0)
    f = random_field(g, seed=3)
    assert weighted_norm(f, WeightedNormSpec(0.0, 0.0)) == pytest.approx(
        f.norm(), rel=1e-13)


def test_weighted_norm_monotone_in_sigma():
    g = make_grid(12, 6.0)
    f = random_field(g, seed=4)
    vals = [weighted_norm(f, WeightedNormSpec(s, 0.0)) for s in (0.0, 1.0, 2.0)]
    assert vals[0] <= vals[1] <= vals[2]


def test_weighted_norm_duality():
    g = make_grid(12, 6.0)
    f = random_field(g, seed=5)
    p = random_field(g, seed=6)
    lhs = abs(inner(f, p))
    for sigma in (0.5, 1.0, 2.0):
        rhs = (weighted_norm(f, WeightedNormSpec(sigma, 0.0))
               * weighted_norm(p, WeightedNormSpec(-sigma, 0.0)))
        assert lhs <= rhs * (1 + 1e-12)


def test_weighted_norm_grid_refinement():
    spec = WeightedNormSpec(1.0, 0.0)
    vals = []
    for n in (16, 32):
        g = make_grid(n, 8.0)
        vals.append(weighted_norm(gaussian(g, width=1.5), spec))
    assert abs(vals[1] - vals[0]) / vals[1] <= 1e-4


# spectral_gradient

def test_spectral_gradient_plane_wave():
    g = make_grid(16, 8.0)
    x1, x2, x3 = g.x
    xi0 = (np.pi / g.l) * np.array([1.0, 2.0, -1.0])
    vals = np.exp(1j * (xi0[0] * x1 + xi0[1] * x2 + xi0[2] * x3))
    grads = spectral_gradient(vals, g)
    for j in range(3):
        assert np.allclose(grads[j], 1j * xi0[j] * vals, atol=1e-10)


def test_spectral_gradient_real_to_real():
    # with the Nyquist mode zeroed, d/dx_j maps real data to real data
    g = make_grid(8, 4.0)
    rng = np.random.default_rng(7)
    vals = rng.standard_normal(g.shape)
    grads = spectral_gradient(vals, g)
    for j in range(3):
        assert np.max(np.abs(np.imag(grads[j]))) <= 1e-12


# MSF1 snapshot I/O

def test_msf1_round_trip(tmp_path):
    g = make_grid(8, 4.0)
    f = random_field(g, seed=8)
    path = tmp_path / "field.msf1"
    write_field(path, f)
    back = read_field(path)
    assert back.grid.n == g.n and back.grid.l == g.l
    assert np.array_equal(back.values, f.values)


def test_msf1_magic_bytes(tmp_path):
    g = make_grid(4, 2.0)
    path = tmp_path / "field.msf1"
    write_field(path, Field(g, np.zeros(g.shape, dtype=complex)))
    with open(path, "rb") as fh:
        assert fh.read(4) == b"MSF1"


def test_msf1_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.msf1"
    path.write_bytes(b"XXXX" + b"\x00" * 64)
    with pytest.raises(ValueError):
        read_field(path)
