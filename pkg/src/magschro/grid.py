"""Periodic grids, complex fields, Fourier transforms, and weighted Sobolev norms.

The computational domain is the cube [-l, l)^3 sampled on n points per axis
(spacing h = 2l/n).  Fields are complex arrays of shape (n, n, n), row-major.
The Fourier pair is the unitary ("ortho") DFT; all multipliers in the package
use the wavenumbers 2*pi*fftfreq(n, d=h), which cover both signs symmetrically
up to the Nyquist frequency pi/h.

Weighted Sobolev norms  ||<x>^sigma <grad>^s psi||_{L^2}  are discretized as
the Fourier multiplier (1+|xi|^2)^(s/2) followed by the physical weight
(1+|x|^2)^(sigma/2) and the grid L^2 norm with measure h^3.  The weight is
evaluated on the fundamental cell only; applying a non-periodic weight to a
periodic field is an accepted, documented approximation.
"""

from dataclasses import dataclass, field
from functools import cached_property
import struct

import numpy as np
import scipy.fft

__all__ = [
    "Grid", "Field", "WeightedNormSpec", "make_grid", "fourier",
    "inverse_fourier", "weighted_norm", "inner", "l2_norm",
    "read_field", "write_field", "set_fft_workers", "fftn", "ifftn",
]

# Number of worker threads handed to scipy.fft; 1 by default so runs are
# reproducible on any machine without configuration.
_FFT_WORKERS = 1


def set_fft_workers(k):
    """Set the thread count used by all FFTs in the package."""
    global _FFT_WORKERS
    _FFT_WORKERS = int(k)


def fftn(values):
    return scipy.fft.fftn(values, norm="ortho", workers=_FFT_WORKERS)


def ifftn(values):
    return scipy.fft.ifftn(values, norm="ortho", workers=_FFT_WORKERS)


@dataclass(frozen=True)
class Grid:
    """Cubic periodic grid: box [-l, l)^3, n points per axis, spacing h."""

    n: int
    l: float

    @property
    def h(self):
        return 2.0 * self.l / self.n

    @cached_property
    def x1d(self):
        """Physical coordinates along one axis."""
        return np.arange(self.n) * self.h - self.l

    @cached_property
    def freq1d(self):
        """Fourier wavenumbers along one axis (2*pi-periodic convention)."""
        return 2.0 * np.pi * scipy.fft.fftfreq(self.n, d=self.h)

    @cached_property
    def x(self):
        """Meshgrid of physical coordinates, three arrays of shape (n,n,n)."""
        return np.meshgrid(self.x1d, self.x1d, self.x1d, indexing="ij")

    @cached_property
    def k(self):
        """Meshgrid of wavenumbers, three arrays of shape (n,n,n)."""
        return np.meshgrid(self.freq1d, self.freq1d, self.freq1d, indexing="ij")

    @cached_property
    def r2(self):
        """|x|^2 on the grid."""
        x1, x2, x3 = self.x
        return x1 ** 2 + x2 ** 2 + x3 ** 2

    @cached_property
    def k2(self):
        """|xi|^2 on the grid."""
        k1, k2, k3 = self.k
        return k1 ** 2 + k2 ** 2 + k3 ** 2

    @property
    def shape(self):
        return (self.n, self.n, self.n)

    @property
    def npoints(self):
        return self.n ** 3

    @property
    def cell_volume(self):
        return self.h ** 3


@dataclass(frozen=True)
class Field:
    """Complex scalar state on a Grid, values of shape (n, n, n)."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise ValueError(
                f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v.view(float))):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", v)

    def norm(self):
        """Plain grid L^2 norm with measure h^3."""
        return l2_norm(self.values, self.grid.h)


@dataclass(frozen=True)
class WeightedNormSpec:
    """Exponents of the weighted Sobolev norm ||<x>^sigma <grad>^s psi||."""

    sigma: float = 0.0
    s: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and np.isfinite(self.s)):
            raise ValueError("sigma and s must be finite reals")


def make_grid(n, l):
    """Construct a Grid, validating the discretization parameters."""
    n = int(n)
    if n % 2 != 0:
        raise ValueError("n must be even")
    if n < 4:
        raise ValueError("n must be at least 4")
    if not l > 0:
        raise ValueError("l must be positive")
    return Grid(n=n, l=float(l))


def fourier(f):
    """Unitary Fourier transform of a Field."""
    return Field(f.grid, fftn(f.values))


def inverse_fourier(f):
    """Inverse of :func:`fourier`."""
    return Field(f.grid, ifftn(f.values))


def l2_norm(values, h):
    """Deterministic grid L^2 norm sqrt(h^3 * sum |v|^2)."""
    return float(np.sqrt(np.sum(np.abs(values) ** 2) * h ** 3))


def inner(f, g):
    """L^2 inner product <f, g> = h^3 sum conj(f) g (antilinear in f)."""
    if f.grid != g.grid:
        raise ValueError("grid mismatch")
    return complex(np.sum(np.conj(f.values) * g.values) * f.grid.cell_volume)


def weighted_values(f, spec):
    """Apply <grad>^s in Fourier space, then <x>^sigma pointwise."""
    g = f.grid
    v = f.values
    if spec.s != 0.0:
        v = ifftn(fftn(v) * (1.0 + g.k2) ** (spec.s / 2.0))
    if spec.sigma != 0.0:
        v = v * (1.0 + g.r2) ** (spec.sigma / 2.0)
    return v


def weighted_norm(f, spec):
    """Weighted Sobolev norm ||<x>^sigma <grad>^s psi||_{L^2} on the grid."""
    return l2_norm(weighted_values(f, spec), f.grid.h)


def spectral_gradient(values, g):
    """Partial derivatives (d1, d2, d3) of a grid array, computed spectrally.

    The Nyquist wavenumber is zeroed: it has no negative partner on an even
    grid, and keeping it would make the first derivative fail to be exactly
    anti-Hermitian (and map real data to complex data).
    """
    ft = fftn(values)
    kd = g.freq1d.copy()
    kd[g.n // 2] = 0.0
    kgrids = np.meshgrid(kd, kd, kd, indexing="ij")
    return tuple(ifftn(1j * kgrids[j] * ft) for j in range(3))


# ---------------------------------------------------------------------------
# Binary snapshot format MSF1: magic "MSF1", uint32 n, float64 l, then n^3
# complex values as interleaved little-endian float64 (re, im), row-major.

_MAGIC = b"MSF1"


def write_field(path, f):
    """Write a Field in the MSF1 binary snapshot format."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", f.grid.n))
        fh.write(struct.pack("<d", f.grid.l))
        fh.write(np.ascontiguousarray(f.values, dtype="<c16").tobytes())


def read_field(path):
    """Read a Field from the MSF1 binary snapshot format."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {_MAGIC!r}")
        n = struct.unpack("<I", fh.read(4))[0]
        l = struct.unpack("<d", fh.read(8))[0]
        raw = fh.read(16 * n ** 3)
        if len(raw) != 16 * n ** 3:
            raise ValueError("truncated MSF1 file")
        values = np.frombuffer(raw, dtype="<c16").reshape(n, n, n).copy()
    return Field(make_grid(n, l), values)
