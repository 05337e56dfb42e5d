"""The operators H0 = -Laplace, H_A = (-i grad - A)^2, H = H0 + W, and the
empirical checks of the inequalities they satisfy.

All derivatives are spectral, so operator identities hold to round-off for
band-limited fields.  Random test fields are band-limited bumps supported in
the inner half of the box: their products stay below the Nyquist frequency
and periodic wrap-around does not pollute inequalities stated on R^3.

Checked inequalities:

- norm equivalence  ||grad u|| <= C1 ||grad_A u|| <= C2 ||grad u||  (reported
  as an empirical ratio band, the constants are not quantified);
- the magnetic Hardy inequality  ||u||_{L^2_{-1}} <= 4 ||grad_A u||, uniform
  in A;
- the scalar bound  (1 + lambda^{l/2})^2 <= C(b) |omega|^{-(1-l)}
  (|lambda - omega|^2 + lambda)  for |omega| >= b, probed as finiteness and
  sample-refinement stability of the supremum.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import (Field, Grid, WeightedNormSpec, fftn, ifftn, l2_norm,
                   spectral_gradient, weighted_norm)
from .potentials import PotentialData, apply_w

__all__ = [
    "OperatorHandle", "apply", "magnetic_gradient", "hardy_check",
    "norm_equivalence_check", "scalar_bound_probe", "random_bump",
]


@dataclass(frozen=True)
class OperatorHandle:
    """Handle to one of the operators: free (-Laplace), magnetic, or full."""

    kind: str                  # "free" | "magnetic" | "full"
    grid: Grid
    potential: Optional[PotentialData] = None

    def __post_init__(self):
        if self.kind not in ("free", "magnetic", "full"):
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.kind == "free" and self.potential is not None:
            raise ValueError("free operator takes no potential")
        if self.kind in ("magnetic", "full") and self.potential is None:
            raise ValueError(f"{self.kind} operator requires a potential")
        if self.potential is not None and self.potential.grid != self.grid:
            raise ValueError("potential grid mismatch")


def apply(h, psi):
    """Apply the operator to a field.

    free:     |xi|^2 multiplier;
    magnetic: (-i grad - A)^2 psi = -Laplace psi + W_A psi with V dropped;
    full:     -Laplace psi + W psi.
    """
    if psi.grid != h.grid:
        raise ValueError("grid mismatch")
    g = h.grid
    free = ifftn(g.k2 * fftn(psi.values))
    if h.kind == "free":
        return Field(g, free)
    p = h.potential
    if h.kind == "magnetic" and np.any(p.v):
        p = PotentialData(grid=p.grid, a=p.a, v=np.zeros(g.shape),
                          grad_a=p.grad_a, analytic=None)
    return Field(g, free + apply_w(p, psi).values)


def magnetic_gradient(p, psi):
    """The three components of grad_A psi = (d_j - i A_j) psi."""
    if psi.grid != p.grid:
        raise ValueError("grid mismatch")
    d = spectral_gradient(psi.values, p.grid)
    return tuple(Field(p.grid, d[j] - 1j * p.a[j] * psi.values)
                 for j in range(3))


def gradient_norm(fields):
    """L^2 norm of a vector field given as a tuple of component Fields."""
    h = fields[0].grid.h
    total = sum(np.sum(np.abs(f.values) ** 2) for f in fields)
    return float(np.sqrt(total * h ** 3))


def random_bump(grid, rng, band_frac=1.0 / 7.0, support_frac=0.5):
    """Seeded random band-limited bump supported in the inner half-box.

    White noise is shaped by a Gaussian spectral envelope of width
    band_frac * Nyquist and a Gaussian spatial envelope confined to
    support_frac of the box, keeping products of samples alias-free and the
    support away from the periodic boundary.
    """
    g = grid
    noise = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    band = band_frac * np.pi / g.h
    envelope_k = np.exp(-g.k2 / (2.0 * band ** 2))
    v = ifftn(noise * envelope_k)
    width = support_frac * g.l / 2.5
    v = v * np.exp(-g.r2 / (2.0 * width ** 2))
    n = l2_norm(v, g.h)
    if n == 0.0:
        return random_bump(grid, rng, band_frac, support_frac)
    return Field(g, v / n)


def hardy_check(p, psi):
    """Magnetic Hardy inequality ||psi||_{L^2_{-1}} <= 4 ||grad_A psi||.

    Returns (lhs, rhs, pass).  The inequality is a theorem on R^3; a failure
    on a well-supported sample indicates a discretization bug.
    """
    if psi.grid != p.grid:
        raise ValueError("grid mismatch")
    g = psi.grid
    boundary = np.max(np.abs(np.concatenate([
        psi.values[0].ravel(), psi.values[:, 0].ravel(),
        psi.values[:, :, 0].ravel()])))
    if boundary > 1e-4 * max(np.max(np.abs(psi.values)), 1e-300):
        import warnings
        warnings.warn("field support touches the box boundary; the Hardy "
                      "inequality is stated on R^3 and may be polluted")
    lhs = weighted_norm(psi, WeightedNormSpec(sigma=-1.0, s=0.0))
    rhs = 4.0 * gradient_norm(magnetic_gradient(p, psi))
    return lhs, rhs, bool(lhs <= rhs * (1.0 + 1e-8))


def norm_equivalence_check(p, samples, seed=0):
    """Empirical band of r(u) = ||grad_A u|| / ||grad u|| over random bumps."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    zero = PotentialData(grid=p.grid, a=np.zeros((3,) + p.grid.shape),
                         v=np.zeros(p.grid.shape), grad_a=None, analytic=None)
    ratios = []
    while len(ratios) < samples:
        u = random_bump(p.grid, rng)
        denom = gradient_norm(magnetic_gradient(zero, u))
        if denom < 1e-14:
            continue  # degenerate sample: resample, never divide
        ratios.append(gradient_norm(magnetic_gradient(p, u)) / denom)
    return float(min(ratios)), float(max(ratios))


def scalar_bound_probe(b, l, lambda_grid, omega_grid):
    """Supremum of (1+sqrt(lambda))^{2l} / (|omega|^{-(1-l)} (|lambda-omega|^2
    + lambda)) over the sample; finiteness and refinement stability certify
    the inequality empirically."""
    if l not in (0, 1):
        raise ValueError("l must be 0 or 1")
    if b <= 0:
        raise ValueError("b must be positive")
    lam = np.asarray(list(lambda_grid), dtype=float)
    if np.any(lam < 0):
        raise ValueError("lambda must be nonnegative")
    om = np.asarray(list(omega_grid), dtype=complex)
    if np.any(np.abs(om) < b):
        raise ValueError("all |omega| must be >= b")
    worst = 0.0
    for w in om:
        lhs = (1.0 + np.sqrt(lam)) ** (2 * l)
        rhs = np.abs(w) ** (-(1.0 - l)) * (np.abs(lam - w) ** 2 + lam)
        good = rhs > 0
        worst = max(worst, float(np.max(lhs[good] / rhs[good])))
    return worst
