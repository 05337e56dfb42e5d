"""Numerical toolkit for 3D magnetic Schrodinger operators: resolvent
limiting absorption, low/high-energy asymptotics, the zero-resonance
Spectral Condition, and weighted-norm dispersive decay, all verified at
desk scale on periodic grids.
"""

__version__ = "0.1.0"

from .grid import (Field, Grid, WeightedNormSpec, fourier, inverse_fourier,
                   make_grid, read_field, weighted_norm, write_field)
from .potentials import (DecayProfile, PotentialData, apply_w,
                         builtin_potential, gauge_transform, validate_decay)
from .operators import (OperatorHandle, apply, hardy_check,
                        magnetic_gradient, norm_equivalence_check,
                        scalar_bound_probe)
from .resolvent import (EpsSchedule, ResolventQuery, SolveReport,
                        asymptotic_probe, free_apply, free_kernel,
                        kernel_apply, limiting_absorption, perturbed_born,
                        perturbed_direct, resolvent_derivative)
from .spectral import (SpectralConditionReport, SpectralData,
                       discrete_spectrum, embedded_eigenvalue_scan,
                       project_continuous, spectral_condition_check)
from .propagator import (PartitionOfUnity, QuadratureSpec, evolve_contour,
                         evolve_direct, evolve_free, jensen_kato_oracle)
from .decay import DecayReport, decay_series, fit_power_law
