"""Scattering for NLS with a time-decaying harmonic potential."""
from .coefficients import (AsymptoticParams, SigmaKind, SigmaModel, ZetaSolution,
                           extract_asymptotics, m2_deviation, solve_zeta)
from .diagnostics import RateFit, fit_power_law, xb_norm
from .propagator import PropagatorContext, apply_U, conjugated_position, dispersive_ratio
from .scattering import (FinalDatum, PhaseAccumulator, ScatterResult, compose_scattering,
                         final_state_solve, forward_extract, mod_phase_bounds, picard_step,
                         profile_up, remainder_terms)
from .solver import EvolveConfig, bridge, evolve, evolve_profile
from .spectral import Field, Gauge, Grid, NormSpec, dilate, chirp_multiply, frac_derivative, norm

__version__ = "0.1.0"
