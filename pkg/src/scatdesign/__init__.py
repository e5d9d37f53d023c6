"""Design of ball-supported potentials with a prescribed far-field pattern
at one energy and one incident direction, verified by an independent
Lippmann-Schwinger solver."""

from .quadrature import (BallField, BallGrid, RadialRule, SphereRule,
                         constant_field, inner_ball, inner_s2, make_ball_grid,
                         make_radial_rule, make_sphere_rule, norm_s2,
                         save_field)
from .specfun import (HarmonicIndex, UnitVector, assoc_legendre, ipow,
                      legendre_p, lm_index, plane_wave_partial_sum, sph_harm,
                      sph_harm_samples, spherical_bessel_j,
                      spherical_bessel_ladder)
from .sht import (AngularCoefficients, TruncationChoice, analyze, choose_L,
                  load_coefficients, save_coefficients, synthesize)
from .synthesis import (LeastSquaresFit, RadialProfiles, amplitude_at,
                        amplitude_from_h, assemble_h, gamma_l, lsq_fit,
                        moment_check, orthogonal_profile, radial_profiles)
from .reconstruction import (Regularized, ZeroSetReport, ball_potential,
                             default_delta, incident_wave, mollify,
                             potential_from_h, regularize,
                             scattering_field_from_h, tube_integral_bound,
                             volume_potential, zero_set)
from .forward import (LSOperator, SolveStats, amplitude_difference_residual,
                      amplitude_from_q, born_amplitude,
                      partial_wave_amplitude, residual_norm,
                      solve_scattering)
from .cli import (ConfigError, PipelineError, ReconstructionReport,
                  ScatteringConfig, load_config, run_pipeline)

__version__ = "0.1.0"
