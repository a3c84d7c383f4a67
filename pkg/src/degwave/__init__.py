"""Characteristic solver for the degenerate quasilinear wave equation
u_tt = (c(u)^2 u_x)_x + F(u) u_x with c(u) = u^a or a closed-form c."""
import types

from .characteristics import (CharacteristicExit, CharacteristicPath, SpeedProvider,
                              jacobian_bound_report, lipschitz_probe, trace_characteristic,
                              trace_jacobian)
from .config import ConfigError, RunConfig, load_config, parse_config
from .diagnostics import (BreakdownFlag, BreakdownKind, DecayReport, conservation_form_residual,
                          dalembert, decay_report, detect_breakdown, sign_preservation_check)
from .expressions import Expression, ExpressionError
from .fields import (Grid1D, Interpolation, OutOfDomain, ScalarField1D, bracket_weight, interpolate,
                     sample_expression, spatial_derivative, weighted_sup)
from .output import emit_plot, read_solution_csv, write_solution_csv
from .picard import (ContractionFailure, ContractionStats, SlabPolicy, SlabState, Solution, Termination,
                     apply_phi, continue_solution, pde_residual, recover_gradients, solve_slab,
                     update_derivatives)
from .problem import (AssumptionReport, CoefficientMode, DegenerateState, Flux, LeviReport, ProblemSpec,
                      check_levi, derive_gamma, evaluate_sources, initial_fields, initial_invariants,
                      validate_assumptions)

__all__ = [name for name, value in list(globals().items())
           if not name.startswith("_") and not isinstance(value, types.ModuleType)]
