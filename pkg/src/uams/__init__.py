"""Uniformly accurate integration of ODEs with several separated periodic time scales."""

from .decomposition import (AnalyticForms, FieldDecomposition, IRRATIONAL, RationalCollapse,
                            antiderivative_g, cascade_fluct, cascade_mean, collapse_rational,
                            collapsed_scale_mean, decompose, jacobian_g)
from .errors import (ConfigurationError, DecompositionValidationError, FieldEvaluationError,
                     MultiscaleError, NonConvergenceError, StepConvergenceError, WindowRangeError)
from .integrator import Trajectory, integrate, recover_window, step_time_integral
from .maps import (MapStackState, lift, map_diagnostics, phi_apply, phi_dt, phi_jac_inv_apply,
                   slow_rhs)
from .scales import MultiscaleField, ScaleVector, SolverConfig

__version__ = "0.1.0"
