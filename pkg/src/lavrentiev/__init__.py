"""Total-variation Lavrentiev regularisation for convolutional Volterra equations.

Solves ``A u + alpha dTV(u) ∋ f`` on a uniform grid, where ``A`` is a
first-kind Volterra convolution operator, with a generalised taut-string
solver, an extragradient reference solver, kernel monotonicity checks and a
convergence-rate harness.
"""

from .errors import (IncompatibleGrids, InvalidParameter, LavrentievError, NumericFailure,
                     SolverFailure, UnsupportedKernel)
from .grid import (Grid, Signal, cumulative_integral, dual_pairing, lp_norm, read_signal_csv,
                   total_variation, write_signal_csv)
from .harness import (ExperimentConfig, PhantomSpec, RateParams, RateTable, add_noise,
                      choose_alpha, estimate_rate, make_phantom, run_rate_experiment)
from .monotonicity import (MonotonicityReport, analytic_check, check_kernel,
                           discrete_psd_check, fourier_cosine_coeffs)
from .oracle import SplitConfig, extragradient_solve, operator_norm_estimate
from .tv import (OptimalityCertificate, SolverTrace, Tube, check_optimality, envelope_minus,
                 envelope_plus, solve_tv_lavrentiev, taut_string_prox)
from .volterra import (Abel, Constant, Exponential, Table, VolterraOperator, apply, discretize,
                       identity_kernel, monotone_pairing, parse_kernel,
                       solve_classical_lavrentiev)

__version__ = "0.1.0"
