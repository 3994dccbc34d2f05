"""wfdual: the coupled Wright-Fisher diffusion and its dual jump process.

Forward simulation of the multi-locus diffusion, the dual pure-jump process
built from coalescence, mutation, and one- and two-locus branching rates,
closed-form / series / quadrature / Monte Carlo oracles for the stationary
moment function k, stationary densities, and a verification harness for the
duality identity at the generator and expectation levels.
"""

from ._kernels import BACKEND as kernel_backend
from .diffusion import SdeConfig, TrajectoryRecord, em_step, estimate_moment, simulate_path
from .dual import RateEvent, dual_rates, gillespie_simulate, q_diag
from .errors import (
    ConvergenceError,
    NumericError,
    OracleMisuseError,
    ParameterError,
    UnsupportedShapeError,
    WfdualError,
)
from .harness import DualityReport, F_eval, generator_duality_residual, mc_duality_check
from .kfun import (
    DirichletOracle,
    I_quadrature,
    I_series,
    KOracle,
    MonteCarloOracle,
    SingleLocusOracle,
    TwoLocusOracle,
    k_dirichlet,
    k_monte_carlo,
    k_recursion_residual,
    k_single_locus,
    k_two_locus,
    make_oracle,
)
from .model import (
    ModelParams,
    diffusion_d,
    drift_mu,
    generator_on_monomial,
    grad_V,
    interaction_g,
    potential_V,
    tilde_h,
)
from .specfun import SeriesControl, beta, kummer_1f1, log_gamma
from .stationary import (
    density_grid,
    mcmc_sample,
    normalizing_Z,
    pi_unnormalized,
    stationary_density,
)

__version__ = "0.1.0"
