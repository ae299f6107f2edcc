"""Zero range process on supercritical percolation clusters with random
conductances: environments, exact kinetic Monte Carlo, homogenized
diffusivity, the limiting nonlinear heat equation, and the experiment
harness that compares the two sides of the hydrodynamic limit.
"""

from .errors import ValidationError, SolverError
from .environment import (
    BondLaw, ConductanceField, ClusterLabeling, DiameterStats,
    generate_field, threshold_field, label_clusters, estimate_m,
    cluster_diameter_stats, save_field, load_field,
)
from .fugacity import JumpRateFn, FugacityTable, rate_fn_by_name
from .sumtree import SumTree
from .zrp import (
    ParticleConfig, SimClock, KMCResult,
    sample_product_measure, simulate_kmc, simulate_coupled_pair,
    build_rate_tree, log_stationary_weight,
)
from .observables import (
    TrigPolynomial, Bump, builtin_test_function, site_points,
    block_density, block_density_field, empirical_measure, EmpiricalMeasure,
    replacement_statistic,
)
from .homogenization import (
    ClusterGraph, CorrectorSolution, EffectiveDiffusivity,
    build_cluster_graph, apply_generator, dirichlet_form,
    inner_product, norm_l1, norm_l2, solve_resolvent,
    corrected_function_convergence, variational_energy, minimize_corrector,
    estimate_D_variational, estimate_D_matrix, estimate_D_msd,
)
from .pde import (
    DensityGrid, cfl_limit, step_nonlinear_heat, solve_to_time,
    bulk_profile, linear_heat_solution, identity_phi,
)

__version__ = "0.1.0"
