# Models and errors must be loaded first
from .errors import *
from .model import *

# Certification
from .infomatrix import (InfoMatrix, ReformBlocks, XYGrid, DirectionGrid, SpectralCertificate, assemble_R, lambda_at,
                         certify_lambda, search_directions)
from .checks import (EigenBoundSpec, CheckResult, bounds_from_models, check_case1_gershgorin, check_case2_schur,
                     check_example2_interval, compute_lambda_U, check_example2_schur_chain, check_remark3, run_all)

# Equilibrium, kinetic solver and particles
from .equilibrium import *
from .kinetic import (SolverConfig, KineticSolver, ChangCooperOperator, DiagnosticsSeries, initial_density, run,
                      check_energy_identity, check_dissipation_inequality, fit_exponential, fit_rate)
from .particles import (ParticleState, ParticleSnapshot, ParticleTrajectory, em_step, sample_from_density,
                        compare_marginals, simulate)

# Experiments and reports
from .config import ExperimentConfig, load_config, parse_config, dump_config, resolve_threads
from .tex import TexObject, TexCommand, TexEnvironment, TexFile, Package, bold, italic, build, escape
from .document import Document, Section, Subsection
from .table import Table, Tabular

__version__ = '0.1.0'
