"""Region-graph generalized belief propagation and sequential region selection."""
from .exact import ExactResult, OracleInfeasible, exact_brute_force, exact_inference, exact_variable_elimination
from .factor_graph import FactorGraph, build_factor_graph, gen_fully_connected, gen_grid, gen_loop, read_uai, write_uai
from .gbp import GBPOptions, GBPState, rg_free_energy, run_gbp
from .pursuit import PursuitConfig, PursuitTrace, local_delta_f, region_pursuit
from .region_graph import Region, RegionGraph, add_outer_region, bethe_region_graph, check_validity, is_extendable

__version__ = "0.1.0"
