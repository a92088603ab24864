"""
Shared constants, baseline calibration values and solver defaults.

Every solver default here is surfaced through ``config.SolverSettings`` and can
be overridden from a config file or ``--set solver.<key>=<value>``.
"""

import math


class _Unset:
    """Sentinel class to indicate an unset value."""

    pass


_UNSET = _Unset()

# Baseline parameters (annual frequency)
BASELINE_ALPHA = 0.36
BASELINE_DELTA = 0.08
BASELINE_BETA = 0.96
BASELINE_GAMMA = 3.0
BASELINE_UPSILON = 0.975
BASELINE_TAU_K = 0.398
BASELINE_TAU_L = 0.248
BASELINE_TAU_C = 0.0

# Ability process targets
BASELINE_SIGMA = 0.2473
BASELINE_SKEWNESS = -0.08
BASELINE_KURTOSIS = 6.22
BASELINE_PI_EW = 0.0192
BASELINE_ENTREPRENEUR_SHARE = 0.115
BASELINE_PI_WE = BASELINE_ENTREPRENEUR_SHARE * BASELINE_PI_EW / (1.0 - BASELINE_ENTREPRENEUR_SHARE)
N_PRODUCTIVITY_STATES = 5

# Support half-width of log productivity, in units of sigma
SUPPORT_HALF_WIDTH = math.sqrt(10.0)

# Household problem
VALUE_TOL = 1e-12
VALUE_MAX_ITER = 10_000
THETA_TOL = 1e-12
REGIME_TOL = 1e-8

# Equilibrium search box: R in (upsilon, R_MAX_FACTOR / beta), omega in [OMEGA_MIN, OMEGA_MAX]
EQUILIBRIUM_TOL = 1e-8
EQUILIBRIUM_STARTS = 5
R_MAX_FACTOR = 1.5
OMEGA_MIN = 0.1
OMEGA_MAX = 10.0

# Wealth law
PARETO_Z_MAX = 50.0
PARETO_TOL = 1e-10
GRID_POINTS = 2**12
GRID_LOWER_OFFSET = 2.0
GRID_UPPER_OFFSET = 14.0
INVERSION_T_MAX = 600.0
ATOM_MASS_FLOOR = 1e-17
EXTRAPOLATION_ERROR_RATIO = 0.1
TAIL_S_MAX = 1e6

# Tax searches
REVENUE_TOL = 1e-6
TAU_K_MAX = 0.8
TAU_L_MAX = 0.95
FRONTIER_STEP = 0.01
FULL_GRID_STEP = 0.02
KINK_TOL = 1e-4
OPTIMIZER_STARTS = 5
SWEEP_BOUNDARY_TOL = 1e-3

# Transition
TRANSITION_HORIZON = 100
INITIAL_KNOTS = (1, 5, 10, 20, 50, 100)
STAGE_MAX_NFEV = 400
STAGNATION_TOL = 1e-12

# Monte Carlo oracle
SIMULATION_AGENTS = 1_000_000
SIMULATION_PERIODS = 800
SIMULATION_STREAMS = 8

# Top and bottom groups of the wealth-share table
TOP_SHARE_CUTS = (0.0001, 0.001, 0.005, 0.01, 0.05, 0.10)
BOTTOM_SHARE_CUTS = (0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1)

# Exit codes
EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_SOLVER_ERROR = 3
EXIT_INFEASIBLE_MIX = 4


def final_knot_years(horizon: int = TRANSITION_HORIZON) -> tuple[int, ...]:
    """Knot years of the fully refined price spline: yearly to 25, every 5 to 50, every 10 after."""
    years = set(range(1, min(25, horizon) + 1))
    years.update(range(30, min(50, horizon) + 1, 5))
    years.update(range(60, horizon + 1, 10))
    years.add(horizon)
    return tuple(sorted(years))
