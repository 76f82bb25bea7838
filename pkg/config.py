from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent


class Config:
    # Model set of the numerical study, shipped with the systems app
    DEFAULT_MODEL_FILE = BASE_DIR / 'systems' / 'data' / 'benchmark_models.json'

    # Realization and uncertainty sampling
    REALIZATION_CHECK_POINTS = 512
    REALIZATION_CHECK_RTOL = 1e-10
    WORST_CASE_GRID_POINTS = 1024
    BODE_GRID_POINTS = 512
    MAX_SAMPLING_ATTEMPTS = 1000

    # Numerical tolerances
    PINV_RTOL = 1e-10
    ENERGY_TOL = 1e-8
    RANGE_TOL = 1e-8
    NORMALIZATION_TOL = 1e-6
    DEGENERATE_NORM = 1e-12
    FEASIBILITY_TOL = 1e-9
    TIE_TOL = 1e-9

    # Output scaling by bisection, bracket is [1/k, k] around the closed form
    BISECTION_BRACKET = 1e9
    BISECTION_RTOL = 1e-8

    # Max-min optimizer on the reachability ellipsoid
    OPTIMIZER_STARTS = 64
    OPTIMIZER_SEED = 1
    TEMPERATURE_START = 10.0
    TEMPERATURE_END = 1e4
    ANNEALING_STAGES = 8
    STAGE_ITERATIONS = 150
    POLISH_ITERATIONS = 300
    INITIAL_STEP = 0.25

    # Robustness margins
    MARGIN_RANDOM_SAMPLES = 100
    MARGIN_SEED = 0

    # Diagnosis: 'past' (simulate with the past input) or 'ls' (least squares)
    DEFAULT_INIT_SCHEME = 'past'

    # Monte Carlo
    MONTE_CARLO_TRIALS = 250
    MONTE_CARLO_SEED = 1
