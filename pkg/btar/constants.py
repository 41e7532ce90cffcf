# Shrinkage prior
TAU_SHAPE = 1.0
TAU_RATE = 1.0
ETA_STEP = 0.01
ALPHA_GRID_SIZE = 100

# Gaussian priors
FIXED_FACTOR_VARIANCE = 1.0
CORE_PRIOR_SCALE = 10.0
INTERCEPT_PRIOR_SCALE = 10.0
IW_EXTRA_DOF = 2

# Volatility
OUTLIER_GRID_SIZE = 20
OUTLIER_LOW = 2.0
OUTLIER_HIGH = 10.0
OUTLIER_PRIOR_A = 2.0
OUTLIER_PRIOR_B = 100.0
PHI_PRIOR_MEAN = 0.9
PHI_PRIOR_SD = 0.2
SIGMA2_PRIOR_SHAPE = 5.0
SIGMA2_PRIOR_SCALE = 0.16
H_STEP = 0.3

# Initialization
INIT_PHI = 0.9
INIT_SIGMA2 = 0.01
INIT_FACTOR_SD = 0.1

# Acceptance-rate band outside of which a warning is logged
ACCEPTANCE_LOW = 0.1
ACCEPTANCE_HIGH = 0.9

# Benchmark DGPs
DGP_TARGET_NORM = 5.0
DGP_INTERCEPT = 0.1
DGP_MAX_RADIUS = 0.95
DGP_BURN_IN = 50
MARGIN_MEAN = 0.3
MARGIN_SD = 0.5
DENSE_OFFDIAG_SD = 0.3
DENSE_DIAG_LOW = 0.1
DENSE_DIAG_HIGH = 0.4

# Minnesota baseline
MINNESOTA_KAPPA1 = 0.04
MINNESOTA_KAPPA2 = 0.25
MINNESOTA_INTERCEPT_VARIANCE = 1e6

# Preprocessing
MOVING_AVERAGE_WINDOW = 3
SEASONAL_LAG = 12
ZERO_DENOMINATOR_TOL = 1e-12

# Raw draw dump
DRAWS_MAGIC = b"BTARDRAWS v1\n"
