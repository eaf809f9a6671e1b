# Default parameters for the slow-decay toolkit
# Every value here can be overridden per run from a JSON config (see run_config.py)

# Polynomial potentials
# Coefficients whose magnitude is at or below this are treated as zero when
# extracting the order of integrability
ZERO_TOL = 1e-12

# Critical points on the unit sphere
# Parameter                Default     Meaning
# MULTISTART_FACTOR        64          number of starts = 64 * J
# ANGLE_DEDUP              1e-6        two points closer than this are the same point
# VALUE_CLUSTER_TOL        1e-9        two values closer than this are the same critical value
# GRAD_TOL                 1e-10       accepted spherical gradient residual
# HESSIAN_ZERO_TOL         1e-8        tangential Hessian eigenvalues below this count as zero
MULTISTART_FACTOR = 64
ANGLE_DEDUP = 1e-6
VALUE_CLUSTER_TOL = 1e-9
GRAD_TOL = 1e-10
HESSIAN_ZERO_TOL = 1e-8
NEWTON_STEP_TOL = 1e-9
NEWTON_MAX_ITER = 200
DESCENT_MAX_ITER = 500

# A value cluster is reported as a critical manifold when its distinct points make
# up at least this share of the converged starts and spread wider than MANIFOLD_SPREAD
MANIFOLD_SHARE = 0.25
MANIFOLD_SPREAD = 0.1

# Lojasiewicz fit
LOJ_RADIUS = 0.05
LOJ_SAMPLES = 200
LOJ_FLAT_TOL = 1e-14

# Adams-Simon check: values within this of zero count as zero
AS_VALUE_TOL = 1e-9

# Lyapunov-Schmidt reduction
KERNEL_TOL = 1e-10
PARTITION_TOL = 1e-10
SYMMETRY_TOL = 1e-12
LS_NEWTON_TOL = 1e-14
LS_NEWTON_MAX_ITER = 50
FIT_GRID = 9
FIT_RESIDUAL_TOL = 1e-8

# Time integration (Dormand-Prince 5(4))
# Parameter        Default     Meaning
# REL_TOL          1e-10       relative local error tolerance
# ABS_TOL          1e-13       absolute local error tolerance
# OUTPUT_RATIO     1.05        geometric output schedule t_{k+1} = 1.05 t_k
# T_LINEAR         1.0         end of the initial linear output phase
# N_LINEAR         20          samples in the linear phase
# FLOOR_TOL        1e-9        stop once |z| falls below this
# ESCAPE_FACTOR    10          stop once |z| exceeds 10 |z0|
REL_TOL = 1e-10
ABS_TOL = 1e-13
OUTPUT_RATIO = 1.05
T_LINEAR = 1.0
N_LINEAR = 20
MAX_STEPS = 2_000_000
FLOOR_TOL = 1e-9
ESCAPE_FACTOR = 10.0
CHART = "cartesian"  # or "sigma_theta"

# Perturbation exponent: |G| <= c |z|^(p - PERTURBATION_EPSILON), eps in (0, 1/2)
PERTURBATION_EPSILON = 0.25

# Exponent of the neutral-mode residual bound |x' + grad f(x)| <= C |x|^(p - eps/2)
RESIDUAL_EPSILON = 0.5

# Trajectory classification
# Parameter            Default     Meaning
# TAIL_FRACTION        0.3         share of samples used for the exponential fit
# MIN_TAIL_SAMPLES     30          fewer samples than this is inconclusive
# R2_EXPONENTIAL       0.999       required goodness of fit of log|z| against t
# PLATEAU_TOL          0.02        relative oscillation of t^(1/(p-2)) r over the last decade
# GROWTH_FACTOR        3           growth of t^(1/(p-2)) r over the last two decades
# CROSSCHECK_TOL       0.01        |alpha0 - beta^-(p-2)/(p(p-2))| relative tolerance
# DIST_TOL             2e-2        tail distance of theta to the zero-value critical set
# MIN_DECADES          3           time span required for the dichotomy
# RATE_TOL             1e-3        match of a fitted decay rate against gamma+- and m/2
# FREQUENCY_TOL        1e-2        match of a fitted oscillation frequency against beta_i
TAIL_FRACTION = 0.3
MIN_TAIL_SAMPLES = 30
R2_EXPONENTIAL = 0.999
PLATEAU_TOL = 0.02
GROWTH_FACTOR = 3.0
CROSSCHECK_TOL = 0.01
VALUE_TOL = 0.02
DIST_TOL = 2e-2
MIN_DECADES = 3.0
RATE_TOL = 1e-3
FREQUENCY_TOL = 1e-2
MZ_RATIO_TOL = 0.05
SECANT_STALL_RATIO = 0.8

# Command line runs
REPORT_SCHEMA_VERSION = 1
DEFAULT_OUT_DIR = "runs"
DEFAULT_SEED = 0
MAX_SWEEP_SIZE = 4096
