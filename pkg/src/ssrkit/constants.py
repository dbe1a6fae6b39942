"""Default tolerances and grid sizes, in one place."""

# Lewis-integral quadrature
QUAD_ABS_TOL = 1e-10
QUAD_REL_TOL = 1e-9
QUAD_MAX_PANELS = 4000
QUAD_TRUNCATION = 1e-13
QUAD_GL_ORDER = 10  # nodes per Gauss-Legendre half panel

# Mittag-Leffler evaluation
ML_SERIES_MAX_TERM = 1e3  # largest series term allowed, relative to the sum
ML_ASYMPTOTIC_MIN_ABS_X = 5.0

# Riccati solver
RICCATI_STEPS_PER_YEAR = 512
RICCATI_MIN_STEPS = 256
RICCATI_OVERFLOW = 1e10

# ATM total variance bracket
SIGMA_BRACKET = (1e-12, 16.0)

# Degenerate skew guard on the skew integral
SKEW_DEGENERACY = 1e-14

# Term structure grid
TS_MIN_TAU = 1e-3
TS_MAX_TAU = 2.0
TS_N = 40

# Bump size on instantaneous variance for the Bergomi recipe
BUMP_DEFAULT = 1e-5
