# Orthobell Configuration File
# Copy this file to ~/.config/orthobell/config.py and adjust the values you need.
# Every setting is optional; unset names keep their defaults.

# Root finding for the Laguerre functions
# Uniform scan step on (0, 1) used to bracket the least root
ROOT_SCAN_STEP = 1e-3
# Bisection tolerance once the root is bracketed
ROOT_TOL = 1e-12

# Power-series truncation for L_p
SERIES_REL_TOL = 1e-16
SERIES_MAX_TERMS = 500

# Iteration cap of the safeguarded Newton solver for t(u, v)
T_SOLVER_MAX_ITER = 200

# Points per axis of log grids when no --grid is given
GRID_POINTS = 50

# Seed used when --seed is omitted (ORTHOBELL_SEED overrides it)
DEFAULT_SEED = 20240601

# Monte Carlo: worker threads and paths per chunk
# Results do not depend on either value
WORKERS = 1
CHUNK_PATHS = 2048

# Where CSV/JSON outputs and manifests go (-o/--output-dir overrides it)
OUTPUT_DIR = "orthobell-out"
