"""
Configuration module for wittenlab.
Loads environment variables and provides numeric defaults for the solvers and experiments.
"""
import os
from pathlib import Path
from dotenv import load_dotenv

# Base directory (parent of wittenlab)
BASE_DIR = Path(__file__).resolve().parent.parent

# Load environment variables from .env file (in parent directory)
load_dotenv(BASE_DIR / ".env")

# Eigensolver Configuration
SOLVER_TOLERANCE = float(os.getenv("SOLVER_TOLERANCE", "1e-10"))
EIGEN_ASSERT_TOL = float(os.getenv("EIGEN_ASSERT_TOL", "1e-8"))
DENSE_THRESHOLD = int(os.getenv("DENSE_THRESHOLD", "2000"))
CLUSTER_GAP_RTOL = float(os.getenv("CLUSTER_GAP_RTOL", "1e-6"))
LANCZOS_BLOCK_SIZE = int(os.getenv("LANCZOS_BLOCK_SIZE", "8"))
LANCZOS_MAX_BASIS = int(os.getenv("LANCZOS_MAX_BASIS", "900"))
MINMAX_LIMIT = int(os.getenv("MINMAX_LIMIT", "400"))

# Cohomology Configuration
RANK_PIVOT_RTOL = float(os.getenv("RANK_PIVOT_RTOL", "1e-9"))
COHOMOLOGY_DENSE_LIMIT = int(os.getenv("COHOMOLOGY_DENSE_LIMIT", "6000"))

# Weight Field Configuration
PHI_OVERFLOW_GUARD = float(os.getenv("PHI_OVERFLOW_GUARD", "300"))

# Experiment Configuration
DEFAULT_SEED = int(os.getenv("DEFAULT_SEED", "20240601"))
MAX_WORKERS = int(os.getenv("MAX_WORKERS", "4"))
OUTPUT_DIR = os.getenv("OUTPUT_DIR", str(BASE_DIR / "runs"))
DATA_DIR = Path(os.getenv("DATA_DIR", str(BASE_DIR / "wittenlab" / "data")))
WRITE_EIGENCOCHAINS = os.getenv("WRITE_EIGENCOCHAINS", "false").lower() == "true"

# Logging
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
