# src/config.py

import os
import logging
from dotenv import load_dotenv

load_dotenv()

# Enumeration guards
SNC_CAP = int(os.getenv("TFP_SNC_CAP", "1000000"))
PAIRING_MAX_P = int(os.getenv("TFP_PAIRING_MAX_P", "7"))
NC12_MAX_P = int(os.getenv("TFP_NC12_MAX_P", "12"))

# Tolerance policy
TOL_MULT = float(os.getenv("TFP_TOL_MULT", "4.0"))
EXACT_RTOL = float(os.getenv("TFP_EXACT_RTOL", "1e-10"))
MC_ATOL = float(os.getenv("TFP_MC_ATOL", "1e-12"))

# Runtime
THREADS = int(os.getenv("TFP_THREADS", "1"))
OUTPUT_DIR = os.getenv("TFP_OUTPUT_DIR", "results")
LOG_LEVEL = os.getenv("TFP_LOG_LEVEL", "INFO")
PROGRESS = os.getenv("TFP_PROGRESS", "0") not in ("0", "", "false", "False")

# Tracking is off unless a URI is configured
MLFLOW_TRACKING_URI = os.getenv("MLFLOW_TRACKING_URI")
MLFLOW_EXPERIMENT = os.getenv("TFP_MLFLOW_EXPERIMENT", "Tensor_Free_Probability")

# Largest total dimension for which the literal bipartite CLT model is built densely
DENSE_MODEL_MAX_D = int(os.getenv("TFP_DENSE_MODEL_MAX_D", "4096"))


class EnumerationLimitError(RuntimeError):
    """Raised when a combinatorial enumeration would exceed its configured cap."""


def setup_logging(level: str | None = None) -> None:
    """Configure the root logger once for CLI runs."""
    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
