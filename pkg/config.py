import os
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

__version__ = "0.1.0"
TOOL_NAME = "qkdrand"

# Remote quantum RNG
ENDPOINT = os.getenv("QKDRAND_ENDPOINT", "https://qrng.anu.edu.au/API/jsonI.php")
REQUEST_TIMEOUT = float(os.getenv("QKDRAND_TIMEOUT", "30"))
MAX_RETRIES = int(os.getenv("QKDRAND_MAX_RETRIES", "3"))
BACKOFF_FACTOR = float(os.getenv("QKDRAND_BACKOFF", "1.0"))
# The ANU API serves at most this many bytes per request
MAX_BYTES_PER_REQUEST = int(os.getenv("QKDRAND_MAX_BYTES_PER_REQUEST", "1024"))

LOG_LEVEL = os.getenv("QKDRAND_LOG_LEVEL", "INFO")

PARKING_CALIBRATION = Path(
    os.getenv(
        "QKDRAND_PARKING_CALIBRATION",
        str(Path(__file__).resolve().parent / "parking_lot_calibration.json"),
    )
)

# Simulation defaults
DEFAULT_E_MAX = 0.11
DEFAULT_SAMPLE_FRACTION = 0.1
DEFAULT_SECURITY_BITS = 64
DEFAULT_ALPHA = 0.01
