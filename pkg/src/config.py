# src/config.py
import os
from typing import Optional

from dotenv import load_dotenv

from .errors import ConfigError

load_dotenv()


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}={raw!r} is not a number") from exc


def _env_int(name: str, default: Optional[int]) -> Optional[int]:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}={raw!r} is not an integer") from exc


# ---------- discretization ----------
DEFAULT_NQ = _env_int("ANNULUS_NQ", 64)
DEFAULT_NP = _env_int("ANNULUS_NP", 32)

# ---------- classification ----------
DEGENERATE_TOL = _env_float("ANNULUS_DEGENERATE_TOL", 1e-9)
DIRECTION_GUARD = _env_float("ANNULUS_DIRECTION_GUARD", 1e-6)

# ---------- spectra ----------
DEFAULT_KMAX = _env_int("ANNULUS_KMAX", 8)
IMAG_TOL = 1e-10
CROSSING_TOL = 1e-8

# ---------- Newton / continuation ----------
NEWTON_TOL = _env_float("ANNULUS_NEWTON_TOL", 1e-10)
NEWTON_MAX_ITER = _env_int("ANNULUS_NEWTON_MAX_ITER", 25)
MAX_HALVINGS = 30
DIVERGENCE_WINDOW = 5
NEWTON_POLISH = _env_int("ANNULUS_NEWTON_POLISH", 2)
ADMISSIBILITY_DELTA = _env_float("ANNULUS_ADMISSIBILITY_DELTA", 1e-8)
DS = _env_float("ANNULUS_DS", 0.001)
DS_MIN = _env_float("ANNULUS_DS_MIN", 1e-6)
DS_MAX = _env_float("ANNULUS_DS_MAX", 0.02)
FOLD_STEPS = 500

# ---------- local expansion / amplitude stepping ----------
DIFF_STEP = _env_float("ANNULUS_DIFF_STEP", 1e-2)
# local amplitudes stay below this fraction of alpha_c - alpha_0
LOCAL_FRACTION = _env_float("ANNULUS_LOCAL_FRACTION", 0.1)
LOCAL_AMPLITUDE_MAX = 0.01
LOCAL_POINTS = 10
AMPLITUDE_STEP_MAX = _env_float("ANNULUS_AMPLITUDE_STEP_MAX", 0.002)
AMPLITUDE_STEP_MIN = 1e-7

# ---------- reconstruction ----------
ODE_TOL = _env_float("ANNULUS_ODE_TOL", 1e-10)
DEFAULT_NR = 33
VERIFY_AMPLITUDE = _env_float("ANNULUS_VERIFY_AMPLITUDE", 0.002)

# ---------- CLI ----------
JOBS = _env_int("ANNULUS_JOBS", None) or os.cpu_count() or 1
LOG_LEVEL = os.getenv("ANNULUS_LOG_LEVEL", "WARNING").upper()
