# src/utils.py
import math
from typing import Optional, Tuple

import numpy as np

from .errors import ParameterDomainError


def fmt_num(x: Optional[float], digits: int = 6) -> str:
    """Human-readable number at `digits` significant digits ('-' when absent)."""
    if x is None:
        return "-"
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return f"{x:.{digits}g}"


def fmt_exact(x: float) -> str:
    """17 significant digits, enough to round-trip a double."""
    return f"{x:.17g}"


def parse_range(text: str) -> Tuple[float, float]:
    """Parse 'lo:hi' into a pair of floats with lo < hi."""
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise ParameterDomainError(f"range {text!r} must look like LO:HI") from exc
    if not lo < hi:
        raise ParameterDomainError(f"range {text!r} is empty")
    return lo, hi


def cosine_coefficient(samples: np.ndarray, q: np.ndarray) -> float:
    """Coefficient of cos q in a uniform periodic sample (2/n sum f cos q)."""
    return float(2.0 / len(q) * np.dot(samples, np.cos(q)))
