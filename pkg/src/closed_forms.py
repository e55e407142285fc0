# src/closed_forms.py
"""
Closed-form quantities of the annular traveling-wave problem.

Everything here is a pure function of (gamma, p0sq) and, where noted, of the
gravity parameter alpha. Functions accept scalars or numpy arrays for the
coordinate arguments (q, p) so the same formulas feed the quadrature and
collocation checks.
"""
import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from . import config
from .errors import InfeasibleParametersError, ParameterDomainError

logger = logging.getLogger(__name__)

# values of p0sq this close to zero (relative to the upper bound) are snapped to 0
_P0SQ_SNAP = 1e-14


# -----------------------------
# Parameter tuple
# -----------------------------
@dataclass(frozen=True)
class ModelParams:
    """
    Dimensionless vorticity `gamma` and squared relative mass flux `p0sq`.
    The flux itself is negative; only its square enters the formulas.
    """
    gamma: float
    p0sq: float

    def __post_init__(self) -> None:
        g, P = self.gamma, self.p0sq
        if not (math.isfinite(g) and math.isfinite(P)):
            raise ParameterDomainError(f"non-finite parameters gamma={g}, p0sq={P}")
        if not 0.0 < g < 1.0:
            raise ParameterDomainError(f"gamma={g} outside (0, 1)")
        if P < 0.0:
            raise ParameterDomainError(f"p0sq={P} is negative")
        if P >= p0sq_bound(g):
            raise ParameterDomainError(f"p0sq={P} violates p0sq < gamma^2 e^(4 gamma) = {p0sq_bound(g)}")

    @property
    def p0(self) -> float:
        return -math.sqrt(self.p0sq)


class BifurcationClass(str, Enum):
    SUPERCRITICAL = "supercritical"
    SUBCRITICAL = "subcritical"
    DEGENERATE = "degenerate"


def p0sq_bound(gamma: float) -> float:
    return gamma ** 2 * math.exp(4.0 * gamma)


def _require_flux(params: ModelParams, what: str) -> None:
    if params.p0sq == 0.0:
        raise ParameterDomainError(f"{what} is undefined for p0sq = 0")


# -----------------------------
# Trivial branch and critical values
# -----------------------------
def alpha_s(params: ModelParams) -> float:
    g, P = params.gamma, params.p0sq
    return 0.5 * (math.exp(g) - P / (math.exp(3.0 * g) * g * g))


def lambda_of(params: ModelParams, alpha: float) -> float:
    """Bernoulli-type constant of the trivial flow at gravity `alpha`."""
    g, P = params.gamma, params.p0sq
    a_s = alpha_s(params)
    if alpha < a_s - 1e-12 * max(1.0, abs(a_s)):
        raise ParameterDomainError(f"alpha={alpha} below alpha_s={a_s}")
    return (P + math.exp(3.0 * g) * g * g * (2.0 * alpha - math.exp(g))) / (2.0 * g * g * math.exp(2.0 * g))


def dlambda_dalpha(params: ModelParams) -> float:
    return math.exp(params.gamma)


def alpha_c(params: ModelParams) -> float:
    g, P = params.gamma, params.p0sq
    return math.exp(g) + 2.0 * P / (g * g * math.exp(g) * math.expm1(2.0 * g))


def beta(params: ModelParams, alpha: float) -> float:
    g = params.gamma
    return g * g * math.exp(3.0 * g) * (alpha - math.exp(g))



def laminar_crossing(params: ModelParams) -> float:
    """
    Gravity at which the q-independent (k = 0) eigenvalue crosses zero.

    The kernel there is M = (p + 1) e^{g p}, the derivative of the laminar
    family e^{c (p + 1)} - 1 in c at c = g. It lies below alpha_c by a gap
    proportional to p0sq, and the cos q branch interacts with it once its
    amplitude is comparable to that gap.
    """
    g, P = params.gamma, params.p0sq
    return math.exp(g) + P * (1.0 + g) / (g ** 3 * math.exp(3.0 * g))


def solve_critical_pair(gamma: float, lam: float) -> Tuple[float, float]:
    """
    Invert (gamma, lambda) into (alpha_c, p0sq): the bifurcation point of the
    trivial branch whose Bernoulli constant at alpha_c equals `lam`.
    """
    if not 0.0 < gamma < 1.0:
        raise ParameterDomainError(f"gamma={gamma} outside (0, 1)")
    g = gamma
    e2 = math.exp(2.0 * g)
    P = (2.0 * g * g * e2 * lam - g * g * math.exp(4.0 * g)) / (1.0 + 4.0 * e2 / math.expm1(2.0 * g))
    bound = p0sq_bound(g)
    if abs(P) <= _P0SQ_SNAP * bound:
        P = 0.0
    if P < 0.0 or P >= bound:
        raise InfeasibleParametersError(
            f"(gamma, lambda)=({gamma}, {lam}) gives p0sq={P}, outside [0, {bound})"
        )
    return alpha_c(ModelParams(g, P)), P


def trivial_H(gamma: float, p):
    return np.exp(gamma * (np.asarray(p) + 1.0)) - 1.0


# -----------------------------
# Null mode and normalizations
# -----------------------------
def null_mode(gamma: float, q, p):
    return (np.exp(2.0 * gamma * np.asarray(p)) - math.exp(-2.0 * gamma)) * np.cos(q)


def c_hat(gamma: float) -> float:
    """L2 norm of the null mode over the channel."""
    if not 0.0 < gamma < 1.0:
        raise ParameterDomainError(f"gamma={gamma} outside (0, 1)")
    g = gamma
    inner = math.expm1(4.0 * g) / (4.0 * g) - math.expm1(2.0 * g) / g + 1.0
    return math.sqrt(math.pi * math.exp(-4.0 * g) * inner)


def normalized_null_mode(gamma: float, q, p):
    return null_mode(gamma, q, p) / c_hat(gamma)


def c_zero(params: ModelParams) -> float:
    _require_flux(params, "C0")
    g, P = params.gamma, params.p0sq
    interior = math.exp(-12.0 * g) * math.expm1(2.0 * g) ** 3 * (math.exp(2.0 * g) + 3.0) / (24.0 * g)
    boundary = g * g * (math.exp(-3.0 * g) - math.exp(-5.0 * g)) ** 2 / (4.0 * P * P)
    return math.sqrt(math.pi * (interior + boundary))


def range_complement_interior(params: ModelParams, q, p):
    """Interior part of the unit element spanning the complement of the range."""
    g = params.gamma
    return np.exp(-4.0 * g * (np.asarray(p) + 1.0)) * null_mode(g, q, p) / c_zero(params)


def range_complement_top(params: ModelParams, q):
    g, P = params.gamma, params.p0sq
    return -math.exp(-3.0 * g) * g * null_mode(g, q, 0.0) / (2.0 * P * c_zero(params))


# -----------------------------
# Second-order coefficients
# -----------------------------
def z_coeffs(params: ModelParams) -> Tuple[float, float]:
    g, P = params.gamma, params.p0sq
    common = g * g * (1.0 - 2.0 * math.exp(2.0 * g) + math.exp(4.0 * g))
    z1 = common - P * math.exp(-4.0 * g) + 2.0 * P * math.exp(-2.0 * g) - 13.0 * P
    z2 = common + P * math.exp(-4.0 * g) - 2.0 * P * math.exp(-2.0 * g) - 11.0 * P
    return z1, z2


def o1(params: ModelParams) -> float:
    """First contribution to the bifurcation coefficient, in the o_total normalization."""
    _require_flux(params, "o1")
    g, P = params.gamma, params.p0sq
    e = math.exp
    r = P / (g * g)
    inner = (
        4.5 * e(3 * g)
        - 15.0 * e(g)
        - 4.0 * r * e(-7 * g)
        + e(-5 * g) * (1.5 - 12.0 * r - 8.0 * P / g)
        + e(-3 * g) * (44.0 * r - 9.0)
        + e(-g) * (18.0 - 28.0 * r)
    )
    return -36.0 * g * g * P * e(9 * g) * inner


def o2(params: ModelParams) -> float:
    _require_flux(params, "o2")
    g, P = params.gamma, params.p0sq
    e = math.exp
    P2, g2, g3, g4 = P * P, g ** 2, g ** 3, g ** 4
    return (
        60.0 * P2
        + 86.0 * P2 * e(2 * g)
        + e(4 * g) * (864.0 * g * P2 + 530.0 * P2 - 25.0 * g2 * P)
        + e(6 * g) * (576.0 * g * P2 - 2230.0 * P2 + 144.0 * g3 * P + 324.0 * g2 * P)
        + e(8 * g) * (27.0 * g4 + 576.0 * g * P2 + 114.0 * P2 - 72.0 * g3 * P - 930.0 * g2 * P)
        + e(10 * g) * (1440.0 * P2 - 72.0 * g4 + 448.0 * g2 * P)
        + e(12 * g) * (36.0 * g4 - 72.0 * g3 * P + 507.0 * g2 * P)
        + e(14 * g) * (54.0 * g4 - 324.0 * g2 * P)
        - 63.0 * g4 * e(16 * g)
        + 18.0 * g4 * e(18 * g)
    )


def o_total(params: ModelParams) -> float:
    """
    Bifurcation coefficient with the positive prefactor
    36 g^2 C^2 p0sq (e^{2g}-1)^2 e^{9g} divided out. Its sign decides the
    pitchfork direction; see `o_normalized` for the prefactor included.
    """
    _require_flux(params, "o_total")
    g, P = params.gamma, params.p0sq
    e = math.exp
    P2, g2, g3, g4 = P * P, g ** 2, g ** 3, g ** 4
    return (
        60.0 * P2
        + 230.0 * P2 * e(2 * g)
        + e(4 * g) * (962.0 * P2 - 79.0 * g2 * P + 1152.0 * g * P2)
        + e(6 * g) * (576.0 * g * P2 - 3814.0 * P2 + 144.0 * g3 * P + 648.0 * g2 * P)
        + e(8 * g) * (27.0 * g4 + 576.0 * g * P2 + 1122.0 * P2 - 72.0 * g3 * P - 1578.0 * g2 * P)
        + e(10 * g) * (1440.0 * P2 - 72.0 * g4 + 988.0 * g2 * P)
        + e(14 * g) * (54.0 * g4 - 324.0 * g2 * P)
        + e(12 * g) * (36.0 * g4 - 72.0 * g3 * P + 345.0 * g2 * P)
        - 63.0 * g4 * e(16 * g)
        + 18.0 * g4 * e(18 * g)
    )


def o_prefactor(params: ModelParams) -> float:
    g, P = params.gamma, params.p0sq
    return 36.0 * g * g * c_hat(g) ** 2 * P * math.expm1(2.0 * g) ** 2 * math.exp(9.0 * g)


def o_normalized(params: ModelParams) -> float:
    return o_total(params) / o_prefactor(params)


def null_mode_amplitude(gamma: float) -> float:
    """cos q coefficient of the normalized null mode at the surface."""
    return -math.expm1(-2.0 * gamma) / c_hat(gamma)


def quadratic_coefficient(params: ModelParams) -> float:
    """
    c in alpha - alpha_c ~ c a^2 along the bifurcating branch, a being the
    surface cos q amplitude. The fully normalized coefficient is the second
    derivative of alpha in the null-mode coordinate, hence the factor 1/2.
    """
    return 0.5 * o_normalized(params) / null_mode_amplitude(params.gamma) ** 2


def classify(params: ModelParams, tol: Optional[float] = None) -> BifurcationClass:
    tol = config.DEGENERATE_TOL if tol is None else tol
    value = o_total(params)
    if value > tol:
        return BifurcationClass.SUPERCRITICAL
    if value < -tol:
        return BifurcationClass.SUBCRITICAL
    return BifurcationClass.DEGENERATE


# -----------------------------
# Particular solution of the second-order problem
# -----------------------------
def particular_solution(params: ModelParams, q, p):
    _require_flux(params, "the particular solution")
    g, P = params.gamma, params.p0sq
    p = np.asarray(p, dtype=float)
    e = np.exp
    c2q = np.cos(2.0 * np.asarray(q))
    h1 = -1.5 * e(g * (3 * p - 1)) + 0.5 * e(-g * (p + 5)) + e(g * (p - 3)) * c2q
    h2 = (
        4 * g * p * e(g * (p - 3)) - 4 * e(g * (p - 3))
        + 4 * g * p * e(g * (p - 1)) + e(g * (p - 1))
        + 4 * g * p * e(g * (p + 1)) + 4 * e(g * (p + 1))
        + g ** 3 * p * e(g * (p - 1)) / P
        - g ** 3 * p * e(g * (p + 1)) / (2 * P)
        - g ** 3 * p * e(g * (p + 5)) / (2 * P)
        - g ** 2 * e(g * (p - 1)) / (2 * P)
        + g ** 2 * e(g * (p + 1)) / (2 * P)
        + g ** 2 * e(g * (p + 3)) / (2 * P)
        - g ** 2 * e(g * (p + 5)) / (2 * P)
    )
    h2 = h2 + (
        11.0 / 6.0 * e(-g * (p + 1))
        - 11.0 / 9.0 * e(-g * (p + 3))
        - 4.0 / 3.0 * e(-g * (p + 5))
        - 5.0 / 18.0 * e(3 * g * (p - 5.0 / 3.0))
        - g ** 2 * e(-g * (p + 1)) / (2 * P)
        + g ** 2 * e(3 * g * (p + 1)) / (2 * P)
    ) * c2q
    return (h1 + h2) / c_hat(g) ** 2


def particular_rhs(params: ModelParams, q, p):
    """Interior right-hand side the particular solution is built for."""
    g = params.gamma
    p = np.asarray(p, dtype=float)
    return (
        2.0 * g * g * np.exp((p - 3.0) * g)
        * (1.0 - 2.0 * np.exp(2.0 * (p + 1.0) * g) * np.cos(2.0 * np.asarray(q)) - 3.0 * np.exp(4.0 * (p + 1.0) * g))
        / c_hat(g) ** 2
    )


def particular_top(params: ModelParams, q):
    z1, z2 = z_coeffs(params)
    return (z1 + z2 * np.cos(2.0 * np.asarray(q))) / c_hat(params.gamma) ** 2


# -----------------------------
# Variational bound
# -----------------------------
def eta_bound(params: ModelParams, alpha: float) -> float:
    """Rayleigh quotient of the test function e^{g(p+1)} - 1, integrated exactly."""
    _require_flux(params, "eta")
    g, P = params.gamma, params.p0sq
    eg = math.exp(g)
    denom = (
        -math.expm1(-2.0 * g) / (2.0 * g)
        + 2.0 * math.expm1(-3.0 * g) / (3.0 * g)
        - math.expm1(-4.0 * g) / (4.0 * g)
    )
    return g * g * (g * eg * (eg - alpha) * math.expm1(g) ** 2 / P + 1.0) / denom


# -----------------------------
# Bundle
# -----------------------------
@dataclass(frozen=True)
class ClosedForms:
    alpha_s: float
    alpha_c: float
    c_hat: float
    c_zero: float
    z1: float
    z2: float
    o1: float
    o2: float
    o_total: float
    o_normalized: float
    quadratic_coefficient: float
    alpha_laminar: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def closed_forms(params: ModelParams) -> ClosedForms:
    _require_flux(params, "the closed-form bundle")
    z1, z2 = z_coeffs(params)
    a, b, total = o1(params), o2(params), o_total(params)
    if abs(a + b - total) > 1e-10 * max(abs(total), abs(a), abs(b)):
        logger.warning("o1 + o2 = %r disagrees with o_total = %r", a + b, total)
    logger.debug("o_total is the reduced coefficient; fully normalized value %r", total / o_prefactor(params))
    return ClosedForms(
        alpha_s=alpha_s(params),
        alpha_c=alpha_c(params),
        c_hat=c_hat(params.gamma),
        c_zero=c_zero(params),
        z1=z1,
        z2=z2,
        o1=a,
        o2=b,
        o_total=total,
        o_normalized=total / o_prefactor(params),
        quadratic_coefficient=quadratic_coefficient(params),
        alpha_laminar=laminar_crossing(params),
    )
