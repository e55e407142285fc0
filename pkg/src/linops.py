# src/linops.py
"""
Linearized operators about the trivial flow and about general states.

- per-wavenumber eigenproblems (spectral collocation in p, Robin row at the
  surface, Dirichlet row at the bed) and the Morse index built from them
- application of the linearization to fields, and its matrix on the even,
  bed-free subspace used by Newton
- null-space and range (orthogonality) checks at the bifurcation point
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.optimize import brentq

from . import config
from .closed_forms import (
    ModelParams,
    alpha_s,
    beta,
    dlambda_dalpha,
    lambda_of,
    null_mode,
    trivial_H,
)
from .errors import (
    AtCrossingError,
    BracketError,
    KmaxTooSmallError,
    NumericalFailure,
    ParameterDomainError,
)
from .fields import (
    EvenSubspace,
    Field2D,
    Grid,
    chebyshev_matrix,
    clenshaw_curtis_weights,
    integrate,
    integrate_top,
    trace_top,
)

logger = logging.getLogger(__name__)


# ==========================================================
# ============ Per-wavenumber eigenproblems ================
# ==========================================================
@dataclass(frozen=True)
class OdeEigenProblem:
    k: int
    params: ModelParams
    alpha: float
    np: int = config.DEFAULT_NP

    def __post_init__(self) -> None:
        if self.k < 0:
            raise ParameterDomainError(f"wavenumber k={self.k} must be nonnegative")
        if self.np < 4:
            raise ParameterDomainError(f"np={self.np} must be at least 4")
        if not self.alpha > alpha_s(self.params):
            raise ParameterDomainError(f"alpha={self.alpha} must exceed alpha_s={alpha_s(self.params)}")


def _mode_matrix(prob: OdeEigenProblem):
    """
    Interior matrix of E^2 (M'' - 2g M' + g^2 (1 - k^2) M) with M(-1) = 0 and
    the Robin row (p0sq/g) M' - beta M = 0 at p = 0 eliminated.

    Returns (A, r): A acts on interior values, r recovers M(0) = r . M_int.
    """
    g, P = prob.params.gamma, prob.params.p0sq
    p, Dp = chebyshev_matrix(prob.np)
    Dpp = Dp @ Dp
    E2 = np.exp(2.0 * g * (p + 1.0))
    op = E2[:, None] * (Dpp - 2.0 * g * Dp + g * g * (1.0 - prob.k ** 2) * np.eye(prob.np))

    top = prob.np - 1
    interior = slice(1, top)
    b = beta(prob.params, prob.alpha)
    denom = (P / g) * Dp[top, top] - b
    if denom == 0.0:
        raise NumericalFailure("surface condition degenerates (p0sq = 0 and beta = 0)")
    r = -(P / g) * Dp[top, interior] / denom

    A = op[interior, interior] + np.outer(op[interior, top], r)
    return A, r


def ode_eigenpairs(prob: OdeEigenProblem) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eigenvalues (ascending) and eigenfunctions sampled on all p-nodes,
    bed and surface values included, one column per eigenvalue.
    """
    A, r = _mode_matrix(prob)
    values, vectors = scipy.linalg.eig(A)
    bad = np.abs(values.imag) > config.IMAG_TOL * np.maximum(1.0, np.abs(values.real))
    if np.any(bad):
        # spurious collocation pairs sit far down the spectrum; one at the top is not spurious
        if np.all(bad) or values.real[bad].max() >= values.real[~bad].max():
            worst = values[bad][np.argmax(values.real[bad])]
            raise NumericalFailure(
                f"non-real leading eigenvalue {worst} for k={prob.k}; increase np (currently {prob.np})"
            )
        logger.debug("k=%d: dropped %d spurious non-real eigenvalue(s)", prob.k, int(bad.sum()))
        values, vectors = values[~bad], vectors[:, ~bad]
    order = np.argsort(values.real)
    values = values.real[order]
    vectors = np.real(vectors[:, order])

    modes = np.zeros((prob.np, len(values)))
    modes[1:-1] = vectors
    modes[-1] = r @ vectors
    return values, modes


def ode_eigs(prob: OdeEigenProblem) -> List[float]:
    values, _ = ode_eigenpairs(prob)
    return values.tolist()


def principal_sigma(params: ModelParams, alpha: float, k: int = 1, np_: int = config.DEFAULT_NP) -> float:
    """Largest eigenvalue of the k-th problem (the one that crosses zero)."""
    return float(ode_eigenpairs(OdeEigenProblem(k, params, alpha, np_))[0][-1])


def find_alpha_c_numeric(
    params: ModelParams,
    bracket: Optional[Tuple[float, float]] = None,
    np_: int = config.DEFAULT_NP,
) -> float:
    """Root of alpha -> sigma_1(alpha) inside `bracket` (default (e^g, 3))."""
    lo, hi = bracket if bracket is not None else (math.exp(params.gamma), 3.0)
    if params.p0sq == 0.0:
        # the surface row reduces to beta M(0) = 0; the crossing is where beta vanishes
        fn = lambda a: beta(params, a)
    else:
        fn = lambda a: principal_sigma(params, a, 1, np_)
    f_lo, f_hi = fn(lo), fn(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise BracketError(f"sigma_1 does not change sign on [{lo}, {hi}] ({f_lo:.3g}, {f_hi:.3g})")
    root = brentq(fn, lo, hi, xtol=1e-13, maxiter=200)
    logger.info("numerical alpha_c = %.12g (np=%d)", root, np_)
    return float(root)


def rayleigh_sigma1(params: ModelParams, alpha: float, testM) -> float:
    """
    Variational quotient for -sigma_1 evaluated on a test function sampled at
    the p-nodes (bed first). Any admissible test function bounds -sigma_1 from above.
    """
    if params.p0sq == 0.0:
        raise ParameterDomainError("the quotient needs p0sq > 0")
    M = np.asarray(testM, dtype=float)
    if M.ndim != 1 or len(M) < 4:
        raise ParameterDomainError("test function must be a 1-D array over at least 4 p-nodes")
    if abs(M[0]) > 1e-12 * max(1.0, float(np.max(np.abs(M)))):
        raise ParameterDomainError("test function must vanish at p = -1")
    g, P = params.gamma, params.p0sq
    p, Dp = chebyshev_matrix(len(M))
    w = clenshaw_curtis_weights(len(M))
    E = np.exp(g * (p + 1.0))
    Mp = Dp @ M
    denom = float(w @ (M ** 2 / E ** 4))
    if denom == 0.0:
        raise NumericalFailure("zero denominator in the variational quotient")
    num = -beta(params, alpha) * g * math.exp(-2.0 * g) * M[-1] ** 2 / P + float(w @ (Mp ** 2 / E ** 2))
    return num / denom


# -----------------------------
# Spectrum and Morse index
# -----------------------------
@dataclass
class Spectrum:
    alpha: float
    kmax: int
    per_k: List[List[float]] = field(default_factory=list)
    morse_index: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "kmax": self.kmax,
            "per_k": [{"k": k, "eigenvalues": vals} for k, vals in enumerate(self.per_k)],
            "morse_index": self.morse_index,
        }


def compute_spectrum(
    params: ModelParams,
    alpha: float,
    kmax: int = config.DEFAULT_KMAX,
    np_: int = config.DEFAULT_NP,
    check: bool = True,
) -> Spectrum:
    """
    Eigenvalues for k = 0..kmax and the count of positive ones.
    With `check`, refuse to count at a crossing and require a negative tail.
    """
    if kmax < 1:
        raise ParameterDomainError("kmax must be at least 1")
    per_k = []
    for k in range(kmax + 1):
        vals = ode_eigs(OdeEigenProblem(k, params, alpha, np_))
        per_k.append(vals)
        logger.debug("k=%d: %d positive of %d", k, sum(v > 0 for v in vals), len(vals))
    if check:
        near = [(k, v) for k, vals in enumerate(per_k) for v in vals if abs(v) < config.CROSSING_TOL]
        if near:
            raise AtCrossingError(f"eigenvalue {near[0][1]:.3g} at k={near[0][0]} is at a crossing (alpha={alpha})")
        if max(per_k[kmax]) >= 0.0:
            raise KmaxTooSmallError(f"k={kmax} still has a nonnegative eigenvalue; raise kmax")
    morse = sum(1 for vals in per_k for v in vals if v > 0.0)
    return Spectrum(alpha=alpha, kmax=kmax, per_k=per_k, morse_index=morse)


def morse_index(
    params: ModelParams,
    alpha: float,
    kmax: int = config.DEFAULT_KMAX,
    np_: int = config.DEFAULT_NP,
) -> int:
    return compute_spectrum(params, alpha, kmax, np_).morse_index


# ==========================================================
# ============ Operators on channel fields =================
# ==========================================================
def derivatives(f: Field2D) -> Dict[str, np.ndarray]:
    g = f.grid
    v = f.values
    vp = v @ g.Dp.T
    vq = g.Dq @ v
    return {
        "f": v,
        "q": vq,
        "qq": g.Dqq @ v,
        "p": vp,
        "pp": v @ g.Dpp.T,
        "qp": g.Dq @ vp,
    }


def _trivial_profile(grid: Grid, gamma: float) -> np.ndarray:
    return np.exp(gamma * (grid.p + 1.0))



def derivatives_about_trivial(h: Field2D, gamma: float) -> Dict[str, np.ndarray]:
    """
    As `derivatives`, with the trivial profile H differentiated exactly. Roundoff
    from the differentiation matrices then scales with |h - H| instead of |h|.
    """
    E = _trivial_profile(h.grid, gamma)[None, :]
    d = derivatives(Field2D(h.grid, h.values - (E - 1.0)))
    d["f"] = h.values
    d["p"] = d["p"] + gamma * E
    d["pp"] = d["pp"] + gamma ** 2 * E
    return d


def apply_linearized_trivial(params: ModelParams, alpha: float, f: Field2D) -> Tuple[Field2D, np.ndarray]:
    """
    Linearization about the trivial flow:
    - interior: E^2 (f_pp - 2g f_p + g^2 f + g^2 f_qq), E = 1 + H
    - top: 2 e^g ((p0sq/g) f_p - beta f) at p = 0
    """
    g, P = params.gamma, params.p0sq
    d = derivatives(f)
    E2 = _trivial_profile(f.grid, g) ** 2
    interior = E2[None, :] * (d["pp"] - 2.0 * g * d["p"] + g * g * d["f"] + g * g * d["qq"])
    top = 2.0 * math.exp(g) * ((P / g) * d["p"][:, -1] - beta(params, alpha) * d["f"][:, -1])
    return Field2D(f.grid, interior), top


def linearization_coefficients(params: ModelParams, alpha: float, h: Field2D):
    """
    Coefficients of the directional derivative of the residual at `h`.

    Interior coefficients multiply f, f_q, f_qq, f_p, f_pp, f_qp on the whole
    grid; top coefficients multiply f, f_q, f_p on the surface row.
    """
    d = derivatives(h)
    y = 1.0 + d["f"]
    hq, hp, hqq, hpp, hqp = d["q"], d["p"], d["qq"], d["pp"], d["qp"]
    interior = {
        "f": -hp ** 2 + 2.0 * y * hpp,
        "q": -2.0 * hp * hqp + 2.0 * hpp * hq,
        "qq": hp ** 2,
        "p": 2.0 * hqq * hp - 2.0 * hq * hqp - 2.0 * y * hp,
        "pp": hq ** 2 + y ** 2,
        "qp": -2.0 * hq * hp,
    }
    P = params.p0sq
    yt, zt = y[:, -1], hp[:, -1]
    A = 2.0 * lambda_of(params, alpha) + yt ** 2 - 2.0 * alpha * yt
    top = {
        "f": 2.0 * yt * zt ** 2 * A + yt ** 2 * zt ** 2 * (2.0 * yt - 2.0 * alpha) - 2.0 * P * yt,
        "q": -2.0 * P * hq[:, -1],
        "p": 2.0 * yt ** 2 * zt * A,
    }
    return interior, top


def apply_linearized_general(
    params: ModelParams, alpha: float, h: Field2D, f: Field2D
) -> Tuple[Field2D, np.ndarray]:
    interior_c, top_c = linearization_coefficients(params, alpha, h)
    d = derivatives(f)
    interior = sum(interior_c[key] * d[key] for key in interior_c)
    top = sum(top_c[key] * d[key][:, -1] for key in top_c)
    return Field2D(f.grid, interior), top


def alpha_derivative(params: ModelParams, alpha: float, h: Field2D) -> np.ndarray:
    """Derivative of the surface residual with respect to alpha (interior rows do not depend on it)."""
    d = derivatives(h)
    y, z = 1.0 + d["f"][:, -1], d["p"][:, -1]
    return 2.0 * y ** 2 * z ** 2 * (dlambda_dalpha(params) - y)


def assemble_even_jacobian(
    params: ModelParams, alpha: float, h: Field2D, space: Optional[EvenSubspace] = None
) -> np.ndarray:
    """
    Matrix of the linearization on the even, bed-free subspace.

    Rows follow the residual layout: interior equation at p-nodes 1..np-2,
    surface equation in the last p slot; q rows are the half grid 0..nq/2.
    """
    space = space or EvenSubspace(h.grid)
    grid, m = h.grid, space.m
    interior_c, top_c = linearization_coefficients(params, alpha, h)

    I_q = np.eye(m)
    I_p = np.eye(grid.np)[:, 1:]
    Bp = grid.Dp[:, 1:]
    Bpp = grid.Dpp[:, 1:]

    def block(coef, A, B):
        return np.einsum("ij,ia,jb->ijab", coef[:m], A, B)

    J1 = (
        block(interior_c["f"], I_q, I_p)
        + block(interior_c["q"], space.Aq, I_p)
        + block(interior_c["qq"], space.Aqq, I_p)
        + block(interior_c["p"], I_q, Bp)
        + block(interior_c["pp"], I_q, Bpp)
        + block(interior_c["qp"], space.Aq, Bp)
    )
    J2 = (
        np.einsum("i,ia,b->iab", top_c["f"][:m], I_q, I_p[-1])
        + np.einsum("i,ia,b->iab", top_c["q"][:m], space.Aq, I_p[-1])
        + np.einsum("i,ia,b->iab", top_c["p"][:m], I_q, Bp[-1])
    )
    J = np.concatenate([J1[:, 1:-1], J2[:, None]], axis=1)
    n = space.size
    return J.reshape(n, n)


def null_space_singular_values(params: ModelParams, alpha: float, grid: Grid) -> np.ndarray:
    """
    Singular values (ascending) of the linearization at the trivial flow on the
    even subspace, right-preconditioned by the same operator with a Dirichlet
    surface row.
    """
    space = EvenSubspace(grid)
    H = Field2D.from_function(grid, lambda q, p: trivial_H(params.gamma, p) + 0.0 * q, parity="even")
    J = assemble_even_jacobian(params, alpha, H, space)
    J_dir = J.copy()
    top_rows = np.arange(space.m) * (grid.np - 1) + (grid.np - 2)
    J_dir[top_rows] = 0.0
    J_dir[top_rows, top_rows] = 1.0
    try:
        K = scipy.linalg.solve(J_dir.T, J.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("Dirichlet-top operator is singular") from exc
    return np.sort(scipy.linalg.svdvals(K))


def null_space_dimension(params: ModelParams, alpha: float, grid: Grid, rel_tol: float = 1e-6) -> int:
    s = null_space_singular_values(params, alpha, grid)
    return int(np.sum(s < rel_tol * s.max()))


def orthogonality_residual(params: ModelParams, u: Field2D, b) -> float:
    """
    Pairing of (u, b) with the element spanning the complement of the range at
    the bifurcation point; zero exactly on the range.
    """
    if params.p0sq == 0.0:
        raise ParameterDomainError("orthogonality condition needs p0sq > 0")
    g, P = params.gamma, params.p0sq
    grid = u.grid
    hstar = Field2D.from_function(grid, lambda q, p: null_mode(g, q, p))
    E = _trivial_profile(grid, g)
    weighted = u.with_values(u.values * hstar.values / E[None, :] ** 4)
    top = math.exp(-3.0 * g) * g * trace_top(hstar) / P * np.asarray(b, dtype=float)
    return integrate(weighted) - 0.5 * integrate_top(grid, top)
