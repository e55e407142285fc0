# src/nonlinear.py
"""
Nonlinear height-function problem: residual, Newton solver, the local
expansion of the branch at the bifurcation point, pseudo-arclength and
amplitude continuation, and the pitchfork direction test.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from . import config
from .closed_forms import (
    BifurcationClass,
    ModelParams,
    alpha_c as closed_alpha_c,
    alpha_s,
    laminar_crossing,
    lambda_of,
    normalized_null_mode,
    trivial_H,
)
from .errors import (
    InadmissibleStateError,
    InsufficientDataError,
    NoConvergenceError,
    NumericalFailure,
    ParameterDomainError,
)
from .fields import EVEN, EvenSubspace, Field2D, Grid, field_to_dict, make_grid, trace_top
from .linops import alpha_derivative, assemble_even_jacobian, derivatives, derivatives_about_trivial
from .storage import save_csv, save_json
from .utils import cosine_coefficient

logger = logging.getLogger(__name__)


# -----------------------------
# States
# -----------------------------
@dataclass
class StateVector:
    h: Field2D
    alpha: float
    residual_norm: float = math.nan
    iterations: int = 0


@dataclass
class BranchPoint:
    alpha: float
    h: Field2D
    amplitude: float
    arclength: float
    residual_norm: float


def trivial_field(grid: Grid, gamma: float) -> Field2D:
    return Field2D.from_function(grid, lambda q, p: trivial_H(gamma, p) + 0.0 * q, parity=EVEN)


def null_direction(grid: Grid, gamma: float) -> Field2D:
    """Unit-norm null mode of the linearization at the bifurcation point."""
    return Field2D.from_function(grid, lambda q, p: normalized_null_mode(gamma, q, p), parity=EVEN)


def amplitude(h: Field2D, params: ModelParams) -> float:
    """Coefficient of cos q in the surface trace of h - H."""
    H = trivial_field(h.grid, params.gamma)
    return cosine_coefficient(trace_top(h) - trace_top(H), h.grid.q)


def admissibility_margin(h: Field2D) -> float:
    """min (h + 1) h_p over the grid."""
    d = derivatives(h)
    return float(np.min((1.0 + d["f"]) * d["p"]))


def check_admissible(h: Field2D, delta: Optional[float] = None) -> None:
    delta = config.ADMISSIBILITY_DELTA if delta is None else delta
    if np.any(h.values[:, 0] != 0.0):
        raise InadmissibleStateError("h does not vanish on the bed")
    margin = admissibility_margin(h)
    if not margin > delta:
        raise InadmissibleStateError(f"(h+1) h_p reaches {margin:.3g}, not above {delta:.3g}")


def _is_admissible(h: Field2D, alpha: float, params: ModelParams) -> bool:
    try:
        check_admissible(h)
    except InadmissibleStateError:
        return False
    return alpha > alpha_s(params)


def residual_scale(h: Field2D) -> float:
    """Magnitude of the terms entering the residual, used to scale tolerances."""
    d = derivatives(h)
    y = 1.0 + d["f"]
    return max(1.0, float(np.max(y ** 2))) * max(1.0, float(np.max(d["p"] ** 2)), float(np.max(np.abs(d["pp"]))))


# -----------------------------
# Residual
# -----------------------------
def residual_G(alpha: float, h: Field2D, params: ModelParams, check: bool = True) -> Tuple[Field2D, np.ndarray]:
    """
    Interior residual g1 on the whole grid and surface residual g2 over the
    q-nodes. The interior equation is imposed at p-nodes strictly inside (-1, 0).
    """
    if check:
        check_admissible(h)
    d = derivatives_about_trivial(h, params.gamma)
    y = 1.0 + d["f"]
    hq, hp, hqq, hpp, hqp = d["q"], d["p"], d["qq"], d["pp"], d["qp"]
    g1 = hqq * hp ** 2 - 2.0 * hq * hp * hqp + hpp * hq ** 2 - y * hp ** 2 + y ** 2 * hpp

    P = params.p0sq
    yt, zt, qt = y[:, -1], hp[:, -1], hq[:, -1]
    g2 = yt ** 2 * zt ** 2 * (2.0 * lambda_of(params, alpha) + yt ** 2 - 2.0 * alpha * yt) - P * qt ** 2 - P * yt ** 2
    return Field2D(h.grid, g1), g2


def _residual_vector(space: EvenSubspace, params: ModelParams, alpha: float, h: Field2D) -> np.ndarray:
    g1, g2 = residual_G(alpha, h, params, check=False)
    m = space.m
    r = np.concatenate([g1.values[:m, 1:-1], g2[:m, None]], axis=1)
    return r.ravel()


def _alpha_column(space: EvenSubspace, params: ModelParams, alpha: float, h: Field2D) -> np.ndarray:
    col = np.zeros((space.m, h.grid.np - 1))
    col[:, -1] = alpha_derivative(params, alpha, h)[: space.m]
    return col.ravel()


# -----------------------------
# Newton
# -----------------------------
def _newton(
    x0: np.ndarray,
    build: Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray, float]],
    admissible: Callable[[np.ndarray], bool],
    tol: float,
    max_iter: int,
    least_squares: bool = False,
    polish: int = 0,
) -> Tuple[np.ndarray, float, int]:
    """
    Damped Newton iteration on x. `build` returns (F, J, scale); convergence
    is max|F| <= tol * scale. Inadmissible trial points halve the step. Once
    converged, up to `polish` more full steps are taken while each lowers |F|.
    """

    def newton_step(F, J):
        try:
            if least_squares:
                return scipy.linalg.lstsq(J, -F)[0]
            return scipy.linalg.solve(J, -F)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NoConvergenceError(f"singular Newton system: {exc}") from exc

    x = x0.copy()
    history: List[float] = []
    for it in range(max_iter + 1):
        F, J, scale = build(x)
        norm = float(np.max(np.abs(F)))
        history.append(norm)
        logger.debug("newton it=%d |F|=%.3e (tol %.1e)", it, norm, tol * scale)
        if norm <= tol * scale:
            for _ in range(polish):
                try:
                    trial = x + newton_step(F, J)
                except NoConvergenceError:
                    break
                if not admissible(trial):
                    break
                F_t, J_t, _ = build(trial)
                norm_t = float(np.max(np.abs(F_t)))
                if not norm_t < norm:
                    break
                x, F, J, norm = trial, F_t, J_t, norm_t
            return x, norm, it
        if it == max_iter:
            break
        w = config.DIVERGENCE_WINDOW
        if len(history) > w and all(history[-i] > history[-i - 1] for i in range(1, w + 1)):
            raise NoConvergenceError(f"residual grew for {w} consecutive steps (now {norm:.3e})")
        dx = newton_step(F, J)
        step = 1.0
        for _ in range(config.MAX_HALVINGS):
            trial = x + step * dx
            if admissible(trial):
                break
            step *= 0.5
        else:
            raise InadmissibleStateError(f"no admissible step after {config.MAX_HALVINGS} halvings")
        x = trial
    raise NoConvergenceError(f"no convergence in {max_iter} iterations (|F|={history[-1]:.3e})")


def newton_solve(
    initial: StateVector,
    params: ModelParams,
    fixed_alpha: Optional[float] = None,
    amplitude_target: Optional[float] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    polish: Optional[int] = None,
) -> StateVector:
    """
    Solve G(alpha, h) = 0 from `initial`.

    - fixed_alpha only: alpha held fixed, square system in h
    - amplitude_target only: alpha is an unknown, bordered by the amplitude row
    - both: alpha fixed and the amplitude imposed, solved in the least-squares sense
    - neither: alpha held at initial.alpha
    """
    tol = config.NEWTON_TOL if tol is None else tol
    max_iter = config.NEWTON_MAX_ITER if max_iter is None else max_iter
    polish = config.NEWTON_POLISH if polish is None else polish
    check_admissible(initial.h)
    grid = initial.h.grid
    space = EvenSubspace(grid)
    base_amp = cosine_coefficient(trace_top(trivial_field(grid, params.gamma)), grid.q)
    alpha_free = fixed_alpha is None and amplitude_target is not None
    alpha0 = initial.alpha if fixed_alpha is None else fixed_alpha
    n = space.size

    def split(x):
        return (x[:n], x[n]) if alpha_free else (x, alpha0)

    def build(x):
        u, alpha = split(x)
        h = space.unpack(u)
        F = _residual_vector(space, params, alpha, h)
        J = assemble_even_jacobian(params, alpha, h, space)
        scale = residual_scale(h)
        if amplitude_target is None:
            return F, J, scale
        c = space.top_weights @ u - base_amp - amplitude_target
        F = np.append(F, c)
        if alpha_free:
            col = _alpha_column(space, params, alpha, h)
            J = np.block([[J, col[:, None]], [space.top_weights[None, :], np.zeros((1, 1))]])
        else:
            J = np.vstack([J, space.top_weights[None, :]])
        return F, J, scale

    def admissible(x):
        u, alpha = split(x)
        return _is_admissible(space.unpack(u), alpha, params)

    x0 = space.pack(initial.h)
    if alpha_free:
        x0 = np.append(x0, alpha0)
    x, _, its = _newton(
        x0, build, admissible, tol, max_iter,
        least_squares=(fixed_alpha is not None and amplitude_target is not None),
        polish=polish,
    )
    u, alpha = split(x)
    h = space.unpack(u)
    res = float(np.max(np.abs(_residual_vector(space, params, alpha, h))))
    logger.debug("newton converged in %d iterations, alpha=%.12g", its, alpha)
    return StateVector(h=h, alpha=float(alpha), residual_norm=res, iterations=its)


# -----------------------------
# Local expansion at the bifurcation point
# -----------------------------
@dataclass
class LocalExpansion:
    """
    Branch near the bifurcation point in powers of the cos q surface amplitude a:
    h = H + a phi + a^2 w2 + O(a^3) and alpha = alpha_c + c a^2 + O(a^4), with
    alpha_c the critical value of the discretized problem.
    """
    alpha_c: float
    c: float
    H: Field2D
    phi: Field2D
    w2: Field2D
    sigma_ratio: float

    def predict(self, a: float) -> StateVector:
        return StateVector(h=self.H + self.phi * a + self.w2 * (a * a), alpha=self.alpha_c + self.c * a * a)


def _first_variation(F: Callable, u: np.ndarray, v: np.ndarray, eps: float) -> np.ndarray:
    """F'(u)[v] from Richardson-extrapolated central differences."""

    def est(e):
        return (F(u + e * v) - F(u - e * v)) / (2.0 * e)

    return (4.0 * est(0.5 * eps) - est(eps)) / 3.0


def _second_variation(F: Callable, u: np.ndarray, v: np.ndarray, eps: float) -> np.ndarray:
    def est(e):
        return (F(u + e * v) + F(u - e * v) - 2.0 * F(u)) / (e * e)

    return (4.0 * est(0.5 * eps) - est(eps)) / 3.0


def _third_variation(F: Callable, u: np.ndarray, v: np.ndarray, eps: float) -> np.ndarray:
    def est(e):
        return (F(u + 2.0 * e * v) - 2.0 * F(u + e * v) + 2.0 * F(u - e * v) - F(u - 2.0 * e * v)) / (2.0 * e ** 3)

    return (4.0 * est(0.5 * eps) - est(eps)) / 3.0


def _null_pair(J: np.ndarray, space: EvenSubspace) -> Tuple[np.ndarray, np.ndarray, float]:
    """Right and left singular vectors of the smallest singular value, phi scaled to unit amplitude."""
    U, S, Vt = scipy.linalg.svd(J)
    phi, psi = Vt[-1], U[:, -1]
    amp = float(space.top_weights @ phi)
    if abs(amp) < 1e-6 * float(np.max(np.abs(phi))):
        raise NumericalFailure("the near-null vector has no cos q component at the surface")
    return phi / amp, psi, float(S[-1] / S[-2])


def local_expansion(params: ModelParams, grid: Optional[Grid] = None, eps: Optional[float] = None) -> LocalExpansion:
    """
    Lyapunov-Schmidt reduction of the discretized problem at the trivial flow.

    phi spans the kernel of the Jacobian J at the discrete critical value and psi
    its cokernel. w2 solves J w2 + mu psi = -F''[phi, phi] / 2 with no cos q
    surface amplitude, and solvability at third order gives

        c = -psi . (F'''[phi, phi, phi] / 6 + F''[phi, w2]) / psi . (J_alpha phi).

    The residual is a polynomial in h, so its derivatives are taken by central
    differences along O(1) directions.
    """
    if params.p0sq == 0.0:
        raise ParameterDomainError("the nontrivial branch needs p0sq > 0")
    grid = grid or make_grid(config.DEFAULT_NQ, config.DEFAULT_NP)
    eps = config.DIFF_STEP if eps is None else eps
    space = EvenSubspace(grid)
    H = trivial_field(grid, params.gamma)
    u0 = space.pack(H)
    n = space.size

    alpha = closed_alpha_c(params)
    for refine in (True, False):
        J = assemble_even_jacobian(params, alpha, H, space)
        phi, psi, ratio = _null_pair(J, space)
        k = float(psi @ _first_variation(
            lambda u: _alpha_column(space, params, alpha, space.unpack(u)), u0, phi, eps))
        if k == 0.0:
            raise NumericalFailure("the kernel does not cross transversally in alpha")
        if refine:
            # J at H is affine in alpha
            alpha -= float(psi @ (J @ phi)) / k

    def G(u):
        return _residual_vector(space, params, alpha, space.unpack(u))

    quad = 0.5 * _second_variation(G, u0, phi, eps)
    bordered = np.zeros((n + 1, n + 1))
    bordered[:n, :n] = J
    bordered[:n, n] = psi
    bordered[n, :n] = space.top_weights
    w2 = scipy.linalg.solve(bordered, np.append(-quad, 0.0))[:n]

    cubic = _third_variation(G, u0, phi, eps) / 6.0
    size = float(np.max(np.abs(w2)))
    if size > 0.0:
        b = w2 / size
        cubic = cubic + 0.25 * size * (_second_variation(G, u0, phi + b, eps) - _second_variation(G, u0, phi - b, eps))
    c = -float(psi @ cubic) / k
    logger.info("local expansion: alpha_c=%.15g c=%.8g (sigma ratio %.2e)", alpha, c, ratio)
    return LocalExpansion(
        alpha_c=float(alpha), c=c, H=H, phi=space.unpack(phi), w2=space.unpack(w2), sigma_ratio=ratio
    )


def _local_top(params: ModelParams) -> float:
    gap = abs(closed_alpha_c(params) - laminar_crossing(params))
    return float(np.clip(config.LOCAL_FRACTION * gap, 1e-5, config.LOCAL_AMPLITUDE_MAX))


def local_amplitudes(params: ModelParams, n: Optional[int] = None) -> np.ndarray:
    """
    Amplitudes small against the gap between alpha_c and the laminar crossing
    alpha_0 below it. The two kernels interact on that scale, so the quadratic
    law only describes the branch well inside it.
    """
    n = config.LOCAL_POINTS if n is None else n
    return np.linspace(0.2, 1.0, n) * _local_top(params)


# -----------------------------
# Continuation
# -----------------------------
@dataclass
class Branch:
    params: ModelParams
    alpha_c: float
    points: List[BranchPoint] = field(default_factory=list)
    truncated: bool = False

    def rows(self):
        return [(p.alpha, p.amplitude, p.arclength, p.residual_norm) for p in self.points]

    def to_dict(self, dump_fields: bool = False) -> Dict[str, Any]:
        pts = []
        for p in self.points:
            entry = {
                "alpha": p.alpha,
                "amplitude": p.amplitude,
                "arclength": p.arclength,
                "residual_norm": p.residual_norm,
            }
            if dump_fields:
                entry["h"] = field_to_dict(p.h)
            pts.append(entry)
        return {
            "gamma": self.params.gamma,
            "p0sq": self.params.p0sq,
            "alpha_c": self.alpha_c,
            "truncated": self.truncated,
            "points": pts,
        }

    def save_csv(self, path: str) -> None:
        save_csv(path, ["alpha", "amplitude", "arclength", "residual_norm"], self.rows())

    def save_json(self, path: str, dump_fields: bool = False) -> None:
        save_json(path, self.to_dict(dump_fields))


def _unit(t: np.ndarray, metric: np.ndarray) -> np.ndarray:
    return t / math.sqrt(float(t @ (metric * t)))


def _trace(
    params: ModelParams,
    space: EvenSubspace,
    x_start: np.ndarray,
    t_start: np.ndarray,
    alpha_c: float,
    steps: int,
    ds: float,
    ds_min: float,
    ds_max: float,
    tol: float,
    stop_amplitude: Optional[float] = None,
) -> Branch:
    """Pseudo-arclength steps from (x_start, t_start); x packs (h, alpha)."""
    n = space.size
    metric = np.append(space.metric(), 1.0)
    x_prev, t = x_start, _unit(t_start, metric)
    branch = Branch(params=params, alpha_c=alpha_c)
    s = 0.0
    easy = 0

    def extended_jacobian(x):
        h = space.unpack(x[:n])
        J = assemble_even_jacobian(params, x[n], h, space)
        col = _alpha_column(space, params, x[n], h)
        return h, np.hstack([J, col[:, None]])

    def admissible(x):
        return _is_admissible(space.unpack(x[:n]), x[n], params)

    while len(branch.points) < steps:
        anchor, tangent, step = x_prev, t, ds

        def build(x):
            h, Jx = extended_jacobian(x)
            F = np.append(_residual_vector(space, params, x[n], h), tangent @ (metric * (x - anchor)) - step)
            J = np.vstack([Jx, (metric * tangent)[None, :]])
            return F, J, residual_scale(h)

        try:
            x, _, its = _newton(anchor + step * tangent, build, admissible, tol, config.NEWTON_MAX_ITER,
                                polish=config.NEWTON_POLISH)
        except (NumericalFailure, ParameterDomainError) as exc:
            ds *= 0.5
            easy = 0
            logger.debug("step rejected (%s); ds -> %.3g", exc, ds)
            if ds < ds_min:
                branch.truncated = True
                logger.warning("continuation truncated after %d points: step below %.3g", len(branch.points), ds_min)
                break
            continue

        s += step
        h = space.unpack(x[:n])
        res = float(np.max(np.abs(_residual_vector(space, params, x[n], h))))
        branch.points.append(
            BranchPoint(alpha=float(x[n]), h=h, amplitude=amplitude(h, params), arclength=s, residual_norm=res)
        )

        _, Jx = extended_jacobian(x)
        rhs = np.zeros(n + 1)
        rhs[-1] = 1.0
        try:
            t_new = scipy.linalg.solve(np.vstack([Jx, (metric * t)[None, :]]), rhs)
        except np.linalg.LinAlgError:
            t_new = x - x_prev
        t = _unit(t_new, metric)
        x_prev = x
        if stop_amplitude is not None and abs(branch.points[-1].amplitude) >= stop_amplitude:
            break

        easy = easy + 1 if its <= 3 else 0
        if easy >= 3 and ds < ds_max:
            ds = min(2.0 * ds, ds_max)
            easy = 0
            logger.debug("ds -> %.3g", ds)

    logger.info("branch: %d points, truncated=%s", len(branch.points), branch.truncated)
    return branch


def continue_branch(
    params: ModelParams,
    alpha_start: Optional[float] = None,
    grid: Optional[Grid] = None,
    steps: int = 20,
    ds: Optional[float] = None,
    ds_min: Optional[float] = None,
    ds_max: Optional[float] = None,
    direction: int = 1,
    tol: Optional[float] = None,
    stop_amplitude: Optional[float] = None,
) -> Branch:
    """
    Pseudo-arclength continuation of the nontrivial branch from (alpha_c, H).

    The first step follows (dh, dalpha) = (direction * h_hat, 0). Arclength is
    the channel L2 norm of dh together with |dalpha|. With `stop_amplitude`,
    stops at the first point whose |amplitude| reaches it.
    """
    if params.p0sq == 0.0:
        raise ParameterDomainError("continuation needs p0sq > 0")
    grid = grid or make_grid(config.DEFAULT_NQ, config.DEFAULT_NP)
    ds = config.DS if ds is None else ds
    ds_min = config.DS_MIN if ds_min is None else ds_min
    ds_max = max(config.DS_MAX if ds_max is None else ds_max, ds)
    tol = config.NEWTON_TOL if tol is None else tol
    a_c = closed_alpha_c(params) if alpha_start is None else alpha_start

    space = EvenSubspace(grid)
    x0 = np.append(space.pack(trivial_field(grid, params.gamma)), a_c)
    t0 = np.append(space.pack(null_direction(grid, params.gamma)), 0.0) * float(np.sign(direction) or 1)
    return _trace(params, space, x0, t0, a_c, steps, ds, ds_min, ds_max, tol, stop_amplitude)


def local_branch(
    params: ModelParams,
    grid: Optional[Grid] = None,
    amplitudes: Optional[Sequence[float]] = None,
    tol: Optional[float] = None,
    expansion: Optional[LocalExpansion] = None,
) -> Branch:
    """
    Branch points solved at prescribed small amplitudes, alpha free, each
    seeded from the local expansion. The branch's alpha_c is the discrete one.
    """
    grid = grid or make_grid(config.DEFAULT_NQ, config.DEFAULT_NP)
    exp = expansion or local_expansion(params, grid)
    amps = local_amplitudes(params) if amplitudes is None else np.asarray(amplitudes, dtype=float)
    space = EvenSubspace(grid)
    metric = np.append(space.metric(), 1.0)
    branch = Branch(params=params, alpha_c=exp.alpha_c)
    x_prev = np.append(space.pack(exp.H), exp.alpha_c)
    s = 0.0
    for a in amps:
        try:
            state = newton_solve(exp.predict(float(a)), params, amplitude_target=float(a), tol=tol)
        except NumericalFailure as exc:
            branch.truncated = True
            logger.warning("local branch stops before amplitude %.3g: %s", a, exc)
            break
        x = np.append(space.pack(state.h), state.alpha)
        dx = x - x_prev
        s += math.sqrt(float(dx @ (metric * dx)))
        x_prev = x
        branch.points.append(BranchPoint(alpha=state.alpha, h=state.h, amplitude=amplitude(state.h, params),
                                         arclength=s, residual_norm=state.residual_norm))
    logger.info("local branch: %d points up to amplitude %.3g", len(branch.points),
                branch.points[-1].amplitude if branch.points else 0.0)
    return branch


def solve_at_amplitude(
    params: ModelParams, target: float, grid: Optional[Grid] = None, expansion: Optional[LocalExpansion] = None
) -> StateVector:
    """
    Nontrivial solution with the given cos q amplitude, alpha free.

    The branch is entered at a small amplitude from the local expansion and
    followed in amplitude: secant predictor, amplitude-pinned Newton corrector,
    step halved on failure and doubled after three easy steps. If the step
    collapses (the amplitude folds), pseudo-arclength continuation takes over
    from the last two solved points.
    """
    grid = grid or make_grid(config.DEFAULT_NQ, config.DEFAULT_NP)
    exp = expansion or local_expansion(params, grid)
    space = EvenSubspace(grid)
    sign = 1.0 if target >= 0.0 else -1.0
    goal = abs(target)
    if goal == 0.0:
        res = float(np.max(np.abs(_residual_vector(space, params, exp.alpha_c, exp.H))))
        return StateVector(h=exp.H, alpha=exp.alpha_c, residual_norm=res)

    solved = [(0.0, np.append(space.pack(exp.H), exp.alpha_c))]
    da = min(goal, _local_top(params))
    reached = 0.0
    easy = 0
    state = None
    while reached < goal:
        a_next = min(reached + da, goal)
        if len(solved) == 1:
            guess = exp.predict(sign * a_next)
        else:
            (a0, x0), (a1, x1) = solved[-2], solved[-1]
            x = x1 + (a_next - a1) / (a1 - a0) * (x1 - x0)
            guess = StateVector(h=space.unpack(x[:-1]), alpha=float(x[-1]))
        try:
            state = newton_solve(guess, params, amplitude_target=sign * a_next)
        except NumericalFailure as exc:
            da *= 0.5
            easy = 0
            logger.debug("amplitude step to %.4g rejected (%s); step -> %.3g", a_next, exc, da)
            if da < config.AMPLITUDE_STEP_MIN:
                return _continue_past_fold(params, space, solved, sign * goal, exp.alpha_c)
            continue
        solved = [solved[-1], (a_next, np.append(space.pack(state.h), state.alpha))]
        reached = a_next
        easy = easy + 1 if state.iterations <= 3 else 0
        if easy >= 3:
            da = min(2.0 * da, config.AMPLITUDE_STEP_MAX)
            easy = 0
    logger.info("amplitude %.4g reached at alpha=%.12g", target, state.alpha)
    return state


def _continue_past_fold(
    params: ModelParams, space: EvenSubspace, solved: List[Tuple[float, np.ndarray]], target: float, a_c: float
) -> StateVector:
    if len(solved) < 2:
        raise NoConvergenceError(f"no branch point found on the way to amplitude {target}")
    (a0, x0), (a1, x1) = solved[-2], solved[-1]
    logger.info("amplitude stepping stalls at %.4g; following the branch by arclength", a1)
    metric = np.append(space.metric(), 1.0)
    ds = math.sqrt(float((x1 - x0) @ (metric * (x1 - x0))))
    branch = _trace(params, space, x1, x1 - x0, a_c, config.FOLD_STEPS, ds, config.DS_MIN,
                    max(config.DS_MAX, ds), config.NEWTON_TOL, stop_amplitude=abs(target))
    if not branch.points or abs(branch.points[-1].amplitude) < abs(target):
        largest = max([abs(p.amplitude) for p in branch.points] + [a1])
        raise NoConvergenceError(f"branch does not reach amplitude {target} (largest {largest:.4g})")
    last = branch.points[-1]
    return newton_solve(StateVector(h=last.h, alpha=last.alpha), params, amplitude_target=target)


def mirror_branch(branch: Branch) -> Branch:
    """Image of a branch under the half-period shift q -> q + pi (flips the cos q amplitude)."""
    mirrored = Branch(params=branch.params, alpha_c=branch.alpha_c, truncated=branch.truncated)
    for p in branch.points:
        nq = p.h.grid.nq
        h = Field2D(p.h.grid, np.roll(p.h.values, nq // 2, axis=0), EVEN)
        mirrored.points.append(
            BranchPoint(alpha=p.alpha, h=h, amplitude=amplitude(h, branch.params), arclength=p.arclength,
                        residual_norm=p.residual_norm)
        )
    return mirrored


# -----------------------------
# Direction of the pitchfork
# -----------------------------
@dataclass
class DirectionFit:
    direction: BifurcationClass
    c: float
    relative_residual: float
    n_points: int


def fit_quadratic_law(points: Sequence[BranchPoint], alpha_c: float) -> Tuple[float, float]:
    """Least-squares c in alpha - alpha_c = c a^2 and the relative residual of the fit."""
    a2 = np.array([p.amplitude ** 2 for p in points])
    da = np.array([p.alpha - alpha_c for p in points])
    c = float(a2 @ da / (a2 @ a2))
    resid = float(np.linalg.norm(da - c * a2))
    scale = float(np.linalg.norm(da))
    return c, (resid / scale if scale > 0.0 else 0.0)


def detect_direction(
    points: Sequence[BranchPoint],
    alpha_c: float,
    o_value: Optional[float] = None,
    min_points: int = 5,
    tol: Optional[float] = None,
) -> DirectionFit:
    """
    Classify the pitchfork from branch points. A coefficient too small to
    move alpha beyond the solver noise is reported as degenerate, as is any
    case whose closed-form coefficient is below the direction guard. The
    points should lie well inside `local_amplitudes`; further out the branch
    feels the laminar crossing and the sign of alpha - alpha_c can change.
    """
    tol = config.NEWTON_TOL if tol is None else tol
    usable = [p for p in points if abs(p.amplitude) > 10.0 * tol]
    if len(usable) < min_points:
        raise InsufficientDataError(f"need {min_points} nontrivial points, have {len(usable)}")
    c, rel = fit_quadratic_law(usable, alpha_c)
    max_a2 = max(p.amplitude ** 2 for p in usable)
    if o_value is not None and abs(o_value) < config.DIRECTION_GUARD:
        direction = BifurcationClass.DEGENERATE
    elif abs(c) * max_a2 <= 10.0 * tol * max(1.0, abs(alpha_c)):
        direction = BifurcationClass.DEGENERATE
    elif c > 0.0:
        direction = BifurcationClass.SUPERCRITICAL
    else:
        direction = BifurcationClass.SUBCRITICAL
    logger.info("direction fit: c=%.6g rel.residual=%.3g -> %s", c, rel, direction.value)
    return DirectionFit(direction=direction, c=c, relative_residual=rel, n_points=len(usable))
