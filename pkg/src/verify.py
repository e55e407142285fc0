# src/verify.py
"""
Verification suites run by `verify`.

- quick: closed-form identities, the Example points and trivial-flow residuals
- full: quick plus eigen cross-checks, null space, particular solution,
  Morse parity, local expansion and direction, reconstruction conservation
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional

import numpy as np

from . import config
from .closed_forms import (
    BifurcationClass,
    ModelParams,
    alpha_c as closed_alpha_c,
    alpha_s,
    beta,
    classify,
    laminar_crossing,
    lambda_of,
    null_mode,
    o1,
    o2,
    o_total,
    p0sq_bound,
    quadratic_coefficient,
    particular_rhs,
    particular_solution,
    particular_top,
    solve_critical_pair,
)
from .errors import AnnulusError, InfeasibleParametersError
from .fields import Field2D, make_grid
from .linops import (
    apply_linearized_trivial,
    find_alpha_c_numeric,
    morse_index,
    null_space_dimension,
    ode_eigs,
    OdeEigenProblem,
    principal_sigma,
)
from .nonlinear import (
    detect_direction,
    fit_quadratic_law,
    local_branch,
    local_expansion,
    residual_G,
    residual_scale,
    solve_at_amplitude,
    trivial_field,
)
from .reconstruct import bernoulli_check, mass_flux, momentum_pressure_check, reconstruct, round_trip_error

logger = logging.getLogger(__name__)

# (gamma, lambda) -> (p0sq, alpha_c, O, class)
EXAMPLES = {
    "example 1": ((0.2, 1.4), (0.00594402, 1.71615, 0.218807, BifurcationClass.SUPERCRITICAL)),
    "example 2": ((0.3, 1.15), (0.00794367, 1.50893, -0.150203, BifurcationClass.SUBCRITICAL)),
}

AlphaCFn = Callable[[ModelParams], float]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class VerifyReport:
    level: str
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "level": self.level,
            "passed": self.passed,
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
        }

    def lines(self) -> List[str]:
        out = [f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}" for c in self.checks]
        out.append(f"{len(self.checks) - len(self.failures())}/{len(self.checks)} checks passed")
        return out


def _example_params(name: str) -> ModelParams:
    (gamma, lam), _ = EXAMPLES[name]
    _, P = solve_critical_pair(gamma, lam)
    return ModelParams(gamma, P)


def consistency_grid(n: int = 20) -> Iterator[ModelParams]:
    """Feasible points with p0sq > 0 on an n x n grid of the default window."""
    for g in np.linspace(0.05, 0.95, n):
        for lam in np.linspace(0.5, 2.5, n):
            try:
                _, P = solve_critical_pair(float(g), float(lam))
            except InfeasibleParametersError:
                continue
            if P > 0.0:
                yield ModelParams(float(g), P)


# -----------------------------
# Quick checks
# -----------------------------
def check_determinant_identity(alpha_c_fn: AlphaCFn = closed_alpha_c) -> CheckResult:
    worst = 0.0
    for params in consistency_grid():
        g, P = params.gamma, params.p0sq
        a_c = alpha_c_fn(params)
        t1 = -beta(params, a_c) * math.expm1(2.0 * g)
        t2 = 2.0 * P * math.exp(2.0 * g)
        scale = g * g * math.exp(3.0 * g) * a_c * math.expm1(2.0 * g) + t2
        worst = max(worst, abs(t1 + t2) / scale)
    return CheckResult("determinant identity", worst < 1e-12, f"max relative error {worst:.3e}")


def check_beta_identity(alpha_c_fn: AlphaCFn = closed_alpha_c) -> CheckResult:
    worst = 0.0
    for params in consistency_grid():
        g, P = params.gamma, params.p0sq
        a_c = alpha_c_fn(params)
        expected = 2.0 * P * math.exp(2.0 * g) / math.expm1(2.0 * g)
        scale = g * g * math.exp(3.0 * g) * a_c + expected
        worst = max(worst, abs(beta(params, a_c) - expected) / scale)
    return CheckResult("beta identity at alpha_c", worst < 1e-12, f"max relative error {worst:.3e}")


def check_o_sum() -> CheckResult:
    worst = 0.0
    for params in consistency_grid():
        a, b, total = o1(params), o2(params), o_total(params)
        worst = max(worst, abs(a + b - total) / max(abs(a), abs(b), abs(total)))
    return CheckResult("o1 + o2 = o_total", worst < 1e-10, f"max relative error {worst:.3e}")


def check_lambda_at_alpha_s() -> CheckResult:
    worst = 0.0
    for params in consistency_grid():
        worst = max(worst, abs(lambda_of(params, alpha_s(params))) / math.exp(2.0 * params.gamma))
    return CheckResult("lambda(alpha_s) = 0", worst < 1e-12, f"max |lambda| {worst:.3e}")


def check_critical_pair_round_trip(alpha_c_fn: AlphaCFn = closed_alpha_c) -> CheckResult:
    worst = 0.0
    for params in consistency_grid():
        a_c = alpha_c_fn(params)
        lam = lambda_of(params, a_c)
        a_back, P_back = solve_critical_pair(params.gamma, lam)
        # p0sq error relative to its feasibility bound
        P_err = abs(P_back - params.p0sq) / p0sq_bound(params.gamma)
        worst = max(worst, abs(a_back - a_c) / a_c, P_err)
    return CheckResult("critical pair round trip", worst < 1e-12, f"max relative error {worst:.3e}")


def check_examples() -> List[CheckResult]:
    out = []
    for name, ((gamma, lam), (P_ref, a_ref, o_ref, cls_ref)) in EXAMPLES.items():
        a_c, P = solve_critical_pair(gamma, lam)
        params = ModelParams(gamma, P)
        o, cls = o_total(params), classify(params)
        ok = abs(P - P_ref) <= 1e-6 and abs(a_c - a_ref) <= 1e-5 and abs(o - o_ref) <= 1e-5 and cls == cls_ref
        out.append(CheckResult(f"{name} closed forms", ok,
                               f"p0sq={P:.8g} alpha_c={a_c:.8g} O={o:.8g} class={cls.value}"))
    return out


def check_trivial_residuals() -> List[CheckResult]:
    grid = make_grid(config.DEFAULT_NQ, config.DEFAULT_NP)
    out = []
    for name in EXAMPLES:
        params = _example_params(name)
        H = trivial_field(grid, params.gamma)
        scale = residual_scale(H)
        a0 = alpha_s(params)
        worst = 0.0
        for i in range(20):
            alpha = a0 + 3.0 * (i + 0.5) / 20.0
            g1, g2 = residual_G(alpha, H, params)
            worst = max(worst, float(np.max(np.abs(g1.values[:, 1:-1]))), float(np.max(np.abs(g2))))
        out.append(CheckResult(f"{name} trivial residual", worst < 1e-11 * scale,
                               f"max |G| {worst:.3e} (scale {scale:.3g})"))
    return out


# -----------------------------
# Full checks
# -----------------------------
def check_eigen_alpha_c(name: str) -> List[CheckResult]:
    params = _example_params(name)
    a_c = closed_alpha_c(params)
    a_num = find_alpha_c_numeric(params)
    rel = abs(a_num - a_c) / a_c
    s0 = principal_sigma(params, a_c, k=0)
    s2 = max(ode_eigs(OdeEigenProblem(2, params, a_c)))
    return [
        CheckResult(f"{name} eigen alpha_c", rel < 1e-6, f"numeric {a_num:.12g} vs closed {a_c:.12g}"),
        CheckResult(f"{name} sigma_0(alpha_c) > 0", s0 > 0.0, f"sigma_0 = {s0:.6g}"),
        CheckResult(f"{name} k=2 spectrum negative", s2 < 0.0, f"largest = {s2:.6g}"),
    ]


def check_null_space(name: str) -> List[CheckResult]:
    params = _example_params(name)
    grid = make_grid(64, 32)
    a_c = closed_alpha_c(params)
    hstar = Field2D.from_function(grid, lambda q, p: null_mode(params.gamma, q, p))
    interior, top = apply_linearized_trivial(params, a_c, hstar)
    ratio = max(float(np.max(np.abs(interior.values[:, 1:-1]))), float(np.max(np.abs(top)))) / hstar.max_abs()
    dim = null_space_dimension(params, a_c, grid)
    return [
        CheckResult(f"{name} null mode annihilated", ratio < 1e-8, f"relative residual {ratio:.3e}"),
        CheckResult(f"{name} one-dimensional null space", dim == 1, f"{dim} near-zero singular value(s)"),
    ]


def check_particular_solution(name: str) -> CheckResult:
    params = _example_params(name)
    grid = make_grid(config.DEFAULT_NQ, config.DEFAULT_NP)
    a_c = closed_alpha_c(params)
    f = Field2D.from_function(grid, lambda q, p: particular_solution(params, q, p))
    interior, top = apply_linearized_trivial(params, a_c, f)
    Q, P = grid.mesh()
    rhs = particular_rhs(params, Q, P)
    top_ref = particular_top(params, grid.q)
    err = max(float(np.max(np.abs(interior.values[:, 1:-1] - rhs[:, 1:-1]))),
              float(np.max(np.abs(top - top_ref))))
    scale = max(1.0, float(np.max(np.abs(rhs))), float(np.max(np.abs(top_ref))))
    return CheckResult(f"{name} particular solution", err < 1e-8 * scale, f"max residual {err:.3e}")


def morse_window(params: ModelParams) -> float:
    """Half-width around alpha_c that stays clear of the k = 0 crossing."""
    return min(1e-3, 0.5 * abs(closed_alpha_c(params) - laminar_crossing(params)))


def check_morse_parity(name: str) -> CheckResult:
    params = _example_params(name)
    a_c = closed_alpha_c(params)
    w = morse_window(params)
    jumps = []
    for kmax in (8, 10, 12):
        jumps.append(morse_index(params, a_c + w, kmax) - morse_index(params, a_c - w, kmax))
    ok = all(abs(j) == 1 for j in jumps) and len(set(jumps)) == 1
    return CheckResult(f"{name} Morse parity", ok, f"jumps {jumps} over +-{w:.3g} for kmax 8, 10, 12")


def check_direction(name: str) -> List[CheckResult]:
    params = _example_params(name)
    grid = make_grid(config.DEFAULT_NQ, config.DEFAULT_NP)
    expansion = local_expansion(params, grid)
    c_closed = quadratic_coefficient(params)
    rel_c = abs(expansion.c - c_closed) / abs(c_closed)
    out = [CheckResult(f"{name} local coefficient", rel_c < 1e-2,
                       f"c={expansion.c:.6g} vs closed form {c_closed:.6g}")]
    branch = local_branch(params, grid, expansion=expansion)
    a_c = branch.alpha_c
    nontrivial = [p for p in branch.points if abs(p.amplitude) > 10.0 * config.NEWTON_TOL]
    out.append(CheckResult(f"{name} branch length", len(nontrivial) >= 10, f"{len(nontrivial)} nontrivial points"))
    if len(nontrivial) >= 10:
        c, rel = fit_quadratic_law(nontrivial[:10], a_c)
        out.append(CheckResult(f"{name} quadratic law", rel < 0.05, f"c={c:.6g}, relative residual {rel:.3e}"))
    fit = detect_direction(branch.points, a_c, o_total(params))
    expected = classify(params)
    out.append(CheckResult(f"{name} direction", fit.direction == expected,
                           f"fit {fit.direction.value} (c={fit.c:.4g}) vs closed form {expected.value}"))
    return out


def check_reconstruction() -> List[CheckResult]:
    params = _example_params("example 1")
    grid = make_grid(config.DEFAULT_NQ, config.DEFAULT_NP)
    a_c = closed_alpha_c(params)
    out = []

    fields = reconstruct(trivial_field(grid, params.gamma), params, a_c)
    _, spread = bernoulli_check(fields, params, a_c)
    flux = mass_flux(fields)
    flux_spread = float(flux.max() - flux.min())
    out.append(CheckResult("trivial reconstruction", spread < 1e-9 and flux_spread < 1e-9,
                           f"Bernoulli spread {spread:.3e}, flux spread {flux_spread:.3e}"))

    target = config.VERIFY_AMPLITUDE
    state = solve_at_amplitude(params, target, grid)
    fields = reconstruct(state.h, params, state.alpha)
    _, spread = bernoulli_check(fields, params, state.alpha)
    gap, _ = momentum_pressure_check(state.h, params, state.alpha)
    flux = mass_flux(fields)
    flux_spread = float(flux.max() - flux.min())
    rt = round_trip_error(fields)
    ok = spread < 1e-5 and gap < 1e-8 and flux_spread < 1e-7 and rt < 1e-6
    out.append(CheckResult(f"amplitude {target:g} reconstruction", ok,
                           f"Bernoulli spread {spread:.3e}, pressure gap {gap:.3e}, "
                           f"flux spread {flux_spread:.3e}, round trip {rt:.3e}"))
    return out


# -----------------------------
# Runner
# -----------------------------
def _guarded(name: str, fn: Callable[[], Any]) -> List[CheckResult]:
    try:
        result = fn()
    except (AnnulusError, ArithmeticError, np.linalg.LinAlgError) as exc:
        logger.warning("check %s raised %s", name, exc)
        return [CheckResult(name, False, f"{type(exc).__name__}: {exc}")]
    return result if isinstance(result, list) else [result]


def run_verify(level: str = "quick", alpha_c_fn: Optional[AlphaCFn] = None) -> VerifyReport:
    """Run the quick or full suite. `alpha_c_fn` replaces the closed-form alpha_c in the identity checks."""
    if level not in ("quick", "full"):
        raise ValueError(f"unknown verification level {level!r}")
    fn = alpha_c_fn or closed_alpha_c
    report = VerifyReport(level=level)
    suite = [
        ("determinant identity", lambda: check_determinant_identity(fn)),
        ("beta identity at alpha_c", lambda: check_beta_identity(fn)),
        ("o1 + o2 = o_total", check_o_sum),
        ("lambda(alpha_s) = 0", check_lambda_at_alpha_s),
        ("critical pair round trip", lambda: check_critical_pair_round_trip(fn)),
        ("examples", check_examples),
        ("trivial residuals", check_trivial_residuals),
    ]
    if level == "full":
        for name in EXAMPLES:
            suite += [
                (f"{name} eigen", lambda n=name: check_eigen_alpha_c(n)),
                (f"{name} null space", lambda n=name: check_null_space(n)),
                (f"{name} particular solution", lambda n=name: check_particular_solution(n)),
                (f"{name} Morse parity", lambda n=name: check_morse_parity(n)),
                (f"{name} direction", lambda n=name: check_direction(n)),
            ]
        suite.append(("reconstruction", check_reconstruction))
    for name, fn_check in suite:
        report.checks.extend(_guarded(name, fn_check))
        logger.debug("finished %s", name)
    logger.info("verify %s: %d/%d passed", level, len(report.checks) - len(report.failures()), len(report.checks))
    return report
