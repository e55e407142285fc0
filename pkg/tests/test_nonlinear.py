import math

import numpy as np
import pytest

from src import config
from src.closed_forms import (
    BifurcationClass,
    ModelParams,
    alpha_c,
    alpha_s,
    classify,
    laminar_crossing,
    null_mode_amplitude,
    o_total,
    quadratic_coefficient,
    solve_critical_pair,
)
from src.errors import InadmissibleStateError, InsufficientDataError, ParameterDomainError
from src.fields import EVEN, EvenSubspace, Field2D, make_grid
from src.linops import apply_linearized_general
from src.nonlinear import (
    BranchPoint,
    StateVector,
    admissibility_margin,
    amplitude,
    check_admissible,
    continue_branch,
    detect_direction,
    fit_quadratic_law,
    local_amplitudes,
    local_branch,
    local_expansion,
    mirror_branch,
    newton_solve,
    null_direction,
    residual_G,
    residual_scale,
    solve_at_amplitude,
    trivial_field,
)

EX1 = ModelParams(0.2, solve_critical_pair(0.2, 1.4)[1])
EX2 = ModelParams(0.3, solve_critical_pair(0.3, 1.15)[1])
GRID = make_grid(32, 20)
# arclength step keeping 20 points well inside the window below the laminar crossing
DS_LOCAL = 2.5e-5


def smooth_even_field(grid, rng, scale=1.0):
    a = rng.standard_normal(4)
    b = rng.standard_normal(3)

    def fn(q, p):
        modes = sum(a[k] * np.cos(k * q) for k in range(4))
        return scale * modes * (p + 1.0) * (b[0] + b[1] * p + b[2] * p ** 2)

    return Field2D.from_function(grid, fn, parity=EVEN)


def residual_max(alpha, h, params, check=True):
    g1, g2 = residual_G(alpha, h, params, check=check)
    return max(float(np.max(np.abs(g1.values[:, 1:-1]))), float(np.max(np.abs(g2))))


def along_null(params, eps, grid=GRID):
    space = EvenSubspace(grid)
    h = trivial_field(grid, params.gamma) + eps * null_direction(grid, params.gamma)
    return space.unpack(space.pack(h))


@pytest.fixture(scope="module")
def branch1():
    return continue_branch(EX1, grid=GRID, steps=20, ds=DS_LOCAL, ds_max=DS_LOCAL)


@pytest.fixture(scope="module")
def branch2():
    return continue_branch(EX2, grid=GRID, steps=20, ds=DS_LOCAL, ds_max=DS_LOCAL)


@pytest.fixture(scope="module", params=[EX1, EX2], ids=["example1", "example2"])
def expansion(request):
    return request.param, local_expansion(request.param, GRID)


# -----------------------------
# Residual
# -----------------------------
@pytest.mark.parametrize("params", [EX1, EX2])
def test_trivial_flow_is_exact(params):
    H = trivial_field(GRID, params.gamma)
    scale = residual_scale(H)
    for alpha in np.linspace(alpha_s(params) + 1e-3, alpha_s(params) + 3.0, 20):
        assert residual_max(alpha, H, params) < 1e-11 * scale


def test_residual_quadratic_along_null_direction():
    a_c = alpha_c(EX1)
    ratios = [residual_max(a_c, along_null(EX1, eps), EX1) / eps ** 2 for eps in (1e-2, 1e-3, 1e-4)]
    assert max(ratios) < 2.0 * min(ratios)


def test_residual_linear_along_other_directions():
    a_c = alpha_c(EX1)
    space = EvenSubspace(GRID)
    bump = Field2D.from_function(GRID, lambda q, p: np.cos(2 * q) * (p + 1.0) ** 2, parity=EVEN)
    H = trivial_field(GRID, EX1.gamma)
    sizes = [residual_max(a_c, space.unpack(space.pack(H + eps * bump)), EX1) for eps in (1e-3, 1e-4)]
    assert sizes[0] / sizes[1] == pytest.approx(10.0, rel=0.05)


def test_inadmissible_states_rejected():
    H = trivial_field(GRID, EX1.gamma)
    shifted = H.with_values(H.values + 0.01, parity=EVEN)
    with pytest.raises(InadmissibleStateError):
        check_admissible(shifted)
    folded = Field2D.from_function(GRID, lambda q, p: -0.5 * (p + 1.0) + 0 * q, parity=EVEN)
    with pytest.raises(InadmissibleStateError):
        residual_G(2.0, folded, EX1)
    assert admissibility_margin(H) > 0.0


def test_jacobian_matches_central_differences():
    rng = np.random.default_rng(5)
    H = trivial_field(GRID, EX1.gamma)
    alpha = alpha_c(EX1) + 0.01
    for _ in range(3):
        h = H + smooth_even_field(GRID, rng, scale=0.01)
        f = smooth_even_field(GRID, rng)
        lin_i, lin_t = apply_linearized_general(EX1, alpha, h, f)
        errors = []
        for eps in (1e-2, 5e-3):
            gp1, gp2 = residual_G(alpha, h + eps * f, EX1, check=False)
            gm1, gm2 = residual_G(alpha, h - eps * f, EX1, check=False)
            fd_i = (gp1.values - gm1.values) / (2 * eps)
            fd_t = (gp2 - gm2) / (2 * eps)
            errors.append(max(np.max(np.abs(fd_i - lin_i.values)[:, 1:-1]), np.max(np.abs(fd_t - lin_t))))
        assert 3.0 < errors[0] / errors[1] < 5.0


# -----------------------------
# Newton
# -----------------------------
def test_newton_from_trivial_stays_trivial():
    H = trivial_field(GRID, EX1.gamma)
    out = newton_solve(StateVector(h=H, alpha=2.0), EX1)
    assert out.iterations <= 1
    assert np.max(np.abs(out.h.values - H.values)) < 1e-12
    assert out.alpha == 2.0


def test_newton_amplitude_constraint_finds_nontrivial_state():
    a_c = alpha_c(EX1)
    target = 2e-4
    start = along_null(EX1, target / null_mode_amplitude(EX1.gamma))
    out = newton_solve(StateVector(h=start, alpha=a_c), EX1, amplitude_target=target)
    assert amplitude(out.h, EX1) == pytest.approx(target, abs=1e-12)
    assert out.alpha > a_c
    assert out.alpha - a_c == pytest.approx(quadratic_coefficient(EX1) * target ** 2, rel=0.05)
    assert out.residual_norm < config.NEWTON_TOL * residual_scale(out.h)


def test_newton_polish_reaches_roundoff():
    a_c = alpha_c(EX1)
    start = StateVector(h=along_null(EX1, 3e-4), alpha=a_c)
    loose = newton_solve(start, EX1, amplitude_target=3e-4, tol=1e-6, polish=0)
    tight = newton_solve(start, EX1, amplitude_target=3e-4, tol=1e-6)
    assert tight.residual_norm <= loose.residual_norm
    assert tight.residual_norm < 1e-13 * residual_scale(tight.h)


def test_newton_zero_amplitude_below_alpha_c_returns_trivial():
    a = alpha_c(EX1) - 0.01
    out = newton_solve(StateVector(h=along_null(EX1, 1e-3), alpha=a), EX1, fixed_alpha=a, amplitude_target=0.0)
    H = trivial_field(GRID, EX1.gamma)
    assert np.max(np.abs(out.h.values - H.values)) < 1e-8
    assert abs(amplitude(out.h, EX1)) < 1e-10


def test_solve_at_amplitude():
    state = solve_at_amplitude(EX1, 0.002, GRID)
    assert amplitude(state.h, EX1) == pytest.approx(0.002, abs=1e-10)
    assert state.alpha > alpha_c(EX1)
    assert state.residual_norm < config.NEWTON_TOL * residual_scale(state.h)
    assert admissibility_margin(state.h) > 0.0


def test_solve_at_amplitude_stays_on_primary_branch():
    exp = local_expansion(EX1, GRID)
    up = solve_at_amplitude(EX1, 3e-4, GRID, expansion=exp)
    down = solve_at_amplitude(EX1, -3e-4, GRID, expansion=exp)
    assert up.alpha - exp.alpha_c == pytest.approx(exp.c * 3e-4 ** 2, rel=0.05)
    assert down.alpha == pytest.approx(up.alpha, abs=1e-9)
    assert amplitude(down.h, EX1) == pytest.approx(-3e-4, abs=1e-12)


def test_solve_at_zero_amplitude_is_trivial():
    state = solve_at_amplitude(EX1, 0.0, GRID)
    assert np.array_equal(state.h.values, trivial_field(GRID, EX1.gamma).values)


# -----------------------------
# Local expansion
# -----------------------------
def test_expansion_coefficient_matches_closed_form(expansion):
    params, exp = expansion
    assert exp.c == pytest.approx(quadratic_coefficient(params), rel=5e-3)
    assert exp.alpha_c == pytest.approx(alpha_c(params), abs=1e-9)
    assert exp.sigma_ratio < 1e-6


def test_expansion_kernel_is_the_null_mode(expansion):
    params, exp = expansion
    space = EvenSubspace(GRID)
    scaled = null_direction(GRID, params.gamma) * (1.0 / null_mode_amplitude(params.gamma))
    assert np.allclose(exp.phi.values, scaled.values, atol=1e-8)
    assert abs(space.top_weights @ space.pack(exp.w2)) < 1e-10
    assert np.all(exp.w2.values[:, 0] == 0.0)


def test_expansion_predictor_error_is_cubic(expansion):
    params, exp = expansion
    errors = [residual_max(exp.predict(a).alpha, exp.predict(a).h, params) for a in (4e-4, 2e-4)]
    assert 6.0 < errors[0] / errors[1] < 10.0


def test_local_amplitudes_sit_inside_the_laminar_gap():
    for params in (EX1, EX2):
        amps = local_amplitudes(params)
        gap = alpha_c(params) - laminar_crossing(params)
        assert len(amps) == config.LOCAL_POINTS
        assert np.all(np.diff(amps) > 0.0)
        assert amps[-1] == pytest.approx(config.LOCAL_FRACTION * gap, rel=1e-12)


def test_local_branch_follows_quadratic_law(expansion):
    params, exp = expansion
    branch = local_branch(params, GRID, expansion=exp)
    assert len(branch.points) == config.LOCAL_POINTS
    assert not branch.truncated
    c, rel = fit_quadratic_law(branch.points, branch.alpha_c)
    assert rel < 0.05
    assert c == pytest.approx(exp.c, rel=0.1)
    fit = detect_direction(branch.points, branch.alpha_c, o_total(params))
    assert fit.direction == classify(params)


# -----------------------------
# Continuation
# -----------------------------
def test_branch_supercritical_side(branch1):
    a_c = alpha_c(EX1)
    assert len(branch1.points) == 20
    assert not branch1.truncated
    assert all(p.alpha >= a_c - 1e-6 for p in branch1.points)


def test_branch_subcritical_side(branch2):
    a_c = alpha_c(EX2)
    assert len(branch2.points) == 20
    assert all(p.alpha <= a_c + 1e-6 for p in branch2.points)


def test_branch_points_are_converged_and_admissible(branch1):
    last = 0.0
    for p in branch1.points:
        assert p.residual_norm < config.NEWTON_TOL * residual_scale(p.h)
        assert admissibility_margin(p.h) > 0.0
        assert np.all(p.h.values[:, 0] == 0.0)
        assert p.arclength > last
        last = p.arclength
    steps = np.diff([0.0] + [p.arclength for p in branch1.points])
    assert np.all(steps <= DS_LOCAL * (1.0 + 1e-12))


def test_branch_points_survive_repolishing(branch1):
    for p in branch1.points[::5]:
        out = newton_solve(StateVector(h=p.h, alpha=p.alpha), EX1, fixed_alpha=p.alpha, amplitude_target=p.amplitude)
        assert np.max(np.abs(out.h.values - p.h.values)) < 1e-8


def test_quadratic_law(branch1, branch2):
    for branch in (branch1, branch2):
        c, rel = fit_quadratic_law(branch.points[:10], branch.alpha_c)
        assert rel < 0.05


def test_direction_matches_closed_form(branch1, branch2):
    fit1 = detect_direction(branch1.points, branch1.alpha_c, o_total(EX1))
    fit2 = detect_direction(branch2.points, branch2.alpha_c, o_total(EX2))
    assert fit1.direction == BifurcationClass.SUPERCRITICAL
    assert fit2.direction == BifurcationClass.SUBCRITICAL
    assert fit1.c > 0.0 > fit2.c
    assert fit1.c == pytest.approx(quadratic_coefficient(EX1), rel=0.1)
    assert fit2.c == pytest.approx(quadratic_coefficient(EX2), rel=0.2)


def test_branch_amplitude_tracks_arclength(branch1):
    # unit tangent in the channel L2 norm gives amplitude ~ a_hat * s
    a_hat = null_mode_amplitude(EX1.gamma)
    first = branch1.points[0]
    assert first.amplitude == pytest.approx(a_hat * first.arclength, rel=1e-3)


def test_mirror_branch(branch1):
    other = continue_branch(EX1, grid=GRID, steps=6, ds=DS_LOCAL, ds_max=DS_LOCAL, direction=-1)
    mirrored = mirror_branch(branch1)
    for a, b in zip(other.points, mirrored.points):
        assert a.alpha == pytest.approx(b.alpha, abs=1e-8)
        assert a.amplitude == pytest.approx(b.amplitude, abs=1e-8)
    assert all(p.amplitude < 0 for p in other.points)


def test_detect_direction_degenerate_and_insufficient():
    H = trivial_field(GRID, EX1.gamma)
    a_c = alpha_c(EX1)
    flat = [BranchPoint(alpha=a_c, h=H, amplitude=0.01 * k, arclength=0.01 * k, residual_norm=0.0)
            for k in range(1, 8)]
    assert detect_direction(flat, a_c).direction == BifurcationClass.DEGENERATE
    with pytest.raises(InsufficientDataError):
        detect_direction(flat[:3], a_c)


def test_zero_steps_gives_empty_branch(tmp_path):
    branch = continue_branch(EX1, grid=GRID, steps=0)
    assert branch.points == []
    path = tmp_path / "b.csv"
    branch.save_csv(str(path))
    assert path.read_text().strip() == "alpha,amplitude,arclength,residual_norm"


def test_truncation_flag(monkeypatch):
    monkeypatch.setattr(config, "NEWTON_MAX_ITER", 0)
    branch = continue_branch(EX1, grid=GRID, steps=5, ds=0.005, ds_min=0.004)
    assert branch.truncated
    assert branch.points == []


def test_zero_flux_rejected():
    with pytest.raises(ParameterDomainError):
        continue_branch(ModelParams(0.2, 0.0), grid=GRID, steps=2)


def test_branch_export(branch1, tmp_path):
    data = branch1.to_dict(dump_fields=True)
    assert data["alpha_c"] == branch1.alpha_c
    assert len(data["points"]) == 20
    assert len(data["points"][0]["h"]["values"]) == GRID.nq
    branch1.save_json(str(tmp_path / "b.json"))
    assert "h" not in branch1.to_dict()["points"][0]
    assert math.isfinite(data["points"][-1]["amplitude"])
