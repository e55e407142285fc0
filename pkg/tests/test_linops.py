import math

import numpy as np
import pytest

from src.closed_forms import ModelParams, alpha_c, eta_bound, laminar_crossing, null_mode, solve_critical_pair, trivial_H
from src.errors import AtCrossingError, BracketError, KmaxTooSmallError, ParameterDomainError
from src.fields import EVEN, Field2D, make_grid
from src.linops import (
    OdeEigenProblem,
    apply_linearized_general,
    apply_linearized_trivial,
    compute_spectrum,
    derivatives,
    derivatives_about_trivial,
    find_alpha_c_numeric,
    morse_index,
    null_space_dimension,
    ode_eigenpairs,
    ode_eigs,
    orthogonality_residual,
    principal_sigma,
    rayleigh_sigma1,
)

EX1 = ModelParams(0.2, solve_critical_pair(0.2, 1.4)[1])
EX2 = ModelParams(0.3, solve_critical_pair(0.3, 1.15)[1])


def smooth_even_field(grid, rng, scale=1.0):
    a = rng.standard_normal(5)
    b = rng.standard_normal(3)

    def fn(q, p):
        modes = sum(a[k] * np.cos(k * q) for k in range(5))
        return scale * modes * (p + 1.0) * (b[0] + b[1] * p + b[2] * p ** 2)

    return Field2D.from_function(grid, fn, parity=EVEN)


def trivial(grid, gamma):
    return Field2D.from_function(grid, lambda q, p: trivial_H(gamma, p) + 0 * q, parity=EVEN)


# -----------------------------
# Per-wavenumber spectra
# -----------------------------
def test_problem_validation():
    with pytest.raises(ParameterDomainError):
        OdeEigenProblem(-1, EX1, 2.0)
    with pytest.raises(ParameterDomainError):
        OdeEigenProblem(1, EX1, 0.1)


@pytest.mark.parametrize("params", [EX1, EX2])
def test_signs_at_alpha_c(params):
    a_c = alpha_c(params)
    assert abs(principal_sigma(params, a_c, k=1)) < 1e-8
    assert principal_sigma(params, a_c, k=0) > 0.0
    assert max(ode_eigs(OdeEigenProblem(2, params, a_c))) < 0.0


def test_eigenvalue_count_matches_interior():
    vals = ode_eigs(OdeEigenProblem(1, EX1, 2.0, np=20))
    assert len(vals) == 18
    assert vals == sorted(vals)


def test_sigma_1_sign_table():
    a_c = alpha_c(EX1)
    assert principal_sigma(EX1, a_c + 0.05) > 0.0
    assert principal_sigma(EX1, a_c - 0.05) < 0.0


def test_sigma_k_decreasing_in_k():
    a_c = alpha_c(EX1)
    sig = [principal_sigma(EX1, a_c, k) for k in range(1, 6)]
    assert all(x > y for x, y in zip(sig, sig[1:]))


def test_spurious_pairs_are_dropped():
    a = alpha_c(EX1) + 0.02
    for np_ in (24, 40):
        vals = ode_eigs(OdeEigenProblem(0, EX1, a, np=np_))
        assert all(math.isfinite(v) for v in vals)
        assert len(vals) <= np_ - 2
        assert vals == sorted(vals)


def test_eigenvalues_converge_in_np():
    a = alpha_c(EX1) + 0.02
    for k in (0, 1, 2):
        coarse = sorted(ode_eigs(OdeEigenProblem(k, EX1, a, np=24)), key=abs)[:5]
        fine = sorted(ode_eigs(OdeEigenProblem(k, EX1, a, np=48)), key=abs)[:5]
        for x, y in zip(coarse, fine):
            assert abs(x - y) < 1e-8 * max(1.0, abs(y))


@pytest.mark.parametrize("params,expected", [(EX1, 1.71615), (EX2, 1.50893)])
def test_numeric_alpha_c(params, expected):
    root = find_alpha_c_numeric(params, np_=32)
    assert root == pytest.approx(expected, abs=1e-4)
    assert root == pytest.approx(alpha_c(params), rel=1e-6)


def test_numeric_alpha_c_zero_flux():
    assert find_alpha_c_numeric(ModelParams(0.2, 0.0)) == pytest.approx(math.exp(0.2), rel=1e-12)


def test_numeric_alpha_c_bad_bracket():
    with pytest.raises(BracketError):
        find_alpha_c_numeric(EX1, bracket=(2.0, 3.0))


# -----------------------------
# Variational quotient
# -----------------------------
def test_rayleigh_reproduces_eta_bound():
    g = EX1.gamma
    p = make_grid(8, 32).p
    testM = np.exp(g * (p + 1.0)) - 1.0
    for a in (alpha_c(EX1), alpha_c(EX1) + 0.3):
        assert rayleigh_sigma1(EX1, a, testM) == pytest.approx(eta_bound(EX1, a), rel=1e-9)


def test_rayleigh_bounds_sigma_1():
    p = make_grid(8, 32).p
    a = alpha_c(EX1) + 0.1
    sigma = principal_sigma(EX1, a)
    for testM in (np.exp(0.2 * (p + 1.0)) - 1.0, (p + 1.0), np.sin(np.pi * (p + 1.0) / 2)):
        assert rayleigh_sigma1(EX1, a, testM) >= -sigma - 1e-8


def test_rayleigh_on_discrete_eigenfunction():
    a = find_alpha_c_numeric(EX1)
    values, modes = ode_eigenpairs(OdeEigenProblem(1, EX1, a, np=32))
    assert rayleigh_sigma1(EX1, a, modes[:, -1]) == pytest.approx(-values[-1], abs=1e-8)


def test_rayleigh_rejects_bad_input():
    p = make_grid(8, 16).p
    with pytest.raises(ParameterDomainError):
        rayleigh_sigma1(EX1, 2.0, p + 2.0)
    with pytest.raises(ParameterDomainError):
        rayleigh_sigma1(ModelParams(0.2, 0.0), 2.0, p + 1.0)


# -----------------------------
# Morse index
# -----------------------------
@pytest.mark.parametrize("params", [EX1, EX2])
def test_morse_index_jumps_by_one(params):
    a_c = alpha_c(params)
    for kmax in (8, 10, 12):
        assert abs(morse_index(params, a_c + 0.001, kmax) - morse_index(params, a_c - 0.001, kmax)) == 1


@pytest.mark.parametrize("params", [EX1, EX2])
def test_k0_eigenvalue_crosses_below_alpha_c(params):
    a0 = laminar_crossing(params)
    assert abs(principal_sigma(params, a0, k=0)) < 1e-8
    assert principal_sigma(params, a0 - 0.001, k=0) < 0.0 < principal_sigma(params, a0 + 0.001, k=0)
    values, modes = ode_eigenpairs(OdeEigenProblem(0, params, a0, np=32))
    p = make_grid(8, 32).p
    kernel = (p + 1.0) * np.exp(params.gamma * p)
    m = modes[:, -1] / modes[-1, -1]
    assert np.allclose(m, kernel, atol=1e-8)
    # a window reaching past a0 picks up the k = 0 crossing as well
    a_c = alpha_c(params)
    assert morse_index(params, a_c + 0.01) - morse_index(params, a_c - 0.01) == 2


def test_morse_index_stable_in_kmax():
    a = alpha_c(EX1) + 0.01
    assert len({morse_index(EX1, a, kmax) for kmax in (8, 10, 12)}) == 1


def test_spectrum_errors():
    with pytest.raises(AtCrossingError):
        compute_spectrum(EX1, find_alpha_c_numeric(EX1))
    with pytest.raises(KmaxTooSmallError):
        compute_spectrum(EX1, alpha_c(EX1) + 0.01, kmax=1)


def test_spectrum_to_dict():
    spectrum = compute_spectrum(EX1, alpha_c(EX1) + 0.01, kmax=4, np_=16)
    data = spectrum.to_dict()
    assert data["kmax"] == 4
    assert [entry["k"] for entry in data["per_k"]] == [0, 1, 2, 3, 4]
    assert data["morse_index"] == sum(v > 0 for entry in data["per_k"] for v in entry["eigenvalues"])


# -----------------------------
# Channel operators
# -----------------------------
@pytest.mark.parametrize("params", [EX1, EX2])
def test_null_mode_is_annihilated(params):
    grid = make_grid(64, 32)
    f = Field2D.from_function(grid, lambda q, p: null_mode(params.gamma, q, p), parity=EVEN)
    interior, top = apply_linearized_trivial(params, alpha_c(params), f)
    assert np.max(np.abs(interior.values[:, 1:-1])) < 1e-8 * f.max_abs()
    assert np.max(np.abs(top)) < 1e-8 * f.max_abs()


def test_linearization_of_zero_field():
    grid = make_grid(16, 12)
    interior, top = apply_linearized_trivial(EX1, 2.0, Field2D.zeros(grid))
    assert interior.max_abs() == 0.0
    assert np.all(top == 0.0)
    interior, top = apply_linearized_general(EX1, 2.0, trivial(grid, EX1.gamma), Field2D.zeros(grid))
    assert interior.max_abs() == 0.0
    assert np.all(top == 0.0)


def test_general_linearization_matches_trivial():
    grid = make_grid(32, 20)
    rng = np.random.default_rng(3)
    H = trivial(grid, EX1.gamma)
    a = alpha_c(EX1) + 0.02
    for _ in range(10):
        f = smooth_even_field(grid, rng)
        i1, t1 = apply_linearized_trivial(EX1, a, f)
        i2, t2 = apply_linearized_general(EX1, a, H, f)
        assert np.max(np.abs(i1.values - i2.values)) <= 1e-10 * max(1.0, i1.max_abs())
        assert np.max(np.abs(t1 - t2)) <= 1e-10 * max(1.0, np.max(np.abs(t1)))


def test_derivatives_about_trivial_agree_with_matrices():
    grid = make_grid(32, 20)
    rng = np.random.default_rng(11)
    h = trivial(grid, EX2.gamma) + smooth_even_field(grid, rng, scale=0.01)
    direct = derivatives(h)
    split = derivatives_about_trivial(h, EX2.gamma)
    assert set(split) == set(direct)
    assert np.array_equal(split["f"], h.values)
    for key in direct:
        assert np.allclose(split[key], direct[key], rtol=0.0, atol=1e-9), key


def test_range_satisfies_orthogonality():
    grid = make_grid(32, 24)
    rng = np.random.default_rng(11)
    a_c = alpha_c(EX1)
    for _ in range(10):
        f = smooth_even_field(grid, rng)
        u, b = apply_linearized_trivial(EX1, a_c, f)
        scale = max(1.0, u.max_abs(), float(np.max(np.abs(b))))
        assert abs(orthogonality_residual(EX1, u, b)) < 1e-8 * scale


def test_transversality_and_zero_pairing():
    grid = make_grid(32, 24)
    g = EX1.gamma
    hstar_top = null_mode(g, grid.q, 0.0)
    b = -2.0 * g * g * math.exp(4.0 * g) * hstar_top
    assert abs(orthogonality_residual(EX1, Field2D.zeros(grid), b)) > 1e-3
    assert orthogonality_residual(EX1, Field2D.zeros(grid), np.zeros(grid.nq)) == 0.0


def test_null_space_is_one_dimensional():
    grid = make_grid(64, 32)
    a_c = alpha_c(EX1)
    assert null_space_dimension(EX1, a_c, grid) == 1
    assert null_space_dimension(EX1, a_c + 0.05, grid) == 0
