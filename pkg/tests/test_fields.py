import json
import math

import numpy as np
import pytest

from src.errors import GridError, NumericalFailure, StorageError
from src.fields import (
    EVEN,
    ODD,
    EvenSubspace,
    Field2D,
    chebyshev_matrix,
    clenshaw_curtis_weights,
    d_p,
    d_pp,
    d_q,
    d_qp,
    d_qq,
    field_from_csv,
    field_from_dict,
    field_to_csv,
    field_to_dict,
    fourier_matrix,
    integrate,
    integrate_top,
    make_grid,
    project_even,
    trace_bottom,
    trace_top,
)


@pytest.fixture(scope="module")
def grid():
    return make_grid(32, 20)


def test_chebyshev_nodes_ascending_from_bed():
    p, Dp = chebyshev_matrix(9)
    assert p[0] == -1.0
    assert p[-1] == 0.0
    assert np.all(np.diff(p) > 0)
    assert np.allclose(Dp @ np.ones(9), 0.0, atol=1e-13)
    assert np.allclose(Dp @ p, 1.0, atol=1e-12)


def test_clenshaw_curtis_integrates_polynomials():
    for n in (8, 9):
        p, _ = chebyshev_matrix(n)
        w = clenshaw_curtis_weights(n)
        assert w.sum() == pytest.approx(1.0, rel=1e-14)
        assert w @ p ** 3 == pytest.approx(-0.25, rel=1e-12)


def test_fourier_matrix_differentiates_trig():
    nq = 16
    q = 2 * np.pi * np.arange(nq) / nq
    D1, D2 = fourier_matrix(nq, 1), fourier_matrix(nq, 2)
    assert np.allclose(D1 @ np.sin(3 * q), 3 * np.cos(3 * q), atol=1e-12)
    assert np.allclose(D2 @ np.cos(2 * q), -4 * np.cos(2 * q), atol=1e-12)


@pytest.mark.parametrize("nq,np_", [(15, 10), (0, 10), (16, 3)])
def test_make_grid_rejects_bad_sizes(nq, np_):
    with pytest.raises(GridError):
        make_grid(nq, np_)


def test_make_grid_is_cached():
    assert make_grid(32, 20) is make_grid(32, 20)



def test_small_grid_layout():
    g = make_grid(8, 5)
    assert g.size == 40
    assert g.shape == (8, 5)
    assert g.q[0] == 0.0
    assert np.allclose(np.diff(g.q), math.pi / 4, rtol=0, atol=1e-15)


def test_spectral_derivatives(grid):
    f = Field2D.from_function(grid, lambda q, p: np.cos(q) * np.exp(0.3 * p), parity=EVEN)
    Q, P = grid.mesh()
    assert np.allclose(d_q(f).values, -np.sin(Q) * np.exp(0.3 * P), atol=1e-11)
    assert np.allclose(d_qq(f).values, -f.values, atol=1e-11)
    assert np.allclose(d_p(f).values, 0.3 * f.values, atol=1e-11)
    assert np.allclose(d_pp(f).values, 0.09 * f.values, atol=1e-9)
    assert np.allclose(d_qp(f).values, -0.3 * np.sin(Q) * np.exp(0.3 * P), atol=1e-10)
    assert d_q(f).parity == ODD
    assert d_qp(f).parity == ODD
    assert d_p(f).parity == EVEN



def test_high_order_derivatives_keep_exact_parity():
    fine = make_grid(64, 32)
    f = Field2D.from_function(fine, lambda q, p: np.cos(q) * np.exp(0.3 * p) + np.cos(3 * q) * p ** 2, parity=EVEN)
    mirror = (-np.arange(fine.nq)) % fine.nq
    for g in (d_pp(f), d_p(d_pp(f)), d_qq(d_pp(f))):
        assert np.array_equal(g.values, g.values[mirror])
    odd = d_qp(d_pp(f))
    assert np.array_equal(odd.values, -odd.values[mirror])


def test_d_p_converges_spectrally():
    errors = []
    for np_ in (6, 10, 14):
        g = make_grid(8, np_)
        f = Field2D.from_function(g, lambda q, p: np.cos(q) * np.exp(2.0 * p), parity=EVEN)
        Q, P = g.mesh()
        errors.append(float(np.max(np.abs(d_p(f).values - 2.0 * np.cos(Q) * np.exp(2.0 * P)))))
    assert errors[1] < 1e-2 * errors[0]
    assert errors[2] < 1e-2 * errors[1]
    assert errors[2] < 1e-9


def test_mixed_derivative_commutes(grid):
    f = Field2D.from_function(grid, lambda q, p: (np.cos(q) + 0.5 * np.cos(2 * q)) * np.exp(0.7 * p) * (p + 1), parity=EVEN)
    mixed = d_qp(f).values
    scale = max(1.0, float(np.max(np.abs(mixed))))
    assert np.max(np.abs(mixed - d_p(d_q(f)).values)) < 1e-12 * scale * grid.np
    assert np.max(np.abs(mixed - d_q(d_p(f)).values)) < 1e-12 * scale * grid.np


def test_parity_is_checked(grid):
    with pytest.raises(GridError):
        Field2D.from_function(grid, lambda q, p: np.sin(q) + 0 * p, parity=EVEN)
    odd = Field2D.from_function(grid, lambda q, p: np.sin(q) * (p + 1), parity=ODD)
    assert odd.parity == ODD


def test_non_finite_values_rejected(grid):
    values = np.zeros(grid.shape)
    values[3, 4] = np.nan
    with pytest.raises(NumericalFailure):
        Field2D(grid, values)
    with pytest.raises(GridError):
        Field2D(grid, np.zeros((3, 3)))


def test_arithmetic_keeps_parity(grid):
    a = Field2D.from_function(grid, lambda q, p: np.cos(q) * p, parity=EVEN)
    b = Field2D.from_function(grid, lambda q, p: np.cos(2 * q) + p, parity=EVEN)
    c = Field2D.from_function(grid, lambda q, p: np.sin(q) * p, parity=ODD)
    assert (a + b).parity == EVEN
    assert (2.0 * a - b).parity == EVEN
    assert (a + c).parity is None
    assert (-c).parity == ODD
    assert np.allclose((a - a).values, 0.0)


def test_traces_and_quadrature(grid):
    f = Field2D.from_function(grid, lambda q, p: (1 + np.cos(q)) * (p + 1) ** 2)
    assert np.allclose(trace_bottom(f), 0.0)
    assert np.allclose(trace_top(f), 1 + np.cos(grid.q))
    # int_0^{2pi} (1 + cos q) dq * int_{-1}^0 (p+1)^2 dp = 2pi / 3
    assert integrate(f) == pytest.approx(2 * math.pi / 3, rel=1e-12)
    assert integrate_top(grid, np.cos(grid.q) ** 2) == pytest.approx(math.pi, rel=1e-12)



def test_quadrature_of_cos_q_vanishes(grid):
    f = Field2D.from_function(grid, lambda q, p: np.cos(q) * np.exp(p), parity=EVEN)
    assert abs(integrate(f)) < 1e-14
    assert abs(integrate_top(grid, np.cos(grid.q))) < 1e-14


def test_project_even_is_idempotent(grid):
    rng = np.random.default_rng(7)
    f = Field2D(grid, rng.standard_normal(grid.shape))
    once = project_even(f)
    twice = project_even(once)
    assert once.parity == EVEN
    assert np.array_equal(once.values, twice.values)


def test_even_subspace_pack_unpack(grid):
    space = EvenSubspace(grid)
    f = Field2D.from_function(grid, lambda q, p: np.cos(q) * (p + 1) + np.cos(3 * q) * (p + 1) ** 2, parity=EVEN)
    g = space.unpack(space.pack(f))
    assert space.size == (grid.nq // 2 + 1) * (grid.np - 1)
    assert np.allclose(g.values, f.values, atol=1e-14)
    assert np.all(g.values[:, 0] == 0.0)


def test_even_subspace_top_weights_pick_cos_coefficient(grid):
    space = EvenSubspace(grid)
    f = Field2D.from_function(grid, lambda q, p: (0.7 * np.cos(q) + 0.2 * np.cos(2 * q)) * (p + 1), parity=EVEN)
    assert space.top_weights @ space.pack(f) == pytest.approx(0.7, rel=1e-12)


def test_even_subspace_metric_is_channel_l2_norm(grid):
    space = EvenSubspace(grid)
    f = Field2D.from_function(grid, lambda q, p: (0.3 + np.cos(q) - 0.4 * np.cos(4 * q)) * np.sin(p + 1.0), parity=EVEN)
    u = space.pack(f)
    metric = space.metric()
    assert np.all(metric > 0.0)
    assert u @ (metric * u) == pytest.approx(integrate(f.with_values(f.values ** 2)), rel=1e-12)
    # interior points move the norm, not only the surface trace
    bump = np.zeros_like(u)
    bump[(space.m // 2) * (grid.np - 1) + grid.np // 2] = 1.0
    assert bump @ (metric * bump) > 0.0
    assert space.top_weights @ bump == 0.0


def test_even_subspace_derivative_rows(grid):
    space = EvenSubspace(grid)
    f = Field2D.from_function(grid, lambda q, p: np.cos(2 * q) * (p + 1), parity=EVEN)
    half = f.values[: space.m]
    assert np.allclose(space.Aqq @ half, d_qq(f).values[: space.m], atol=1e-11)
    assert np.allclose(space.Aq @ half, d_q(f).values[: space.m], atol=1e-11)


def test_field_serialization(grid, tmp_path):
    f = Field2D.from_function(grid, lambda q, p: np.cos(q) * np.exp(p), parity=EVEN)
    back = field_from_dict(field_to_dict(f))
    assert np.array_equal(back.values, f.values)
    assert back.parity == EVEN

    path = tmp_path / "h.csv"
    field_to_csv(f, str(path))
    loaded = field_from_csv(str(path))
    assert loaded.grid.shape == grid.shape
    assert np.array_equal(loaded.values, f.values)


def test_field_json_string_round_trip(grid):
    f = Field2D.from_function(grid, lambda q, p: np.cos(q) * np.exp(p) / 3.0, parity=EVEN)
    text = json.dumps(field_to_dict(f))
    back = field_from_dict(json.loads(text))
    assert back.grid is grid
    assert np.array_equal(back.values, f.values)
    assert back.parity == EVEN


def test_field_from_missing_csv(tmp_path):
    with pytest.raises(StorageError):
        field_from_csv(str(tmp_path / "missing.csv"))
