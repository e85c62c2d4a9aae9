import math

import numpy as np
import pytest

from blowlab.contour import build_grid
from blowlab.errors import DivergenceGuard, IntegrabilityError, ParamError
from blowlab.kernel import assemble
from blowlab.series import (derivative_m1, derivative_table, fixed_point_residual,
                            grid_moments, remainder_tail, m1_series, m_at, moment_solve,
                            tail_bound, term_sups)
from blowlab.verify import sample_off_contour, tensor_terms


@pytest.fixture(scope="module")
def op(standard):
    g = build_grid(standard, 0.5, 1e-13, q_max=3)
    return assemble(standard, g, 0.5, 0.5, targets=[(2, 1)])


def test_zero_profile(zero):
    g = build_grid(zero, 0.5)
    op = assemble(zero, g, 0.0, 0.5)
    r = m1_series(op, "neumann", 5, zero, g)
    assert r.value == 0 and r.trunc_bound == 0
    assert m_at(op, 0.3 + 0.4j).value == 1


def test_first_term_is_F1_sum(op):
    _, terms = moment_solve(op, [(0, 0)], "neumann", 2)
    assert terms[(0, 0)][0] == pytest.approx(op.F1w.sum(), rel=1e-15)


def test_second_term_matches_tensor(standard, op):
    _, terms = moment_solve(op, [(0, 0)], "neumann", 2)
    ten = tensor_terms(standard, 0.5, 0.5, 0, 0, 2, 1e-13)
    assert abs(terms[(0, 0)][1] - ten[1]) / abs(ten[1]) < 1e-10


def test_modes_agree(standard):
    rng = np.random.default_rng(4)
    for _ in range(4):
        x, t = rng.uniform(-4, 4), rng.uniform(0, 0.95)
        g = build_grid(standard, t)
        o = assemble(standard, g, x, t, targets=[(1, 1)])
        d = derivative_table(o, [(1, 1)], "direct")
        n = derivative_table(o, [(1, 1)], "neumann", 40, standard, g)
        for r in d.entries:
            assert abs(d[r].value - n[r].value) <= max(n[r].trunc_bound, 1e-11)
        k = sample_off_contour(1, seed=int(rng.integers(1000)))[0]
        assert abs(m_at(o, k).value - m_at(o, k, "neumann", 40).value) < 1e-11


def test_fixed_point_residual(op):
    assert fixed_point_residual(op) < 1e-12


def test_term_decay(standard, op):
    sups = term_sups(op, 10)
    for j, s in enumerate(sups, 1):
        assert s <= standard.M ** -j * 1.01


def test_derivatives_against_finite_differences(standard):
    t, x, h = 0.5, 0.3, 1e-4
    g = build_grid(standard, t, 1e-13, q_max=2)

    def D(xx, tt, q):
        return derivative_m1(assemble(standard, g, xx, tt, targets=[q]), *q).value

    base = D(x, t, (1, 0))
    fx = (D(x + h, t, (0, 0)) - D(x - h, t, (0, 0))) / (2 * h)
    assert abs(fx - base) / abs(base) < 1e-6
    dt = D(x, t, (0, 1))
    ft = (D(x, t + h, (0, 0)) - D(x, t - h, (0, 0))) / (2 * h)
    assert abs(ft - dt) / abs(dt) < 1e-6
    d11 = D(x, t, (1, 1))
    f11 = (D(x + h, t, (0, 1)) - D(x - h, t, (0, 1))) / (2 * h)
    assert abs(f11 - d11) / abs(d11) < 1e-6


def test_zero_order_derivative_is_m1(op):
    assert derivative_m1(op, 0, 0).value == m1_series(op).value


def test_derivative_diverges_at_T(standard):
    g = build_grid(standard, 0.9)
    o = assemble(standard, g, 0.0, 0.9)
    o2 = type(o)(**{**o.__dict__, "t": standard.T})
    with pytest.raises(IntegrabilityError):
        derivative_m1(o2, 1, 0, profile=standard)


def test_divergence_guard(op):
    bad = type(op)(**{**op.__dict__, "norm_est": 1.5})
    with pytest.raises(DivergenceGuard):
        m1_series(bad)


def test_mode_validation(op):
    with pytest.raises(ParamError):
        m1_series(op, mode="magic")
    with pytest.raises(ParamError):
        m1_series(op, mode="neumann", jmax=0)


def test_tail_bound_zero(zero):
    assert tail_bound(zero, build_grid(zero, 0.5), 0.5, 0, 0) == 0


def test_tail_bound_first_order_closed_form(standard):
    # sum over j >= 2 with constants 1/(M-1) and M^2/(M-1)^2
    g = build_grid(standard, 0.5)
    M = standard.M
    mom = grid_moments(standard, g, 0.5, (1, 0))
    closed = math.sqrt(3) * (mom[1] / (M - 1) + mom[0] ** 2 * M ** 2 / (M - 1) ** 2)
    assert tail_bound(standard, g, 0.5, 0, 0) == pytest.approx(closed, rel=1e-12)


def test_tail_bound_grows_with_t(standard):
    vals = []
    for t in (0.2, 0.5, 0.8, 0.95):
        g = build_grid(standard, 0.95)
        vals.append(tail_bound(standard, g, t, 0, 0))
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_remainder_tail_infinite_moment():
    assert remainder_tail(30.0, 2, math.inf, 1.0, 2) == math.inf


def test_m_at_far_field(standard, op):
    for r in (1e-6, 1e6):
        k = r * complex(math.cos(1.0), math.sin(1.0))
        assert abs(m_at(op, k).value - 1) < 1e-5


def test_m_at_inversion_symmetry(op):
    ks = sample_off_contour(50, seed=7)
    a = np.array([v.value for v in m_at(op, ks)])
    b = np.array([v.value for v in m_at(op, 1 / ks)])
    assert np.max(np.abs(a - b)) < 1e-9
