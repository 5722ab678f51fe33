import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from formation_isac.aero import (AeroParams, EnergyParams, avg_upwash, grid_argmax,
                                 induced_velocity, optimal_offset, parasite_drag,
                                 power_saving, total_upwash, total_upwash_at,
                                 upwash_gradient, vortex_pair_velocity)

P = AeroParams()
coord = st.floats(-3, 3, allow_nan=False)


def _mp_induced(x, y, p=P):
    """Point field written out directly in arbitrary precision."""
    mpmath.mp.dps = 40
    x, y = mpmath.mpf(x), mpmath.mpf(y)
    core = x / (mpmath.mpf(p.r_c) ** 2 + x * x)
    half = mpmath.mpf(p.beta) / 2
    lon = (1 + y / mpmath.sqrt(half**2 + y * y)) * mpmath.exp(-(y - p.mu) ** 2 / (2 * p.sigma0))
    return p.zeta / (2 * mpmath.pi) * core * lon


def _quad_avg(x, y, p=P):
    f = lambda eta: float(vortex_pair_velocity(eta, y, p))
    a = p.alpha / 2
    pts = [t for t in (a, -a) if x - p.beta / 2 < t < x + p.beta / 2]
    val, _ = integrate.quad(f, x - p.beta / 2, x + p.beta / 2, points=pts or None,
                            epsabs=1e-14, epsrel=1e-12, limit=200)
    return val / p.beta


def test_induced_zero_on_axis():
    assert induced_velocity(0.0, 1.0, P) == 0.0


def test_induced_matches_arbitrary_precision():
    got = induced_velocity(0.2, 1.0, P)
    assert got == pytest.approx(float(_mp_induced(0.2, 1.0)), rel=1e-13)


@given(coord, coord)
def test_induced_odd_in_x(x, y):
    assert induced_velocity(-x, y, P) == pytest.approx(-induced_velocity(x, y, P), abs=1e-15)


@given(coord, coord)
def test_average_even_in_x(x, y):
    assert avg_upwash(-x, y, P) == pytest.approx(avg_upwash(x, y, P), rel=1e-12, abs=1e-15)


def test_average_matches_quadrature_grid():
    xs = np.linspace(-3, 3, 10)
    ys = np.linspace(-3, 3, 10)
    worst = 0.0
    for x in xs:
        for y in ys:
            ref = _quad_avg(x, y)
            got = avg_upwash(x, y, P)
            worst = max(worst, abs(got - ref) / max(abs(ref), 1e-12))
    assert worst <= 1e-6


def test_downwash_behind_centre():
    ys = np.linspace(0.05, 3.0, 40)
    assert np.all(avg_upwash(0.0, ys, P) < 0)


def test_printed_optimum_is_a_100_point_grid_argmax():
    # The reported location is the argmax of a 100 x 100 linspace over [-2, 2]^2.
    xs = np.linspace(-2, 2, 100)
    vals = avg_upwash(xs[None, :], xs[:, None], P)
    i, j = np.unravel_index(np.argmax(vals), vals.shape)
    assert abs(abs(xs[j]) - 0.9091) < 5e-5 and abs(xs[i] - 1.0303) < 5e-5


def test_fine_argmax_and_refinement():
    opt = optimal_offset(P)
    # Two independent routes: a dense 1e-4 grid near the peak and the refined optimum.
    xs = np.arange(0.85, 0.97, 1e-4)
    ys = np.arange(0.98, 1.10, 1e-4)
    vals = avg_upwash(xs[None, :], ys[:, None], P)
    i, j = np.unravel_index(np.argmax(vals), vals.shape)
    assert abs(xs[j] - opt.dx) < 2e-4 and abs(ys[i] - opt.dy) < 2e-4
    gx, gy = upwash_gradient((opt.dx, opt.dy), 1, [(0.0, 0.0)], P)
    assert abs(gx) < 1e-6 and abs(gy) < 1e-6


def test_grid_argmax_on_quadratic():
    x, y, v = grid_argmax(lambda x, y: -(x - 0.3) ** 2 - 2 * (y + 0.1) ** 2, (-1, 1), (-1, 1), 1e-2)
    assert x == pytest.approx(0.3, abs=1e-7) and y == pytest.approx(-0.1, abs=1e-7)


def test_total_upwash_two_and_three():
    pos = np.array([[0.0, 0.0], [0.9, 1.0]])
    assert total_upwash(1, pos, P) == avg_upwash(0.9, 1.0, P)
    pos3 = np.array([[0.0, 0.0], [0.9, 1.0], [-0.8, 1.2]])
    expect = avg_upwash(0.9, 1.0, P) + avg_upwash(0.9 + 0.8, 1.0 - 1.2, P)
    assert total_upwash(1, pos3, P) == pytest.approx(expect, rel=1e-14)


def test_total_upwash_brute_force_19():
    rng = np.random.default_rng(5)
    pos = np.column_stack([rng.uniform(-5, 5, 19), rng.uniform(0, 10, 19)])
    for me in (0, 7, 18):
        ref = 0.0
        for j in range(19):
            if j != me:
                dx, dy = pos[me] - pos[j]
                ref += float(avg_upwash(dx, dy, P))
        assert abs(total_upwash(me, pos, P) - ref) <= 1e-12


def _fd_grad(off, lam, others, h=1e-6):
    f = lambda x, y: total_upwash_at((x, y), others, P)
    gx = (f(off[0] + h, off[1]) - f(off[0] - h, off[1])) / (2 * h)
    gy = (f(off[0], off[1] + h) - f(off[0], off[1] - h)) / (2 * h)
    return np.array([lam * gx, gy])


@settings(max_examples=200, deadline=None)
@given(st.tuples(coord, coord), st.lists(st.tuples(coord, coord), min_size=1, max_size=5),
       st.sampled_from([1, -1]))
def test_gradient_finite_difference(off, others, lam):
    an = upwash_gradient(off, lam, others, P)
    fd = _fd_grad(off, lam, others)
    assert np.linalg.norm(an - fd) <= 1e-5 * max(np.linalg.norm(fd), 1e-3)


@given(st.tuples(coord, coord), st.lists(st.tuples(coord, coord), min_size=1, max_size=4))
def test_gradient_side_flip(off, others):
    a = upwash_gradient(off, 1, others, P)
    b = upwash_gradient(off, -1, others, P)
    assert b[0] == -a[0] and b[1] == a[1]


def test_power_saving_examples():
    e = EnergyParams(lift=10.0, v0=5.0)
    assert power_saving(0.0, e) == {"drag_reduction": 0.0, "power_reduction": 0.0}
    out = power_saving(0.5, e)
    assert out["drag_reduction"] == pytest.approx(1.0) and out["power_reduction"] == pytest.approx(5.0)
    out = power_saving(-0.2, e)
    assert out["drag_reduction"] == pytest.approx(-0.4) and out["power_reduction"] == pytest.approx(-2.0)


def test_parasite_drag():
    assert parasite_drag(EnergyParams(c=1.0, s0=1.0, v0=2.0)) == pytest.approx(2.0)
    base = parasite_drag(EnergyParams(v0=3.0))
    assert parasite_drag(EnergyParams(v0=6.0)) == pytest.approx(4 * base)


@pytest.mark.parametrize("kwargs", [{"beta": 0.0}, {"r_c": -1.0}, {"sigma0": 0.0},
                                    {"alpha": 1.5}])
def test_params_rejected(kwargs):
    with pytest.raises(ValueError):
        AeroParams(**kwargs)
