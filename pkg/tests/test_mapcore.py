import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import plan_and_map
from oracles import finite_difference_wirtinger, naive_eval_complex, naive_eval_logpolar
from spiralrot.mapcore import (
    Annulus,
    BoundaryError,
    PiecewiseRadialMap,
    SpiralStretchBlock,
    block_eval,
    block_log_distortion,
    compose_blocks,
    identity_map,
)

E = math.e


def rel(a, b):
    return np.abs(a - b) / np.maximum(np.abs(b), 1e-300)


# -- single block ---------------------------------------------------------


def test_block_identity_outside():
    blk = SpiralStretchBlock(Annulus.from_radii(1 / E, 1.0), alpha=2.0)
    assert block_eval(blk, 2.0) == 2.0


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_block_degenerate_is_identity(x, y):
    blk = SpiralStretchBlock(Annulus.from_radii(0.1, 0.1 * E), alpha=0.0, q=1.0)
    z = complex(x, y)
    assert abs(block_eval(blk, z) - z) <= 1e-15 * max(1.0, abs(z))


def test_block_inner_edge_value():
    blk = SpiralStretchBlock(Annulus.from_radii(1 / E, 1.0), alpha=2.0)
    w = complex(block_eval(blk, 1 / E))
    # modulus and argument checked separately
    assert abs(abs(w) - 1 / E) < 1e-16
    assert abs(cmath.phase(w) - (-2.0)) < 1e-15


def test_block_inside_is_similarity():
    r, R, q, a = 0.2, 0.2 * E, 2.5, 3.0
    blk = SpiralStretchBlock(Annulus.from_radii(r, R), alpha=a, q=q)
    z = 0.05 + 0.03j
    expect = z * (r / R) ** (q - 1) * cmath.exp(1j * a * math.log(r / R))
    assert abs(block_eval(blk, z) - expect) < 1e-15


def test_block_rejects_non_finite():
    blk = SpiralStretchBlock(Annulus.from_radii(1 / E, 1.0), alpha=2.0)
    with pytest.raises(ValueError):
        block_eval(blk, complex(math.nan, 0))


# -- composed maps ----------------------------------------------------------


def test_n0_is_identity_with_one_region():
    m = compose_blocks([], [], [])
    assert len(m.regions) == 1
    assert m.eval(0.3 + 0.2j) == 0.3 + 0.2j


def test_rotation_only_keeps_circles():
    plan, m = plan_and_map(2.0, 6, "rotation-only")
    t = np.exp(np.linspace(plan.log_r[-1] - 2, 0.5, 500))
    assert np.all(rel(m.radial_profile(t), t) < 1e-14)
    assert all(r.log_lambda == 0.0 for r in m.regions)


@pytest.mark.parametrize("mode", ["stretch-rotation", "rotation-only"])
def test_n3_matches_nested_composition(mode):
    plan, m = plan_and_map(2.0, 3, mode)
    rng = np.random.default_rng(0)
    z = np.exp(rng.uniform(plan.log_r[-1] - 1.0, 0.2, 1000)) * np.exp(1j * rng.uniform(-math.pi, math.pi, 1000))
    ref = naive_eval_complex(plan.log_r, plan.q, plan.alpha, z)
    assert np.max(rel(m.eval(z), ref)) <= 1e-12


@pytest.mark.parametrize("p,N,mode", [(2.0, 12, "stretch-rotation"), (1.5, 12, "rotation-only"), (4.0, 11, "stretch-rotation")])
def test_logpolar_matches_nested_composition(p, N, mode):
    plan, m = plan_and_map(p, N, mode)
    rng = np.random.default_rng(1)
    u = rng.uniform(plan.log_r[-1] - 2.0, 0.5, 4000)
    th = rng.uniform(-math.pi, math.pi, 4000)
    U, T = m.logpolar(u, th)
    U0, T0 = naive_eval_logpolar(plan.log_r, plan.q, plan.alpha, u, th)
    assert np.max(np.abs(U - U0) / np.maximum(1, np.abs(U0))) <= 1e-12
    assert np.max(np.abs(T - T0) / (1 + np.abs(T0))) <= 1e-12


def test_eval_outside_and_fixed_point():
    plan, m = plan_and_map(2.0, 6)
    assert m.eval(1.0) == 1.0
    assert m.eval(0.0) == 0.0
    z = np.array([1.5, -2 + 1j, 1e3j])
    assert np.array_equal(m.eval(z), z)


def test_value_at_r_n():
    plan, m = plan_and_map(2.0, 5)
    q = plan.q
    for n in range(1, plan.N + 1):
        L = plan.log_r[n - 1]
        log_s, a = m.log_profile(L)
        log_lam_prev = -math.fsum(q[: n - 1] - 1.0)
        assert log_s == pytest.approx(log_lam_prev - (q[n - 1] - 1.0) + L, rel=1e-13)
        assert a == pytest.approx(-math.fsum(plan.alpha[:n]), rel=1e-13)


def test_profile_outer_and_first_block():
    plan, m = plan_and_map(2.0, 4, "rotation-only")
    assert m.radial_profile(3.0) == 3.0 and m.arg_profile(3.0) == 0.0
    assert m.arg_profile(plan.r[0]) == pytest.approx(-plan.alpha[0], rel=1e-15)
    with pytest.raises(ValueError):
        m.radial_profile(0.0)


def test_mid_annulus_against_oracle():
    plan, m = plan_and_map(2.0, 6)
    u = np.array(plan.log_r) + 0.5
    U, T = m.logpolar(u, 0.0)
    U0, T0 = naive_eval_logpolar(plan.log_r, plan.q, plan.alpha, u, np.zeros_like(u))
    assert np.allclose(U, U0, rtol=1e-13) and np.allclose(T, T0, rtol=1e-13)


@pytest.mark.parametrize("mode", ["stretch-rotation", "rotation-only"])
def test_profile_monotone_and_continuous(mode):
    plan, m = plan_and_map(2.0, 8, mode)
    u = np.sort(np.concatenate([np.linspace(plan.log_r[-1] - 3, math.log(2), 20000), m.boundaries()]))
    log_s, a = m.log_profile(u)
    assert np.all(np.diff(log_s) > 0)
    assert np.all(np.diff(a) >= 0)  # argument offset grows toward t = 1
    # both neighbouring region formulas agree on each shared circle
    for lo_reg, hi_reg in zip(m.regions, m.regions[1:]):
        x = hi_reg.log_t_lo
        vals = []
        for reg in (lo_reg, hi_reg):
            d = x - reg.log_R_ref
            ls = reg.log_lambda + x if reg.is_gap else reg.log_lambda + reg.log_R_ref + reg.q * d
            vals.append((ls, reg.mu + reg.alpha * d))
        assert abs(vals[0][0] - vals[1][0]) <= 1e-12 * max(1, abs(x))
        assert abs(vals[0][1] - vals[1][1]) <= 1e-12 * (1 + abs(vals[0][1]))


def test_circle_preservation():
    plan, m = plan_and_map(2.0, 6)
    for L in [plan.log_r[2] + 0.3, plan.log_r[4] - 0.7, -0.2]:
        th = np.linspace(-math.pi, math.pi, 64, endpoint=False)
        z = math.exp(L) * np.exp(1j * th)
        w = m.eval(z)
        mod = np.abs(w)
        turn = np.angle(w / z)
        assert np.max(np.abs(mod - mod[0])) <= 1e-13 * mod[0]
        assert np.max(np.abs(np.angle(np.exp(1j * (turn - turn[0]))))) <= 1e-13


def test_truncation_exact_outside():
    p1, m1 = plan_and_map(2.0, 5)
    p2, m2 = plan_and_map(2.0, 6)
    assert p1.log_r == p2.log_r[:5]
    u = np.linspace(p2.log_r[5] + 1.0 + 1e-9, 0.5, 3000)
    assert np.array_equal(np.array(m1.logpolar(u, 0.3)), np.array(m2.logpolar(u, 0.3)))


# -- derivatives ------------------------------------------------------------


def test_wirtinger_identity_outside():
    plan, m = plan_and_map(2.0, 4)
    d, db = m.wirtinger(1.5 + 0.5j)
    assert d == 1 and db == 0


def test_rotation_block_operator_norm():
    a = 7.0
    m = compose_blocks([-1.0], [1.0], [a])
    d, db = m.wirtinger(math.exp(-0.5) * cmath.exp(0.3j))
    assert abs(d) + abs(db) == pytest.approx((abs(2 + 1j * a) + a) / 2, rel=1e-14)


@pytest.mark.parametrize("p,N,mode", [(2.0, 6, "rotation-only"), (2.0, 5, "stretch-rotation"), (4.0, 4, "stretch-rotation")])
def test_wirtinger_finite_differences(p, N, mode):
    plan, m = plan_and_map(p, N, mode)
    rng = np.random.default_rng(2)
    u = rng.uniform(plan.log_r[-1] - 1.0, 0.3, 1000)
    b = m.boundaries()
    u = u[np.min(np.abs(u[:, None] - b), axis=1) > 1e-4]
    z = np.exp(u) * np.exp(1j * rng.uniform(-math.pi, math.pi, u.size))
    d, db = m.wirtinger(z)
    fd, fdb = finite_difference_wirtinger(m.eval, z, 1e-6 * np.abs(z))
    scale = np.abs(d) + np.abs(db)
    assert np.max((np.abs(fd - d) + np.abs(fdb - db)) / scale) <= 1e-5


def test_jacobian_rotation_only_is_one():
    plan, m = plan_and_map(1.5, 12, "rotation-only")
    u = np.linspace(plan.log_r[-1] - 1, 0.4, 5001)
    u = u[np.min(np.abs(u[:, None] - m.boundaries()), axis=1) > 1e-9]
    assert np.max(np.abs(np.exp(m.log_jacobian(u)) - 1.0)) <= 1e-10


def test_jacobian_matches_wirtinger():
    plan, m = plan_and_map(2.0, 5)
    rng = np.random.default_rng(3)
    u = rng.uniform(plan.log_r[-1], 0, 500)
    z = np.exp(u) * np.exp(1j * rng.uniform(-3, 3, 500))
    d, db = m.wirtinger(z)
    J = m.jacobian(z)
    assert np.max(rel(np.abs(d) ** 2 - np.abs(db) ** 2, J)) <= 1e-12
    assert np.all(J > 0)


def test_stretch_jacobian_one_sided_at_outer_circle():
    # |z| = R is a region circle, so the value q is the one-sided limit
    q = 3.0
    m = compose_blocks([-1.0], [q], [0.5])
    with pytest.raises(BoundaryError):
        m.jacobian(1.0)
    for eps in [1e-4, 1e-6, 1e-8]:
        J = float(m.jacobian(math.exp(-eps)))
        assert abs(J - q) <= 10 * eps * q


def test_distortion_values():
    assert math.exp(block_log_distortion(3.0, 4.0)) == pytest.approx((math.sqrt(32) + math.sqrt(20)) ** 2 / 12, rel=1e-14)
    m = compose_blocks([-1.0], [3.0], [4.0])
    z = math.exp(-0.4) * cmath.exp(1.1j)
    d, db = m.wirtinger(z)
    K_direct = (abs(d) + abs(db)) ** 2 / float(m.jacobian(z))
    assert float(m.distortion(z)) == pytest.approx(K_direct, rel=1e-13)
    assert float(m.distortion(z)) == pytest.approx(8.55, abs=5e-3)
    assert float(m.distortion(0.1)) == 1.0  # gap region
    assert math.exp(block_log_distortion(1.0, 0.0)) == 1.0


@given(st.floats(1.0, 50.0), st.floats(0.0, 1e3))
def test_distortion_floor_and_estimate(q, a):
    lk = float(block_log_distortion(q, a))
    assert lk >= -1e-15
    if 2 <= q + 1 < a:
        assert lk <= math.log(4 * a * a / q) + 1e-12


def test_derivative_rejects_boundary():
    plan, m = plan_and_map(2.0, 3)
    with pytest.raises(BoundaryError):
        m.wirtinger(plan.r[1])
    with pytest.raises(BoundaryError):
        m.wirtinger(0.0)


# -- inverse and serialisation ---------------------------------------------


@pytest.mark.parametrize("p,N,mode", [(2.0, 6, "stretch-rotation"), (1.5, 10, "rotation-only")])
def test_inverse_round_trip(p, N, mode):
    plan, m = plan_and_map(p, N, mode)
    rng = np.random.default_rng(4)
    u = rng.uniform(max(plan.log_r[-1] - 1, -600), 0.5, 10_000)
    w = np.exp(u) * np.exp(1j * rng.uniform(-math.pi, math.pi, u.size))
    back = m.eval(m.inverse_eval(w))
    assert np.max(rel(back, w)) <= 1e-12
    assert m.inverse_eval(1.0) == pytest.approx(1.0, abs=1e-15)
    assert m.inverse_eval(0.0) == 0
    assert m.inverse_eval(2.0 + 1j) == 2.0 + 1j


def test_json_round_trip():
    plan, m = plan_and_map(2.0, 4)
    m2 = PiecewiseRadialMap.from_dict(m.to_dict())
    assert m2.regions == m.regions
    assert identity_map().eval(0.5j) == 0.5j


def test_regions_validated():
    m = identity_map()
    with pytest.raises(ValueError):
        PiecewiseRadialMap((m.regions[0].__class__(0.0, math.inf, 0.0, 0.0),))


@settings(max_examples=50)
@given(st.lists(st.floats(-6, 6), min_size=1, max_size=20))
def test_eval_preserves_shape_and_origin(xs):
    plan, m = plan_and_map(2.0, 4)
    z = np.array(xs) * (1 + 0.5j)
    w = m.eval(z)
    assert w.shape == z.shape
    assert np.all((w == 0) == (z == 0))
