import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from revsph import sphcore as sc
from revsph.kernels import make_anticlump_kernel, make_kernel
from revsph.neighbors import neighbor_table

TABLE1 = sc.FluidParams(rho0=1000.0, c=120.0, g=9.8, e_wall=50.0, r_wall=0.02)


def five_point(f, x, h):
    return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h)


def test_eos_and_energy_reference_values():
    p = TABLE1
    assert sc.eos_pressure(p.rho0, p) == 0.0
    # c^2 rho0 / 7 * (2^7 - 1)
    assert sc.eos_pressure(2 * p.rho0, p) == pytest.approx(120.0**2 * 1000 / 7 * 127, rel=1e-15)
    assert sc.internal_energy_density(p.rho0, p) == pytest.approx(120.0**2 / 42 * 7, rel=1e-15)


def eos_fd_max_error(n=100):
    """Max relative gap between d(eps)/d(rho) by five-point differences and p/rho^2."""
    p = TABLE1
    rng = np.random.default_rng(1)
    half = n // 2
    rhos = p.rho0 * np.concatenate([rng.uniform(0.85, 0.99, half), rng.uniform(1.01, 1.15, n - half)])
    worst = 0.0
    for rho in rhos:
        d = five_point(lambda x: sc.internal_energy_density(x, p), rho, 0.05)
        exact = sc.eos_pressure(rho, p) / rho**2
        worst = max(worst, abs(d - exact) / abs(exact))
    return worst


def lj_fd_max_error(n=100):
    """Max relative gap between the LJ force and minus the differenced potential."""
    p = TABLE1
    worst = 0.0
    for r in np.linspace(0.55, 0.98, n) * p.r_wall:
        d = -five_point(lambda x: sc.lj_wall_potential(x, p), r, 1e-6 * p.r_wall)
        worst = max(worst, abs(sc.lj_wall_force(r, p) - d) / abs(d))
    return worst


def test_energy_derivative_is_pressure_over_rho_squared():
    assert eos_fd_max_error(100) <= 1e-8


def test_lj_force_is_minus_potential_gradient():
    assert lj_fd_max_error(100) <= 1e-8


def test_lj_is_repulsive_and_cut_off():
    p = TABLE1
    r = np.linspace(0.3, 1.5, 200) * p.r_wall
    f = sc.lj_wall_force(r, p)
    assert np.all(f >= 0)
    assert np.all(f[r >= p.r_wall] == 0)
    assert np.all(sc.lj_wall_potential(r[r >= p.r_wall], p) == 0)
    with pytest.raises(sc.WallPenetrationError):
        sc.lj_wall_force(0.0, p)


def test_fluid_params_validation():
    with pytest.raises(ValueError, match="rho0"):
        sc.FluidParams(rho0=0)
    with pytest.raises(ValueError, match="c > 0"):
        sc.FluidParams(c=-1)


def blob(rng, n=7, dr=0.1, jitter=0.2, g=0.0):
    x = np.arange(n) * dr
    X, Y = np.meshgrid(x, x)
    pos = np.column_stack([X.ravel(), Y.ravel()])
    pos += jitter * dr * (rng.random(pos.shape) - 0.5)
    m = np.full(len(pos), 1000.0 * dr * dr)
    kind = np.zeros(len(pos), dtype=np.int8)
    vel = rng.standard_normal(pos.shape)
    return sc.ParticleSystem(pos, vel, m, kind)


def test_density_of_uniform_lattice_interior(rng):
    dr = 0.05
    ps = blob(rng, n=21, dr=dr, jitter=0.0)
    k = make_kernel("wendland2", 3 * dr)
    rho = sc.raw_density(ps, k)
    d = ps.pos[:, None, :] - ps.pos[None, :, :]
    q = np.sqrt(d[..., 0] ** 2 + d[..., 1] ** 2) / k.h
    w = np.where(q < 1, 7 / (np.pi * k.h**2) * (1 - q) ** 4 * (1 + 4 * q), 0.0)
    assert np.allclose(rho, w @ ps.mass, rtol=1e-12)
    centre = np.argmin(np.sum((ps.pos - ps.pos.mean(0)) ** 2, axis=1))
    # lattice sums of this kernel overshoot the continuum value slightly
    assert rho[centre] == pytest.approx(1000.0, rel=1e-2)


def test_offsets_make_initial_pressure_vanish(rng):
    ps = blob(rng)
    k = make_kernel("wendland2", 0.3)
    ps.offset = sc.initial_offsets(ps, k, 1000.0)
    rho = sc.compute_density(ps, k, "offset", rho0=1000.0)
    assert np.allclose(rho, 1000.0, rtol=0, atol=1e-10)
    with pytest.raises(ValueError):
        sc.compute_density(ps, k, "bogus")


def test_lj_walls_excluded_from_density():
    k = make_kernel("wendland2", 0.3)
    pos = np.array([[0.0, 0.0], [0.05, 0.0]])
    m = np.array([1.0, 5.0])
    fluid_only = sc.ParticleSystem(pos[:1], np.zeros((1, 2)), m[:1], np.array([0]))
    with_wall = sc.ParticleSystem(pos, np.zeros((2, 2)), m, np.array([0, sc.WALL_LJ]))
    with_dummy = sc.ParticleSystem(pos, np.zeros((2, 2)), m, np.array([0, sc.WALL_DUMMY]))
    r0 = sc.raw_density(fluid_only, k)[0]
    assert sc.raw_density(with_wall, k)[0] == r0
    assert sc.raw_density(with_dummy, k)[0] > r0


def potential(ps, k, p):
    rho = sc.raw_density(ps, k)
    return float(np.sum(ps.mass * sc.internal_energy_density(rho, p)))


def test_acceleration_is_minus_energy_gradient(rng):
    """Closed-form density makes the pressure force conservative."""
    p = sc.FluidParams(rho0=1000.0, c=10.0, g=0.0)
    ps = blob(rng, n=5, dr=0.1)
    k = make_kernel("wendland2", 0.3)
    ps.rho = sc.raw_density(ps, k)
    acc = sc.compute_acceleration(ps, k, p)
    for a in (0, 7, 12, 24):
        for d in range(2):
            def e(x, a=a, d=d):
                q = ps.copy()
                q.pos[a, d] = x
                return potential(q, k, p)
            grad = five_point(e, ps.pos[a, d], 1e-5)
            assert acc[a, d] == pytest.approx(-grad / ps.mass[a], rel=1e-6, abs=1e-9)


def test_density_rate_is_time_derivative_of_summed_density(rng):
    ps = blob(rng)
    k = make_kernel("cubic_spline", 0.3)
    rate = sc.standard_density_rate(ps, k)

    def rho_at(t):
        q = ps.copy()
        q.pos = ps.pos + t * ps.vel
        return sc.raw_density(q, k)

    fd = five_point(rho_at, 0.0, 1e-5)
    assert np.allclose(rate, fd, rtol=1e-6, atol=1e-6 * np.abs(rate).max())


@given(st.integers(0, 2**32 - 1))
def test_momentum_and_angular_momentum_rates_vanish(seed):
    rng = np.random.default_rng(seed)
    p = sc.FluidParams(rho0=1000.0, c=10.0, g=0.0, p0=50.0)
    ps = blob(rng, n=6)
    k = make_kernel("wendland2", 0.3)
    ps.rho = sc.raw_density(ps, k)
    acc = sc.compute_acceleration(ps, k, p, anticlump=make_anticlump_kernel(0.1))
    f = ps.mass[:, None] * acc
    scale = np.abs(f).max()
    assert abs(f[:, 0].sum()) < 1e-12 * scale * len(f)
    assert abs(f[:, 1].sum()) < 1e-12 * scale * len(f)
    torque = np.sum(ps.pos[:, 0] * f[:, 1] - ps.pos[:, 1] * f[:, 0])
    assert abs(torque) < 1e-12 * scale * len(f)


def test_gravity_and_lj_wall_push():
    p = sc.FluidParams(rho0=1000.0, c=10.0, g=9.8, e_wall=1.0, r_wall=0.02)
    k = make_kernel("wendland2", 0.06)
    pos = np.array([[0.0, 0.01], [0.0, 0.0]])
    ps = sc.ParticleSystem(pos, np.zeros((2, 2)), np.array([0.4, 0.4]), np.array([0, sc.WALL_LJ]))
    ps.rho = np.full(2, 1000.0)
    acc = sc.compute_acceleration(ps, k, p)
    expected = sc.lj_wall_force(0.01, p) / 0.4 - 9.8
    assert acc[0, 1] == pytest.approx(expected, rel=1e-14)
    assert np.all(acc[1] == 0)
    ps.pos[0] = ps.pos[1]
    with pytest.raises(sc.WallPenetrationError):
        sc.compute_acceleration(ps, k, p)


def test_non_positive_density_rejected(rng):
    ps = blob(rng)
    k = make_kernel("wendland2", 0.3)
    ps.offset = np.full(ps.n, -1e9)
    with pytest.raises(sc.DensityError):
        sc.compute_density(ps, k, "offset")


def test_shepard_filter_keeps_constant_and_averages(rng):
    ps = blob(rng)
    k = make_kernel("wendland2", 0.3)
    ps.rho = sc.raw_density(ps, k)
    ps.vel[:] = [1.5, -0.5]
    out = sc.shepard_filter(ps, k)
    assert np.allclose(out, [1.5, -0.5], rtol=0, atol=1e-14)
    ps.vel = rng.standard_normal(ps.vel.shape)
    out = sc.shepard_filter(ps, k)
    assert out[:, 0].max() <= ps.vel[:, 0].max() and out[:, 0].min() >= ps.vel[:, 0].min()
    assert np.all(sc.shepard_gamma(ps, k) > 0)


def test_energy_budget_terms():
    p = sc.FluidParams(rho0=1.0, c=1.0, g=2.0)
    k = make_kernel("wendland2", 1.0)
    ps = sc.ParticleSystem(np.array([[0.0, 3.0]]), np.array([[3.0, 4.0]]), np.array([2.0]),
                           np.array([0]), rho=np.array([1.0]))
    d = sc.total_energy(ps, k, p, "lj")
    assert d.kinetic == 25.0
    assert d.gravitational == 12.0
    assert d.internal == pytest.approx(2.0 * 7 / 42)
    assert d.momentum == (6.0, 8.0)
    assert d.angular_momentum == pytest.approx(2.0 * (0 * 4 - 3 * 3))
    assert d.total == pytest.approx(d.kinetic + d.internal + d.gravitational)


KERNEL_CALLS = ["density", "acceleration", "rate", "shepard"]


@given(st.integers(0, 2**32 - 1), st.sampled_from(KERNEL_CALLS))
def test_compiled_and_python_backends_agree_bitwise(seed, what):
    from revsph import available_backends
    if "compiled" not in available_backends():
        pytest.skip("compiled core not built")
    rng = np.random.default_rng(seed)
    ps = blob(rng, n=8)
    ps.kind[:5] = sc.WALL_DUMMY
    ps.kind[5:9] = sc.WALL_LJ
    p = sc.FluidParams(rho0=1000.0, c=10.0, g=9.8, e_wall=3.0, r_wall=0.09, p0=20.0)
    k = make_kernel("wendland2", 0.3)
    ac = make_anticlump_kernel(0.1)
    out = {}
    for name in ("python", "compiled"):
        for w in (1, 4):
            t = neighbor_table(ps.pos, k.h, w, name)
            q = ps.copy()
            q.rho = sc.compute_density(q, k, "raw", t, w, name, 1000.0)
            if what == "density":
                r = q.rho
            elif what == "acceleration":
                r = sc.compute_acceleration(q, k, p, t, ac, w, name)
            elif what == "rate":
                r = sc.standard_density_rate(q, k, t, w, name)
            else:
                r = sc.shepard_filter(q, k, t, w, name)
            out[(name, w)] = np.asarray(r)
    ref = out[("python", 1)]
    for key, val in out.items():
        assert val.tobytes() == ref.tobytes(), key
