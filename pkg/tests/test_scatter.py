import math

import numpy as np
import pytest

from anisokepler.dynamics import State, integrate, monitors
from anisokepler.errors import ContinuationError, DomainError, FitError
from anisokepler.minimize import MinimizeOptions
from anisokepler.potential import PotentialParams, eval_U
from anisokepler.scatter import (
    ContinuationSchedule,
    bihyperbolic_solve,
    escape_fit,
    hyperbolic_solve,
    lost_coercivity,
    match_collision_free_case,
    plot_data,
    sdot_tail_bound,
    time_shift_to_periapsis,
    write_plot_data,
)
from anisokepler.paths import Path

from kepler_oracle import Hyperbola, finite_conic_periapsis, through_point_with_asymptote

KEPLER = PotentialParams.gutzwiller((1.0, 1.0), 1.0)
G12 = PotentialParams.gutzwiller((1.0, 2.0), 1.0)


def at_energy(P, x, direction, h):
    x = np.asarray(x, float)
    d = np.asarray(direction, float)
    return State(0.0, x, math.sqrt(2 * (h + eval_U(P, x))) * d / np.linalg.norm(d))


def test_tail_bound_example():
    b = sdot_tail_bound(KEPLER, 0.5, 1.0, 0.0, 100.0, U_max=1.0)
    assert b == pytest.approx(2 * math.sqrt(3) / 10, rel=1e-14)
    assert b == pytest.approx(0.3464102, abs=1e-7)


def test_tail_bound_decay_rate():
    for a in (0.5, 1.0, 1.5):
        P = PotentialParams.gutzwiller((1.0, 2.0), a)
        b1 = sdot_tail_bound(P, 1.0, 1.0, 0.0, 100.0)
        b2 = sdot_tail_bound(P, 1.0, 1.0, 0.0, 1e4)
        assert b2 / b1 == pytest.approx(100 ** (-a / 2), rel=1e-12)


def test_tail_bound_rejects_bad_input():
    with pytest.raises(DomainError):
        sdot_tail_bound(KEPLER, 0.0, 1.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        sdot_tail_bound(KEPLER, 1.0, 1.0, 2.0, 1.0)


def test_tail_bound_dominates_trajectory():
    h = 1.0
    traj = integrate(G12, at_energy(G12, [2.0, 1.0], [-1.0, 0.4], h), 400.0, t_eval=np.linspace(0, 400, 40001))
    mon = monitors(G12, traj)
    i0 = int(np.argmax(mon.Idot >= 0))
    r0 = traj.r[i0]
    t0 = traj.t[i0]
    r = traj.r
    # |s'| = |v - r' s| / r
    s = traj.x / r[:, None]
    rdot = np.sum(traj.v * s, axis=1)
    sdot = np.linalg.norm(traj.v - rdot[:, None] * s, axis=1) / r
    for t1 in (t0 + 5.0, t0 + 50.0):
        m = traj.t >= t1
        integral = np.trapezoid(sdot[m], traj.t[m])
        assert integral <= sdot_tail_bound(G12, h, r0, t0, t1)


def test_escape_fit_kepler_conic():
    orbit = Hyperbola(0.5, 2.0, 0.0)
    x0 = orbit.position(0.0)
    st = State(0.0, x0, np.array([0.0, math.sqrt(2 * (0.5 + 1 / orbit.periapsis))]))
    traj = integrate(KEPLER, st, 1e4)
    esc = escape_fit(KEPLER, traj, 0.5)
    assert esc.radial_rate == pytest.approx(1.0, rel=0.01)
    th = orbit.asymptote_angle(1)
    np.testing.assert_allclose(esc.s_plus, [math.cos(th), math.sin(th)], atol=1e-3)
    assert esc.gamma_monotone


def test_escape_fit_radial_homothetic():
    st = at_energy(G12, [0.0, 1.0], [0.0, 1.0], 1.0)
    traj = integrate(G12, st, 100.0)
    esc = escape_fit(G12, traj, 1.0)
    assert esc.direction_residual == 0.0
    np.testing.assert_array_equal(esc.s_plus, [0.0, 1.0])


def test_escape_fit_gutzwiller_rate():
    traj = integrate(G12, at_energy(G12, [1.0, 0.3], [0.2, 1.0], 1.0), 1e4, stop_radius=1e3)
    assert traj.r[-1] >= 1e3 * (1 - 1e-6)
    esc = escape_fit(G12, traj, 1.0)
    assert esc.radial_rate == pytest.approx(math.sqrt(2), rel=0.01)


def test_escape_fit_needs_escape():
    traj = integrate(KEPLER, State(0, [1, 0], [0, 1]), 10.0)
    with pytest.raises(FitError):
        escape_fit(KEPLER, traj, 0.5)


def test_schedule_validation():
    assert ContinuationSchedule.geometric(10, 2, 4).radii == (10.0, 20.0, 40.0, 80.0)
    with pytest.raises(DomainError):
        ContinuationSchedule((10.0, 20.0))
    with pytest.raises(DomainError):
        ContinuationSchedule((10.0, 30.0, 20.0))


@pytest.fixture(scope="module")
def kepler_hyperbolic():
    return hyperbolic_solve(KEPLER, [1.0, 0.0], [0.0, 1.0], 0.5)


def test_hyperbolic_kepler_matches_conic(kepler_hyperbolic):
    final, esc, sched = kepler_hyperbolic
    assert sched.accepted
    path = final.path
    window = sched.stages[0].T
    ts = path.times[path.times <= window]
    best = math.inf
    for orbit in through_point_with_asymptote(0.5, (1.0, 0.0), math.pi / 2):
        nu0 = math.atan2(0.0, 1.0) - orbit.omega
        nu0 = orbit.orient * ((nu0 + math.pi) % (2 * math.pi) - math.pi)
        t_start = orbit.time_at_nu(nu0)
        exact = np.array([orbit.position(t_start + t) for t in ts])
        err = np.max(np.linalg.norm(path(ts) - exact, axis=1)) / np.max(np.linalg.norm(exact, axis=1))
        best = min(best, err)
    assert best <= 1e-3
    np.testing.assert_allclose(esc.s_plus, [0.0, 1.0], atol=esc.tail_bound)


def test_hyperbolic_stage_errors_decrease(kepler_hyperbolic):
    _, _, sched = kepler_hyperbolic
    errs = sched.window_errors[1:]
    assert errs[-1] < errs[0]
    assert all(st.duration_bound_ok for st in sched.stages)


def test_hyperbolic_radial_aligned():
    sched = ContinuationSchedule.geometric(10, 2, 5)
    final, esc, sched = hyperbolic_solve(G12, [0.0, 1.0], [0.0, 1.0], 1.0, schedule=sched,
                                         opts=MinimizeOptions(N=64), window_tol=1e-2)
    for st in sched.stages:
        assert np.max(np.abs(st.result.path.nodes[:, 0])) <= 1e-12
    assert esc.direction_residual <= 1e-8


def test_hyperbolic_gutzwiller():
    final, esc, sched = hyperbolic_solve(G12, [1.0, 0.0], [0.0, 1.0], 1.0)
    assert sched.accepted
    assert esc.radial_rate == pytest.approx(math.sqrt(2), rel=0.01)
    assert np.linalg.norm(esc.s_plus - [0.0, 1.0]) <= esc.tail_bound
    assert esc.gamma_monotone


def test_hyperbolic_rejects_bad_input():
    with pytest.raises(DomainError):
        hyperbolic_solve(G12, [1.0, 0.0], [0.0, 2.0], 1.0)
    with pytest.raises(DomainError):
        hyperbolic_solve(G12, [1.0, 0.0], [0.0, 1.0], 0.0)


def test_bihyperbolic_rejects_half_turn():
    with pytest.raises(DomainError):
        bihyperbolic_solve(G12, 0.0, math.pi, 0.5)
    with pytest.raises(DomainError):
        bihyperbolic_solve(G12, 0.5, 0.5 - math.pi, 0.5)


def test_case_matching():
    m = match_collision_free_case(3 * math.pi / 4, -math.pi / 2)
    assert (m.case, m.reflection, m.shift) == ("i", "identity", 0)
    m = match_collision_free_case(-math.pi / 4, math.pi)
    assert m.case == "i" and m.reflection == "real-axis"
    assert m.theta_minus == pytest.approx(math.pi / 4) and m.theta_plus == pytest.approx(-math.pi)
    m = match_collision_free_case(0.0, 2 * math.pi)
    assert m.case == "i" and m.theta_plus == 2 * math.pi


def test_case_matching_reflection_maps_angles():
    for tm, tp in [(-2.0, 1.5), (4.0, 0.3), (-1.0, 2.5)]:
        m = match_collision_free_case(tm, tp)
        assert m is not None
        for th, th_n in ((tm, m.theta_minus), (tp, m.theta_plus)):
            u = m.matrix @ np.array([math.cos(th), math.sin(th)])
            np.testing.assert_allclose(u, [math.cos(th_n), math.sin(th_n)], atol=1e-12)
        # the turning is preserved up to orientation
        assert abs(m.theta_plus - m.theta_minus) == pytest.approx(abs(tp - tm), abs=1e-12)


def test_lost_coercivity():
    assert lost_coercivity([1.0, 2.0, 4.0, 8.0])
    assert not lost_coercivity([1.0, 1.5, 1.6, 1.62])
    assert not lost_coercivity([1.0, 2.0])


def test_time_shift_to_periapsis():
    orbit = Hyperbola(0.5, 2.0, 0.3)
    ts = np.linspace(-3.0, 2.0, 201) + 0.0123
    nodes = np.array([orbit.position(t) for t in ts])
    shifted, t_shift, rho = time_shift_to_periapsis(Path(ts, nodes))
    assert t_shift == pytest.approx(0.0, abs=1e-4)
    assert rho == pytest.approx(orbit.periapsis, rel=1e-5)
    assert shifted.times[0] == pytest.approx(ts[0] - t_shift, abs=1e-15)


@pytest.fixture(scope="module")
def kepler_bihyperbolic():
    sched = ContinuationSchedule.geometric(10, 2, 4)
    with pytest.raises(ContinuationError) as exc:
        bihyperbolic_solve(KEPLER, 0.0, 4 * math.pi / 3, 0.5, schedule=sched, opts=MinimizeOptions(N=128))
    return exc.value.stages


def test_bihyperbolic_kepler_periapsis(kepler_bihyperbolic):
    for st in kepler_bihyperbolic:
        rho, _ = finite_conic_periapsis(0.5, st.R, 4 * math.pi / 3)
        assert st.rho == pytest.approx(rho, rel=0.01)


def test_bihyperbolic_monitors(kepler_bihyperbolic):
    path = kepler_bihyperbolic[-1].result.path
    pd = plot_data(KEPLER, path, 0.5)
    Idot = np.gradient(pd.I, pd.t)
    assert np.all(np.diff(Idot) > 0)
    zero = np.flatnonzero(np.diff(np.sign(Idot)))
    assert zero.size == 1
    assert abs(pd.t[zero[0]]) <= 2 * np.max(np.diff(pd.t[max(zero[0] - 1, 0): zero[0] + 2]))
    out = pd.t > 0
    g = pd.Gamma[out]
    assert np.all(np.diff(g) <= 1e-3 * np.max(np.abs(g)))


def test_bihyperbolic_duration_bound(kepler_bihyperbolic):
    assert all(st.duration_bound_ok for st in kepler_bihyperbolic)


def test_bihyperbolic_warns_without_guarantee():
    P = PotentialParams.gutzwiller((1.0, 1.1), 1.0)
    sched = ContinuationSchedule.geometric(10, 2, 3)
    with pytest.warns(UserWarning):
        with pytest.raises(ContinuationError):
            bihyperbolic_solve(P, 3 * math.pi / 4, -math.pi / 2, 0.5, schedule=sched, opts=MinimizeOptions(N=32))


def test_plot_data_round_trip(tmp_path, kepler_bihyperbolic):
    path = kepler_bihyperbolic[0].result.path
    pd = plot_data(KEPLER, path, 0.5)
    f = tmp_path / "plot.dat"
    write_plot_data(pd, f)
    lines = f.read_text().splitlines()
    assert lines[0] == "# t r theta Gamma I"
    back = np.loadtxt(f)
    np.testing.assert_array_equal(back, pd.rows())
    np.testing.assert_allclose(pd.I, pd.r**2, rtol=1e-15)



def test_case_matching_uncovered_pair():
    assert match_collision_free_case(-3.0, -7.0) is None
