"""Built-in invariant checks behind ``anisokepler verify``.

Each check returns ``(ok, detail)``.  The quick suite runs in a few seconds;
the full suite adds a hyperbolic continuation and finer grids.
"""
from __future__ import annotations

import math

import numpy as np

from . import blowup, dynamics, minimize, paths, potential, scatter


def _gutz(w=(1.0, 2.0), alpha=1.0):
    return potential.PotentialParams.gutzwiller(w, alpha)


def check_u4_threshold():
    a = 1.0
    thr = potential.spiral_threshold(a)
    lo = potential.check_conditions(_gutz((1.0, thr - 1e-6), a)).U4
    hi = potential.check_conditions(_gutz((1.0, thr + 1e-6), a)).U4
    return (lo is False and hi is True), f"threshold {thr:.6g}"


def _state_at_energy(P, x, direction, h):
    x = np.asarray(x, float)
    d = np.asarray(direction, float)
    speed = math.sqrt(2 * (h + float(potential.eval_U(P, x))))
    return dynamics.State(0.0, x, speed * d / np.linalg.norm(d))


def check_energy(horizon=100.0):
    P = _gutz()
    traj = dynamics.integrate(P, _state_at_energy(P, [1.0, 0.3], [0.2, 1.0], 1.0), horizon)
    drift = traj.energy_drift()
    return drift <= 1e-8, f"drift {drift:.3g} over t = {horizon:g}"


def check_lagrange_jacobi():
    P = _gutz()
    st = dynamics.State(0.0, [1.0, 0.3], [0.2, 1.1])
    dt = 1e-3
    traj = dynamics.integrate(P, st, 2 * dt, tol=1e-13, atol=1e-15, t_eval=[0.0, dt, 2 * dt])
    mon = dynamics.monitors(P, traj)
    fd = (mon.I[2] - 2 * mon.I[1] + mon.I[0]) / dt**2
    rel = abs(fd - mon.Iddot[1]) / abs(mon.Iddot[1])
    return rel <= 1e-6, f"relative error {rel:.3g}"


def check_radial_action():
    P = _gutz((1.0, 1.0))
    path = paths.straight_path([1.0, 0.0], [2.0, 0.0], 1.0, 16)
    err = abs(paths.action(P, path) - (0.5 + math.log(2)))
    return err <= 1e-12, f"error {err:.3g}"


def check_free_time(N=64):
    P = _gutz((1.0, 1.0))
    res = minimize.free_time_minimize(P, [1.0, 0.0], [math.e, 0.0], 0.5, minimize.MinimizeOptions(N=N))
    ok = abs(res.energy_of_path - 0.5) <= 1e-4 and res.value <= math.e
    return ok, f"value {res.value:.6g}, energy {res.energy_of_path:.6g}"


def check_tail_bound():
    P = _gutz((1.0, 1.0))
    b = scatter.sdot_tail_bound(P, 0.5, 1.0, 0.0, 100.0, U_max=1.0)
    return abs(b - 2 * math.sqrt(3) / 10) <= 1e-12, f"bound {b:.7g}"


def check_scaling():
    P = _gutz(alpha=0.5)
    path = paths.straight_path([1.0, 0.2], [0.3, 1.5], 2.0, 32)
    worst = 0.0
    A = paths.action(P, path)
    for lam in (2.0, 8.0):
        Al = paths.action(P, blowup.blow_up(path, lam, P.alpha))
        worst = max(worst, abs(Al - lam ** blowup.action_scaling_exponent(P.alpha) * A) / A)
    return worst <= 1e-10, f"relative error {worst:.3g}"


def check_deformation(eps=(1e-2, 1e-3)):
    P = _gutz()
    spec, _ = blowup.make_homothetic(P, [1.0, 0.0], [0.0, 1.0])
    v = blowup.test_minimality(P, spec, epsilon_grid=eps)
    ok = all(d < 0 for d in v.differences) and all(t.mismatch <= 1e-8 for t in v.terms)
    return ok, f"verdict {v.verdict}"


def check_hyperbolic():
    P = _gutz(alpha=1.0)
    _, esc, sched = scatter.hyperbolic_solve(P, [1.0, 0.0], [0.0, 1.0], 1.0)
    ok = abs(esc.radial_rate - math.sqrt(2)) <= 0.01 * math.sqrt(2)
    return ok, f"radial rate {esc.radial_rate:.6g}, window error {sched.window_errors[-1]:.3g}"


QUICK = (
    ("potential.u4_threshold", check_u4_threshold),
    ("dynamics.energy", check_energy),
    ("dynamics.lagrange_jacobi", check_lagrange_jacobi),
    ("paths.radial_action", check_radial_action),
    ("minimize.free_time", check_free_time),
    ("scatter.tail_bound", check_tail_bound),
    ("blowup.scaling", check_scaling),
    ("blowup.deformation", check_deformation),
)
FULL = QUICK + (
    ("dynamics.energy_long", lambda: check_energy(1000.0)),
    ("minimize.free_time_fine", lambda: check_free_time(256)),
    ("scatter.hyperbolic", check_hyperbolic),
)


def run_suite(name: str = "quick"):
    """Run a suite; returns ``(name, ok, detail)`` triples in a fixed order."""
    checks = {"quick": QUICK, "full": FULL}[name]
    out = []
    for label, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((label, bool(ok), detail))
    return out
