"""Command-line front end.

Every subcommand reads an optional JSON run config (``--config``) and lets
flat flags override single entries of it.  Outputs go to ``--out``, else the
config's ``output.dir``, else ``$ANISOKEPLER_OUT``, else ``./anisokepler-out``.

Exit codes: 0 accepted, 2 solver failure or rejected result, 1 bad input.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import blowup, dynamics, minimize, paths, potential, scatter
from .errors import (
    AnisoKeplerError,
    BracketError,
    ConfigError,
    ConstraintError,
    ContinuationError,
    DomainError,
    FitError,
    LiftAmbiguityError,
    SingularityError,
)

OUT_ENV = "ANISOKEPLER_OUT"
DEFAULT_OUT = "anisokepler-out"

# flag dest -> (config block, key)
_FLAG_KEYS = {
    "alpha": ("potential", "alpha"),
    "weights": ("potential", "weights"),
    "sphere_table": ("potential", "sphere_table"),
    "h": ("problem", "h"),
    "x0": ("problem", "x0"),
    "v0": ("problem", "v0"),
    "horizon": ("problem", "horizon"),
    "tol": ("problem", "tol"),
    "form": ("problem", "form"),
    "p": ("problem", "p"),
    "q": ("problem", "q"),
    "fixed_time": ("problem", "T"),
    "r1": ("problem", "r1"),
    "r2": ("problem", "r2"),
    "theta_minus": ("problem", "theta_minus"),
    "theta_plus": ("problem", "theta_plus"),
    "s_target": ("problem", "s_target"),
    "s_minus": ("problem", "s_minus"),
    "s_plus": ("problem", "s_plus"),
    "epsilons": ("problem", "epsilons"),
    "T": ("problem", "T"),
    "R1": ("schedule", "R1"),
    "ratio": ("schedule", "ratio"),
    "K": ("schedule", "K"),
    "nodes": ("solver", "N"),
    "restarts": ("solver", "restarts"),
    "method": ("solver", "method"),
    "workers": ("solver", "workers"),
    "max_iters": ("solver", "max_iters"),
    "samples": ("output", "samples"),
    "seed": (None, "seed"),
}
_BLOCKS = ("potential", "problem", "schedule", "solver", "output")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# --------------------------------------------------------------------------
# config


def _line_of(text: str, key: str) -> int:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return 0


def load_config(filename) -> tuple[dict, str]:
    """Parse a JSON run config; errors carry the offending line number."""
    try:
        with open(filename, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {filename}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{filename}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{filename}:1: config must be an object")
    for key, val in cfg.items():
        if key == "seed":
            if not isinstance(val, int) or isinstance(val, bool):
                raise ConfigError(f"{filename}:{_line_of(text, key)}: seed must be an integer")
        elif key not in _BLOCKS:
            raise ConfigError(f"{filename}:{_line_of(text, key)}: unknown block {key!r}")
        elif not isinstance(val, dict):
            raise ConfigError(f"{filename}:{_line_of(text, key)}: block {key!r} must be an object")
    return cfg, text


def merge_flags(cfg: dict, args: argparse.Namespace) -> dict:
    out = {b: dict(cfg.get(b, {})) for b in _BLOCKS}
    out["seed"] = cfg.get("seed", 0)
    for dest, (block, key) in _FLAG_KEYS.items():
        val = getattr(args, dest, None)
        if val is None:
            continue
        if block is None:
            out[key] = val
        else:
            out[block][key] = val
    return out


class _Reader:
    """Typed access to one config block with range checks."""

    def __init__(self, cfg: dict, block: str, text: str = "", source: str = "config"):
        self.data = cfg[block]
        self.block = block
        self.text = text
        self.source = source

    def _fail(self, key, msg):
        line = _line_of(self.text, key) if self.text else 0
        where = f"{self.source}:{line}: " if line else ""
        raise ConfigError(f"{where}{self.block}.{key}: {msg}")

    def has(self, key) -> bool:
        return self.data.get(key) is not None

    def real(self, key, default=None, positive=False, lo=None, hi=None) -> float:
        v = self.data.get(key, default)
        if v is None:
            self._fail(key, "missing")
        try:
            v = float(v)
        except (TypeError, ValueError):
            self._fail(key, f"expected a number, got {v!r}")
        if not math.isfinite(v):
            self._fail(key, "must be finite")
        if positive and not v > 0:
            self._fail(key, "must be positive")
        if lo is not None and not v > lo or hi is not None and not v < hi:
            self._fail(key, f"must lie in ({lo}, {hi})")
        return v

    def integer(self, key, default=None, minimum=None) -> int:
        v = self.data.get(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
            self._fail(key, f"expected an integer, got {v!r}")
        if minimum is not None and v < minimum:
            self._fail(key, f"must be at least {minimum}")
        return int(v)

    def vector(self, key, default=None, dim=None, unit=False) -> np.ndarray:
        v = self.data.get(key, default)
        if v is None:
            self._fail(key, "missing")
        if isinstance(v, str):
            v = v.split(",")
        try:
            arr = np.array([float(x) for x in v])
        except (TypeError, ValueError):
            self._fail(key, f"expected a list of numbers, got {v!r}")
        if not np.all(np.isfinite(arr)):
            self._fail(key, "entries must be finite")
        if dim is not None and arr.size != dim:
            self._fail(key, f"expected {dim} components, got {arr.size}")
        if unit:
            n = np.linalg.norm(arr)
            if n == 0:
                self._fail(key, "must be nonzero")
            arr = arr / n
        return arr

    def choice(self, key, options, default):
        v = self.data.get(key, default)
        if v not in options:
            self._fail(key, f"must be one of {', '.join(options)}")
        return v


def build_params(cfg, text="", source="config") -> potential.PotentialParams:
    rd = _Reader(cfg, "potential", text, source)
    alpha = rd.real("alpha", lo=0.0, hi=2.0)
    if rd.has("sphere_table") and rd.has("weights"):
        rd._fail("weights", "give either weights or sphere_table")
    try:
        if rd.has("sphere_table"):
            sphere = potential.SphereFunction.from_file(rd.data["sphere_table"])
            return potential.PotentialParams.planar(sphere, alpha)
        w = rd.vector("weights")
        if np.any(w <= 0):
            rd._fail("weights", "must be positive")
        return potential.PotentialParams.gutzwiller(tuple(w), alpha)
    except (DomainError, OSError) as exc:
        raise ConfigError(f"potential: {exc}") from None


def build_options(cfg, text="", source="config", default_N=128) -> minimize.MinimizeOptions:
    rd = _Reader(cfg, "solver", text, source)
    try:
        return minimize.MinimizeOptions(
            N=rd.integer("N", default_N, minimum=8),
            max_iters=rd.integer("max_iters", 200, minimum=1),
            grad_tol=rd.real("grad_tol", 1e-8, positive=True),
            restarts=rd.integer("restarts", 0, minimum=0),
            seed=int(cfg["seed"]),
            method=rd.choice("method", ("newton", "lbfgs"), "newton"),
            energy_tol=rd.real("energy_tol", 1e-4, positive=True),
            workers=rd.integer("workers", 1, minimum=1),
        )
    except DomainError as exc:
        raise ConfigError(f"solver: {exc}") from None


def build_schedule(cfg, text="", source="config", K_default=6) -> scatter.ContinuationSchedule:
    rd = _Reader(cfg, "schedule", text, source)
    if rd.has("radii"):
        radii = rd.vector("radii")
        try:
            return scatter.ContinuationSchedule(tuple(radii))
        except DomainError as exc:
            raise ConfigError(f"schedule: {exc}") from None
    R1 = rd.real("R1", 10.0, positive=True)
    ratio = rd.real("ratio", 2.0, positive=True)
    if not ratio > 1:
        rd._fail("ratio", "must exceed 1")
    K = rd.integer("K", K_default, minimum=3)
    return scatter.ContinuationSchedule.geometric(R1, ratio, K)


# --------------------------------------------------------------------------
# output


def f6(x) -> str:
    return format(float(x), ".6g")


def f17(x) -> str:
    return format(float(x), ".17g")


def vec6(v) -> str:
    return "[" + ", ".join(f6(x) for x in v) + "]"


def write_atomic(filename, text: str) -> None:
    tmp = f"{filename}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, filename)


def write_rows(filename, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(f17(v) for v in row))
    write_atomic(filename, "\n".join(lines) + "\n")


def output_dir(args, cfg) -> str:
    d = args.out or cfg["output"].get("dir") or os.environ.get(OUT_ENV) or DEFAULT_OUT
    os.makedirs(d, exist_ok=True)
    return d


class Report:
    """Ordered ``key: value`` lines for a human-readable summary."""

    def __init__(self, title: str):
        self.lines = [f"# {title}"]

    def add(self, key, value):
        if isinstance(value, (float, np.floating)):
            value = f6(value)
        elif isinstance(value, np.ndarray):
            value = vec6(value)
        self.lines.append(f"{key}: {value}")

    def section(self, name):
        self.lines.append(f"[{name}]")

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def _finish(report: Report, out: str, name: str, quiet: bool) -> None:
    text = report.text()
    write_atomic(os.path.join(out, name), text)
    if not quiet:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# subcommands


def cmd_potential(args, cfg, text):
    params = build_params(cfg, text, args.config or "config")
    out = output_dir(args, cfg)
    rep = Report("potential")
    rep.add("alpha", params.alpha)
    rep.add("dimension", params.d)
    if params.is_gutzwiller:
        rep.add("weights", np.asarray(params.weights))
    rep.add("U_max", potential.u_max(params))
    rep.add("U_min", potential.u_min(params))
    rep.section("conditions")
    rep.lines += potential.check_conditions(params).as_lines()
    _finish(rep, out, "potential.txt", args.quiet)
    return 0


def cmd_integrate(args, cfg, text):
    src = args.config or "config"
    params = build_params(cfg, text, src)
    rd = _Reader(cfg, "problem", text, src)
    x0 = rd.vector("x0", dim=params.d)
    if rd.has("v0"):
        v0 = rd.vector("v0", dim=params.d)
    else:
        # radial launch at the requested energy
        h = rd.real("h")
        speed2 = 2 * (h + float(potential.eval_U(params, x0)))
        if speed2 < 0:
            rd._fail("h", "energy below the potential at x0")
        v0 = math.sqrt(speed2) * x0 / np.linalg.norm(x0)
    horizon = rd.real("horizon", 100.0, positive=True)
    tol = rd.real("tol", dynamics.DEFAULT_RTOL, positive=True)
    form = rd.choice("form", ("cartesian", "polar"), "cartesian")
    samples = _Reader(cfg, "output", text, src).integer("samples", 0, minimum=0)
    t_eval = np.linspace(0.0, horizon, samples) if samples else None
    traj = dynamics.integrate(params, dynamics.State(0.0, x0, v0), horizon, tol=tol, form=form, t_eval=t_eval)
    out = output_dir(args, cfg)
    d = params.d
    mon = dynamics.monitors(params, traj) if np.all(traj.r > 0) else None
    h_series = traj.energies()
    header = ["t"] + [f"x{i + 1}" for i in range(d)] + [f"v{i + 1}" for i in range(d)] + ["h", "I", "Gamma"]
    gamma = mon.Gamma if mon is not None else 0.5 * traj.r**params.alpha * (
        2 * h_series - np.sum(traj.v * traj.x, axis=1) ** 2 / np.maximum(traj.r, 1e-300) ** 2
    )
    rows = np.column_stack([traj.t, traj.x, traj.v, h_series, traj.r**2, gamma])
    write_rows(os.path.join(out, "trajectory.csv"), header, rows)
    rep = Report("integrate")
    rep.add("cause", traj.cause)
    rep.add("t_end", traj.t[-1])
    rep.add("samples", traj.t.size)
    rep.add("energy", h_series[0])
    rep.add("energy_drift", traj.energy_drift())
    rep.add("r_end", traj.r[-1])
    status = 0
    if traj.cause == "collision":
        rep.section("collision")
        try:
            fit = dynamics.fit_collision(params, traj)
            rep.add("t0", fit.t0)
            rep.add("kappa", fit.kappa)
            rep.add("beta", fit.beta)
            rep.add("exponent", fit.fit_exponent)
            rep.add("limit_direction", fit.limit_direction)
            rep.add("direction_error", fit.direction_error)
        except FitError as exc:
            rep.add("fit", f"failed ({exc})")
    elif traj.cause == "error":
        status = 2
    _finish(rep, out, "summary.txt", args.quiet)
    return status


def _class_line(path):
    if path.d != 2:
        return "n/a"
    try:
        cl = paths.winding_lift(path)
    except LiftAmbiguityError:
        return "ambiguous"
    return f"theta- {f6(cl.theta_minus)}, theta+ {f6(cl.theta_plus)}, turn {f6(cl.delta)}"


def _result_report(rep: Report, params, res, h=None):
    rep.add("value", res.value)
    rep.add("action", paths.action(params, res.path))
    rep.add("duration", res.T)
    rep.add("energy", res.energy_of_path)
    if h is not None:
        rep.add("energy_error", abs(res.energy_of_path - h))
    rep.add("energy_spread", res.energy_spread)
    rep.add("el_residual", res.el_residual)
    rep.add("grad_norm", res.grad_norm)
    rep.add("min_radius", res.min_radius)
    rep.add("collision_suspect", res.collision_suspect)
    rep.add("converged", res.converged)
    rep.add("iterations", res.iterations)
    rep.add("class", _class_line(res.path))


def cmd_minimize(args, cfg, text):
    src = args.config or "config"
    params = build_params(cfg, text, src)
    opts = build_options(cfg, text, src)
    rd = _Reader(cfg, "problem", text, src)
    constrained = rd.has("theta_minus") or rd.has("theta_plus")
    h = None
    if constrained:
        if params.d != 2:
            rd._fail("theta_minus", "constrained mode is planar")
        h = rd.real("h", positive=True)
        r1, r2 = rd.real("r1", positive=True), rd.real("r2", positive=True)
        tm, tp = rd.real("theta_minus"), rd.real("theta_plus")
        res = minimize.minimize_constrained(params, r1, tm, r2, tp, h, opts)
        mode = "constrained"
    else:
        p, q = rd.vector("p", dim=params.d), rd.vector("q", dim=params.d)
        if rd.has("T") == rd.has("h"):
            raise ConfigError("minimize needs exactly one of --fixed-time or --energy")
        if rd.has("T"):
            res = minimize.minimize_fixed_time(params, p, q, rd.real("T", positive=True), opts)
            mode = "fixed-time"
        else:
            h = rd.real("h", positive=True)
            res = minimize.free_time_minimize(params, p, q, h, opts)
            mode = "free-time"
    out = output_dir(args, cfg)
    paths.write_path_csv(res.path, os.path.join(out, "path.csv"))
    rep = Report("minimize")
    rep.add("mode", mode)
    rep.add("nodes", opts.N)
    rep.add("restarts", opts.restarts)
    rep.add("seed", opts.seed)
    _result_report(rep, params, res, h)
    ok = res.converged and not res.collision_suspect
    if h is not None:
        ok = ok and abs(res.energy_of_path - h) <= opts.energy_tol
    rep.add("accepted", ok)
    # machine-readable values for round-trip checks
    write_atomic(
        os.path.join(out, "values.json"),
        json.dumps({"action": f17(paths.action(params, res.path)), "value": f17(res.value)}, indent=1) + "\n",
    )
    _finish(rep, out, "report.txt", args.quiet)
    return 0 if ok else 2


def _escape_report(rep: Report, esc: scatter.EscapeData):
    rep.section("escape")
    rep.add("s_plus", esc.s_plus)
    if esc.s_minus is not None:
        rep.add("s_minus", esc.s_minus)
    rep.add("radial_rate", esc.radial_rate)
    if not math.isnan(esc.radial_rate_minus):
        rep.add("radial_rate_minus", esc.radial_rate_minus)
    rep.add("direction_residual", esc.direction_residual)
    rep.add("tail_bound", esc.tail_bound)
    rep.add("gamma_monotone", esc.gamma_monotone)
    for k in ("theta_minus", "theta_plus"):
        v = getattr(esc, k)
        if not math.isnan(v):
            rep.add(k, v)


def _stage_report(rep: Report, out: str, stages, bi: bool):
    rep.section("stages")
    for n, st in enumerate(stages):
        paths.write_path_csv(st.result.path, os.path.join(out, f"stage_{n:02d}.csv"))
        fields = [f"R {f6(st.R)}", f"T {f6(st.T)}", f"value {f6(st.result.value)}",
                  f"energy {f6(st.result.energy_of_path)}", f"window_error {f6(st.window_error)}",
                  f"duration_bound_ok {st.duration_bound_ok}"]
        if bi:
            fields.insert(2, f"rho {f6(st.rho)}")
        rep.add(f"stage {n}", ", ".join(fields))


def _scatter_run(args, cfg, text, bi: bool):
    src = args.config or "config"
    params = build_params(cfg, text, src)
    opts = build_options(cfg, text, src, default_N=256)
    rd = _Reader(cfg, "problem", text, src)
    h = rd.real("h", positive=True)
    out = output_dir(args, cfg)
    rep = Report("bihyperbolic" if bi else "hyperbolic")
    rep.add("h", h)
    if bi:
        if params.d != 2:
            raise ConfigError("bihyperbolic mode is planar")
        schedule = build_schedule(cfg, text, src, K_default=scatter.BIHYPERBOLIC_STAGES)
        tm, tp = rd.real("theta_minus"), rd.real("theta_plus")
        rep.add("theta_minus_target", tm)
        rep.add("theta_plus_target", tp)
        run = lambda: scatter.bihyperbolic_solve(  # noqa: E731
            params, tm, tp, h, schedule, opts, assume_alpha_bar_ok=args.assume_alpha_bar_ok
        )
    else:
        schedule = build_schedule(cfg, text, src, K_default=scatter.HYPERBOLIC_STAGES)
        x0 = rd.vector("x0", dim=params.d)
        s = rd.vector("s_target", dim=params.d, unit=True)
        rep.add("x0", x0)
        rep.add("s_target", s)
        run = lambda: scatter.hyperbolic_solve(params, x0, s, h, schedule, opts)  # noqa: E731
    rep.add("radii", np.asarray(schedule.radii))
    try:
        final, esc, schedule = run()
        status = 0
    except ContinuationError as exc:
        _stage_report(rep, out, exc.stages, bi)
        for m in schedule.messages:
            rep.add("note", m)
        rep.add("accepted", False)
        rep.add("failure", str(exc))
        _finish(rep, out, "report.txt", args.quiet)
        return 2
    _stage_report(rep, out, schedule.stages, bi)
    for m in schedule.messages:
        rep.add("note", m)
    rep.section("final")
    _result_report(rep, params, final, h)
    _escape_report(rep, esc)
    rep.add("accepted", schedule.accepted)
    if params.d >= 2:
        pd = scatter.plot_data(params, final.path, h)
        scatter.write_plot_data(pd, os.path.join(out, "plot.dat"))
    _finish(rep, out, "report.txt", args.quiet)
    return status


def cmd_hyperbolic(args, cfg, text):
    return _scatter_run(args, cfg, text, bi=False)


def cmd_bihyperbolic(args, cfg, text):
    return _scatter_run(args, cfg, text, bi=True)


def cmd_collision_test(args, cfg, text):
    src = args.config or "config"
    params = build_params(cfg, text, src)
    if not params.is_gutzwiller:
        raise ConfigError("collision-test needs a weights potential")
    rd = _Reader(cfg, "problem", text, src)
    s_minus = rd.vector("s_minus", dim=params.d, unit=True)
    s_plus = rd.vector("s_plus", dim=params.d, unit=True)
    T = rd.real("T", 1.0, positive=True)
    eps = tuple(rd.vector("epsilons", (1e-2, 1e-3, 1e-4)))
    if any(e <= 0 for e in eps):
        rd._fail("epsilons", "must be positive")
    try:
        spec, _ = blowup.make_homothetic(params, s_plus, s_minus, T=T)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    verdict = blowup.test_minimality(params, spec, T, eps)
    out = output_dir(args, cfg)
    header = ["epsilon", "A1", "A2", "A3", "B1", "B2", "B3", "total", "direct_diff"]
    rows = [
        [e, t.A1, t.A2, t.A3, t.B1, t.B2, t.B3, t.total, t.direct_diff]
        for e, t in zip(verdict.epsilons, verdict.terms)
    ]
    write_rows(os.path.join(out, "terms.csv"), header, rows)
    rep = Report("collision-test")
    rep.add("s_minus", s_minus)
    rep.add("s_plus", s_plus)
    rep.add("T", T)
    rep.add("case", verdict.case)
    if verdict.sigma is not None:
        rep.add("sigma", np.asarray(verdict.sigma))
    for e, dv, t in zip(verdict.epsilons, verdict.differences, verdict.terms):
        rep.add(f"epsilon {f6(e)}", f"difference {f6(dv)}, mismatch {f6(t.mismatch)}")
    rep.add("all_negative", all(dv < 0 for dv in verdict.differences))
    rep.add("slope", verdict.slope)
    rep.add("verdict", verdict.verdict)
    _finish(rep, out, "verdict.txt", args.quiet)
    return 0 if verdict.verdict == "not a local minimizer" else 2


def cmd_verify(args, cfg, text):
    from .verify import run_suite

    out = output_dir(args, cfg)
    results = run_suite(args.suite)
    rep = Report(f"verify {args.suite}")
    for name, ok, detail in results:
        rep.add(name, f"{'pass' if ok else 'FAIL'} ({detail})")
    passed = all(ok for _, ok, _ in results)
    rep.add("passed", f"{sum(ok for _, ok, _ in results)}/{len(results)}")
    _finish(rep, out, "verify.txt", args.quiet)
    return 0 if passed else 2


# --------------------------------------------------------------------------
# argument parsing


def _common(sp, potential_flags=True):
    sp.add_argument("--config", help="JSON run config")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--quiet", action="store_true", help="do not echo the summary")
    if potential_flags:
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--weights", help="comma-separated m1,m2,...")
        sp.add_argument("--sphere-table", dest="sphere_table", help="two-column theta, U file (d = 2)")


def _solver_flags(sp):
    sp.add_argument("--nodes", type=int)
    sp.add_argument("--restarts", type=int)
    sp.add_argument("--method", choices=("newton", "lbfgs"))
    sp.add_argument("--workers", type=int)
    sp.add_argument("--max-iters", dest="max_iters", type=int)


def _schedule_flags(sp):
    sp.add_argument("--R1", type=float)
    sp.add_argument("--ratio", type=float)
    sp.add_argument("--K", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="anisokepler", description="Positive-energy orbits of the anisotropic Kepler problem.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    sp = sub.add_parser("potential", help="condition report of a potential")
    _common(sp)
    sp.set_defaults(func=cmd_potential)

    sp = sub.add_parser("integrate", help="integrate one trajectory")
    _common(sp)
    sp.add_argument("--x0")
    sp.add_argument("--v0")
    sp.add_argument("--h", type=float, help="energy for a radial launch when --v0 is absent")
    sp.add_argument("--horizon", type=float)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--form", choices=("cartesian", "polar"))
    sp.add_argument("--samples", type=int, help="uniform output samples (default: solver steps)")
    sp.set_defaults(func=cmd_integrate)

    sp = sub.add_parser("minimize", help="fixed-time, free-time or winding-constrained minimizer")
    _common(sp)
    sp.add_argument("--p")
    sp.add_argument("--q")
    sp.add_argument("--fixed-time", dest="fixed_time", type=float)
    sp.add_argument("--energy", dest="h", type=float)
    sp.add_argument("--r1", type=float)
    sp.add_argument("--r2", type=float)
    sp.add_argument("--theta-minus", dest="theta_minus", type=float)
    sp.add_argument("--theta-plus", dest="theta_plus", type=float)
    _solver_flags(sp)
    sp.set_defaults(func=cmd_minimize)

    sp = sub.add_parser("hyperbolic", help="hyperbolic solution from x0 escaping along s")
    _common(sp)
    sp.add_argument("--h", type=float)
    sp.add_argument("--x0")
    sp.add_argument("--s-target", dest="s_target")
    _schedule_flags(sp)
    _solver_flags(sp)
    sp.set_defaults(func=cmd_hyperbolic)

    sp = sub.add_parser("bihyperbolic", help="planar solution with prescribed escape angles")
    _common(sp)
    sp.add_argument("--h", type=float)
    sp.add_argument("--theta-minus", dest="theta_minus", type=float)
    sp.add_argument("--theta-plus", dest="theta_plus", type=float)
    sp.add_argument("--assume-alpha-bar-ok", action="store_true",
                    help="proceed silently when collision-free minimizers are not guaranteed")
    _schedule_flags(sp)
    _solver_flags(sp)
    sp.set_defaults(func=cmd_bihyperbolic)

    sp = sub.add_parser("collision-test", help="deformation test of a homothetic collision path")
    _common(sp)
    sp.add_argument("--s-minus", dest="s_minus")
    sp.add_argument("--s-plus", dest="s_plus")
    sp.add_argument("--epsilons")
    sp.add_argument("--T", type=float)
    sp.set_defaults(func=cmd_collision_test)

    sp = sub.add_parser("verify", help="run the built-in invariant checks")
    _common(sp, potential_flags=False)
    sp.add_argument("--suite", choices=("quick", "full"), default="quick")
    sp.set_defaults(func=cmd_verify)
    return ap


def _normalize_flags(args):
    for name in ("weights", "x0", "v0", "p", "q", "s_target", "s_minus", "s_plus", "epsilons"):
        v = getattr(args, name, None)
        if isinstance(v, str):
            try:
                setattr(args, name, [float(x) for x in v.split(",")])
            except ValueError:
                raise ConfigError(f"--{name.replace('_', '-')}: expected comma-separated numbers") from None


def run(argv=None) -> int:
    """Parse ``argv`` and dispatch; returns the exit code."""
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise ConfigError("a subcommand is required")
        _normalize_flags(args)
        if args.config:
            cfg, text = load_config(args.config)
        else:
            cfg, text = {}, ""
        cfg = merge_flags(cfg, args)
        return args.func(args, cfg, text)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DomainError, SingularityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (BracketError, ConstraintError, ContinuationError, FitError, LiftAmbiguityError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    except AnisoKeplerError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
