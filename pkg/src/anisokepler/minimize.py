"""Fixed-time, free-time and winding-constrained minimization of the action.

The unknowns are the interior nodes of a piecewise-linear path.  The main
solver is a damped Newton iteration on the exact discrete action, whose
Hessian is block tridiagonal; L-BFGS is available as an alternative.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, cholesky_banded, cho_solve_banded
from scipy.optimize import minimize as scipy_minimize
from scipy.optimize import minimize_scalar

from .errors import BracketError, ConstraintError, DomainError, LiftAmbiguityError
from .paths import (
    Path,
    action,
    action_derivatives,
    kinetic_energy_integral,
    potential_integral,
    winding_lift,
)
from .potential import PotentialParams, eval_U, grad_U, u_max


@dataclass(frozen=True)
class MinimizeOptions:
    """Solver settings shared by every minimization mode."""

    N: int = 128
    max_iters: int = 200
    grad_tol: float = 1e-8
    barrier_radius: float = 1e-3
    restarts: int = 0
    seed: int = 0
    method: str = "newton"
    energy_tol: float = 1e-4
    workers: int = 1
    perturbation: float = 0.2

    def __post_init__(self):
        if self.N < 8:
            raise DomainError("N must be at least 8")
        if not (self.grad_tol > 0 and self.barrier_radius > 0 and self.energy_tol > 0):
            raise DomainError("tolerances must be positive")
        if self.max_iters < 1 or self.restarts < 0 or self.workers < 1:
            raise DomainError("max_iters, restarts and workers must be non-negative counts")
        if self.method not in ("newton", "lbfgs"):
            raise DomainError(f"unknown method {self.method!r}")


@dataclass(frozen=True)
class MinimizeResult:
    path: Path
    value: float
    grad_norm: float
    energy_of_path: float
    el_residual: float
    min_radius: float
    collision_suspect: bool
    converged: bool = True
    iterations: int = 0
    seed_index: int = 0
    energy_spread: float = math.nan
    info: dict = field(default_factory=dict)

    @property
    def T(self) -> float:
        return self.path.duration


# --------------------------------------------------------------------------
# diagnostics


def mean_energy(params: PotentialParams, path: Path) -> float:
    """Time average of |v|^2/2 - U along the path."""
    return (kinetic_energy_integral(path) - potential_integral(params, path)) / path.duration


def segment_energies(params: PotentialParams, path: Path) -> np.ndarray:
    """Energy of each segment: its kinetic term minus U at the segment midpoint."""
    v = path.velocities()
    mid = 0.5 * (path.nodes[:-1] + path.nodes[1:])
    return 0.5 * np.sum(v * v, axis=1) - eval_U(params, mid)


def el_residual(params: PotentialParams, path: Path, grad=None) -> float:
    """Largest interior force imbalance relative to the local force scale."""
    if grad is None:
        grad = action_derivatives(params, path, hessian=False).grad
    dt = np.diff(path.times)
    dtbar = 0.5 * (dt[:-1] + dt[1:])
    v = path.velocities()
    acc = np.linalg.norm(v[1:] - v[:-1], axis=1) / dtbar
    force = np.linalg.norm(grad_U(params, path.nodes[1:-1]), axis=1)
    res = np.linalg.norm(grad[1:-1], axis=1) / (dtbar * (force + acc))
    return float(np.max(res)) if res.size else 0.0


def coercivity_holds(path: Path, p) -> bool:
    """Check max |xi| <= sqrt(T) ||xi'||_{L^2} + |p|, true for any H^1 path."""
    bound = math.sqrt(path.duration) * math.sqrt(2 * kinetic_energy_integral(path)) + float(
        np.linalg.norm(p)
    )
    return float(np.max(path.radii)) <= bound * (1 + 1e-12)


# --------------------------------------------------------------------------
# inner solver


def _to_band(diag, upper, d):
    m = diag.shape[0]
    n = m * d
    u = 2 * d - 1
    ab = np.zeros((u + 1, n))
    for p in range(d):
        for q in range(p, d):
            j = np.arange(m) * d + q
            ab[u + p - q, j] = diag[:, p, q]
    for p in range(d):
        for q in range(d):
            j = (np.arange(m - 1) + 1) * d + q
            ab[u - (d + q - p), j] = upper[:, p, q]
    return ab


def _barrier(x, rb):
    r = np.linalg.norm(x, axis=1)
    inside = r < rb
    if not np.any(inside):
        return 0.0
    return float(np.sum(np.log(r[inside] / rb) ** 2))


@dataclass
class _InnerOutcome:
    path: Path
    value: float
    grad: np.ndarray
    iterations: int
    converged: bool
    coercive: bool


def _newton(params, path0, opts, feasible=None):
    """Damped Newton on interior nodes with the ends held fixed."""
    d = path0.d
    path = path0
    D = action_derivatives(params, path)
    coercive = coercivity_holds(path, path.nodes[0])
    it = 0
    converged = False
    rb = opts.barrier_radius
    mu = 0.0
    while it < opts.max_iters:
        if not math.isfinite(D.value):
            break
        if el_residual(params, path, D.grad) <= opts.grad_tol:
            converged = True
            break
        g = D.grad[1:-1].ravel()
        ab0 = _to_band(D.diag[1:-1], D.upper[1:-1], d)
        scale = float(np.max(np.abs(ab0[-1])))
        mu = max(mu * 0.1, 0.0)
        while True:
            ab = ab0.copy()
            ab[-1] += mu
            try:
                c = cholesky_banded(ab, lower=False)
                step = -cho_solve_banded((c, False), g)
                break
            except LinAlgError:
                mu = max(mu * 10, 1e-10 * scale)
        merit0 = D.value + _barrier(path.nodes, rb)
        slope = float(g @ step)
        lam = 1.0
        accepted = False
        while lam > 1e-12:
            nodes = path.nodes.copy()
            nodes[1:-1] += lam * step.reshape(-1, d)
            if not np.all(np.linalg.norm(nodes, axis=1) > 0):
                lam *= 0.5
                continue
            trial = path.with_nodes(nodes)
            if feasible is None or feasible(trial):
                val = action(params, trial)
                if math.isfinite(val):
                    merit = val + _barrier(nodes, rb)
                    if merit <= merit0 + 1e-4 * lam * slope or (
                        abs(merit - merit0) <= 1e-14 * abs(merit0) and lam == 1.0
                    ):
                        accepted = True
                        break
            lam *= 0.5
        it += 1
        if not accepted:
            break
        path = trial
        D = action_derivatives(params, path)
        coercive = coercive and coercivity_holds(path, path.nodes[0])
    if not converged and math.isfinite(D.value):
        converged = el_residual(params, path, D.grad) <= opts.grad_tol
    return _InnerOutcome(path, D.value, D.grad, it, converged, coercive)


def _lbfgs(params, path0, opts, feasible=None):
    d = path0.d
    ends = path0.nodes

    def fun(z):
        nodes = ends.copy()
        nodes[1:-1] = z.reshape(-1, d)
        if not np.all(np.linalg.norm(nodes, axis=1) > 0):
            return 1e300, np.zeros_like(z)
        D = action_derivatives(params, path0.with_nodes(nodes), hessian=False)
        if not math.isfinite(D.value):
            return 1e300, np.zeros_like(z)
        return D.value, D.grad[1:-1].ravel()

    res = scipy_minimize(
        fun, ends[1:-1].ravel(), jac=True, method="L-BFGS-B",
        options={"maxiter": opts.max_iters * 20, "gtol": 1e-14, "ftol": 1e-16},
    )
    nodes = ends.copy()
    nodes[1:-1] = res.x.reshape(-1, d)
    path = path0.with_nodes(nodes)
    if feasible is not None and not feasible(path):
        path = path0
    D = action_derivatives(params, path, hessian=False)
    ok = el_residual(params, path, D.grad) <= opts.grad_tol
    return _InnerOutcome(path, D.value, D.grad, int(res.nit), ok, coercivity_holds(path, path.nodes[0]))


def _solve(params, path0, opts, feasible=None):
    if opts.method == "lbfgs":
        return _lbfgs(params, path0, opts, feasible)
    out = _newton(params, path0, opts, feasible)
    return out


def _result(params, out: _InnerOutcome, opts, seed_index=0, h=None, extra=None):
    path = out.path
    D = action_derivatives(params, path, hessian=False)
    value = D.value + (h * path.duration if h is not None else 0.0)
    en = mean_energy(params, path) if math.isfinite(D.value) else math.nan
    seg = segment_energies(params, path) if math.isfinite(D.value) else np.array([math.nan])
    rmin = path.min_radius()
    info = {"coercivity_ok": out.coercive}
    if extra:
        info.update(extra)
    return MinimizeResult(
        path=path,
        value=float(value),
        grad_norm=float(np.linalg.norm(D.grad[1:-1])) if math.isfinite(D.value) else math.inf,
        energy_of_path=float(en),
        el_residual=el_residual(params, path, D.grad) if math.isfinite(D.value) else math.inf,
        min_radius=rmin,
        collision_suspect=bool(rmin <= opts.barrier_radius),
        converged=out.converged,
        iterations=out.iterations,
        seed_index=seed_index,
        energy_spread=float(np.max(np.abs(seg - (h if h is not None else en)))),
        info=info,
    )


def _rank(res: MinimizeResult):
    return (res.collision_suspect, res.value, res.el_residual, res.seed_index)


def best_of(results):
    """Deterministic reduction: lowest value, then residual, then seed index.

    Collision-suspect results lose against any collision-free result.
    """
    return min(results, key=_rank)


def perturbed_seeds(path: Path, count: int, seed: int, scale: float):
    """``count`` smooth random perturbations of ``path`` with fixed ends."""
    out = []
    u = (path.times - path.times[0]) / path.duration
    size = scale * max(1.0, float(np.max(path.radii)))
    for k in range(1, count + 1):
        rng = np.random.default_rng([seed, k])
        bump = np.zeros_like(path.nodes)
        for mode in range(1, 4):
            bump += np.outer(np.sin(mode * math.pi * u), rng.normal(size=path.d)) / mode
        out.append(path.with_nodes(path.nodes + size * bump))
    return out


def _run_starts(params, seeds, opts, feasible=None, h=None):
    def job(args):
        idx, seed_path = args
        return _result(params, _solve(params, seed_path, opts, feasible), opts, idx, h)

    items = list(enumerate(seeds))
    if opts.workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            results = list(pool.map(job, items))
    else:
        results = [job(it) for it in items]
    return results


# --------------------------------------------------------------------------
# fixed time


def _avoid_origin(path: Path) -> Path:
    """Push a straight seed sideways if it runs through the origin."""
    scale = max(float(np.max(path.radii)), 1e-300)
    if path.min_radius() > 1e-3 * scale:
        return path
    p, q = path.nodes[0], path.nodes[-1]
    direction = q - p if np.linalg.norm(q - p) > 0 else p
    perp = np.zeros(path.d)
    perp[int(np.argmin(np.abs(direction)))] = 1.0
    perp -= perp @ direction / (direction @ direction) * direction
    perp /= np.linalg.norm(perp)
    u = (path.times - path.times[0]) / path.duration
    return path.with_nodes(path.nodes + 0.5 * scale * np.outer(np.sin(math.pi * u), perp))


def minimize_fixed_time(params, p, q, T, opts: MinimizeOptions = MinimizeOptions(), times=None, seed_path=None):
    """Minimize the action over paths from ``p`` to ``q`` on ``[0, T]``.

    The seed is the straight segment (or ``seed_path``); ``opts.restarts``
    additional seeds are smooth random perturbations of it.
    """
    p, q = np.asarray(p, float), np.asarray(q, float)
    if not T > 0:
        raise DomainError("T must be positive")
    if np.linalg.norm(p) == 0 and np.linalg.norm(q) == 0:
        raise DomainError("p and q cannot both be the origin")
    if seed_path is None:
        if times is None:
            times = np.linspace(0.0, T, opts.N + 1)
        u = (times - times[0]) / (times[-1] - times[0])
        seed_path = _avoid_origin(Path(times, (1 - u)[:, None] * p + u[:, None] * q))
    seeds = [seed_path] + perturbed_seeds(seed_path, opts.restarts, opts.seed, opts.perturbation)
    results = _run_starts(params, seeds, opts)
    best = best_of(results)
    straight = action(params, seeds[0])
    info = dict(best.info)
    info["seed_value"] = straight
    info["all_collision_suspect"] = all(r.collision_suspect for r in results)
    info["restart_values"] = [r.value for r in results]
    return replace(best, info=info)


# --------------------------------------------------------------------------
# free time


def graded_profile(N: int, center: float = 0.5, core: float = 0.05) -> np.ndarray:
    """Relative time grid on [0, 1], dense around ``center``.

    Nodes are uniform in w for t = center + core * sinh(w), so spacing grows
    linearly with the distance from ``center``.  A large ``core`` gives an
    almost uniform grid.
    """
    if not (0.0 <= center <= 1.0) or not core > 0:
        raise DomainError("profile needs center in [0, 1] and core > 0")
    w0 = math.asinh((0.0 - center) / core)
    w1 = math.asinh((1.0 - center) / core)
    w = np.linspace(w0, w1, N + 1)
    t = center + core * np.sinh(w)
    t[0], t[-1] = 0.0, 1.0
    return t


@dataclass
class _FreeTimeState:
    params: PotentialParams
    p: np.ndarray
    q: np.ndarray
    h: float
    profile: np.ndarray
    opts: MinimizeOptions
    feasible: Callable | None
    seeds: list
    cache: dict = field(default_factory=dict)
    warm: Path | None = None

    def solve(self, T) -> MinimizeResult:
        T = float(T)
        if T in self.cache:
            return self.cache[T]
        times = T * self.profile
        starts = []
        if self.warm is not None:
            starts.append(Path(times, self.warm.nodes))
        for s in self.seeds:
            starts.append(Path(times, s.nodes))
        if self.opts.restarts and self.warm is None:
            starts += perturbed_seeds(starts[0], self.opts.restarts, self.opts.seed, self.opts.perturbation)
        results = _run_starts(self.params, starts, self.opts, self.feasible, self.h)
        best = best_of(results)
        self.cache[T] = best
        if math.isfinite(best.value) and not best.collision_suspect:
            self.warm = best.path
        return best

    def f(self, T):
        return self.solve(T).value

    def fprime(self, T):
        return self.h - self.solve(T).energy_of_path


def _bracket(state: _FreeTimeState, T0, T_lo, T_hi, factor=1.6):
    samples = []

    def f(T):
        v = state.f(T)
        samples.append((T, v))
        return v

    a, b = T0, T0 * factor
    fa, fb = f(a), f(b)
    if fb > fa:
        a, b, fa, fb = b, a, fb, fa
    # now moving from a toward b decreases f
    ratio = b / a
    c = b * ratio
    while True:
        if c < T_lo or c > T_hi:
            raise BracketError(
                f"no minimum of f(T) in [{T_lo:.6g}, {T_hi:.6g}]", sorted(samples)
            )
        fc = f(c)
        if fc > fb:
            trio = sorted([a, b, c])
            return trio, samples
        a, fa, b, fb = b, fb, c, fc
        c = b * ratio


def free_time_minimize(
    params,
    p,
    q,
    h,
    opts: MinimizeOptions = MinimizeOptions(),
    profile=None,
    seed_path=None,
    T0=None,
    T_range=None,
    feasible=None,
    extra_seeds=(),
):
    """Minimize A + h T over paths from ``p`` to ``q`` and over the duration T.

    f(T) = min A_h(.; 0, T) is bracketed geometrically and minimized by
    golden-section search; the optimum is then polished with secant steps
    on f'(T) = h - E(T), where E is the time-averaged energy of the inner
    minimizer.  Node times are ``T * profile``.
    """
    p, q = np.asarray(p, float), np.asarray(q, float)
    if not h > 0:
        raise DomainError("h must be positive")
    if np.allclose(p, q, rtol=0, atol=0):
        raise DomainError("p and q must differ")
    if profile is None:
        profile = np.linspace(0.0, 1.0, opts.N + 1)
    profile = np.asarray(profile, float)
    if T0 is None:
        if seed_path is not None:
            T0 = seed_path.duration
        else:
            mid = 0.5 * (p + q)
            umid = eval_U(params, mid) if np.linalg.norm(mid) > 0 else u_max(params)
            T0 = float(np.linalg.norm(q - p)) / math.sqrt(2 * (h + umid))
    T_lo, T_hi = T_range if T_range is not None else (T0 * 1e-3, T0 * 1e3)
    seeds = []
    if seed_path is not None:
        seeds.append(seed_path)
    else:
        seeds.append(_avoid_origin(Path(profile, (1 - profile)[:, None] * p + profile[:, None] * q)))
    seeds += list(extra_seeds)
    state = _FreeTimeState(params, p, q, h, profile, opts, feasible, seeds)
    trio, samples = _bracket(state, T0, T_lo, T_hi)
    gs = minimize_scalar(
        lambda lt: state.f(math.exp(lt)),
        bracket=tuple(math.log(t) for t in trio),
        method="golden",
        options={"xtol": 1e-4},
    )
    T_best = math.exp(gs.x)
    T_best = _secant_polish(state, T_best, trio, opts.energy_tol)
    best = state.solve(T_best)
    info = dict(best.info)
    info["bracket_samples"] = sorted(samples)
    info["T"] = T_best
    info["f_evaluations"] = len(state.cache)
    return replace(best, info=info)


def _secant_polish(state, T, trio, energy_tol, max_steps=30):
    """Drive f'(T) = h - E(T) to zero, staying inside the golden-section bracket."""
    lo, hi = trio[0], trio[-1]
    T_prev = T * (1 + 1e-3)
    d_prev = state.fprime(T_prev)
    d = state.fprime(T)
    for _ in range(max_steps):
        if abs(d) <= 0.01 * energy_tol:
            break
        if d == d_prev:
            break
        T_new = T - d * (T - T_prev) / (d - d_prev)
        if not (lo < T_new < hi):
            T_new = 0.5 * (T + (lo if d > 0 else hi))
        if d > 0:
            hi = min(hi, T)
        else:
            lo = max(lo, T)
        T_prev, d_prev = T, d
        T = T_new
        d = state.fprime(T)
    return T


# --------------------------------------------------------------------------
# winding constraint


def lift_checker(delta: float, tol: float = 1e-9):
    """Feasibility predicate: the lifted turning of a planar path equals ``delta``."""

    def feasible(path: Path) -> bool:
        try:
            cls = winding_lift(path)
        except LiftAmbiguityError:
            return False
        return abs(cls.delta - delta) <= tol

    return feasible


def spiral_seed(r1, theta_minus, r2, theta_plus, profile) -> Path:
    """Logarithmic spiral joining the endpoints through the prescribed turning."""
    u = np.asarray(profile, float)
    r = r1 ** (1 - u) * r2**u
    th = theta_minus + u * (theta_plus - theta_minus)
    return Path(u, np.stack([r * np.cos(th), r * np.sin(th)], axis=1))


def dip_seed(r1, theta_minus, r2, theta_plus, h, rho, profile, center=0.5, T=None) -> Path:
    """Hyperbola-like seed: radius dips to ``rho`` while the angle turns."""
    u = np.asarray(profile, float)
    v = math.sqrt(2 * h)
    if T is None:
        T = (math.sqrt(max(r1**2 - rho**2, 0.0)) + math.sqrt(max(r2**2 - rho**2, 0.0))) / v
    t = T * u
    tc = center * T
    r = np.sqrt(rho**2 + (v * (t - tc)) ** 2)
    r = r * np.where(t < tc, r1 / r[0], r2 / r[-1]) ** np.clip(np.abs(t - tc) / max(tc, T - tc), 0, 1)
    c = rho / v
    phi = np.arctan((t - tc) / c)
    phi = (phi - phi[0]) / (phi[-1] - phi[0])
    th = theta_minus + phi * (theta_plus - theta_minus)
    return Path(t, np.stack([r * np.cos(th), r * np.sin(th)], axis=1))


def minimize_constrained(
    params,
    r1,
    theta_minus,
    r2,
    theta_plus,
    h,
    opts: MinimizeOptions = MinimizeOptions(),
    seed_path=None,
    rho_guess=None,
):
    """Free-time minimization among planar paths with the given lifted angles.

    Trial iterates whose winding breaks are rejected in the line search.
    The time grid is graded around the time of closest approach of the seed.
    """
    if params.d != 2:
        raise DomainError("constrained minimization is planar")
    if not h > 0:
        raise DomainError("h must be positive")
    p = r1 * np.array([math.cos(theta_minus), math.sin(theta_minus)])
    q = r2 * np.array([math.cos(theta_plus), math.sin(theta_plus)])
    if np.allclose(p, q) and abs(theta_plus - theta_minus) < 1e-12:
        raise DomainError("endpoints must differ")
    delta = theta_plus - theta_minus
    feasible = lift_checker(delta)
    v = math.sqrt(2 * h)
    if rho_guess is None:
        rho_guess = max(1.0, 0.05 * min(r1, r2)) if abs(delta) > math.pi / 2 else 0.5 * min(r1, r2)
    rho_guess = min(rho_guess, 0.9 * min(r1, r2))
    seeds = []
    if seed_path is not None:
        seeds.append(seed_path)
    lead = math.sqrt(max(r1**2 - rho_guess**2, 0.0)) / v
    tail = math.sqrt(max(r2**2 - rho_guess**2, 0.0)) / v
    center = lead / (lead + tail)
    core = max(rho_guess / v / (lead + tail), 1e-4)
    profile = graded_profile(opts.N, center, core)
    if seed_path is not None:
        profile = (seed_path.times - seed_path.times[0]) / seed_path.duration
    dip = dip_seed(r1, theta_minus, r2, theta_plus, h, rho_guess, profile, center)
    spiral = spiral_seed(r1, theta_minus, r2, theta_plus, profile)
    for s in (dip, spiral):
        if feasible(s):
            seeds.append(s)
    if not seeds:
        raise ConstraintError("no seed path realizes the requested winding; increase N")
    T0 = seeds[0].duration if seed_path is not None else dip.duration
    results = []
    for k, s in enumerate(seeds):
        try:
            res = free_time_minimize(
                params, p, q, h, opts, profile=profile,
                seed_path=Path(profile * T0, s.nodes), T0=T0, feasible=feasible,
            )
        except BracketError:
            continue
        results.append(replace(res, seed_index=k))
    if not results:
        raise ConstraintError("constrained minimization failed for every seed")
    best = best_of(results)
    if not feasible(best.path):
        raise ConstraintError("winding constraint lost at the optimum")
    info = dict(best.info)
    info["lift"] = winding_lift(best.path).delta
    info["seed_values"] = [r.value for r in results]
    return replace(best, info=info)


# --------------------------------------------------------------------------
# explicit upper bounds for the action potential


def phi_h_bound(params, kind: str, h: float, **args) -> float:
    """Closed-form upper bounds on the action potential from explicit test paths.

    kind ``"radial"``: ``r1 < r2`` on a common ray;
    kind ``"sphere_arc"``: radius ``r`` and turning angle ``dtheta``;
    kind ``"from_origin"``: from the origin to the unit sphere.
    ``U_max`` may be passed to override the maximum of U on the sphere.
    """
    if not h > 0:
        raise DomainError("h must be positive")
    a = params.alpha
    um = args.get("U_max", u_max(params))
    v = math.sqrt(2 * h)
    if kind == "radial":
        r1, r2 = float(args["r1"]), float(args["r2"])
        if not (0 < r1 < r2):
            raise DomainError("radial bound needs 0 < r1 < r2")
        if a == 1.0:
            tail = math.log(r2 / r1)
        else:
            tail = (r2 ** (1 - a) - r1 ** (1 - a)) / (1 - a)
        return v * (r2 - r1) + um / v * tail
    if kind == "sphere_arc":
        r, dth = float(args["r"]), abs(float(args["dtheta"]))
        if not r > 0:
            raise DomainError("radius must be positive")
        return r * dth * math.sqrt(2 * (h + um * r ** (-a)))
    if kind == "from_origin":
        k = 2 / (2 + a)
        # xi(t) = t^k s on [0, 1]: kinetic k^2/(2(2k-1)), potential 1/(1-a k), plus h
        kin = k**2 / (2 * (2 * k - 1))
        pot = um / (1 - a * k)
        return kin + pot + h
    raise DomainError(f"unknown bound kind {kind!r}")
