"""Integration of x'' = grad U(x), polar form, monitors and collision fits."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .errors import DomainError, FitError, SingularityError
from .potential import (
    PotentialParams,
    critical_structure,
    eval_U,
    grad_U,
    sphere_grad,
)

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
DEFAULT_R_MIN = 1e-6


@dataclass(frozen=True)
class State:
    t: float
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "x", np.array(self.x, dtype=float))
        object.__setattr__(self, "v", np.array(self.v, dtype=float))

    def reversed(self) -> "State":
        """Same configuration with velocity flipped and time negated."""
        return State(-self.t, self.x, -self.v)


@dataclass(frozen=True)
class PolarState:
    r: float
    s: np.ndarray
    rdot: float
    sdot: np.ndarray

    @property
    def theta(self) -> float:
        if self.s.size != 2:
            raise DomainError("theta defined only for d = 2")
        return math.atan2(self.s[1], self.s[0])

    @property
    def thetadot(self) -> float:
        if self.s.size != 2:
            raise DomainError("theta defined only for d = 2")
        return float(self.s[0] * self.sdot[1] - self.s[1] * self.sdot[0])

    def to_cartesian(self, t=0.0) -> State:
        return State(t, self.r * self.s, self.rdot * self.s + self.r * self.sdot)


def to_polar(state: State) -> PolarState:
    r = float(np.linalg.norm(state.x))
    if r == 0.0:
        raise SingularityError("polar coordinates undefined at the origin")
    s = state.x / r
    rdot = float(state.v @ s)
    sdot = (state.v - rdot * s) / r
    return PolarState(r, s, rdot, sdot)


def energy(params: PotentialParams, state: State) -> float:
    return 0.5 * float(state.v @ state.v) - eval_U(params, state.x)


def polar_rhs(params: PotentialParams, ps: PolarState):
    """Return (r'', s'') from the polar equations of motion."""
    if not ps.r > 0.0:
        raise DomainError("polar state needs r > 0")
    a = params.alpha
    g = grad_U(params, ps.s)
    radial = float(g @ ps.s)
    tang = sphere_grad(params, ps.s)
    sd2 = float(ps.sdot @ ps.sdot)
    rdd = ps.r * sd2 + ps.r ** (-(a + 1)) * radial
    sdd = (ps.r ** (-(a + 1)) * tang - 2 * ps.rdot * ps.sdot - ps.r * sd2 * ps.s) / ps.r
    return rdd, sdd


@dataclass(frozen=True)
class Trajectory:
    """Samples of a solution on an increasing time grid.

    ``cause`` is one of ``"horizon"``, ``"collision"`` or ``"error"``.
    ``dense`` maps time to the stacked state ``(x, v)`` when available.
    """

    params: PotentialParams
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    cause: str
    dense: object = None
    message: str = ""

    @property
    def r(self) -> np.ndarray:
        return np.linalg.norm(self.x, axis=1)

    def energies(self) -> np.ndarray:
        return 0.5 * np.sum(self.v**2, axis=1) - eval_U(self.params, self.x)

    def energy_drift(self) -> float:
        h = self.energies()
        return float(np.max(np.abs(h - h[0])))

    def state(self, i=-1) -> State:
        return State(self.t[i], self.x[i], self.v[i])

    def sample(self, t):
        """Dense-output positions and velocities at times ``t``."""
        if self.dense is None:
            raise DomainError("trajectory has no dense output")
        y = np.atleast_2d(self.dense(np.asarray(t, float)).T)
        d = self.x.shape[1]
        return y[:, :d], y[:, d : 2 * d]


def _cartesian_rhs(params):
    d = params.d

    def rhs(t, y):
        return np.concatenate([y[d:], grad_U(params, y[:d])])

    return rhs


def _polar_flat_rhs(params):
    d = params.d

    def rhs(t, y):
        r, s, rdot, sdot = y[0], y[1 : 1 + d], y[1 + d], y[2 + d :]
        rdd, sdd = polar_rhs(params, PolarState(r, s / np.linalg.norm(s), rdot, sdot))
        return np.concatenate([[rdot], sdot, [rdd], sdd])

    return rhs


def integrate(
    params: PotentialParams,
    state0: State,
    horizon: float,
    tol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    r_min: float = DEFAULT_R_MIN,
    form: str = "cartesian",
    t_eval=None,
    stop_radius: float | None = None,
) -> Trajectory:
    """Integrate forward in time over ``[t0, t0 + horizon]``.

    The run stops early at a collision, detected when the radius falls below
    ``r_min`` while decreasing, or when ``stop_radius`` is exceeded.  Step-size
    underflow near the origin is reported as a collision, not raised.
    ``form="polar"`` integrates the (r, s) system instead of Cartesian.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    if np.linalg.norm(state0.x) == 0.0:
        raise SingularityError("initial position at the origin")
    d = params.d
    t0 = state0.t
    events = []
    if form == "cartesian":
        rhs = _cartesian_rhs(params)
        y0 = np.concatenate([state0.x, state0.v])

        def radius(t, y):
            return np.linalg.norm(y[:d])

    elif form == "polar":
        rhs = _polar_flat_rhs(params)
        ps = to_polar(state0)
        y0 = np.concatenate([[ps.r], ps.s, [ps.rdot], ps.sdot])

        def radius(t, y):
            return y[0]

    else:
        raise DomainError(f"unknown form {form!r}")

    def collide(t, y):
        return radius(t, y) - r_min

    collide.terminal = True
    collide.direction = -1
    events.append(collide)
    if stop_radius is not None:

        def escape(t, y):
            return radius(t, y) - stop_radius

        escape.terminal = True
        escape.direction = 1
        events.append(escape)

    sol = solve_ivp(
        rhs,
        (t0, t0 + horizon),
        y0,
        method="DOP853",
        rtol=tol,
        atol=atol,
        events=events,
        dense_output=True,
        t_eval=t_eval,
    )
    if sol.status == 1:
        cause = "collision" if sol.t_events[0].size else "horizon"
    elif sol.status == 0:
        cause = "horizon"
    else:
        r_last = radius(sol.t[-1], sol.y[:, -1])
        cause = "collision" if r_last < 1e-3 else "error"
    y = sol.y
    if form == "cartesian":
        x, v = y[:d].T, y[d:].T
    else:
        r, s, rdot, sdot = y[0], y[1 : 1 + d], y[1 + d], y[2 + d :]
        s = s / np.linalg.norm(s, axis=0)
        x = (r * s).T
        v = (rdot * s + r * sdot).T
    dense = sol.sol if form == "cartesian" else None
    return Trajectory(params, sol.t.copy(), x.copy(), v.copy(), cause, dense, sol.message)


def integrate_regularized(
    params: PotentialParams,
    state0: State,
    tau_max: float = 200.0,
    tol: float = 1e-12,
    atol: float = 1e-14,
    r_min: float = 1e-9,
    n_samples: int = 4000,
) -> Trajectory:
    """Integrate toward a collision with the time change dt = r^((2+alpha)/2) dtau.

    Samples are returned uniformly in the fictitious time tau, which places
    many of them close to the singularity.
    """
    d = params.d
    k = (2 + params.alpha) / 2

    def rhs(tau, y):
        x, v = y[:d], y[d : 2 * d]
        f = np.linalg.norm(x) ** k
        return np.concatenate([f * v, f * grad_U(params, x), [f]])

    def collide(tau, y):
        return np.linalg.norm(y[:d]) - r_min

    collide.terminal = True
    collide.direction = -1
    y0 = np.concatenate([state0.x, state0.v, [state0.t]])
    sol = solve_ivp(
        rhs, (0.0, tau_max), y0, method="DOP853", rtol=tol, atol=atol,
        events=[collide], dense_output=True,
    )
    tau_end = sol.t[-1]
    taus = np.linspace(0.0, tau_end, n_samples)
    y = sol.sol(taus)
    cause = "collision" if (sol.status == 1 and sol.t_events[0].size) else (
        "horizon" if sol.status == 0 else "error"
    )
    if cause == "error" and np.linalg.norm(y[:d, -1]) < 1e-3:
        cause = "collision"
    return Trajectory(params, y[2 * d].copy(), y[:d].T.copy(), y[d : 2 * d].T.copy(), cause, None, sol.message)


@dataclass(frozen=True)
class MonitorSeries:
    t: np.ndarray
    I: np.ndarray
    Idot: np.ndarray
    Iddot: np.ndarray
    Gamma: np.ndarray
    Gammadot: np.ndarray
    h: np.ndarray


def monitors(params: PotentialParams, traj: Trajectory) -> MonitorSeries:
    """I = r^2, its derivatives, Gamma = r^alpha (2h - r'^2)/2 and Gamma'."""
    a = params.alpha
    x, v = traj.x, traj.v
    r = np.linalg.norm(x, axis=1)
    if np.any(r == 0.0):
        raise SingularityError("monitor evaluation at a collision sample")
    U = eval_U(params, x)
    h = 0.5 * np.sum(v**2, axis=1) - U
    s = x / r[:, None]
    rdot = np.sum(v * s, axis=1)
    sdot = (v - rdot[:, None] * s) / r[:, None]
    sd2 = np.sum(sdot**2, axis=1)
    I = r**2
    Idot = 2 * np.sum(x * v, axis=1)
    Iddot = 4 * h + 2 * (2 - a) * U
    Gamma = 0.5 * r**a * (2 * h - rdot**2)
    Gammadot = -(2 - a) / 2 * r ** (a + 1) * rdot * sd2
    return MonitorSeries(traj.t.copy(), I, Idot, Iddot, Gamma, Gammadot, h)


@dataclass(frozen=True)
class CollisionAsymptotics:
    t0: float
    kappa: float
    beta: float
    limit_direction: np.ndarray
    direction_error: float
    fit_exponent: float
    consistency: float  # relative mismatch of beta against kappa
    n_samples: int


def _loglog_fit(tt, rr, t0, alpha):
    # log r = p log(t0 - t) + c + q1 u + q2 u^2 with u = (t0 - t)^(2 alpha / (2 + alpha));
    # the u terms absorb the energy corrections, of relative size r^alpha
    lt = np.log(t0 - tt)
    lr = np.log(rr)
    u = np.exp(lt * (2 * alpha / (2 + alpha)))
    A = np.stack([lt, np.ones_like(lt), u, u * u], axis=1)
    scale = np.max(np.abs(A), axis=0)
    coef, res, *_ = np.linalg.lstsq(A / scale, lr, rcond=None)
    coef = coef / scale
    resid = lr - A @ coef
    return coef[:2], float(resid @ resid)


def fit_collision(params: PotentialParams, traj: Trajectory, r_fit: float = 0.1, min_samples: int = 50):
    """Fit r ~ (kappa |t - t0|)^p on the collision tail of ``traj``.

    The collision time t0 is refined by golden-section search on the
    log-log least-squares residual.
    """
    if traj.cause != "collision":
        raise FitError("trajectory did not end in a collision")
    r = traj.r
    # samples whose time gap to the end is below rounding carry no information
    resolvable = (traj.t[-1] - traj.t) > 1e-9 * max(1.0, abs(traj.t[-1]))
    mask = (r < r_fit) & (r > 0) & resolvable
    if int(mask.sum()) < min_samples:
        raise FitError(f"only {int(mask.sum())} samples with r < {r_fit}")
    tt, rr = traj.t[mask], r[mask]
    t_last = traj.t[-1]
    span = t_last - tt[0]
    lo = math.log(max(abs(t_last) * 1e-15, 1e-300))
    hi = math.log(span)

    def objective(logdelta):
        return _loglog_fit(tt, rr, t_last + math.exp(logdelta), params.alpha)[1]

    grid = np.linspace(lo, hi, 121)
    vals = np.array([objective(u) for u in grid])
    i = int(np.clip(np.argmin(vals), 1, grid.size - 2))
    g = minimize_scalar(objective, bracket=(grid[i - 1], grid[i], grid[i + 1]), method="golden",
                        options={"xtol": 1e-10}) if vals[i] <= min(vals[i - 1], vals[i + 1]) else None
    x_best = g.x if g is not None else grid[int(np.argmin(vals))]
    t0 = t_last + math.exp(x_best)
    coef, _ = _loglog_fit(tt, rr, t0, params.alpha)
    p, c = coef
    kappa = math.exp(c / p)
    s_last = traj.x[-1] / np.linalg.norm(traj.x[-1])
    beta = eval_U(params, s_last)
    pred = 0.5 * (2 * kappa / (2 + params.alpha)) ** 2
    cs = critical_structure(params)
    dist, point = _nearest_critical(params, cs, s_last)
    return CollisionAsymptotics(
        t0=float(t0),
        kappa=kappa,
        beta=beta,
        limit_direction=point,
        direction_error=dist,
        fit_exponent=float(p),
        consistency=abs(beta - pred) / beta,
        n_samples=int(tt.size),
    )


def _nearest_critical(params, cs, s):
    if cs.degenerate:
        return 0.0, s
    return cs.distance(s)
