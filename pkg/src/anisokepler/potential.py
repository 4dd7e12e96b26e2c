"""Homogeneous potentials U(x) = |x|^-alpha U(x/|x|) and their structure.

Two forms are supported:

* Gutzwiller form ``U(x) = <x, M x>^(-alpha/2)`` with ``M = diag(weights)``,
  in any dimension ``d >= 2``.
* General planar form ``U(x) = r^-alpha g(theta)`` where ``g`` is a positive,
  2*pi-periodic C^2 function supplied as a callback or as a sampled table.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import DomainError, SingularityError

CRITICAL_TOL = 1e-9
UNIT_TOL = 1e-9
_SCAN_POINTS = 4096

SphereCallback = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class SphereFunction:
    """Angle function g(theta) on the unit circle with two derivatives.

    ``fn(theta)`` must return ``(g, g', g'')`` evaluated elementwise.
    """

    fn: SphereCallback
    label: str = "callback"

    def __call__(self, theta):
        g, dg, ddg = self.fn(np.asarray(theta, dtype=float))
        return np.asarray(g, float), np.asarray(dg, float), np.asarray(ddg, float)

    @classmethod
    def from_table(cls, theta, values, label="table") -> "SphereFunction":
        """Periodic cubic interpolant through samples ``(theta_i, g_i)``.

        The samples must cover one period; a duplicated endpoint at
        ``theta_0 + 2*pi`` is accepted and otherwise appended.
        """
        theta = np.asarray(theta, dtype=float)
        values = np.asarray(values, dtype=float)
        if theta.ndim != 1 or theta.shape != values.shape or theta.size < 4:
            raise DomainError("sphere table needs at least 4 (theta, value) rows")
        order = np.argsort(theta)
        theta, values = theta[order], values[order]
        if np.any(np.diff(theta) <= 0):
            raise DomainError("sphere table angles must be distinct")
        span = theta[-1] - theta[0]
        if abs(span - 2 * np.pi) < 1e-12:
            values = values.copy()
            values[-1] = values[0]
        elif span < 2 * np.pi:
            theta = np.append(theta, theta[0] + 2 * np.pi)
            values = np.append(values, values[0])
        else:
            raise DomainError("sphere table must span less than one period")
        spline = CubicSpline(theta, values, bc_type="periodic")
        t0 = theta[0]

        def fn(th):
            w = t0 + np.mod(th - t0, 2 * np.pi)
            return spline(w), spline(w, 1), spline(w, 2)

        return cls(fn=fn, label=label)

    @classmethod
    def from_file(cls, path) -> "SphereFunction":
        data = np.loadtxt(path, delimiter=None, comments="#", ndmin=2)
        if data.shape[1] != 2:
            # tolerate comma separated files
            data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        if data.shape[1] != 2:
            raise DomainError(f"{path}: expected two columns theta, value")
        return cls.from_table(data[:, 0], data[:, 1], label=str(path))


@dataclass(frozen=True)
class PotentialParams:
    """Exponent plus either diagonal weights or a planar angle function."""

    alpha: float
    weights: tuple[float, ...] | None = None
    sphere: SphereFunction | None = None
    d: int = field(init=False)

    def __post_init__(self):
        alpha = float(self.alpha)
        if not (0.0 < alpha < 2.0):
            raise DomainError(f"alpha must lie in (0, 2), got {alpha}")
        object.__setattr__(self, "alpha", alpha)
        if (self.weights is None) == (self.sphere is None):
            raise DomainError("give exactly one of weights or sphere")
        if self.weights is not None:
            w = tuple(float(m) for m in self.weights)
            if len(w) < 2:
                raise DomainError("dimension must be at least 2")
            if any(not (m > 0.0) or not math.isfinite(m) for m in w):
                raise DomainError(f"weights must be positive, got {w}")
            object.__setattr__(self, "weights", w)
            object.__setattr__(self, "d", len(w))
        else:
            object.__setattr__(self, "d", 2)
            th = np.linspace(0.0, 2 * np.pi, _SCAN_POINTS, endpoint=False)
            g = self.sphere(th)[0]
            if not np.all(np.isfinite(g)) or np.min(g) <= 0.0:
                raise DomainError("sphere function must be positive on the circle")

    @classmethod
    def gutzwiller(cls, weights, alpha) -> "PotentialParams":
        return cls(alpha=alpha, weights=tuple(weights))

    @classmethod
    def planar(cls, sphere, alpha) -> "PotentialParams":
        if callable(sphere) and not isinstance(sphere, SphereFunction):
            sphere = SphereFunction(sphere)
        return cls(alpha=alpha, sphere=sphere)

    @property
    def is_gutzwiller(self) -> bool:
        return self.weights is not None

    @property
    def M(self) -> np.ndarray:
        if self.weights is None:
            raise DomainError("general-form potential has no weight matrix")
        return np.diag(self.weights)


def _as_points(params, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.d:
        raise DomainError(f"expected last axis of length {params.d}, got {x.shape}")
    return x


def _check_nonzero(r):
    if np.any(r == 0.0):
        raise SingularityError("potential evaluated at the origin")


def sphere_values(params: PotentialParams, theta):
    """Return (g, g', g'') of the planar angle function g(theta) = U(e^{i theta})."""
    if params.d != 2:
        raise DomainError("angle representation exists only for d = 2")
    theta = np.asarray(theta, dtype=float)
    if params.sphere is not None:
        return params.sphere(theta)
    m1, m2 = params.weights
    a = params.alpha
    q = m1 + (m2 - m1) * np.sin(theta) ** 2
    dq = (m2 - m1) * np.sin(2 * theta)
    ddq = 2 * (m2 - m1) * np.cos(2 * theta)
    g = q ** (-a / 2)
    dg = -a / 2 * q ** (-a / 2 - 1) * dq
    ddg = -a / 2 * ((-a / 2 - 1) * q ** (-a / 2 - 2) * dq**2 + q ** (-a / 2 - 1) * ddq)
    return g, dg, ddg


def _polar(x):
    r = np.hypot(x[..., 0], x[..., 1])
    theta = np.arctan2(x[..., 1], x[..., 0])
    return r, theta


def eval_U(params: PotentialParams, x):
    """Potential value; ``x`` may carry leading batch axes."""
    x = _as_points(params, x)
    if params.weights is not None:
        q = np.einsum("...i,i,...i->...", x, np.asarray(params.weights), x)
        _check_nonzero(q)
        out = q ** (-params.alpha / 2)
    else:
        r, theta = _polar(x)
        _check_nonzero(r)
        out = r ** (-params.alpha) * sphere_values(params, theta)[0]
    return float(out) if np.ndim(out) == 0 else out


def grad_U(params: PotentialParams, x):
    """Gradient of U, shape matching ``x``."""
    x = _as_points(params, x)
    a = params.alpha
    if params.weights is not None:
        w = np.asarray(params.weights)
        q = np.einsum("...i,i,...i->...", x, w, x)
        _check_nonzero(q)
        return -a * (q ** (-a / 2 - 1))[..., None] * (w * x)
    r, theta = _polar(x)
    _check_nonzero(r)
    g, dg, _ = sphere_values(params, theta)
    c, s = np.cos(theta), np.sin(theta)
    radial = np.stack([c, s], axis=-1)
    tangent = np.stack([-s, c], axis=-1)
    pre = r ** (-a - 1)
    return pre[..., None] * ((-a * g)[..., None] * radial + dg[..., None] * tangent)


def hess_U(params: PotentialParams, x):
    """Hessian of U, shape ``x.shape + (d,)``."""
    x = _as_points(params, x)
    a = params.alpha
    if params.weights is not None:
        w = np.asarray(params.weights)
        q = np.einsum("...i,i,...i->...", x, w, x)
        _check_nonzero(q)
        mx = w * x
        out = a * (a + 2) * (q ** (-a / 2 - 2))[..., None, None] * (
            mx[..., :, None] * mx[..., None, :]
        )
        out = out - a * (q ** (-a / 2 - 1))[..., None, None] * np.diag(w)
        return out
    r, theta = _polar(x)
    _check_nonzero(r)
    g, dg, ddg = sphere_values(params, theta)
    c, s = np.cos(theta), np.sin(theta)
    e_r = np.stack([c, s], axis=-1)
    e_t = np.stack([-s, c], axis=-1)
    rr = e_r[..., :, None] * e_r[..., None, :]
    tt = e_t[..., :, None] * e_t[..., None, :]
    rt = e_r[..., :, None] * e_t[..., None, :]
    rt = rt + np.swapaxes(rt, -1, -2)
    pre = (r ** (-a - 2))[..., None, None]
    return pre * (
        (a * (a + 1) * g)[..., None, None] * rr
        - ((a + 1) * dg)[..., None, None] * rt
        + (ddg - a * g)[..., None, None] * tt
    )


def sphere_grad(params: PotentialParams, s):
    """Tangential gradient of U on the unit sphere at ``s``."""
    s = _as_points(params, s)
    norm = np.linalg.norm(s, axis=-1)
    if np.any(np.abs(norm - 1.0) > UNIT_TOL):
        raise DomainError("sphere_grad needs unit vectors")
    g = grad_U(params, s)
    return g - np.sum(g * s, axis=-1)[..., None] * s


def u_max(params: PotentialParams) -> float:
    """Maximum of U on the unit sphere."""
    if params.weights is not None:
        return min(params.weights) ** (-params.alpha / 2)
    th = np.linspace(0.0, 2 * np.pi, _SCAN_POINTS, endpoint=False)
    g, dg, _ = sphere_values(params, th)
    best = float(np.max(g))
    for t in _refine_roots(params, th, dg):
        best = max(best, float(sphere_values(params, t)[0]))
    return best


def u_min(params: PotentialParams) -> float:
    if params.weights is not None:
        return max(params.weights) ** (-params.alpha / 2)
    th = np.linspace(0.0, 2 * np.pi, _SCAN_POINTS, endpoint=False)
    g, dg, _ = sphere_values(params, th)
    best = float(np.min(g))
    for t in _refine_roots(params, th, dg):
        best = min(best, float(sphere_values(params, t)[0]))
    return best


def _refine_roots(params, th, dg):
    """Zeros of g' located by sign changes on a periodic grid."""
    roots = []
    n = th.size
    for i in range(n):
        j = (i + 1) % n
        a, b = th[i], th[i] + (th[1] - th[0])
        fa, fb = dg[i], dg[j]
        if fa == 0.0:
            roots.append(a)
        elif fa * fb < 0.0:
            roots.append(brentq(lambda t: sphere_values(params, t)[1], a, b, xtol=1e-15))
    return [float(np.mod(t, 2 * np.pi)) for t in roots]


@dataclass(frozen=True)
class CriticalStructure:
    """Critical set of U restricted to the unit sphere.

    ``groups`` lists 0-based coordinate indices with equal weight, in
    increasing order of weight.  For d = 2, ``min_set`` holds the minimizing
    angles of g in [0, 2*pi) and ``second_derivative`` the value of g'' at each.
    """

    groups: tuple[tuple[int, ...], ...]
    isolated_points: tuple[tuple[float, ...], ...]
    critical_angles: tuple[float, ...] = ()
    min_set: tuple[float, ...] = ()
    second_derivative: tuple[float, ...] = ()
    nondegenerate: tuple[bool, ...] = ()
    degenerate: bool = False
    note: str = ""

    def components(self, d):
        """Bases of the linear subspaces whose unit spheres form Cr(U)."""
        if self.groups:
            return [np.eye(d)[list(g)] for g in self.groups]
        return [np.array([[math.cos(t), math.sin(t)]]) for t in self.critical_angles]

    def distance(self, s) -> tuple[float, np.ndarray]:
        """Distance from unit vector ``s`` to the critical set, and the nearest point."""
        s = np.asarray(s, dtype=float)
        best, point = math.inf, None
        for basis in self.components(s.size):
            proj = basis.T @ (basis @ s)
            n = np.linalg.norm(proj)
            if basis.shape[0] == 1:
                cand = [basis[0], -basis[0]]
            elif n == 0.0:
                cand = [basis[0]]
            else:
                cand = [proj / n]
            for c in cand:
                dist = float(np.linalg.norm(s - c))
                if dist < best:
                    best, point = dist, c
        return best, point


def critical_structure(params: PotentialParams) -> CriticalStructure:
    """Partition into equal-weight groups plus, for d = 2, the minimizing angles."""
    if params.weights is not None:
        w = params.weights
        levels = sorted(set(w))
        groups = tuple(tuple(i for i, m in enumerate(w) if m == lev) for lev in levels)
        isolated = []
        for g in groups:
            if len(g) == 1:
                e = [0.0] * params.d
                e[g[0]] = 1.0
                isolated.append(tuple(e))
                e = [0.0] * params.d
                e[g[0]] = -1.0
                isolated.append(tuple(e))
        if params.d != 2:
            return CriticalStructure(groups=groups, isolated_points=tuple(isolated))
        if len(groups) == 1:
            return CriticalStructure(
                groups=groups,
                isolated_points=(),
                degenerate=True,
                note="degenerate: U constant on S",
            )
        m1, m2 = w
        angles = (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)
        mins = (math.pi / 2, 3 * math.pi / 2) if m2 > m1 else (0.0, math.pi)
        dd = tuple(float(sphere_values(params, t)[2]) for t in mins)
        return CriticalStructure(
            groups=groups,
            isolated_points=tuple(isolated),
            critical_angles=angles,
            min_set=mins,
            second_derivative=dd,
            nondegenerate=tuple(v != 0.0 for v in dd),
        )
    th = np.linspace(0.0, 2 * np.pi, _SCAN_POINTS, endpoint=False)
    g, dg, _ = sphere_values(params, th)
    if np.ptp(g) <= 1e-14 * np.max(g):
        return CriticalStructure(
            groups=(), isolated_points=(), degenerate=True, note="degenerate: U constant on S"
        )
    roots = sorted(set(round(t, 12) for t in _refine_roots(params, th, dg)))
    vals = [float(sphere_values(params, t)[0]) for t in roots]
    gmin = min(vals)
    mins = tuple(t for t, v in zip(roots, vals) if v <= gmin * (1 + 1e-10))
    dd = tuple(float(sphere_values(params, t)[2]) for t in mins)
    pts = tuple((math.cos(t), math.sin(t)) for t in roots)
    return CriticalStructure(
        groups=(),
        isolated_points=pts,
        critical_angles=tuple(roots),
        min_set=mins,
        second_derivative=dd,
        nondegenerate=tuple(abs(v) > 1e-12 for v in dd),
    )


def spiral_threshold(alpha) -> float:
    """Weight ratio above which the spiral condition holds."""
    return 1.0 + (2.0 - alpha) ** 2 / (8.0 * alpha)


def _spiral_sign(m_small, m_large, alpha) -> bool:
    # sign of  -alpha (m2 - m1) + (2 - alpha)^2 m1 / 8, evaluated exactly
    a, p, q = Fraction(alpha), Fraction(m_small), Fraction(m_large)
    return -a * (q - p) + (2 - a) ** 2 * p / 8 < 0


@dataclass(frozen=True)
class ConditionReport:
    U0: bool
    U1: bool | str
    U2: bool
    U3: bool | str
    U4: bool | str
    spiral_equiv: bool | str
    details: dict

    def as_lines(self) -> list[str]:
        lines = [f"{k}: {getattr(self, k)}" for k in ("U0", "U1", "U2", "U3", "U4", "spiral_equiv")]
        for k in sorted(self.details):
            lines.append(f"{k}: {_fmt6(self.details[k])}")
        return lines


def _fmt6(v):
    if isinstance(v, bool) or isinstance(v, str):
        return str(v)
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".6g")
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt6(x) for x in v) + "]"
    return str(v)


def check_conditions(params: PotentialParams) -> ConditionReport:
    """Evaluate the structural conditions on the potential.

    For a planar Gutzwiller potential both the weight-ratio inequality and
    the second-derivative form ``g''(k pi) < -((2-alpha)^2/8) g(k pi)`` are
    decided in exact rational arithmetic, so the two verdicts coincide.
    """
    alpha = params.alpha
    cs = critical_structure(params)
    details: dict = {}
    u0 = True
    if params.weights is not None:
        u1: bool | str = True
        u2 = len(set(params.weights)) < len(params.weights)
    else:
        u1 = "not applicable"
        u2 = cs.degenerate
    if params.d != 2:
        u3: bool | str = "not applicable"
        u4: bool | str = "not applicable"
        spiral: bool | str = "not applicable"
    else:
        if cs.degenerate:
            u3 = False
        else:
            u3 = all(cs.nondegenerate)
            details["min_set"] = "{" + ", ".join(f"{t:.6g}" for t in cs.min_set) + "}"
            details["second_derivative_at_min"] = [float(v) for v in cs.second_derivative]
        g0, _, dd0 = sphere_values(params, np.array([0.0, math.pi]))
        details["g_pp_at_k_pi"] = [float(v) for v in dd0]
        if params.weights is not None:
            m1, m2 = params.weights
            ratio_threshold = spiral_threshold(alpha)
            details["weight_ratio"] = m2 / m1
            details["U4_threshold"] = ratio_threshold
            q, p = Fraction(m2), Fraction(m1)
            a = Fraction(alpha)
            u4 = q / p > 1 + (2 - a) ** 2 / (8 * a)
            spiral = _spiral_sign(m1, m2, alpha)
        else:
            u4 = "not applicable"
            rhs = -((2 - alpha) ** 2) / 8 * g0
            spiral = bool(np.all(dd0 < rhs))
    return ConditionReport(U0=u0, U1=u1, U2=u2, U3=u3, U4=u4, spiral_equiv=spiral, details=details)
