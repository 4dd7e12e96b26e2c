"""Piecewise-linear paths, their discrete action and planar winding data."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, LiftAmbiguityError
from .potential import PotentialParams, eval_U, grad_U, hess_U

_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)
GL_U = 0.5 * (_GL_X + 1.0)
GL_W = 0.5 * _GL_W

# geometric refinement toward the point of a segment closest to the origin
_NEAR_FACTOR = 2.0
_INNER_FRACTION = 0.25
_GROWTH = 1.3


@dataclass(frozen=True)
class Path:
    """Nodes ``nodes[k]`` at times ``times[k]``, joined by straight segments.

    A node may sit at the origin only if its index is listed in
    ``collision_nodes``; such paths have infinite action.
    """

    times: np.ndarray
    nodes: np.ndarray
    rule: str = "gauss-legendre-4"
    collision_nodes: tuple[int, ...] = ()

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        x = np.array(self.nodes, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise DomainError("a path needs at least two time points")
        if x.ndim != 2 or x.shape[0] != t.size:
            raise DomainError(f"nodes shape {x.shape} does not match {t.size} times")
        if not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0):
            raise DomainError("path times must be finite and strictly increasing")
        if not np.all(np.isfinite(x)):
            raise DomainError("path nodes must be finite")
        at_origin = set(np.flatnonzero(np.all(x == 0.0, axis=1)).tolist())
        if not at_origin <= set(self.collision_nodes):
            raise DomainError(f"unflagged nodes at the origin: {sorted(at_origin)}")
        t.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "nodes", x)

    @property
    def d(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_segments(self) -> int:
        return self.times.size - 1

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.nodes, axis=1)

    def __call__(self, t):
        """Linear interpolation of the nodes at times ``t``."""
        t = np.asarray(t, dtype=float)
        return np.stack([np.interp(t, self.times, self.nodes[:, i]) for i in range(self.d)], axis=-1)

    def velocities(self) -> np.ndarray:
        return np.diff(self.nodes, axis=0) / np.diff(self.times)[:, None]

    def restrict(self, i0: int, i1: int) -> "Path":
        """Sub-path on grid indices ``i0..i1`` inclusive."""
        flags = tuple(k - i0 for k in self.collision_nodes if i0 <= k <= i1)
        return Path(self.times[i0 : i1 + 1], self.nodes[i0 : i1 + 1], self.rule, flags)

    def shifted(self, dt: float) -> "Path":
        return Path(self.times + dt, self.nodes, self.rule, self.collision_nodes)

    def reversed(self) -> "Path":
        n = self.times.size
        flags = tuple(sorted(n - 1 - k for k in self.collision_nodes))
        return Path(-self.times[::-1], self.nodes[::-1], self.rule, flags)

    def with_nodes(self, nodes) -> "Path":
        return Path(self.times, nodes, self.rule, self.collision_nodes)

    def min_radius(self) -> float:
        """Smallest distance from the origin over all segments, not only nodes."""
        return float(np.min(_segment_min_distance(self.nodes[:-1], self.nodes[1:])[0]))


def straight_path(p, q, T, N, t0=0.0) -> Path:
    """Uniformly timed straight line from ``p`` to ``q`` with ``N`` segments."""
    p, q = np.asarray(p, float), np.asarray(q, float)
    u = np.linspace(0.0, 1.0, N + 1)
    return Path(t0 + T * u, (1 - u)[:, None] * p + u[:, None] * q)


def _segment_min_distance(a, b):
    """Per segment: minimal distance to the origin and the parameter attaining it."""
    d = b - a
    dd = np.sum(d * d, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = np.where(dd > 0, -np.sum(a * d, axis=-1) / dd, 0.0)
    u = np.clip(u, 0.0, 1.0)
    closest = a + u[..., None] * d
    return np.linalg.norm(closest, axis=-1), u


def _geometric_breaks(u_star, inner, length):
    """Breakpoints on [0, 1] growing geometrically away from ``u_star``.

    ``inner`` is the half-width of the central piece in parameter units.
    """
    pts = [u_star]
    w = inner
    left = u_star
    while left > 0.0:
        left = max(0.0, left - w)
        pts.append(left)
        w *= _GROWTH
    w = inner
    right = u_star
    while right < 1.0:
        right = min(1.0, right + w)
        pts.append(right)
        w *= _GROWTH
    return np.unique(np.array(pts))


@dataclass(frozen=True)
class QuadratureNodes:
    """Flattened quadrature points: segment index, parameter u and weight in u."""

    seg: np.ndarray
    u: np.ndarray
    w: np.ndarray
    singular: bool


def quadrature_nodes(nodes) -> QuadratureNodes:
    """Gauss-Legendre points for every segment, refined near the origin.

    A segment whose closest approach to the origin is less than twice its
    length is split geometrically around that point.  The rule depends only
    on ratios of lengths, so it commutes with spatial scaling.
    """
    nodes = np.asarray(nodes, float)
    a, b = nodes[:-1], nodes[1:]
    n = a.shape[0]
    dmin, ustar = _segment_min_distance(a, b)
    length = np.linalg.norm(b - a, axis=1)
    if np.any(dmin == 0.0):
        return QuadratureNodes(np.zeros(0, int), np.zeros(0), np.zeros(0), True)
    near = dmin < _NEAR_FACTOR * length
    seg = [np.repeat(np.arange(n)[~near], GL_U.size)]
    u = [np.tile(GL_U, int((~near).sum()))]
    w = [np.tile(GL_W, int((~near).sum()))]
    for k in np.flatnonzero(near):
        inner = _INNER_FRACTION * dmin[k] / length[k]
        br = _geometric_breaks(ustar[k], inner, length[k])
        lo, hi = br[:-1], br[1:]
        width = hi - lo
        uu = (lo[:, None] + width[:, None] * GL_U).ravel()
        ww = (width[:, None] * GL_W).ravel()
        seg.append(np.full(uu.size, k))
        u.append(uu)
        w.append(ww)
    seg = np.concatenate(seg)
    u = np.concatenate(u)
    w = np.concatenate(w)
    order = np.argsort(seg, kind="stable")
    return QuadratureNodes(seg[order], u[order], w[order], False)


def kinetic_energy_integral(path: Path) -> float:
    """Integral of |velocity|^2 / 2, exact for piecewise-linear paths."""
    dx = np.diff(path.nodes, axis=0)
    dt = np.diff(path.times)
    return float(0.5 * np.sum(np.sum(dx * dx, axis=1) / dt))


def potential_integral(params: PotentialParams, path: Path) -> float:
    """Integral of U along the path; ``inf`` if the path meets the origin."""
    q = quadrature_nodes(path.nodes)
    if q.singular or np.any(path.radii == 0.0):
        return math.inf
    a, b = path.nodes[:-1], path.nodes[1:]
    dt = np.diff(path.times)
    pts = (1 - q.u)[:, None] * a[q.seg] + q.u[:, None] * b[q.seg]
    return float(np.sum(dt[q.seg] * q.w * eval_U(params, pts)))


def segment_actions(params: PotentialParams, path: Path) -> np.ndarray:
    """Action contributed by each segment."""
    q = quadrature_nodes(path.nodes)
    if q.singular:
        out = np.full(path.n_segments, math.nan)
        a, b = path.nodes[:-1], path.nodes[1:]
        out[_segment_min_distance(a, b)[0] == 0.0] = math.inf
        return out
    a, b = path.nodes[:-1], path.nodes[1:]
    dt = np.diff(path.times)
    pts = (1 - q.u)[:, None] * a[q.seg] + q.u[:, None] * b[q.seg]
    pot = np.bincount(q.seg, weights=dt[q.seg] * q.w * eval_U(params, pts), minlength=path.n_segments)
    kin = 0.5 * np.sum((b - a) ** 2, axis=1) / dt
    return kin + pot


def action(params: PotentialParams, path: Path) -> float:
    """Lagrangian action of the path; ``inf`` flags a passage through the origin."""
    if path.d != params.d:
        raise DomainError("path and potential dimensions differ")
    pot = potential_integral(params, path)
    if math.isinf(pot):
        return math.inf
    return kinetic_energy_integral(path) + pot


def action_h(params: PotentialParams, path: Path, h: float) -> float:
    return action(params, path) + h * path.duration


def rescale_time(path: Path, delta: float) -> Path:
    """Same nodes on the time grid multiplied by ``delta``."""
    if not delta > 0:
        raise DomainError("delta must be positive")
    return Path(path.times * delta, path.nodes, path.rule, path.collision_nodes)


@dataclass(frozen=True)
class ActionDerivatives:
    """Value, gradient and block-tridiagonal Hessian with respect to all nodes.

    ``diag[k]`` is the d x d block for node k and ``upper[k]`` couples node k
    with node k + 1.
    """

    value: float
    kinetic: float
    potential: float
    grad: np.ndarray
    diag: np.ndarray | None
    upper: np.ndarray | None


def action_derivatives(params: PotentialParams, path: Path, hessian: bool = True) -> ActionDerivatives:
    """Exact derivatives of the discrete action.

    Subdivision breakpoints are held fixed while differentiating; away from
    the origin no subdivision happens and the result is the exact derivative.
    """
    x = path.nodes
    n, d = x.shape
    dt = np.diff(path.times)
    q = quadrature_nodes(x)
    if q.singular or np.any(path.radii == 0.0):
        return ActionDerivatives(math.inf, math.inf, math.inf, np.full_like(x, np.nan), None, None)
    a, b = x[:-1], x[1:]
    dx = b - a
    kin = float(0.5 * np.sum(np.sum(dx * dx, axis=1) / dt))
    pts = (1 - q.u)[:, None] * a[q.seg] + q.u[:, None] * b[q.seg]
    wt = dt[q.seg] * q.w
    pot = float(np.sum(wt * eval_U(params, pts)))
    g = np.zeros_like(x)
    vel = dx / dt[:, None]
    g[:-1] -= vel
    g[1:] += vel
    gu = grad_U(params, pts) * wt[:, None]
    np.add.at(g, q.seg, (1 - q.u)[:, None] * gu)
    np.add.at(g, q.seg + 1, q.u[:, None] * gu)
    diag = upper = None
    if hessian:
        eye = np.eye(d)
        diag = np.zeros((n, d, d))
        upper = np.zeros((n - 1, d, d))
        inv = 1.0 / dt
        diag[:-1] += inv[:, None, None] * eye
        diag[1:] += inv[:, None, None] * eye
        upper -= inv[:, None, None] * eye
        H = hess_U(params, pts) * wt[:, None, None]
        np.add.at(diag, q.seg, ((1 - q.u) ** 2)[:, None, None] * H)
        np.add.at(diag, q.seg + 1, (q.u**2)[:, None, None] * H)
        np.add.at(upper, q.seg, (q.u * (1 - q.u))[:, None, None] * H)
    return ActionDerivatives(kin + pot, kin, pot, g, diag, upper)


@dataclass(frozen=True)
class TopologicalClass:
    """Lifted endpoint angles of a planar path."""

    theta_minus: float
    theta_plus: float
    winding: np.ndarray

    @property
    def delta(self) -> float:
        return self.theta_plus - self.theta_minus


def winding_lift(path: Path) -> TopologicalClass:
    """Continuous lift of the polar angle along a planar path.

    The lift starts at the principal angle of the first node.  A segment
    whose endpoints subtend an angle of pi or more at the origin is rejected.
    """
    if path.d != 2:
        raise DomainError("winding is defined for planar paths only")
    x = path.nodes
    if np.any(np.linalg.norm(x, axis=1) == 0.0):
        raise LiftAmbiguityError("path node at the origin")
    a, b = x[:-1], x[1:]
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dot = np.sum(a * b, axis=1)
    inc = np.arctan2(cross, dot)
    bad = (np.abs(inc) >= math.pi) | ((cross == 0.0) & (dot < 0.0))
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise LiftAmbiguityError(f"segment {k} turns by pi or more; refine the grid")
    theta0 = math.atan2(x[0, 1], x[0, 0])
    lift = theta0 + np.concatenate([[0.0], np.cumsum(inc)])
    return TopologicalClass(float(lift[0]), float(lift[-1]), lift)


def in_class(path: Path, theta_minus: float, theta_plus: float, tol: float = 1e-9) -> bool:
    """True when the lifted endpoint angles match the targets in R.

    The start angle is compared modulo 2 pi; the total turning is then
    compared exactly, so classes differing by whole turns are distinguished.
    """
    cls = winding_lift(path)
    shift = 2 * math.pi * round((theta_minus - cls.theta_minus) / (2 * math.pi))
    lo, hi = cls.theta_minus + shift, cls.theta_plus + shift
    return abs(lo - theta_minus) <= tol and abs(hi - theta_plus) <= tol


def write_path_csv(path: Path, filename) -> None:
    """Write ``t,x1,...,xd`` rows with full precision, atomically."""
    header = ",".join(["t"] + [f"x{i + 1}" for i in range(path.d)])
    lines = [header]
    for t, x in zip(path.times, path.nodes):
        lines.append(",".join(format(v, ".17g") for v in (t, *x)))
    tmp = f"{filename}.tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, filename)


def read_path_csv(filename) -> Path:
    with open(filename, encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
    if not header or header[0] != "t" or len(header) < 3:
        raise DomainError(f"{filename}: header must be t,x1,x2[,...]")
    data = np.loadtxt(filename, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(header):
        raise DomainError(f"{filename}: expected {len(header)} columns")
    if np.any(np.diff(data[:, 0]) <= 0):
        raise DomainError(f"{filename}: times must be strictly increasing")
    return Path(data[:, 0], data[:, 1:])
