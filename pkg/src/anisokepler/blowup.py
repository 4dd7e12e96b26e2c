"""Blow-up scaling, zero-energy homothetic solutions and collision deformations.

A homothetic collision-ejection path x(t) = (kappa |t|)^k s (k = 2/(2+alpha))
through a critical direction s of U can be deformed near t = 0 by adding
f_eps(t) sigma, where f_eps equals eps on a plateau of half-width
eps^((2+alpha)/2) and ramps linearly to zero over a further width eps.  For
Gutzwiller potentials the action of the deformed path is smaller, which shows
that such a path is not a local minimizer.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .errors import DomainError
from .paths import Path
from .potential import CRITICAL_TOL, PotentialParams, critical_structure, eval_U, sphere_grad

_QUAD = dict(epsabs=1e-15, epsrel=1e-13, limit=400)


def _quad(f, a, b, points=None):
    if b <= a:
        return 0.0
    pts = None if points is None else [p for p in points if a < p < b] or None
    val, _ = quad(f, a, b, points=pts, **_QUAD)
    return val


# --------------------------------------------------------------------------
# curves and blow-up


@dataclass(frozen=True)
class Curve:
    """A path given by position and velocity callables on ``[t0, t1]``.

    ``breaks`` lists interior times where the velocity may be discontinuous
    or singular; quadrature is split there.
    """

    position: Callable[[float], np.ndarray]
    velocity: Callable[[float], np.ndarray]
    t0: float
    t1: float
    breaks: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise DomainError("curve needs t1 > t0")


def curve_lagrangian(params, curve: Curve, t: float) -> float:
    v = curve.velocity(t)
    return 0.5 * float(v @ v) + eval_U(params, curve.position(t))


def curve_action(params, curve: Curve, a=None, b=None) -> float:
    a = curve.t0 if a is None else a
    b = curve.t1 if b is None else b
    return _quad(lambda t: curve_lagrangian(params, curve, t), a, b, curve.breaks)


def blow_up(path, lam: float, alpha: float):
    """The lambda blow-up t -> lam^(-2/(2+alpha)) path(lam t).

    Accepts a :class:`Path` or a :class:`Curve`.
    """
    if not lam > 0:
        raise DomainError("lambda must be positive")
    c = lam ** (-2.0 / (2.0 + alpha))
    if isinstance(path, Path):
        return Path(path.times / lam, path.nodes * c, path.rule, path.collision_nodes)
    if isinstance(path, Curve):
        return Curve(
            position=lambda t: c * path.position(lam * t),
            velocity=lambda t: c * lam * path.velocity(lam * t),
            t0=path.t0 / lam,
            t1=path.t1 / lam,
            breaks=tuple(b / lam for b in path.breaks),
        )
    raise DomainError("blow_up expects a Path or a Curve")


def action_scaling_exponent(alpha: float) -> float:
    return -(2.0 - alpha) / (2.0 + alpha)


# --------------------------------------------------------------------------
# homothetic solutions


def kappa_from_beta(beta: float, alpha: float) -> float:
    """Zero-energy rate: beta = (1/2) (2 kappa / (2 + alpha))^2."""
    return (2.0 + alpha) / 2.0 * math.sqrt(2.0 * beta)


@dataclass(frozen=True)
class HomotheticSpec:
    """x(t) = (kappa_plus t)^k s_plus for t >= 0 and (-kappa_minus t)^k s_minus for t <= 0."""

    s_plus: np.ndarray
    s_minus: np.ndarray
    kappa_plus: float
    kappa_minus: float
    alpha: float
    T: float

    @property
    def k(self) -> float:
        return 2.0 / (2.0 + self.alpha)

    @property
    def beta_plus(self) -> float:
        return 0.5 * (self.k * self.kappa_plus) ** 2

    @property
    def beta_minus(self) -> float:
        return 0.5 * (self.k * self.kappa_minus) ** 2

    def position(self, t: float) -> np.ndarray:
        if t >= 0:
            return (self.kappa_plus * t) ** self.k * self.s_plus
        return (-self.kappa_minus * t) ** self.k * self.s_minus

    def velocity(self, t: float) -> np.ndarray:
        k = self.k
        if t > 0:
            return k * self.kappa_plus**k * t ** (k - 1) * self.s_plus
        if t < 0:
            return -k * self.kappa_minus**k * (-t) ** (k - 1) * self.s_minus
        return np.full_like(self.s_plus, math.inf)

    def curve(self, T=None) -> Curve:
        T = self.T if T is None else T
        return Curve(self.position, self.velocity, -T, T, (0.0,))

    def branch_potential_integral(self, params, b: float, sign: int = 1) -> float:
        """Closed form of the integral of U over [0, b] (sign +1) or [-b, 0] (sign -1)."""
        s, kap = (self.s_plus, self.kappa_plus) if sign > 0 else (self.s_minus, self.kappa_minus)
        e = 1.0 - self.alpha * self.k
        return eval_U(params, s) * kap ** (-self.alpha * self.k) * b**e / e

    def branch_kinetic_integral(self, b: float, sign: int = 1) -> float:
        kap = self.kappa_plus if sign > 0 else self.kappa_minus
        k = self.k
        e = 2 * k - 1
        return 0.5 * k**2 * kap ** (2 * k) * b**e / e

    def action(self, params, T=None) -> float:
        T = self.T if T is None else T
        return sum(
            self.branch_potential_integral(params, T, sg) + self.branch_kinetic_integral(T, sg)
            for sg in (1, -1)
        )


def make_homothetic(params: PotentialParams, s_plus, s_minus, T: float = 1.0, N: int = 256):
    """Zero-energy homothetic collision-ejection path through critical directions.

    Returns the spec and a sampled :class:`Path` on ``[-T, T]`` whose nodes are
    evenly spaced in radius along each branch; the node at t = 0 is a flagged
    collision node.
    """
    sp = np.asarray(s_plus, float)
    sm = np.asarray(s_minus, float)
    for name, s in (("s_plus", sp), ("s_minus", sm)):
        if abs(np.linalg.norm(s) - 1.0) > 1e-9:
            raise DomainError(f"{name} must be a unit vector")
        if np.linalg.norm(sphere_grad(params, s)) > CRITICAL_TOL:
            raise DomainError(f"{name} is not a critical point of U on the sphere")
    if not T > 0:
        raise DomainError("T must be positive")
    a = params.alpha
    spec = HomotheticSpec(
        s_plus=sp,
        s_minus=sm,
        kappa_plus=kappa_from_beta(eval_U(params, sp), a),
        kappa_minus=kappa_from_beta(eval_U(params, sm), a),
        alpha=a,
        T=float(T),
    )
    u = np.linspace(0.0, 1.0, N + 1)[1:]
    tp = T * u ** (1.0 / spec.k)
    times = np.concatenate([-tp[::-1], [0.0], tp])
    nodes = np.array([spec.position(t) for t in times])
    nodes[N] = 0.0
    return spec, Path(times, nodes, collision_nodes=(N,))


def homothetic_energy_residual(params, spec: HomotheticSpec, times) -> float:
    """Largest |r'^2/2 - U(s) r^-alpha| over the given nonzero times."""
    worst = 0.0
    for t in np.asarray(times, float):
        if t == 0.0:
            continue
        x, v = spec.position(t), spec.velocity(t)
        r = np.linalg.norm(x)
        rdot = float(v @ x) / r
        worst = max(worst, abs(0.5 * rdot**2 - eval_U(params, x / r) * r ** (-params.alpha)))
    return worst


# --------------------------------------------------------------------------
# deformation


@dataclass(frozen=True)
class DeformationSpec:
    sigma: np.ndarray
    epsilon: float

    def __post_init__(self):
        s = np.asarray(self.sigma, float)
        if abs(np.linalg.norm(s) - 1.0) > 1e-12:
            raise DomainError("sigma must be a unit vector")
        if not self.epsilon >= 0:
            raise DomainError("epsilon must be non-negative")
        object.__setattr__(self, "sigma", s)

    def plateau(self, alpha: float) -> float:
        return self.epsilon ** ((2.0 + alpha) / 2.0)

    def support(self, alpha: float) -> float:
        return self.plateau(alpha) + self.epsilon

    def f(self, t: float, alpha: float) -> float:
        a = self.plateau(alpha)
        t = abs(t)
        if t <= a:
            return self.epsilon
        if t <= a + self.epsilon:
            return self.epsilon + a - t
        return 0.0

    def fdot(self, t: float, alpha: float) -> float:
        a = self.plateau(alpha)
        if a < abs(t) < a + self.epsilon:
            return -1.0 if t > 0 else 1.0
        return 0.0


@dataclass(frozen=True)
class DeformationTerms:
    A1: float
    A2: float
    A3: float
    B1: float
    B2: float
    B3: float
    direct_diff: float

    @property
    def total(self) -> float:
        return self.A1 + self.A2 + self.A3 + self.B1 + self.B2 + self.B3

    @property
    def mismatch(self) -> float:
        return abs(self.total - self.direct_diff)


def _weighted(params, x, y) -> float:
    return float(np.sum(np.asarray(params.weights) * x * y))


def _branch_terms(params, spec: HomotheticSpec, dfm: DeformationSpec, sign: int):
    """(A1, A2, A3) on t >= 0 for sign +1, or (B1, B2, B3) on t <= 0 for sign -1."""
    a_ = params.alpha
    k = spec.k
    eps = dfm.epsilon
    sig = dfm.sigma
    s, kap = (spec.s_plus, spec.kappa_plus) if sign > 0 else (spec.s_minus, spec.kappa_minus)
    a = dfm.plateau(a_)
    b = a + eps
    ss = _weighted(params, s, s)
    sgs = _weighted(params, s, sig)
    gg = _weighted(params, sig, sig)
    kk = kap**k
    # kinetic change on the ramp, integrated in closed form
    t1 = 0.5 * eps - float(sig @ s) * kk * (b**k - a**k)
    # plateau: tau = t^k / eps, then tau = u^(2/(2-alpha)) removes the tau^(-alpha/2) singularity
    p = 2.0 / (2.0 - a_)

    def plateau_integrand(u):
        if u == 0.0:
            tau = 0.0
            jac = 0.0
        else:
            tau = u**p
            jac = p * u ** (p - 1)
        q = kk**2 * ss * tau**2 + 2 * kk * sgs * tau + gg
        first = tau ** (a_ / 2) * q ** (-a_ / 2) * jac
        return first - p * kap ** (-a_ * k) * ss ** (-a_ / 2)

    t2 = (2.0 + a_) / 2.0 * eps ** ((2.0 - a_) / 2.0) * _quad(plateau_integrand, 0.0, 1.0)

    def ramp_integrand(t):
        f = eps + a - t
        base = (kap * t) ** k
        q = base**2 * ss + f * f * gg + 2 * base * f * sgs
        return q ** (-a_ / 2) - base ** (-a_) * ss ** (-a_ / 2)

    t3 = _quad(ramp_integrand, a, b)
    return t1, t2, t3


def _direct_difference(params, spec: HomotheticSpec, dfm: DeformationSpec) -> float:
    """A(x + f sigma) - A(x) from the vector paths, without the reduced formulas."""
    a_ = params.alpha
    a = dfm.plateau(a_)
    b = a + dfm.epsilon
    sig = dfm.sigma
    total = 0.0
    for sg in (1, -1):

        def dkin(t):
            v = spec.velocity(sg * t)
            w = v + dfm.fdot(sg * t, a_) * sig
            return 0.5 * (float(w @ w) - float(v @ v))

        def upert(t):
            return eval_U(params, spec.position(sg * t) + dfm.f(sg * t, a_) * sig)

        kin = _quad(dkin, a, b)
        pot = _quad(upert, 0.0, a) + _quad(upert, a, b)
        total += kin + pot - spec.branch_potential_integral(params, b, sg)
    return total


def deformation_terms(params, spec: HomotheticSpec, dfm: DeformationSpec, T: float | None = None):
    """Split of A(x + f sigma) - A(x) into kinetic, plateau and ramp parts per branch."""
    if not params.is_gutzwiller:
        raise DomainError("deformation terms use the weighted inner product of a Gutzwiller potential")
    T = spec.T if T is None else T
    if not dfm.epsilon > 0:
        raise DomainError("epsilon must be positive")
    if not dfm.support(params.alpha) < T:
        raise DomainError("deformation support must lie inside (-T, T)")
    A = _branch_terms(params, spec, dfm, 1)
    B = _branch_terms(params, spec, dfm, -1)
    return DeformationTerms(*A, *B, direct_diff=_direct_difference(params, spec, dfm))


# --------------------------------------------------------------------------
# minimality test


def _group_of(groups, s, tol=CRITICAL_TOL):
    for j, g in enumerate(groups):
        outside = [i for i in range(s.size) if i not in g]
        if np.all(np.abs(s[outside]) <= tol):
            return j
    return None


def choose_sigma(params, s_plus, s_minus):
    """Deformation direction and case number from the equal-weight partition."""
    sp, sm = np.asarray(s_plus, float), np.asarray(s_minus, float)
    groups = critical_structure(params).groups
    jp, jm = _group_of(groups, sp), _group_of(groups, sm)
    if jp is None or jm is None:
        raise DomainError("s_plus and s_minus must be critical directions")
    if jp != jm:
        return sm.copy(), 1
    g = groups[jp]
    if len(g) == 1:
        i0 = g[0]
        i1 = next(i for i in range(sp.size) if i != i0)
        sigma = np.zeros(sp.size)
        sigma[i1] = 1.0
        return sigma, 2
    bis = sp + sm
    if np.linalg.norm(bis) > 1e-12:
        return bis / np.linalg.norm(bis), 3
    # s_plus = -s_minus: any unit vector of the group's subspace orthogonal to s_plus
    for i in g:
        e = np.zeros(sp.size)
        e[i] = 1.0
        w = e - (e @ sp) * sp
        if np.linalg.norm(w) > 1e-8:
            return w / np.linalg.norm(w), 3
    raise DomainError("no admissible deformation direction")


@dataclass(frozen=True)
class MinimalityVerdict:
    sigma: np.ndarray | None
    case: int
    epsilons: tuple[float, ...]
    differences: tuple[float, ...]
    terms: tuple[DeformationTerms, ...]
    verdict: str
    slope: float = math.nan
    notes: dict = field(default_factory=dict)


def loglog_slope(epsilons, values) -> float:
    x = np.log(np.asarray(epsilons, float))
    y = np.log(np.abs(np.asarray(values, float)))
    return float(np.polyfit(x, y, 1)[0])


def test_minimality(params, spec: HomotheticSpec, T=None, epsilon_grid=(1e-2, 1e-3, 1e-4), workers=1):
    """Search for an action-decreasing deformation of a homothetic path."""
    if not params.is_gutzwiller:
        raise DomainError("minimality test needs a Gutzwiller potential")
    T = spec.T if T is None else T
    sigma, case = choose_sigma(params, spec.s_plus, spec.s_minus)
    eps = tuple(float(e) for e in epsilon_grid)

    def job(e):
        return deformation_terms(params, spec, DeformationSpec(sigma, e), T)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            terms = tuple(pool.map(job, eps))
    else:
        terms = tuple(job(e) for e in eps)
    diffs = tuple(t.total for t in terms)
    if all(d < 0 for d in diffs):
        verdict = "not a local minimizer"
    elif all(d >= 0 for d in diffs):
        verdict = "no decrease found"
    else:
        verdict = "inconclusive"
    slope = loglog_slope(eps, diffs) if len(eps) >= 2 and all(d != 0 for d in diffs) else math.nan
    return MinimalityVerdict(sigma, case, eps, diffs, terms, verdict, slope)


# --------------------------------------------------------------------------
# gluing


def glue_comparison(
    params,
    original: Curve,
    lam: float,
    T: float,
    N_glue: int,
    deformation: DeformationSpec | None,
    limit: HomotheticSpec,
    collision_threshold: float = 1e-6,
):
    """Insert the blown-up deformation into a path with a collision at t = 0.

    With x^lam the blow-up of ``original`` and xbar the homothetic ``limit``,
    the comparison path equals x^lam + phi + psi on [-T, T], where
    phi = f_eps sigma and psi interpolates xbar - x^lam with linear cut-offs
    of width 1/N_glue at both ends.  It is mapped back by the inverse blow-up
    and the action change over the original time window is returned together
    with the comparison curve.
    """
    a_ = params.alpha
    if not (0 < lam <= 1):
        raise DomainError("lambda must lie in (0, 1]")
    if not (original.t0 < 0 < original.t1):
        raise DomainError("collision instant t = 0 must be interior")
    if lam * T > min(-original.t0, original.t1):
        raise DomainError("lambda * T exceeds the original time window")
    _check_isolated(original, collision_threshold)
    xl = blow_up(original, lam, a_)
    width = 1.0 / N_glue
    if 2 * width >= 2 * T:
        raise DomainError("N_glue too small for the window")
    sig = deformation.sigma if deformation is not None else None

    def phi(t):
        if deformation is None or deformation.epsilon == 0:
            return 0.0, 0.0
        return deformation.f(t, a_), deformation.fdot(t, a_)

    def cut(t):
        if t >= T - width:
            return N_glue * (T - t), -N_glue
        if t <= -T + width:
            return N_glue * (T + t), N_glue
        return 1.0, 0.0

    def y_pos(t):
        c, _ = cut(t)
        f, _ = phi(t)
        out = xl.position(t) + c * (limit.position(t) - xl.position(t))
        if sig is not None:
            out = out + f * sig
        return out

    def y_vel(t):
        c, dc = cut(t)
        f, df = phi(t)
        diff = limit.position(t) - xl.position(t)
        ddiff = limit.velocity(t) - xl.velocity(t)
        out = xl.velocity(t) + c * ddiff + dc * diff
        if sig is not None:
            out = out + df * sig
        return out

    c = lam ** (2.0 / (2.0 + a_))
    comp = Curve(
        position=lambda t: c * y_pos(t / lam) if abs(t) <= lam * T else original.position(t),
        velocity=lambda t: c / lam * y_vel(t / lam) if abs(t) <= lam * T else original.velocity(t),
        t0=original.t0,
        t1=original.t1,
        breaks=(0.0,),
    )
    # the two curves agree outside [-lam T, lam T]
    brk = [0.0, lam * T, -lam * T, lam * (T - width), -lam * (T - width)]
    if deformation is not None and deformation.epsilon > 0:
        for s in (deformation.plateau(a_), deformation.support(a_)):
            brk += [lam * s, -lam * s]
    brk = sorted(set(brk))

    def integrand(t):
        return curve_lagrangian(params, comp, t) - curve_lagrangian(params, original, t)

    diff = 0.0
    for lo, hi in zip(brk[:-1], brk[1:]):
        diff += _quad(integrand, lo, hi)
    return GlueResult(comparison=comp, difference=diff, lam=lam, T=T, N_glue=N_glue)


@dataclass(frozen=True)
class GlueResult:
    comparison: Curve
    difference: float
    lam: float
    T: float
    N_glue: int


def _check_isolated(curve: Curve, threshold: float, samples: int = 2001):
    ts = np.linspace(curve.t0, curve.t1, samples)
    r = np.array([np.linalg.norm(curve.position(t)) for t in ts])
    if np.linalg.norm(curve.position(0.0)) > threshold:
        raise DomainError("no collision at t = 0")
    near = np.abs(ts) > (curve.t1 - curve.t0) / samples
    if np.any(r[near] <= threshold):
        raise DomainError("collision at t = 0 is not isolated in the window")
