"""Closed-form hyperbolic Kepler orbits (U = 1/|x|) used as test oracles."""
import math

import numpy as np
from scipy.optimize import brentq


class Hyperbola:
    """Orbit with energy h > 0, eccentricity e > 1, periapsis angle omega.

    ``orient`` is +1 for counter-clockwise motion and -1 otherwise.  Time is
    measured from periapsis passage.
    """

    def __init__(self, h, e, omega, orient=1):
        self.h, self.e, self.omega, self.orient = h, e, omega, orient
        self.a = 1.0 / (2.0 * h)
        self.p = self.a * (e * e - 1.0)

    @property
    def nu_inf(self):
        return math.acos(-1.0 / self.e)

    @property
    def periapsis(self):
        return self.a * (self.e - 1.0)

    def asymptote_angle(self, sign=1):
        return self.omega + self.orient * sign * self.nu_inf

    def nu_at_time(self, t):
        F = brentq(lambda F: self.e * math.sinh(F) - F - t / self.a**1.5, -50.0, 50.0, xtol=1e-15)
        return 2.0 * math.atan(math.sqrt((self.e + 1) / (self.e - 1)) * math.tanh(F / 2))

    def time_at_nu(self, nu):
        F = 2.0 * math.atanh(math.sqrt((self.e - 1) / (self.e + 1)) * math.tan(nu / 2))
        return self.a**1.5 * (self.e * math.sinh(F) - F)

    def position(self, t):
        nu = self.nu_at_time(t)
        r = self.p / (1.0 + self.e * math.cos(nu))
        th = self.omega + self.orient * nu
        return np.array([r * math.cos(th), r * math.sin(th)])

    def potential_integral(self, nu1, nu2):
        """Integral of 1/r dt between two true anomalies: sqrt(a) (F2 - F1)."""
        f = lambda nu: 2.0 * math.atanh(math.sqrt((self.e - 1) / (self.e + 1)) * math.tan(nu / 2))
        return math.sqrt(self.a) * (f(nu2) - f(nu1))

    def action(self, nu1, nu2):
        """Lagrangian action between two true anomalies (kinetic = h + U)."""
        return self.h * (self.time_at_nu(nu2) - self.time_at_nu(nu1)) + 2 * self.potential_integral(nu1, nu2)


def through_point_with_asymptote(h, x0, theta_inf, orient=1):
    """Hyperbolas of energy h through x0 whose outgoing asymptote has angle theta_inf.

    Returns every solution with x0 strictly before the asymptote is reached.
    """
    r0 = float(np.linalg.norm(x0))
    th0 = math.atan2(x0[1], x0[0])
    a = 1.0 / (2.0 * h)
    out = []

    def residual(e):
        omega = theta_inf - orient * math.acos(-1.0 / e)
        nu0 = orient * (th0 - omega)
        nu0 = (nu0 + math.pi) % (2 * math.pi) - math.pi
        return a * (e * e - 1) / (1 + e * math.cos(nu0)) - r0, nu0, omega

    es = np.exp(np.linspace(math.log(1.0 + 1e-9), math.log(1e4), 4000))
    vals = []
    for e in es:
        res, nu0, omega = residual(e)
        ok = abs(nu0) < math.acos(-1.0 / e)
        vals.append(res if ok else math.nan)
    for i in range(len(es) - 1):
        if np.isfinite(vals[i]) and np.isfinite(vals[i + 1]) and vals[i] * vals[i + 1] < 0:
            e = brentq(lambda e: residual(e)[0], es[i], es[i + 1], xtol=1e-15)
            out.append(Hyperbola(h, e, residual(e)[2], orient))
    return out


def symmetric_with_asymptotes(h, theta_minus, theta_plus):
    """Hyperbola whose incoming and outgoing asymptotes point at the given angles."""
    turn = theta_plus - theta_minus
    e = -1.0 / math.cos(abs(turn) / 2.0)
    orient = 1 if turn > 0 else -1
    omega = 0.5 * (theta_minus + theta_plus)
    return Hyperbola(h, e, omega, orient)


def finite_conic_periapsis(h, R, turn):
    """Periapsis of the symmetric hyperbola through R e^{i theta-} and R e^{i theta+}."""
    a = 1.0 / (2.0 * h)
    half = abs(turn) / 2.0
    # R (1 + e cos(half)) = a (e^2 - 1)
    c = math.cos(half)
    e = (R * c + math.sqrt((R * c) ** 2 + 4 * a * (a + R))) / (2 * a)
    return a * (e - 1.0), e
