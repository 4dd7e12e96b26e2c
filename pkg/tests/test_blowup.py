import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from anisokepler import blowup
from anisokepler.errors import DomainError
from anisokepler.paths import action, straight_path
from anisokepler.potential import PotentialParams, grad_U

KEPLER = PotentialParams.gutzwiller((1.0, 1.0), 1.0)
G12 = PotentialParams.gutzwiller((1.0, 2.0), 1.0)
E1, E2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])


@pytest.fixture(scope="module")
def case1():
    spec, _ = blowup.make_homothetic(G12, E1, E2)
    return spec


def test_blow_up_identity():
    p = straight_path([1.0, 0.2], [0.3, 1.5], 2.0, 16)
    q = blowup.blow_up(p, 1.0, 1.0)
    np.testing.assert_array_equal(q.times, p.times)
    np.testing.assert_array_equal(q.nodes, p.nodes)


def test_blow_up_factor():
    p = straight_path([1.0, 0.2], [0.3, 1.5], 2.0, 16)
    q = blowup.blow_up(p, 8.0, 1.0)
    np.testing.assert_allclose(q.nodes, 0.25 * p.nodes, rtol=1e-15)
    np.testing.assert_allclose(q.times, p.times / 8, rtol=1e-15)
    with pytest.raises(DomainError):
        blowup.blow_up(p, 0.0, 1.0)


@pytest.mark.parametrize("lam", [2.0, 8.0])
def test_action_scaling(lam):
    p = straight_path([1.0, 0.2], [0.3, 1.5], 2.0, 32)
    A = action(G12, p)
    Al = action(G12, blowup.blow_up(p, lam, 1.0))
    assert blowup.action_scaling_exponent(1.0) == pytest.approx(-1 / 3, rel=1e-15)
    assert abs(Al - lam ** (-1 / 3) * A) <= 1e-10 * A


def test_blow_up_curve_velocity():
    spec, _ = blowup.make_homothetic(G12, E2, E2)
    c = blowup.blow_up(spec.curve(), 4.0, 1.0)
    t = 0.1
    fd = (c.position(t + 1e-6) - c.position(t - 1e-6)) / 2e-6
    np.testing.assert_allclose(c.velocity(t), fd, rtol=1e-7)
    # homothetic paths are fixed by the blow-up
    np.testing.assert_allclose(c.position(t), spec.position(t), rtol=1e-14)


def test_kappa_examples():
    spec, _ = blowup.make_homothetic(KEPLER, E1, E1)
    assert spec.kappa_plus == pytest.approx(1.5 * math.sqrt(2), rel=1e-15)
    assert spec.kappa_plus == pytest.approx(2.1213203, abs=1e-7)
    spec, _ = blowup.make_homothetic(G12, E2, E2)
    assert spec.beta_plus == pytest.approx(2**-0.5, rel=1e-14)
    assert spec.kappa_plus == pytest.approx(1.5 * 2**0.25, rel=1e-15)
    assert spec.kappa_plus == pytest.approx(1.7838106, abs=1e-7)


def test_homothetic_solves_equation():
    # integrate from the homothetic data at t = 0.5 and compare with the closed form
    spec, _ = blowup.make_homothetic(G12, E2, E2)
    t0, t1 = 0.5, 1.5

    def rhs(t, y):
        return np.concatenate([y[2:], grad_U(G12, y[:2])])

    y0 = np.concatenate([spec.position(t0), spec.velocity(t0)])
    sol = solve_ivp(rhs, (t0, t1), y0, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(sol.y[:2, -1], spec.position(t1), rtol=1e-9)


def test_zero_energy_branches(case1):
    ts = np.concatenate([-np.logspace(-6, 0, 40), np.logspace(-6, 0, 40)])
    assert blowup.homothetic_energy_residual(G12, case1, ts) <= 1e-8


def test_time_symmetry():
    spec, path = blowup.make_homothetic(G12, E2, E2)
    for t in (0.01, 0.3, 1.0):
        np.testing.assert_allclose(spec.position(-t), spec.position(t), rtol=1e-15)
    np.testing.assert_allclose(path.nodes, path.nodes[::-1], rtol=1e-15)
    np.testing.assert_allclose(path.times, -path.times[::-1], rtol=1e-15)


def test_homothetic_path_sampling():
    spec, path = blowup.make_homothetic(G12, E1, E2, T=2.0, N=64)
    assert path.times[0] == -2.0 and path.times[-1] == 2.0
    assert path.collision_nodes == (64,)
    assert math.isinf(action(G12, path))


def test_homothetic_action_closed_form(case1):
    c = case1.curve()
    assert blowup.curve_action(G12, c) == pytest.approx(case1.action(G12), rel=1e-9)


def test_make_homothetic_rejects_non_critical():
    s = np.array([1.0, 1.0]) / math.sqrt(2)
    with pytest.raises(DomainError):
        blowup.make_homothetic(G12, s, E1)
    with pytest.raises(DomainError):
        blowup.make_homothetic(G12, [2.0, 0.0], E1)


def test_deformation_profile():
    d = blowup.DeformationSpec(E2, 1e-2)
    a = d.plateau(1.0)
    assert a == pytest.approx(1e-3, rel=1e-12)
    assert d.f(0.0, 1.0) == 1e-2 and d.f(a, 1.0) == 1e-2
    assert d.f(a + 5e-3, 1.0) == pytest.approx(5e-3, rel=1e-12)
    assert d.f(d.support(1.0) + 1e-9, 1.0) == 0.0
    assert d.f(-0.004, 1.0) == d.f(0.004, 1.0)
    with pytest.raises(DomainError):
        blowup.DeformationSpec([1.0, 1.0], 1e-2)


def test_deformation_support_inside_window(case1):
    with pytest.raises(DomainError):
        blowup.deformation_terms(G12, case1, blowup.DeformationSpec(E2, 0.9), 1.0)


@pytest.mark.parametrize("eps", [1e-2, 1e-3, 1e-4])
def test_orthogonal_case_terms(case1, eps):
    # sigma = s_minus is orthogonal to s_plus in both inner products
    t = blowup.deformation_terms(G12, case1, blowup.DeformationSpec(E2, eps), 1.0)
    assert t.A1 == pytest.approx(eps / 2, rel=1e-12)
    assert t.A3 < 0
    assert t.mismatch <= 1e-8 * (1 + abs(t.direct_diff))


def test_plateau_constant_stable(case1):
    c1 = []
    for eps in (1e-2, 1e-3, 1e-4):
        t = blowup.deformation_terms(G12, case1, blowup.DeformationSpec(E2, eps), 1.0)
        assert t.A2 < 0
        c1.append(-t.A2 / eps**0.5)
    assert min(c1) > 0
    assert max(c1) / min(c1) - 1 <= 0.05


@pytest.mark.parametrize(
    "P, sp, sm, sigma, case",
    [
        (G12, E1, E2, E2, 1),
        (G12, E1, -E1, E2, 2),
        (KEPLER, E1, -E1, E2, 3),
    ],
)
def test_choose_sigma_cases(P, sp, sm, sigma, case):
    s, c = blowup.choose_sigma(P, sp, sm)
    assert c == case
    np.testing.assert_allclose(np.abs(s), np.abs(sigma), atol=1e-15)
    assert s @ sp >= -1e-15 and s @ sm >= -1e-15


def test_case3_bisector():
    sp, sm = E1, E2
    s, c = blowup.choose_sigma(KEPLER, sp, sm)
    assert c == 3
    np.testing.assert_allclose(s, np.array([1.0, 1.0]) / math.sqrt(2), rtol=1e-15)


@pytest.mark.parametrize(
    "P, sp, sm",
    [(G12, E1, E2), (G12, E1, -E1), (KEPLER, E1, -E1)],
)
def test_minimality_verdict(P, sp, sm):
    spec, _ = blowup.make_homothetic(P, sp, sm)
    v = blowup.test_minimality(P, spec, epsilon_grid=(1e-2, 1e-3, 1e-4))
    assert v.verdict == "not a local minimizer"
    assert all(d < 0 for d in v.differences)
    assert all(t.mismatch <= 1e-8 * (1 + abs(t.direct_diff)) for t in v.terms)
    assert v.slope == pytest.approx(0.5, rel=0.05)


@pytest.mark.parametrize("alpha", [0.5, 1.5])
def test_minimality_slope_other_alpha(alpha):
    P = PotentialParams.gutzwiller((1.0, 2.0), alpha)
    spec, _ = blowup.make_homothetic(P, E1, E2)
    v = blowup.test_minimality(P, spec, epsilon_grid=(1e-2, 1e-3, 1e-4))
    assert v.verdict == "not a local minimizer"
    assert v.slope == pytest.approx((2 - alpha) / 2, rel=0.05)


def test_minimality_workers_agree(case1):
    a = blowup.test_minimality(G12, case1, epsilon_grid=(1e-2, 1e-3))
    b = blowup.test_minimality(G12, case1, epsilon_grid=(1e-2, 1e-3), workers=2)
    assert a.differences == b.differences


def test_glue_trivial(case1):
    r = blowup.glue_comparison(G12, case1.curve(), 1.0, 1.0, 1000, None, case1)
    assert r.difference == 0.0
    r = blowup.glue_comparison(G12, case1.curve(), 1.0, 1.0, 1000, blowup.DeformationSpec(E2, 0.0), case1)
    assert r.difference == 0.0


def test_glue_case1_negative(case1):
    dfm = blowup.DeformationSpec(E2, 1e-3)
    r = blowup.glue_comparison(G12, case1.curve(), 1e-2, 1.0, 1000, dfm, case1)
    assert r.difference < 0
    # the comparison keeps the original endpoints
    np.testing.assert_allclose(r.comparison.position(1.0), case1.position(1.0), rtol=1e-15)


def test_glue_scaling_law(case1):
    # on the homothetic path itself psi vanishes and only the blown-up deformation remains
    dfm = blowup.DeformationSpec(E2, 1e-3)
    lam = 1e-2
    terms = blowup.deformation_terms(G12, case1, dfm, 1.0)
    r = blowup.glue_comparison(G12, case1.curve(), lam, 1.0, 1000, dfm, case1)
    expected = lam ** ((2 - 1) / (2 + 1)) * terms.direct_diff
    assert abs(r.difference - expected) <= 1e-8 * (1 + abs(expected))


def test_glue_rejects_non_isolated():
    def pos(t):
        return max(abs(t) - 0.1, 0.0) * E1

    def vel(t):
        return (np.sign(t) if abs(t) > 0.1 else 0.0) * E1

    c = blowup.Curve(pos, vel, -1.0, 1.0, (-0.1, 0.1))
    spec, _ = blowup.make_homothetic(G12, E1, E1)
    with pytest.raises(DomainError):
        blowup.glue_comparison(G12, c, 0.5, 1.0, 1000, None, spec)


def test_glue_rejects_bad_lambda(case1):
    with pytest.raises(DomainError):
        blowup.glue_comparison(G12, case1.curve(), 2.0, 1.0, 1000, None, case1)
