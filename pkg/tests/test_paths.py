import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisokepler.errors import DomainError, LiftAmbiguityError
from anisokepler.paths import (
    Path,
    action,
    action_derivatives,
    action_h,
    in_class,
    kinetic_energy_integral,
    potential_integral,
    read_path_csv,
    rescale_time,
    segment_actions,
    straight_path,
    winding_lift,
    write_path_csv,
)
from anisokepler.potential import PotentialParams

KEPLER = PotentialParams.gutzwiller((1.0, 1.0), 1.0)
G12 = PotentialParams.gutzwiller((1.0, 2.0), 1.0)
RADIAL = 0.5 + math.log(2)


def radial(N=16):
    return straight_path([1.0, 0.0], [2.0, 0.0], 1.0, N)


def arc(theta0, theta1, N, radius=1.0, T=1.0):
    th = np.linspace(theta0, theta1, N + 1)
    return Path(np.linspace(0, T, N + 1), radius * np.column_stack([np.cos(th), np.sin(th)]))


def test_radial_action_oracle():
    assert action(KEPLER, radial()) == pytest.approx(RADIAL, abs=1e-14)


def test_stationary_path():
    R, T = 3.0, 2.5
    p = Path([0.0, 1.0, T], [[0.0, R]] * 3)
    u = 1.0 / (2 * R * R) ** 0.5
    assert action(G12, p) == pytest.approx(u * T, rel=1e-14)


def test_grid_refinement_radial():
    assert abs(action(KEPLER, radial(512)) - action(KEPLER, radial(1024))) <= 1e-8


def test_action_h_examples():
    p = radial()
    assert action_h(KEPLER, p, 0.5) == pytest.approx(RADIAL + 0.5, abs=1e-14)
    assert action_h(KEPLER, p, 0.0) == action(KEPLER, p)
    assert action_h(KEPLER, p, 1.0) - action_h(KEPLER, p, 0.5) == pytest.approx(0.5 * p.duration, abs=1e-14)


@pytest.mark.parametrize("delta", [0.5, 1.0, 2.0, 3.7])
def test_rescale_identity(delta):
    p = arc(0.2, 2.0, 40, radius=1.5)
    h = 0.5
    q = rescale_time(p, delta)
    K = kinetic_energy_integral(p)
    assert kinetic_energy_integral(q) == pytest.approx(K / delta, rel=1e-13)
    assert potential_integral(G12, q) == pytest.approx(delta * potential_integral(G12, p), rel=1e-13)
    expected = delta * action_h(G12, p, h) + (1 / delta - delta) * K
    assert action_h(G12, q, h) == pytest.approx(expected, rel=1e-13)


def test_rescale_rejects_nonpositive():
    with pytest.raises(DomainError):
        rescale_time(radial(), 0.0)


def test_radial_rescale_direct_quadrature():
    # radial path on [0, 2]: kinetic 1/4, potential 2 ln 2, plus h T = 1
    q = rescale_time(radial(), 2.0)
    assert action_h(KEPLER, q, 0.5) == pytest.approx(0.25 + 2 * math.log(2) + 1.0, abs=1e-13)


def test_action_additivity():
    p = arc(0.0, 2.5, 30, radius=1.2)
    k = 13
    total = action(G12, p)
    assert total == pytest.approx(action(G12, p.restrict(0, k)) + action(G12, p.restrict(k, 30)), rel=1e-14)
    np.testing.assert_allclose(np.sum(segment_actions(G12, p)), total, rtol=1e-14)


def test_quadrature_second_order():
    # continuum action of a circular arc at constant angular speed w, radius R
    R, w, T = 1.5, 2.0, 1.0
    exact = 0.5 * (R * w) ** 2 * T + T / R
    errs = [abs(action(KEPLER, arc(0.0, w * T, N, radius=R, T=T)) - exact) for N in (32, 64, 128)]
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


def test_collision_node_gives_infinite_action():
    p = Path([0.0, 1.0, 2.0], [[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]], collision_nodes=(1,))
    assert math.isinf(action(G12, p))
    with pytest.raises(DomainError):
        Path([0.0, 1.0, 2.0], [[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])


def test_segment_through_origin_is_infinite():
    p = Path([0.0, 1.0], [[-1.0, 0.0], [1.0, 0.0]])
    assert math.isinf(action(G12, p))


def test_near_origin_segment_refined():
    # chord from (-1, b) to (1, b) in unit time: kinetic 2, potential asinh(1/b)
    for b in (1e-2, 1e-5, 1e-8):
        p = Path([0.0, 1.0], [[-1.0, b], [1.0, b]])
        assert action(KEPLER, p) == pytest.approx(2.0 + math.asinh(1 / b), rel=1e-9)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    p = arc(0.1, 2.0, 12, radius=1.3)
    p = p.with_nodes(p.nodes + 0.05 * rng.normal(size=p.nodes.shape))
    D = action_derivatives(G12, p)
    step = 1e-6
    for k in (1, 6, 11):
        for i in range(2):
            e = np.zeros_like(p.nodes)
            e[k, i] = step
            fd = (action(G12, p.with_nodes(p.nodes + e)) - action(G12, p.with_nodes(p.nodes - e))) / (2 * step)
            assert D.grad[k, i] == pytest.approx(fd, rel=1e-6, abs=1e-9)
    assert D.value == pytest.approx(action(G12, p), rel=1e-14)


def test_winding_examples():
    assert winding_lift(arc(0, 2 * math.pi, 16)).delta == pytest.approx(2 * math.pi, abs=1e-14)
    assert winding_lift(radial()).delta == 0.0
    assert winding_lift(arc(0, math.pi, 16)).delta == pytest.approx(math.pi, abs=1e-14)


def test_winding_ambiguous_segment():
    p = Path([0.0, 1.0], [[1.0, 0.0], [-1.0, 0.0]])
    with pytest.raises(LiftAmbiguityError):
        winding_lift(p)
    with pytest.raises(LiftAmbiguityError):
        winding_lift(Path([0.0, 1.0, 2.0], [[1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]))


def test_in_class_examples():
    semi = arc(0, math.pi, 16)
    assert in_class(semi, 0.0, math.pi)
    assert not in_class(semi, 0.0, -math.pi)
    assert in_class(arc(0, 1.5 * math.pi, 24), 0.0, 1.5 * math.pi)
    assert not in_class(arc(0, 1.5 * math.pi, 24), 0.0, 1.5 * math.pi - 2 * math.pi)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_lift_additivity_and_reversal(a, b, c):
    p1 = arc(a, b, 40)
    p2 = arc(b, c, 40).shifted(1.0)
    joined = Path(np.concatenate([p1.times, p2.times[1:]]), np.vstack([p1.nodes, p2.nodes[1:]]))
    w = winding_lift(joined).delta
    assert w == pytest.approx(winding_lift(p1).delta + winding_lift(p2).delta, abs=1e-12)
    assert winding_lift(joined.reversed()).delta == pytest.approx(-w, abs=1e-12)


def test_csv_round_trip(tmp_path):
    p = arc(0.3, 2.9, 25, radius=1.7, T=3.3)
    f = tmp_path / "p.csv"
    write_path_csv(p, f)
    assert f.read_text().splitlines()[0] == "t,x1,x2"
    q = read_path_csv(f)
    np.testing.assert_array_equal(q.times, p.times)
    np.testing.assert_array_equal(q.nodes, p.nodes)
    assert abs(action(G12, q) - action(G12, p)) <= 1e-10


def test_csv_rejects_non_monotone(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("t,x1,x2\n0,1,0\n1,1,1\n0.5,0,1\n")
    with pytest.raises(DomainError):
        read_path_csv(f)


def test_path_invariants():
    with pytest.raises(DomainError):
        Path([0.0], [[1.0, 0.0]])
    with pytest.raises(DomainError):
        Path([0.0, 0.0], [[1.0, 0.0], [2.0, 0.0]])
