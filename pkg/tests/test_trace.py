import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hutchinson.errors import NotOnTrail, StartAtSingularity
from hutchinson.field import analyze, eval_R, eval_R1
from hutchinson.poly import Polynomial as Pn
from hutchinson.trace import (AtInfinity, Concavity, CurveTag, Direction, LocusKind, StopRule,
                              count_components, horizontal_locus, inflection_curve,
                              inflection_infinity, integral_curve, locus_decomposition,
                              root_trail, special_line, trail_concavity, trail_slope,
                              trails_batch)

MINUS_ONE_OVER_Z = (Pn([0, 1]), Pn([-1]))


def _spec(P, Q):
    return analyze(P, Q)


def test_integral_curve_is_logarithmic_spiral():
    lam = -0.5 + 3j
    s = _spec(Pn([1]), Pn([0, lam]))
    pl = integral_curve(s, 1.0, Direction.FORWARD, StopRule(h=0.02, max_arclength=3.0))
    v = pl.vertices[1:]
    t = np.log(np.abs(v)) / lam.real
    # unwrap the angle along the curve to recover the time parameter
    ang = np.unwrap(np.angle(pl.vertices))[1:]
    assert np.allclose(ang, lam.imag * t, atol=1e-6)
    assert np.max(np.abs(v - np.exp(lam * t))) <= 1e-6


def test_integral_curve_hyperbola_level_set():
    s = _spec(*MINUS_ONE_OVER_Z)
    pl = integral_curve(s, 1 + 1j, Direction.FORWARD,
                        StopRule(window=(-5, -5, 5, 5), h=0.02, max_arclength=20))
    v = pl.vertices
    assert np.max(np.abs(v.real * v.imag - 1)) <= 1e-5


def test_integral_curve_closed_circle():
    s = _spec(Pn([1]), Pn([0, 1j]))
    pl = integral_curve(s, 1.0, Direction.FORWARD, StopRule(h=0.02, max_arclength=20))
    assert pl.closed
    assert np.max(np.abs(np.abs(pl.vertices) - 1)) <= 1e-6


def test_integral_curve_rejects_singular_start():
    s = _spec(*MINUS_ONE_OVER_Z)
    with pytest.raises(StartAtSingularity):
        integral_curve(s, 0.0, Direction.FORWARD, StopRule())


def test_inflection_curve_axes():
    s = _spec(*MINUS_ONE_OVER_Z)
    cs = inflection_curve(s, (-2, -2, 2, 2), 0.05)
    v = cs.points()
    assert v.size > 0
    assert np.all(np.abs(v.real * v.imag) <= 1e-3 * np.abs(v) ** 2)
    assert all(c.tag is CurveTag.INFLECTION for c in cs)


def test_inflection_curve_empty_for_nonreal_constant_derivative():
    s = _spec(Pn([1]), Pn([0, 1 + 6j]))
    assert len(inflection_curve(s, (-2, -2, 2, 2), 0.05)) == 0


def test_inflection_curve_residual_and_component_bound():
    P, Q = Pn([1, 1]), Pn([0, -1, 1])
    s = _spec(P, Q)
    h = 0.03
    cs = inflection_curve(s, (-3, -3, 3, 3), h)
    v = cs.points()
    v = v[np.abs(v + 1) > 0.05]  # stay off the pole
    r1 = eval_R1(s, v)
    assert np.max(np.abs(r1.imag) / np.maximum(1.0, np.abs(r1))) <= 1e-4
    from hutchinson.field import bounds
    assert count_components(cs, h) <= bounds(s).d


def test_locus_pole_is_singular_with_two_branches():
    s = _spec(*MINUS_ONE_OVER_Z)
    rep = locus_decomposition(s, inflection_curve(s, (-2, -2, 2, 2), 0.05), 0.05)
    sing = [p for p in rep.points if p.kind is LocusKind.SINGULAR]
    assert len(sing) == 1 and abs(sing[0].z) < 1e-9 and sing[0].branch_count == 2


def test_locus_empty_input():
    s = _spec(Pn([1]), Pn([0, 1 + 6j]))
    from hutchinson.trace import CurveSet
    rep = locus_decomposition(s, CurveSet([]), 0.05)
    assert rep.points == [] or all(p.kind is LocusKind.SINGULAR for p in rep.points)


def test_locus_real_axis_tangency_line():
    s = _spec(Pn([0, 1]), Pn([-1, 0, 1]))
    rep = locus_decomposition(s, inflection_curve(s, (-3, -3, 3, 3), 0.05), 0.05)
    lines = [p for p in rep.points if p.kind is LocusKind.TANGENCY_LINE]
    assert any(abs(p.z.imag) < 1e-9 for p in lines)


def test_inflection_infinity_examples():
    s = _spec(*MINUS_ONE_OVER_Z)
    assert np.allclose(sorted(inflection_infinity(s)), [0, math.pi / 2, math.pi, 3 * math.pi / 2])
    assert inflection_infinity(_spec(Pn([1]), Pn([0, 1 + 6j]))) == []


def test_inflection_infinity_gap_zero_square():
    # R = 1 + mu/z: Im(-mu/z^2) = 0 gives a regular 4-gon of directions
    mu = 1 + 2j
    dirs = np.sort(inflection_infinity(_spec(Pn([0, 1]), Pn([mu, 1]))))
    assert dirs.size == 4
    gaps = np.diff(np.append(dirs, dirs[0] + 2 * math.pi))
    assert np.allclose(gaps, math.pi / 2)
    z = 1e4 * np.exp(1j * dirs)
    assert np.allclose(np.imag(-mu / z ** 2) * 1e8, 0, atol=1e-6)


def test_horizontal_locus_real_axis():
    s = _spec(*MINUS_ONE_OVER_Z)
    v = horizontal_locus(s, (-3, -2, 3, 2), 0.05).points()
    assert v.size and np.max(np.abs(v.imag)) <= 1e-8


def test_horizontal_locus_residual():
    s = _spec(Pn([1, 0, 1]), Pn([0, 1]))
    v = horizontal_locus(s, (-3, -3, 3, 3), 0.05).points()
    v = v[np.min(np.abs(v[:, None] - s.zpq.points[None, :]), axis=1) > 0.05]
    th = (np.angle(s.lam) + math.pi) / 2
    R = eval_R(s, v)
    assert np.max(np.abs(np.imag(np.exp(-1j * th) * R)) / np.abs(R)) <= 1e-4


def test_special_line_direction():
    s = _spec(Pn([1, 0, 1]), Pn([0, 1]))
    line = special_line(s)
    assert abs(line.direction ** 2 / abs(line.direction) ** 2 + s.lam / abs(s.lam)) < 1e-12


def test_trail_at_t_zero_is_u_and_zeros_of_P():
    s = _spec(Pn([1, 1]), Pn([0, -1, 1]))
    u = 0.4 + 0.3j
    cs = root_trail(s, u, t_max=10)
    starts = sorted((c.vertices[0] for c in cs), key=lambda z: z.real)
    assert np.allclose(starts, sorted([u, -1.0], key=lambda z: z.real), atol=1e-12)


def test_trail_residual_hyperbola_family():
    alpha = 1 + 0.8j
    P = Pn.from_roots([0, alpha]) * -1  # z (alpha - z)
    Q = Pn.from_roots([alpha])
    s = _spec(P, Q)
    cs = root_trail(s, alpha, t_max=1e4, window=(-50, -50, 50, 50))
    for c in cs:
        t = c.meta["t"]
        res = np.abs(t * Q(c.vertices) + (c.vertices - alpha) * P(c.vertices))
        assert np.max(res) <= 1e-9


def test_trail_tends_to_zeros_of_Q():
    s = _spec(Pn([1, 1]), Pn([0, -1, 1]))
    # the distance to Z(Q) decays like 1/t (about 4e-4 at t = 1e4 here)
    cs = root_trail(s, 3.0, t_max=1e5)
    ends = np.array([c.vertices[-1] for c in cs])
    for r in (0.0, 1.0):
        assert np.min(np.abs(ends - r)) <= 1e-4


@given(st.floats(-2, 2), st.floats(0.1, 2))
def test_trail_residual_property(x, y):
    s = _spec(Pn([1, 0, 1]), Pn.from_roots([0.5, -1 + 0.5j]))
    u = complex(x, y)
    if np.min(np.abs(s.zpq.points - u)) < 1e-3:
        return
    for c in root_trail(s, u, t_max=1e3):
        t = c.meta["t"]
        z = c.vertices
        scale = np.maximum(np.abs(t * s.Q(z)) + np.abs((z - u) * s.P(z)), 1.0)
        assert np.max(np.abs(t * s.Q(z) + (z - u) * s.P(z)) / scale) <= 1e-9


def test_trails_batch_matches_single():
    s = _spec(Pn([1, 1]), Pn([0, -1, 1]))
    us = [0.3 + 0.2j, -0.5 + 1j]
    tb = trails_batch(s, us, t_max=100)
    for i, u in enumerate(us):
        single = root_trail(s, u, t_max=100)
        assert len(tb.branches[i]) == len(single)


def test_trail_slope_hand_example():
    s = _spec(*MINUS_ONE_OVER_Z)
    rep = trail_slope(s, -1.0, 1.0)
    assert rep.m == 1
    assert min(rep.slopes[0], math.pi - rep.slopes[0]) <= 1e-12


def test_trail_slope_requires_point_on_trail():
    s = _spec(*MINUS_ONE_OVER_Z)
    with pytest.raises(NotOnTrail):
        trail_slope(s, 1j, 1.0)


def test_trail_slope_matches_numerical_tangent():
    s = _spec(Pn([1, 1]), Pn([0, -1, 1]))
    u = 0.3 + 0.2j
    c = root_trail(s, u, t_max=100, max_move=0.005)[0]
    v = c.vertices
    i = v.size // 2
    d = v[i + 1] - v[i - 1]
    rep = trail_slope(s, u, v[i])
    ang = float(np.angle(d)) % math.pi
    err = min(abs(ang - rep.slopes[0]), math.pi - abs(ang - rep.slopes[0]))
    assert err <= 1e-3


def test_branch_fan_at_critical_point_of_R():
    # R = z^2 - 1 has R'(0) = 0; u at infinity in direction arg R(0) = pi
    s = _spec(Pn([1]), Pn([-1, 0, 1]))
    rep = trail_slope(s, AtInfinity(math.pi), 0.0)
    assert rep.fan and rep.m >= 2 and rep.on_IR
    gaps = np.diff(sorted(rep.slopes))
    assert np.allclose(gaps, math.pi / rep.m)
    assert abs(eval_R1(s, 0.0).imag) <= 1e-12


def test_concavity_matches_geometric_side():
    s = _spec(Pn([1, 1]), Pn([0, -1, 1]))
    u = 2.0 + 0.5j
    checked = 0
    for c in root_trail(s, u, t_max=1e3, max_move=0.002):
        v = c.vertices
        for i in range(5, v.size - 5, max(1, v.size // 12)):
            z0 = v[i]
            r1 = eval_R1(s, z0)
            if abs(r1.imag) < 1e-3 * abs(r1) or abs(z0 - u) < 1e-3 or np.min(np.abs(z0 - s.zpq.points)) < 1e-2:
                continue
            out = trail_concavity(s, u, z0)
            if out["verdict"] is Concavity.TRAIL_INFLECTION:
                continue
            tan = v[i + 1] - v[i - 1]
            # side of the trail germ: mean offset of the two neighbours from the tangent line
            side_trail = np.sign(np.imag(np.conj(tan) * ((v[i + 2] - z0) + (v[i - 2] - z0))))
            side_ray = np.sign(np.imag(np.conj(tan) * eval_R(s, z0)))
            if side_trail == 0 or side_ray == 0:
                continue
            expected = Concavity.SAME_SIDE if side_trail == side_ray else Concavity.OPPOSITE_SIDE
            assert out["verdict"] is expected
            checked += 1
    assert checked >= 5


def test_concavity_transverse_side():
    s = _spec(Pn([1, 1]), Pn([0, -1, 1]))
    v = inflection_curve(s, (-3, -3, 3, 3), 0.05).points()
    v = v[np.min(np.abs(v[:, None] - s.zpq.points[None, :]), axis=1) > 0.2]
    from hutchinson.field import eval_R2
    R, R1, R2 = eval_R(s, v), eval_R1(s, v), eval_R2(s, v)
    z0 = v[np.argmax(np.abs(np.imag(R2 * R)) / np.abs(R2 * R))]
    R, R1 = complex(eval_R(s, z0)), complex(eval_R1(s, z0))
    for scale in (0.5, 5.0):
        u = z0 + scale * R  # on the associated ray, so z0 lies on the trail of u
        out = trail_concavity(s, u, z0)
        assert out["reference"] == "forward_trajectory"
        side = (R1 + R / (u - z0)).real
        assert out["verdict"] is (Concavity.OPPOSITE_SIDE if side > 0 else Concavity.SAME_SIDE)
