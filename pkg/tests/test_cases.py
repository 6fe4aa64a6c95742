import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial import ConvexHull

from hutchinson.cases import (convex_hull, halflines_set, hyperbola_operator, oracle_hyperbola,
                              oracle_spiral, oracle_strip_segment, oracle_unitdisk,
                              periodic_boundary, periodic_operator, point_in_polygon,
                              residue_hull, spiral_first_intersection, spiral_operator,
                              strip_hull, unitdisk_operator)
from hutchinson.errors import PreconditionViolated, WrongCase
from hutchinson.field import analyze, eval_R1
from hutchinson.minset import inner_curves, point_to_polylines
from hutchinson.poly import Polynomial as Pn

pts_strategy = st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10)), min_size=3, max_size=40)


def test_halflines_constant_field():
    s = analyze(Pn([-1, 1]), Pn([-2, 2]))
    cs = halflines_set(s, window=(-5, -5, 5, 5))
    assert len(cs) == 1
    v = cs[0].vertices
    assert v[0] == pytest.approx(1.0) and v[-1].imag == pytest.approx(0) and v[-1].real > 1


def test_halflines_coincident_directions():
    s = analyze(Pn([0, 0, 1]), Pn([0, 0, 1j]))
    for c in halflines_set(s, window=(-5, -5, 5, 5)):
        d = c.vertices[-1] - c.vertices[0]
        assert c.vertices[0] == pytest.approx(0) and d / abs(d) == pytest.approx(1j)


def test_halflines_need_constant_field():
    with pytest.raises(WrongCase):
        halflines_set(analyze(Pn([0, 1]), Pn([-1])))


def test_strip_hull_examples():
    h = strip_hull(analyze(*hyperbola_operator(1.0)))
    assert h.y_minus == 0 and h.y_plus == 0
    h = strip_hull(analyze(*hyperbola_operator(1j)))
    assert h.y_minus == pytest.approx(0) and h.y_plus == pytest.approx(1)


def test_strip_hull_contains_inner_points_and_is_tight():
    s = analyze(Pn([1, 0, 1]), Pn([-1 + 0.5j, 1]))
    hull = strip_hull(s)
    pts = np.concatenate(inner_curves(s, 4000, window=(-6, -6, 6, 6), h=0.05, seed=0))
    assert np.all(hull.contains(pts, 1e-9))
    w = hull.to_w(pts)
    assert np.any(w.imag < 0.95 * hull.y_minus)


def test_periodic_boundary_unit_circle():
    leaf = periodic_boundary(analyze(*periodic_operator(1j)))
    assert leaf.closed
    assert np.max(np.abs(np.abs(leaf.vertices) - 1)) <= 1e-3


def test_periodic_boundary_needs_imaginary_lambda():
    with pytest.raises(WrongCase):
        periodic_boundary(analyze(*spiral_operator(1 + 6j)))


def test_residue_hull_cube_roots():
    hull = residue_hull(analyze(Pn([0, 0, 3]), Pn([-1, 0, 0, 1])))
    roots = np.exp(2j * math.pi * np.arange(3) / 3)
    assert hull.size == 3
    for r in roots:
        assert np.min(np.abs(hull - r)) <= 1e-12


def test_residue_hull_single_root():
    hull = residue_hull(analyze(Pn([1]), Pn([0, 1])))
    assert hull.size == 1 and hull[0] == pytest.approx(0)


def test_residue_hull_rejects_negative_residue():
    # unit-disk k = 2: Q'(0)/P(0) = -1
    with pytest.raises(PreconditionViolated):
        residue_hull(analyze(*unitdisk_operator(2)))


def test_hyperbola_oracle_values():
    alpha = 1 + 0.8j
    parts = {c.name: c for c in oracle_hyperbola(alpha)}
    c = 3 + 2 * math.sqrt(2)
    ext = dict(parts["f2_local"].special_points)["extruding"]
    assert ext.real == pytest.approx(5.828427, abs=1e-6)
    assert ext.imag == pytest.approx(0.137259, abs=1e-6)
    assert ext == pytest.approx(complex(c, 0.8 / c))
    assert parts["f1_global"].sampler(np.array([1.0]))[0] == pytest.approx(alpha)
    assert parts["f3_global"].sampler(np.array([1.0]))[0].imag == pytest.approx(0.8 / 9)
    # f2 and f3 meet at the extruding point
    assert parts["f2_local"].sampler(np.array([c]))[0] == pytest.approx(
        parts["f3_global"].sampler(np.array([c]))[0])


def test_spiral_oracle():
    lam = 1 + 6j
    g, a = oracle_spiral(lam)
    assert g.sampler(0.0) == pytest.approx(1) and a.sampler(0.0) == pytest.approx(1)
    ta, tg, z = spiral_first_intersection(lam)
    assert abs(np.exp(-lam * ta) - z) <= 1e-6 and abs(1 / (1 + lam * tg) - z) <= 1e-6
    t = np.linspace(0, 2, 50)
    assert np.all(np.diff(np.abs(g.sampler(t))) < 0)


def test_unitdisk_oracle_circle_maps_outside():
    o = oracle_unitdisk(1)
    th = np.linspace(0.1, 2 * math.pi - 0.1, 50)
    for t in (0.1, 1.0, 10.0):
        assert np.all(o.ratio_sq(1.0, th, t) >= 1 - 1e-12)
    for t in (0.1, 1.0, 10.0):
        assert abs(o.ray_point(1.1, t)) > 1.1


@pytest.mark.parametrize("k", [1, 2, 3])
def test_unitdisk_first_integral_on_circle(k):
    o = oracle_unitdisk(k)
    th = np.linspace(0.05, 2 * math.pi / k - 0.05, 20)
    val = o.first_integral(np.exp(1j * th)).imag
    r = np.mod(val - math.pi / k, 2 * math.pi / k)
    assert np.all(np.minimum(r, 2 * math.pi / k - r) <= 1e-9)


def test_unitdisk_ratio_matches_direct_evaluation(rng):
    o = oracle_unitdisk(2)
    z = rng.normal(size=20) + 1j * rng.normal(size=20)
    t = rng.uniform(0, 3, size=20)
    direct = np.abs(o.ray_point(z, t)) ** 2 / np.abs(z) ** 2
    assert np.allclose(o.ratio_sq(np.abs(z) ** 2, np.angle(z), t), direct)


def test_strip_segment_membership():
    y0 = 1.0
    m = oracle_strip_segment(y0)
    assert m(0.75j * y0)
    assert m(1 + 0.4j * y0)
    assert not m(1 + 0.6j * y0)


def _ccw(v):
    c = v.mean()
    return v[np.argsort(np.angle(v - c))]


@given(pts_strategy)
def test_convex_hull_matches_scipy(pts):
    z = np.array([complex(x, y) for x, y in pts])
    try:
        ref = ConvexHull(np.column_stack([z.real, z.imag]))
    except Exception:
        return  # degenerate input: scipy refuses collinear sets
    hull = convex_hull(z)
    area = 0.5 * abs(np.sum(np.imag(np.conj(hull) * np.roll(hull, -1))))
    assert area == pytest.approx(ref.volume, rel=1e-9, abs=1e-9)
    # qhull merges nearly collinear vertices, so compare vertex sets up to a small distance
    theirs = _ccw(z[ref.vertices])
    assert np.max(np.min(np.abs(theirs[:, None] - hull[None, :]), axis=1)) <= 1e-9
    assert np.max(point_to_polylines(hull, [np.append(theirs, theirs[0])])) <= 1e-9


@given(pts_strategy, st.lists(st.tuples(st.floats(-12, 12), st.floats(-12, 12)), min_size=1, max_size=20))
def test_point_in_polygon_matches_halfplanes(pts, queries):
    z = np.array([complex(x, y) for x, y in pts])
    try:
        ref = ConvexHull(np.column_stack([z.real, z.imag]))
    except Exception:
        return
    hull = convex_hull(z)
    q = np.array([complex(x, y) for x, y in queries])
    xy = np.column_stack([q.real, q.imag])
    inside_ref = np.all(xy @ ref.equations[:, :2].T + ref.equations[:, 2] <= 0, axis=1)
    got = point_in_polygon(hull, q)
    # ignore points within rounding distance of the boundary
    d = point_to_polylines(q, [np.append(hull, hull[0])])
    far = d > 1e-7
    assert np.array_equal(got[far], inside_ref[far])


def test_hyperbola_operator_field():
    s = analyze(*hyperbola_operator(1 + 0.8j))
    z = np.array([2 + 1j, -3 + 0.5j])
    assert np.allclose(eval_R1(s, z), 1 / z ** 2)
