import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hutchinson.cases import hyperbola_operator, unitdisk_operator
from hutchinson.field import analyze
from hutchinson.minset import (CellState, Grid, _refine_border, boundary, check_backward_containment,
                               check_exterior_rays, compute_minset, far_field_for, grid_to_csv,
                               hausdorff, inner_approximation, outer_approximation,
                               point_to_polylines)

WIN = (-1.6, -1.6, 1.6, 1.6)
CIRCLE = np.exp(1j * np.linspace(0, 2 * math.pi, 2001))


@pytest.fixture(scope="module")
def disk():
    spec = analyze(*unitdisk_operator(1))
    return spec, compute_minset(spec, WIN, h=0.05, budget=3000, seed=0)


def _winding(v, z0):
    return round(float(np.sum(np.angle((np.roll(v, -1) - z0) / (v - z0)))) / (2 * math.pi))


def test_hausdorff_identical_is_zero():
    sq = np.array([0, 1, 1 + 1j, 1j, 0])
    assert hausdorff(sq, sq) == 0.0


def test_hausdorff_shifted_square():
    sq = np.array([0, 1, 1 + 1j, 1j, 0])
    assert hausdorff(sq, sq + 0.1) == pytest.approx(0.1)


def test_hausdorff_rejects_empty():
    with pytest.raises(ValueError):
        hausdorff(np.zeros(0, complex), np.array([0j]))


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=2, max_size=12),
       st.lists(st.tuples(st.floats(-6, 6), st.floats(-6, 6)), min_size=1, max_size=10))
def test_point_to_polylines_brute_force(verts, queries):
    v = np.array([complex(x, y) for x, y in verts])
    q = np.array([complex(x, y) for x, y in queries])
    got = point_to_polylines(q, [v])
    t = np.linspace(0, 1, 2001)
    dense = np.concatenate([a + t * (b - a) for a, b in zip(v[:-1], v[1:])])
    ref = np.min(np.abs(q[:, None] - dense[None, :]), axis=1)
    seg = np.max(np.abs(np.diff(v)))
    assert np.all(got <= ref + 1e-12)
    assert np.all(ref - got <= seg / 2000 + 1e-12)


def test_unit_disk_boundary_is_one_closed_curve(disk):
    _, res = disk
    assert len(res.boundary) == 1
    c = res.boundary[0]
    assert c.meta["closed"]
    assert abs(_winding(c.vertices, 0.0)) == 1
    assert hausdorff(res.boundary, CIRCLE) <= 2 * 0.05


def test_unit_disk_checks(disk):
    spec, res = disk
    assert check_exterior_rays(spec, res, n=300)["violations"] == 0
    assert check_backward_containment(spec, res, n=60)["violations"] == 0


def test_distance_to_set(disk):
    _, res = disk
    assert res.distance_to_set(np.array([0j]))[0] == 0.0
    d = res.distance_to_set(np.array([1.5 + 0j]))[0]
    assert 0.3 <= d <= 0.6


def test_grid_to_csv_format():
    g = Grid.from_window((0, 0, 1, 0.5), 0.25)
    g.state[0, 1] = CellState.OUT
    g.state[1, 3] = CellState.PINNED
    lines = grid_to_csv(g).splitlines()
    assert lines[0].startswith("# origin_x=0.0,origin_y=0.0,h=0.25,nx=4,ny=2,states=OUT:0|IN:1|PINNED:2")
    assert lines[1:] == ["1,0,1,1", "1,1,1,2"]


def test_boundary_of_full_grid_is_empty():
    g = Grid.from_window((0, 0, 1, 1), 0.25)
    assert len(boundary(g)) == 0


def test_inner_budget_zero_is_zpq():
    spec = analyze(*unitdisk_operator(3))
    pts = inner_approximation(spec, 0)
    assert np.allclose(np.sort_complex(pts), np.sort_complex(spec.zpq.points))


def test_strip_inner_points_cover_segment():
    spec = analyze(*hyperbola_operator(1j))
    pts = inner_approximation(spec, 2000, window=(-4, -1, 4, 2), h=0.05)
    target = 1j * np.linspace(0.5, 1, 11)
    d = np.min(np.abs(target[:, None] - pts[None, :]), axis=1)
    assert np.all(d <= 0.05)


def test_outer_needs_inner_points():
    spec = analyze(*unitdisk_operator(1))
    with pytest.raises(ValueError):
        outer_approximation(spec, WIN, 0.1, np.zeros(0, complex))


def test_refinement_keeps_pinned_cells():
    spec = analyze(*unitdisk_operator(3))
    inner = inner_approximation(spec, 2000, window=WIN, h=0.05)
    far = far_field_for(spec, WIN)
    grid = outer_approximation(spec, WIN, 0.05, inner, far_field=far)
    before = grid.state.copy()
    _refine_border(spec, grid, inner, far)
    pinned = before == CellState.PINNED
    assert np.all(grid.state[pinned] == CellState.PINNED)
    # refinement only releases cells, never adds them
    assert np.all(grid.state[before == CellState.OUT] == CellState.OUT)
