import numpy as np
import pytest

from hutchinson import acceptance
from hutchinson.cases import oracle_hyperbola
from hutchinson.classify import (ArcKind, CornerVerdict, PointType, classify_point, convexity_check,
                                 corner_admissibility, delta, gamma)

# minimal-set runs are cached in the acceptance module and shared with its tests


def _hyperbola_part(name):
    return {c.name: c for c in oracle_hyperbola(1 + 0.8j)}[name]


def _f1(x):
    return _hyperbola_part("f1_global").sampler(np.array([x]))[0].imag


def _fx(name):
    return acceptance.FIXTURES[name].spec, acceptance.fixture_result(name)


def test_corner_admissibility():
    assert corner_admissibility(acceptance.FIXTURES["spiral"].spec, 1) is CornerVerdict.ADMISSIBLE
    hyp = acceptance.FIXTURES["hyperbola"].spec
    assert corner_admissibility(hyp, 1 + 0.8j) is CornerVerdict.ADMISSIBLE
    assert corner_admissibility(hyp, 0.3 + 2j) is CornerVerdict.VIOLATION


@pytest.mark.parametrize("x", [9.166666666666666, 17.333333333333332])
def test_hyperbola_upper_branch_is_global(x):
    spec, res = _fx("hyperbola")
    z = complex(x, _f1(x))
    p = classify_point(spec, z, res)
    assert p.type is PointType.GLOBAL
    assert gamma(spec, z, res).nonempty is False
    assert p.delta_nonempty and delta(spec, z, res)
    assert convexity_check(spec, z, res, p).passed is True


def test_hyperbola_local_arc_point():
    spec, res = _fx("hyperbola")
    f2 = _hyperbola_part("f2_local")
    z = complex(f2.sampler(np.array([3.414213562373095]))[0])
    p = classify_point(spec, z, res)
    assert p.type is PointType.LOCAL
    assert p.gamma_nonempty is True and not p.delta_nonempty
    v = convexity_check(spec, z, res, p)
    assert v.category in ("", "LOCAL")


def test_hyperbola_extruding_point():
    spec, res = _fx("hyperbola")
    rep = acceptance._report("hyperbola")
    ext = [p.z for p in rep.special_points if p.type is PointType.EXTRUDING]
    assert len(ext) == 1
    assert abs(ext[0] - complex(5.8284271, 0.1372583)) <= 1e-3
    assert rep.count(ArcKind.LOCAL_ARC) == 1


def test_unit_disk_segments_are_local():
    spec, res = _fx("unitdisk_k1")
    rep = acceptance._report("unitdisk_k1")
    assert rep.segments and all(s.kind is ArcKind.LOCAL_ARC for s in rep.segments)
    assert rep.unresolved_fraction == 0.0
    roots = sorted((p.z for p in rep.special_points if p.type is PointType.ROOT_PQ), key=lambda z: z.real)
    assert np.allclose(roots, [-1, 1])
    p = classify_point(spec, 1j, res)
    assert p.type is PointType.LOCAL
    assert convexity_check(spec, 1j, res, p).passed is True


def test_periodic_single_closed_local_arc():
    rep = acceptance._report("periodic")
    assert [s.kind for s in rep.segments] == [ArcKind.LOCAL_ARC]
    v = rep.segments[0].polyline.vertices
    assert np.max(np.abs(np.abs(v) - 1)) <= 2 * acceptance.FIXTURES["periodic"].h


def test_spiral_two_segments_meeting_at_root():
    rep = acceptance._report("spiral")
    assert sorted(s.kind.value for s in rep.segments) == ["GLOBAL_ARC", "LOCAL_ARC"]
    roots = [p.z for p in rep.special_points if p.type is PointType.ROOT_PQ]
    assert any(abs(z - 1) <= 1e-9 for z in roots)


def test_report_serialises():
    rep = acceptance._report("unitdisk_k1")
    d = rep.to_dict()
    assert set(d) >= {"points", "segments", "special_points", "unresolved_fraction"}
    assert d["segments"][0]["kind"] == "LOCAL_ARC"
