"""Fixture registry and the acceptance checks run by ``hutchinson verify``.

Each check returns a :class:`CriterionResult`; nothing here raises on a
failed check.  Minimal-set computations are cached per process so that
the invariance and containment checks can reuse the fixture runs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .cases import (oracle_hyperbola, oracle_spiral, oracle_strip_segment, oracle_unitdisk,
                    periodic_boundary, periodic_operator, residue_hull, spiral_first_intersection,
                    spiral_operator, unitdisk_operator, hyperbola_operator, convex_hull)
from .classify import ArcKind, PointType, segment_boundary
from .field import OperatorSpec, RegimeTag, analyze, bounds, eval_R1, fully_irregular, regime
from .minset import (CellState, CurveSet, MinSetResult, check_backward_containment,
                     check_exterior_rays, compute_minset, hausdorff, point_to_polylines)
from .poly import Polynomial, roots
from .trace import (CurveTag, Polyline, count_components, inflection_curve, inflection_infinity,
                    trails_batch,
                    root_trail, trail_slope)
from .errors import PreconditionError

__all__ = ["CriterionResult", "Fixture", "FIXTURES", "CRITERIA", "REGIME_TABLE", "fixture_result",
           "format_table", "run"]


@dataclass(frozen=True)
class Fixture:
    name: str
    P: Polynomial
    Q: Polynomial
    window: tuple
    h: float
    budget: int

    @property
    def spec(self) -> OperatorSpec:
        return _spec(self.name)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"criterion {self.number:>2} {'PASS' if self.passed else 'FAIL'}  {self.title}"


def _fixture(name, PQ, window, h, budget) -> Fixture:
    return Fixture(name, PQ[0], PQ[1], window, h, budget)


FIXTURES = {f.name: f for f in [
    _fixture("unitdisk_k1", unitdisk_operator(1), (-2.0, -2.0, 2.0, 2.0), 0.02, 20000),
    _fixture("unitdisk_k2", unitdisk_operator(2), (-2.0, -2.0, 2.0, 2.0), 0.02, 20000),
    _fixture("unitdisk_k3", unitdisk_operator(3), (-2.0, -2.0, 2.0, 2.0), 0.02, 20000),
    _fixture("hyperbola", hyperbola_operator(1 + 0.8j), (-20.0, -0.6, 20.0, 1.4), 0.04, 30000),
    _fixture("strip", hyperbola_operator(1j), (-10.0, -1.0, 10.0, 2.0), 0.05, 20000),
    _fixture("spiral", spiral_operator(1 + 6j), (-0.9, -1.1, 1.3, 0.8), 0.01, 30000),
    _fixture("periodic", periodic_operator(1j), (-1.6, -1.6, 1.6, 1.6), 0.02, 20000),
    _fixture("residue", (Polynomial([0, 0, 3]), Polynomial([-1, 0, 0, 1])),
             (-1.6, -1.6, 1.6, 1.6), 0.02, 20000),
]}


@lru_cache(maxsize=None)
def _spec(name: str) -> OperatorSpec:
    f = FIXTURES[name]
    return analyze(f.P, f.Q)


@lru_cache(maxsize=None)
def _timed_result(name: str) -> tuple[MinSetResult, float]:
    f = FIXTURES[name]
    t0 = time.perf_counter()
    res = compute_minset(_spec(name), window=f.window, h=f.h, budget=f.budget, seed=0)
    return res, time.perf_counter() - t0


def fixture_result(name: str) -> MinSetResult:
    """Cached minimal-set computation of a named fixture."""
    return _timed_result(name)[0]


@lru_cache(maxsize=None)
def _report(name: str):
    return segment_boundary(_spec(name), fixture_result(name))


def _oracle_polylines(curves, n: int = 20000) -> list:
    return [c.sample(n) for c in curves]


# --------------------------------------------------------------------------
# criteria
# --------------------------------------------------------------------------

def criterion_1() -> CriterionResult:
    details, ok = {}, True
    for k in (1, 2, 3):
        name = f"unitdisk_k{k}"
        res, secs = _timed_result(name)
        circle = oracle_unitdisk(k).circle.polyline(4000)
        d = hausdorff(res.boundary, circle)
        good = d <= 0.04 and secs <= 60.0
        ok &= good
        details[name] = {"hausdorff": d, "limit": 0.04, "seconds": round(secs, 2)}
    return CriterionResult(1, "unit-disk family: Hausdorff to the unit circle <= 2h", ok, details)


def criterion_2() -> CriterionResult:
    f = FIXTURES["hyperbola"]
    res = fixture_result("hyperbola")
    parts = _oracle_polylines(oracle_hyperbola(1 + 0.8j))
    b = res.boundary.points()
    tube = float(np.max(point_to_polylines(b, parts)))
    rep = _report("hyperbola")
    target = complex(3 + 2 * math.sqrt(2), 0.8 / (3 + 2 * math.sqrt(2)))
    ext = [p.z for p in rep.special_points if p.type is PointType.EXTRUDING]
    ext_err = min((abs(z - target) for z in ext), default=math.inf)
    n_local = rep.count(ArcKind.LOCAL_ARC)
    ok = (tube <= 2 * f.h and ext_err <= 0.05 and n_local == 1
          and rep.unresolved_fraction <= 0.05)
    return CriterionResult(2, "hyperbola family: tube, extruding point, one local arc", ok, {
        "tube_max": tube, "tube_limit": 2 * f.h, "extruding_error": ext_err,
        "local_arcs": n_local, "global_arcs": rep.count(ArcKind.GLOBAL_ARC),
        "unresolved_fraction": rep.unresolved_fraction})


def criterion_3() -> CriterionResult:
    f = FIXTURES["strip"]
    res = fixture_result("strip")
    g = res.grid
    c = g.centers()
    mem = g.member()
    truth = oracle_strip_segment(1.0)(c)
    area = float(np.count_nonzero(mem != truth)) * f.h * f.h
    limit = 4 * f.h * (f.window[2] - f.window[0])
    ys = 1j * np.linspace(0.5, 1.0, 51)
    pinned = bool(np.all(g.state_at(ys) == CellState.PINNED))
    return CriterionResult(3, "strip example: symmetric difference and pinned segment",
                           area <= limit and pinned,
                           {"symdiff_area": area, "limit": limit, "segment_pinned": pinned,
                            "sweeps": res.sweeps})


def criterion_4() -> CriterionResult:
    lam = 1 + 6j
    f = FIXTURES["spiral"]
    res = fixture_result("spiral")
    ta, tg, z = spiral_first_intersection(lam)
    gap = abs(np.exp(-lam * ta) - 1 / (1 + lam * tg))
    parts = _oracle_polylines(oracle_spiral(lam))
    tube = float(np.max(point_to_polylines(res.boundary.points(), parts)))
    rep = _report("spiral")
    n_seg = len(rep.segments)
    ok = tube <= 2 * f.h and gap <= 1e-6 and n_seg == 2
    return CriterionResult(4, "spiral family: tube and two arc segments", ok, {
        "tube_max": tube, "tube_limit": 2 * f.h, "intersection": [z.real, z.imag],
        "intersection_residual": gap, "segments": n_seg,
        "kinds": [s.kind.value for s in rep.segments]})


def criterion_5() -> CriterionResult:
    spec = analyze(*periodic_operator(1j))
    leaf = periodic_boundary(spec)
    v = leaf.vertices
    radial = float(np.max(np.abs(np.abs(v) - 1.0)))
    e = np.diff(np.append(v, v[0]))
    e = e[np.abs(e) > 0]
    turn = np.angle(np.roll(e, -1) / e)
    turn = turn[np.abs(turn) > 1e-12]
    convex = bool(np.all(turn > 0) or np.all(turn < 0))
    d_zpq = float(np.min(np.abs(v[:, None] - spec.zpq.points[None, :])))
    im = np.abs(np.imag(eval_R1(spec, v)))
    meets = d_zpq <= 1e-3 or bool(np.any(im <= 1e-3))
    ok = leaf.closed and radial <= 1e-3 and convex and meets
    return CriterionResult(5, "periodic case: closed convex leaf on the unit circle", ok, {
        "closed": leaf.closed, "max_radial_error": radial, "convex": convex,
        "distance_to_ZPQ": d_zpq})


def criterion_6() -> CriterionResult:
    details, ok = {}, True
    for name in FIXTURES:
        rep = check_exterior_rays(_spec(name), fixture_result(name), n=1000, seed=0)
        details[name] = rep
        ok &= rep["violations"] == 0
    return CriterionResult(6, "invariance: exterior rays never enter pinned cells", ok, details)


def criterion_7() -> CriterionResult:
    details, ok = {}, True
    for name in FIXTURES:
        rep = check_backward_containment(_spec(name), fixture_result(name), n=200, seed=0)
        details[name] = rep
        ok &= rep["violations"] == 0
    return CriterionResult(7, "backward trajectories of interior points stay in the set", ok,
                           details)


TRAIL_CASES = [
    ("unitdisk_k2", [0.3 + 0.2j, -0.5 + 0.1j, 0.1 - 0.6j]),
    ("hyperbola", [2.0 + 0.3j, -1.0 + 0.2j, 0.5 + 0.5j]),
    ("spiral", [0.4 - 0.1j, 0.2 + 0.3j]),
    ("residue", [0.2 + 0.1j, -0.4 - 0.3j]),
]


def _trail_checks(spec: OperatorSpec, u: complex) -> dict:
    curves = root_trail(spec, u, t_max=1e3, max_move=0.01)
    worst_res, worst_slope, n_slope = 0.0, 0.0, 0
    zpq = spec.zpq.points
    for c in curves:
        v, t = c.vertices, c.meta["t"]
        tq = t * spec.Q(v)
        zp = (v - u) * spec.P(v)
        scale = np.maximum(np.abs(tq) + np.abs(zp), 1.0)
        worst_res = max(worst_res, float(np.max(np.abs(tq + zp) / scale)))
        for i in range(2, v.size - 2, max(1, v.size // 25)):
            z0 = v[i]
            if zpq.size and np.min(np.abs(zpq - z0)) < 1e-2:
                continue
            if abs(v[i + 1] - v[i - 1]) < 1e-9 or abs(z0 - u) < 1e-6:
                continue
            try:
                rep = trail_slope(spec, u, z0)
            except PreconditionError:
                continue
            if rep.fan:
                continue
            # second-order difference quotient, unequal spacing
            a, b = v[i] - v[i - 1], v[i + 1] - v[i]
            ta = abs(a)
            tb = abs(b)
            d = (b * ta * ta + a * tb * tb) / (ta * tb * (ta + tb))
            ang = float(np.angle(d)) % math.pi
            diff = min(min(abs(ang - s), math.pi - abs(ang - s)) for s in rep.slopes)
            worst_slope = max(worst_slope, diff)
            n_slope += 1
    # follow the branches down to t = 1e-24: a root of P of multiplicity m only
    # separates like t^(1/m), so the default start of the trail is too coarse
    tb = trails_batch(spec, [u], t_max=1e-20, n_steps=4, t_min=1e-24)
    starts = [v[1] if tv[0] == 0.0 and v.size > 1 else v[0] for v, tv, _ in tb.branches[0]]
    zp = roots(spec.Pr).expanded() if spec.Pr.degree >= 1 else np.zeros(0, dtype=np.complex128)
    expected = np.concatenate([[u], zp])
    if len(starts) != expected.size:
        worst_end = math.inf
    else:
        cost = np.abs(np.array(starts)[:, None] - expected[None, :])
        r, c = linear_sum_assignment(cost)
        worst_end = float(np.max(cost[r, c]))
    return {"residual": worst_res, "slope_error": worst_slope, "slope_samples": n_slope,
            "endpoint_error": worst_end, "branches": len(curves)}


def criterion_8() -> CriterionResult:
    details, ok = {}, True
    for name, us in TRAIL_CASES:
        spec = _spec(name)
        for u in us:
            r = _trail_checks(spec, u)
            details[f"{name} u={u}"] = r
            ok &= r["residual"] <= 1e-9 and r["slope_error"] <= 1e-3 and r["endpoint_error"] <= 1e-6
    return CriterionResult(8, "root trails: residual, slope and start points", ok, details)


def _numeric_infinity_dirs(spec: OperatorSpec, rho: float = 1e6, n: int = 20000) -> np.ndarray:
    """Angles where Im R' changes sign on a large circle, refined by bisection."""
    # half-step offset keeps exact zeros (axis directions) off the sample grid
    th = (np.arange(n) + 0.5) * (2 * math.pi / n)

    def f(a):
        return np.imag(eval_R1(spec, rho * np.exp(1j * np.asarray(a))))

    v = f(th)
    nxt = np.roll(v, -1)
    idx = np.nonzero(np.sign(v) * np.sign(nxt) < 0)[0]
    lo, hi = th[idx], th[idx] + 2 * math.pi / n
    flo = f(lo)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        same = np.sign(fm) == np.sign(flo)
        lo = np.where(same, mid, lo)
        flo = np.where(same, fm, flo)
        hi = np.where(same, hi, mid)
    return np.sort((0.5 * (lo + hi)) % (2 * math.pi))


def criterion_9() -> CriterionResult:
    details, ok = {}, True
    axes_spec = analyze(Polynomial([0, 1]), Polynomial([-1]))
    curves = inflection_curve(axes_spec, (-2.0, -2.0, 2.0, 2.0), 0.05)
    v = curves.points()
    axes_err = float(np.max(np.abs(v.real * v.imag) / np.maximum(np.abs(v) ** 2, 1e-300)))
    axes_ok = axes_err <= 1e-3 and len(curves) > 0
    details["axes"] = {"max_rel_xy": axes_err}
    ok &= axes_ok
    for name, f in FIXTURES.items():
        spec = _spec(name)
        comp = count_components(inflection_curve(spec, f.window, f.h), f.h)
        details[f"components {name}"] = {"count": comp, "d": bounds(spec).d}
        ok &= comp <= bounds(spec).d
    gap_minus_one = [("hyperbola", _spec("hyperbola")), ("strip", _spec("strip")),
                     ("axes", axes_spec),
                     ("interlacing", analyze(Polynomial([-1, 0, 1]), Polynomial([0, 1])))]
    for name, spec in gap_minus_one:
        formula = np.sort(np.array(inflection_infinity(spec)))
        numeric = _numeric_infinity_dirs(spec)
        match = formula.size == numeric.size and bool(np.all(np.abs(formula - numeric) <= 1e-5))
        details[f"infinity {name}"] = {"formula": formula.tolist(), "numeric": numeric.tolist()}
        ok &= match
    return CriterionResult(9, "curve of inflections: axes, component counts, directions", ok,
                           details)


def _P(*c):
    return Polynomial(list(c))


# (label, P, Q, expected regime, expected irregularity case)
REGIME_TABLE = [
    ("gap 2", _P(1), _P(0, 0, 1), RegimeTag.TRIVIAL_PLANE, None),
    ("gap 1, Re lambda < 0", _P(-1, 1), _P(0, -1 + 1j) * _P(-1, 1), RegimeTag.TRIVIAL_PLANE, None),
    ("unit disk k=1", *unitdisk_operator(1), RegimeTag.COMPACT, None),
    ("hyperbola", *hyperbola_operator(1 + 0.8j), RegimeTag.STRIP_LIKE, None),
    ("gap 0", _P(1, 1), _P(-2 - 1j, 2 + 1j), RegimeTag.CONE_LIKE, None),
    ("constant R", _P(1, 1), _P(3, 3), RegimeTag.FULLY_IRREGULAR, "a"),
    ("linear R, deg Q = 1", _P(1), _P(-1 - 2j, 1 + 2j), RegimeTag.FULLY_IRREGULAR, "b"),
    ("linear R, lambda > 0", *spiral_operator(2.0), RegimeTag.FULLY_IRREGULAR, "c"),
    ("interlacing real roots", _P(-1, 0, 1), _P(0, 1), RegimeTag.FULLY_IRREGULAR, "d"),
    ("both constant", _P(1), _P(2), RegimeTag.NO_MINIMAL, None),
]


def criterion_10() -> CriterionResult:
    details, agree = {}, 0
    for label, P, Q, tag, case in REGIME_TABLE:
        spec = analyze(P, Q)
        got = regime(spec).tag
        got_case = fully_irregular(spec) if got is RegimeTag.FULLY_IRREGULAR else None
        good = got is tag and got_case == case
        agree += good
        details[label] = {"expected": tag.value, "got": got.value, "case": got_case,
                          "agree": good}
    return CriterionResult(10, "regime classifier on the 10-operator table",
                           agree == len(REGIME_TABLE), {"agreement": f"{agree}/{len(REGIME_TABLE)}",
                                                        **details})


def criterion_11() -> CriterionResult:
    spec = _spec("residue")
    f = FIXTURES["residue"]
    hull = residue_hull(spec)
    roots3 = np.exp(2j * math.pi * np.arange(3) / 3)
    exact = hull.size == 3 and all(np.min(np.abs(hull - r)) <= 1e-12 for r in roots3)
    res = fixture_result("residue")
    out = _outside_distance(hull, convex_hull(res.grid.centers()[res.grid.member()]))
    ok = exact and out <= f.h
    return CriterionResult(11, "residue hull: cube-roots triangle contains the set hull", ok, {
        "hull": [[float(z.real), float(z.imag)] for z in hull], "max_outside": out,
        "limit": f.h})


def _outside_distance(poly: np.ndarray, pts: np.ndarray) -> float:
    """Largest distance from ``pts`` to the convex polygon ``poly`` (0 inside)."""
    from .cases import point_in_polygon
    inside = point_in_polygon(poly, pts)
    if np.all(inside):
        return 0.0
    d = point_to_polylines(pts[~inside], [np.append(poly, poly[0])])
    return float(np.max(d))


CRITERIA: dict[int, Callable[[], CriterionResult]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
    11: criterion_11,
}


def run(numbers: Optional[list] = None) -> list[CriterionResult]:
    """Run the selected criteria (all by default); errors count as failures."""
    out = []
    for k in (numbers or sorted(CRITERIA)):
        try:
            out.append(CRITERIA[k]())
        except Exception as exc:  # a crash is a failed criterion, not an aborted run
            out.append(CriterionResult(k, CRITERIA[k].__name__, False,
                                       {"error": f"{type(exc).__name__}: {exc}"}))
    return out


def format_table(results: list[CriterionResult]) -> str:
    return "\n".join(r.line() for r in results)
