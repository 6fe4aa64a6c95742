"""Boundary point typology and arc segmentation of a computed minimal set.

Every test runs against an immutable :class:`~hutchinson.minset.MinSetResult`.
Two numerical correspondences drive the classification:

``gamma``
    does the forward integral curve from ``z`` (after a short initial
    stretch) meet the set again?
``delta``
    where does the associated ray ``z + t R(z)``, ``t > 0``, meet the set?

Both are tested against the cell approximation dilated by one cell width,
complemented by exact crossings with the inner polylines (which lie in the
set up to integration error).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from .field import (OperatorSpec, eval_R, eval_R1, eval_R2, invariant_lines,
                    local_expansion)
from .minset import MinSetResult, _exit_distance
from .trace import (AtInfinity, CurveTag, Direction, LocusKind, Polyline, StopRule,
                    _tangency_function, inflection_curve, inflection_identically_zero,
                    integral_curves, locus_decomposition, singular_points)

__all__ = [
    "ArcKind", "ArcSegment", "BoundaryPoint", "BoundaryReport", "ConvexityVerdict",
    "CornerVerdict", "DeltaHit", "DeltaSign", "GammaResult", "InflectionSide", "PointType",
    "classify_point", "classify_points", "convexity_check", "corner_admissibility",
    "delta", "gamma", "refine_extruding", "segment_boundary",
]

EPS_SING = 1e-6
IR_TOL = 1e-3
SIGN_TOL = 1e-3
FOLLOW_TOL = 0.25     # in cells: forward curve hugging inner points
FOLLOW_AMBIG = 0.4    # in cells: upper edge of the ambiguous band
FOLLOW_LEN = 40.0     # in cells: arclength over which following is judged
ZPQ_TOUCH = 0.05      # in cells: a ray this close to a zero of PQ meets it


class DeltaSign(str, Enum):
    MINUS = "MINUS"
    ZERO = "ZERO"
    PLUS = "PLUS"
    NOT_APPLICABLE = "NOT_APPLICABLE"


class PointType(str, Enum):
    LOCAL = "LOCAL"
    GLOBAL = "GLOBAL"
    EXTRUDING = "EXTRUDING"
    BOUNCING = "BOUNCING"
    SWITCH = "SWITCH"
    C1_INFLECTION = "C1_INFLECTION"
    C2_INFLECTION = "C2_INFLECTION"
    ROOT_PQ = "ROOT_PQ"
    IR_SINGULAR = "IR_SINGULAR"
    IR_TANGENCY = "IR_TANGENCY"
    UNRESOLVED = "UNRESOLVED"


class InflectionSide(str, Enum):
    PLUS = "PLUS"
    MINUS = "MINUS"
    ON = "ON"


class ArcKind(str, Enum):
    LOCAL_ARC = "LOCAL_ARC"
    GLOBAL_ARC = "GLOBAL_ARC"
    LINE_SEGMENT = "LINE_SEGMENT"


class CornerVerdict(str, Enum):
    ADMISSIBLE = "ADMISSIBLE"
    VIOLATION = "VIOLATION"


# types that cut the boundary into arcs
_SPECIAL = {PointType.BOUNCING, PointType.SWITCH, PointType.C1_INFLECTION,
            PointType.C2_INFLECTION, PointType.ROOT_PQ, PointType.IR_SINGULAR}


@dataclass(frozen=True)
class DeltaHit:
    u: Union[complex, AtInfinity]
    param: float
    sign: DeltaSign = DeltaSign.NOT_APPLICABLE
    grazing: bool = False

    @property
    def at_infinity(self) -> bool:
        return isinstance(self.u, AtInfinity)

    def to_dict(self) -> dict:
        if self.at_infinity:
            u = {"at_infinity": self.u.direction}
        else:
            u = [self.u.real, self.u.imag]
        return {"u": u, "param": None if math.isinf(self.param) else self.param,
                "sign": self.sign.value, "grazing": self.grazing}


@dataclass(frozen=True)
class GammaResult:
    """Outcome of the forward-trajectory test; ``nonempty`` is None when ambiguous."""

    nonempty: Optional[bool]
    hit: Optional[complex] = None
    mode: str = ""


@dataclass
class BoundaryPoint:
    z: complex
    on_IR: bool
    locus_kind: Optional[LocusKind]
    gamma_nonempty: Optional[bool]
    delta: list
    type: PointType
    inflection_side: InflectionSide
    gamma_hit: Optional[complex] = None

    @property
    def delta_nonempty(self) -> bool:
        return any(not d.grazing for d in self.delta)

    def to_dict(self) -> dict:
        return {"x": self.z.real, "y": self.z.imag, "type": self.type.value,
                "gamma": self.gamma_nonempty, "delta": [d.to_dict() for d in self.delta],
                "on_IR": self.on_IR, "inflection_side": self.inflection_side.value,
                "locus_kind": None if self.locus_kind is None else self.locus_kind.value}


@dataclass
class ArcSegment:
    kind: ArcKind
    polyline: Polyline
    endpoints: tuple
    orientation: int
    flags: tuple = ()

    def to_dict(self) -> dict:
        v = self.polyline.vertices
        return {"kind": self.kind.value, "orientation": self.orientation,
                "endpoint_types": [None if e is None else e.type.value for e in self.endpoints],
                "start": [v[0].real, v[0].imag], "end": [v[-1].real, v[-1].imag],
                "length": self.polyline.length(), "n_vertices": int(v.size),
                "flags": list(self.flags)}


@dataclass
class BoundaryReport:
    points: list
    segments: list
    special_points: list
    unresolved_fraction: float
    flags: list = field(default_factory=list)
    corners: list = field(default_factory=list)

    def count(self, kind: ArcKind) -> int:
        return sum(1 for s in self.segments if s.kind is kind)

    def to_dict(self) -> dict:
        return {
            "points": [p.to_dict() for p in self.points],
            "segments": [s.to_dict() for s in self.segments],
            "special_points": [p.to_dict() for p in self.special_points],
            "unresolved_fraction": self.unresolved_fraction,
            "corners": [{"x": z.real, "y": z.imag, "verdict": v.value} for z, v in self.corners],
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class ConvexityVerdict:
    applicable: bool
    category: str
    passed: Optional[bool]
    reason: str = ""


# --------------------------------------------------------------------------
# shared per-result context
# --------------------------------------------------------------------------

def _cross(a, b):
    return np.imag(np.conj(a) * b)


class _Context:
    """Geometry derived once from a result and reused by every point test."""

    def __init__(self, spec: OperatorSpec, result: MinSetResult):
        self.spec = spec
        self.result = result
        self.h = result.grid.h
        self.window = result.window
        x0, y0, x1, y1 = self.window
        self.radius = 0.5 * math.hypot(x1 - x0, y1 - y0)
        self.center = complex(0.5 * (x0 + x1), 0.5 * (y0 + y1))
        ip = result.inner_points
        self.tree = cKDTree(np.column_stack([ip.real, ip.imag])) if ip.size else None
        segs_a, segs_b = [], []
        for c in result.inner_curves:
            v = np.asarray(c.vertices if hasattr(c, "vertices") else c, dtype=np.complex128)
            if v.size >= 2:
                segs_a.append(v[:-1])
                segs_b.append(v[1:])
        if segs_a:
            a = np.concatenate(segs_a)
            b = np.concatenate(segs_b)
            # inner polylines are densified to a quarter cell; longer jumps join
            # unrelated vertices (the isolated zeros of PQ come first)
            keep = (a != b) & (np.abs(b - a) <= self.h)
            self.seg_a, self.seg_b = a[keep], b[keep]
        else:
            self.seg_a = self.seg_b = np.zeros(0, dtype=np.complex128)
        self.zpq = spec.zpq.points
        self.limit_dirs = self._limit_directions()
        self._locus = None

    def _limit_directions(self) -> np.ndarray:
        """Directions (from the window centre) of set cells touching the frame."""
        g = self.result.grid
        m = g.member()
        frame = np.zeros_like(m)
        frame[0, :] = frame[-1, :] = True
        frame[:, 0] = frame[:, -1] = True
        c = g.centers()[m & frame]
        dirs = [np.angle(c - self.center)] if c.size else []
        far = self.result.far_field
        if far.kind == "STRIP":
            a = complex(far.params["a"])
            dirs.append(np.array([np.angle(a), np.angle(-a)]))
        elif far.kind == "CONE":
            dirs.append(np.array([float(far.params["axis"]) + math.pi]))
        return np.concatenate(dirs) if dirs else np.zeros(0)

    @property
    def locus(self):
        if self._locus is None:
            pts = list(singular_points(self.spec))
            if not inflection_identically_zero(self.spec):
                curves = inflection_curve(self.spec, self.window, self.h)
                pts = locus_decomposition(self.spec, curves, self.h).points
            lines = [] if self.spec.reduced_constant else invariant_lines(self.spec)
            self._locus = (pts, lines)
        return self._locus

    def near_zpq(self, z: np.ndarray, r: float) -> np.ndarray:
        if self.zpq.size == 0:
            return np.zeros(z.shape, dtype=bool)
        return np.min(np.abs(z[:, None] - self.zpq[None, :]), axis=1) <= r

    def inner_dist(self, z: np.ndarray) -> np.ndarray:
        if self.tree is None:
            return np.full(z.shape, np.inf)
        d, _ = self.tree.query(np.column_stack([z.real, z.imag]))
        return d

    def ray_crossings(self, z: np.ndarray, d: np.ndarray, tmin: float,
                      tmax: np.ndarray, chunk: int = 4_000_000) -> list:
        """Sorted parameters where each ray crosses an inner polyline."""
        out = [np.zeros(0) for _ in range(z.size)]
        ns = self.seg_a.size
        if ns == 0 or z.size == 0:
            return out
        e = self.seg_b - self.seg_a
        step = max(1, chunk // ns)
        for i0 in range(0, z.size, step):
            zz = z[i0:i0 + step, None]
            dd = d[i0:i0 + step, None]
            ao = self.seg_a[None, :] - zz
            den = _cross(dd, e[None, :])
            with np.errstate(divide="ignore", invalid="ignore"):
                t = _cross(ao, e[None, :]) / den
                s = _cross(ao, dd) / den
            ok = (np.abs(den) > 1e-14) & (s >= 0) & (s <= 1) & (t >= tmin) & (
                t <= tmax[i0:i0 + step, None])
            for j in range(ok.shape[0]):
                if np.any(ok[j]):
                    out[i0 + j] = np.unique(np.round(t[j][ok[j]], 12))
        return out


def _context(spec: OperatorSpec, result: MinSetResult) -> _Context:
    ctx = result._cache.get("classify")
    if ctx is None or ctx.spec is not spec:
        ctx = _Context(spec, result)
        result._cache["classify"] = ctx
    return ctx


# --------------------------------------------------------------------------
# Gamma
# --------------------------------------------------------------------------

def _gamma_batch(ctx: _Context, zs: np.ndarray) -> list[GammaResult]:
    h = ctx.h
    zs = np.asarray(zs, dtype=np.complex128).ravel()
    out: list[Optional[GammaResult]] = [None] * zs.size
    near = ctx.near_zpq(zs, EPS_SING)
    for i in np.nonzero(near)[0]:
        out[i] = GammaResult(True, complex(zs[i]), "singular")
    todo = np.nonzero(~near)[0]
    if todo.size == 0:
        return out
    stop = StopRule(window=ctx.window, h=0.5 * h, max_arclength=2.0 * ctx.radius, closure=False)
    curves = integral_curves(ctx.spec, zs[todo], Direction.FORWARD, stop)
    for i, c in zip(todo, curves):
        v, s = c.vertices, c.meta["s"]
        ends_singular = c.meta["stop"] == "singular"
        m = s >= 2 * h
        if not np.any(m):
            if ends_singular:
                out[i] = GammaResult(True, complex(v[-1]), "singular")
            else:
                out[i] = GammaResult(False, None, "short")
            continue
        v, s = v[m], s[m]
        early = s <= FOLLOW_LEN * h
        di = ctx.inner_dist(v[early]) / h if np.any(early) else np.zeros(0)
        follow_max = float(np.max(di)) if di.size else np.inf
        reached = s[-1] >= FOLLOW_LEN * h or ends_singular
        if reached and follow_max <= FOLLOW_TOL:
            out[i] = GammaResult(True, complex(v[0]), "follows")
            continue
        ambiguous = follow_max <= FOLLOW_AMBIG
        ds = ctx.result.distance_to_set(v)
        outside = ds > h
        if not np.any(outside):
            if c.meta["stop"] == "window":
                # left the window still hugging the set: only the follow test can tell
                res = (True if follow_max <= FOLLOW_TOL else None if ambiguous else False)
                out[i] = GammaResult(res, complex(v[0]) if res else None, "window")
            else:
                out[i] = GammaResult(True, complex(v[0]), "stays")
            continue
        k = int(np.argmax(outside))
        back = np.nonzero(ds[k:] <= 0.0)[0]
        if back.size:
            out[i] = GammaResult(True, complex(v[k + back[0]]), "reenters")
        elif ends_singular:
            out[i] = GammaResult(True, complex(v[-1]), "singular")
        elif ambiguous and reached:
            out[i] = GammaResult(None, None, "ambiguous")
        else:
            out[i] = GammaResult(False, None, "escapes")
    return out


def gamma(spec: OperatorSpec, z: complex, result: MinSetResult) -> GammaResult:
    """Forward-trajectory test of ``z`` against the computed set."""
    return _gamma_batch(_context(spec, result), np.array([complex(z)]))[0]


# --------------------------------------------------------------------------
# Delta
# --------------------------------------------------------------------------

def _unit(spec: OperatorSpec, z: np.ndarray) -> np.ndarray:
    w = spec.Qr(z) * np.conj(spec.Pr(z))
    a = np.abs(w)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(a > 0, w / a, np.nan)


def _sign_of(value: float, scale: float) -> DeltaSign:
    tol = SIGN_TOL * (1.0 + scale)
    if value <= -tol:
        return DeltaSign.MINUS
    if value >= tol:
        return DeltaSign.PLUS
    return DeltaSign.ZERO


def _delta_batch(ctx: _Context, zs: np.ndarray, on_ir: Optional[np.ndarray] = None,
                 chunk: int = 128) -> list[list[DeltaHit]]:
    spec, h = ctx.spec, ctx.h
    zs = np.asarray(zs, dtype=np.complex128).ravel()
    if on_ir is None:
        on_ir = _on_ir(ctx, zs)
    out: list[list[DeltaHit]] = [[] for _ in range(zs.size)]
    d = _unit(spec, zs)
    ok = np.isfinite(d) & ~ctx.near_zpq(zs, EPS_SING)
    idx = np.nonzero(ok)[0]
    if idx.size == 0:
        return out
    L = _exit_distance(zs[idx], d[idx], ctx.window)
    crossings = ctx.ray_crossings(zs[idx], d[idx], 2 * h, L)
    step = 0.25 * h
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        R = eval_R(spec, zs[idx])
        R1 = eval_R1(spec, zs[idx])
    tol_inf = 3.0 * h / ctx.radius
    for c0 in range(0, idx.size, chunk):
        sl = slice(c0, c0 + chunk)
        Lc = L[sl]
        n = int(np.ceil(max(float(np.max(Lc)) - 2 * h, 0.0) / step)) + 1
        t = 2 * h + step * np.arange(n)
        pts = zs[idx[sl], None] + t[None, :] * d[idx[sl], None]
        valid = t[None, :] <= Lc[:, None]
        ds = ctx.result.distance_to_set(np.where(valid, pts, zs[idx[sl], None]))
        for j in range(Lc.size):
            gi = c0 + j
            i = idx[gi]
            nv = int(np.count_nonzero(valid[j]))
            hits: list[tuple[float, complex, bool]] = []
            if nv:
                dj = ds[j, :nv]
                ind = dj <= h
                first_out = np.nonzero(~ind)[0]
                if first_out.size:
                    i0 = first_out[0]
                    enter = np.nonzero(ind[i0 + 1:] & ~ind[i0:-1])[0] + i0 + 1 if nv > i0 + 1 else []
                    for e in enter:
                        rest = np.nonzero(~ind[e:])[0]
                        stop_k = e + rest[0] if rest.size else nv
                        deep = np.any(dj[e:stop_k] <= 0.0)
                        graze = (not deep) and rest.size > 0 and (t[stop_k] - t[e] <= 4 * h)
                        hits.append((float(t[e]), complex(pts[j, e]), bool(graze)))
            for tc in crossings[gi]:
                tc = float(tc)
                hits.append((tc, complex(zs[i] + tc * d[i]), False))
            if ctx.zpq.size:
                rel = (ctx.zpq - zs[i]) * np.conj(d[i])
                near = (rel.real >= 2 * h) & (rel.real <= Lc[j]) & (np.abs(rel.imag) <= ZPQ_TOUCH * h)
                for k in np.nonzero(near)[0]:
                    hits.append((float(rel[k].real), complex(ctx.zpq[k]), False))
            hits.sort(key=lambda x: (x[0], x[2]))
            merged: list[tuple[float, complex, bool]] = []
            for hit in hits:
                if merged and hit[0] - merged[-1][0] < 2 * h:
                    if merged[-1][2] and not hit[2]:
                        merged[-1] = (merged[-1][0], merged[-1][1], False)
                    continue
                merged.append(hit)
            res = []
            for tparam, u, graze in merged:
                sign = DeltaSign.NOT_APPLICABLE
                if on_ir[i]:
                    sval = complex(R1[gi] + R[gi] / (u - zs[i]))
                    sign = _sign_of(sval.real, abs(R1[gi]))
                res.append(DeltaHit(u, tparam, sign, graze))
            # the ray leaves the window: membership at infinity
            if ctx.limit_dirs.size:
                sig = float(np.angle(d[i]))
                gap = np.abs(np.angle(np.exp(1j * (ctx.limit_dirs - sig))))
                if float(np.min(gap)) <= tol_inf:
                    sign = DeltaSign.NOT_APPLICABLE
                    if on_ir[i]:
                        sign = _sign_of(float(np.real(R1[gi])), abs(R1[gi]))
                    res.append(DeltaHit(AtInfinity(sig % (2 * math.pi)), math.inf, sign, False))
            out[i] = res
    return out


def delta(spec: OperatorSpec, z: complex, result: MinSetResult) -> list[DeltaHit]:
    """Intersections of the associated ray of ``z`` with the computed set."""
    return _delta_batch(_context(spec, result), np.array([complex(z)]))[0]


# --------------------------------------------------------------------------
# point classification
# --------------------------------------------------------------------------

def _on_ir(ctx: _Context, z: np.ndarray) -> np.ndarray:
    """On the curve of inflections: relative value band, or the curve passes within a cell.

    The band is relative to |R'| so that it does not swallow the far field,
    where R' itself tends to zero.
    """
    spec = ctx.spec
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        r1 = eval_R1(spec, z)
        band = np.abs(r1.imag) <= IR_TOL * np.abs(r1)
        if inflection_identically_zero(spec):
            return np.ones(z.shape, dtype=bool)
        ring = z[:, None] + 1.1 * ctx.h * np.exp(1j * np.pi / 4 * np.arange(8))[None, :]
        im = np.imag(eval_R1(spec, ring))
    im = np.where(np.isfinite(im), im, 0.0)
    change = (np.max(im, axis=1) > 0) & (np.min(im, axis=1) < 0)
    return band | change


def _locus_kind(ctx: _Context, z: complex) -> LocusKind:
    pts, lines = ctx.locus
    h = ctx.h
    for p in pts:
        if p.kind is LocusKind.SINGULAR and abs(p.z - z) <= 1.5 * h:
            return LocusKind.SINGULAR
    for p in pts:
        if p.kind is LocusKind.TANGENCY_ISOLATED and abs(p.z - z) <= 1.5 * h:
            return LocusKind.TANGENCY_ISOLATED
    for L in lines:
        if float(L.distance(np.array([z]))[0]) <= 1.5 * h:
            return LocusKind.TANGENCY_LINE
    T = _tangency_function(ctx.spec)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        zz = np.array([z])
        mag = float(np.abs(eval_R2(ctx.spec, zz) * eval_R(ctx.spec, zz))[0])
        if abs(float(T(zz)[0])) <= 1e-6 * (mag + 1e-300):
            return LocusKind.TANGENCY_ISOLATED
    return LocusKind.TRANSVERSE


def _decide(gamma_ne: Optional[bool], hits: list, on_ir: bool) -> PointType:
    solid = [d for d in hits if not d.grazing]
    if on_ir:
        plus = any(d.sign is DeltaSign.PLUS for d in solid)
        minus = any(d.sign in (DeltaSign.MINUS, DeltaSign.ZERO) for d in solid)
        if gamma_ne is None:
            return PointType.UNRESOLVED
        if plus:
            return PointType.BOUNCING if (gamma_ne or minus) else PointType.SWITCH
        if minus and not gamma_ne:
            return PointType.C1_INFLECTION
        return PointType.C2_INFLECTION
    if gamma_ne is None:
        return PointType.UNRESOLVED
    if gamma_ne:
        return PointType.EXTRUDING if solid else PointType.LOCAL
    return PointType.GLOBAL if solid else PointType.UNRESOLVED


def _snap(ctx: _Context, zs: np.ndarray, root: np.ndarray) -> np.ndarray:
    """Move samples of the cell boundary onto the nearest known set point.

    The cell boundary sits up to about a cell outside the set; rays and
    trajectories are far better conditioned from points of the set itself.
    Samples next to Z(PQ) go to the root.
    """
    out = zs.copy()
    if ctx.zpq.size and np.any(root):
        k = np.argmin(np.abs(zs[root, None] - ctx.zpq[None, :]), axis=1)
        out[root] = ctx.zpq[k]
    if ctx.tree is not None:
        d, k = ctx.tree.query(np.column_stack([zs.real, zs.imag]))
        ok = (d <= 1.5 * ctx.h) & ~root
        out[ok] = ctx.result.inner_points[k[ok]]
    return out


def classify_points(spec: OperatorSpec, zs, result: MinSetResult) -> list[BoundaryPoint]:
    """Batch classification of boundary samples."""
    ctx = _context(spec, result)
    zs = np.asarray(zs, dtype=np.complex128).ravel()
    if zs.size == 0:
        return []
    root = ctx.near_zpq(zs, max(EPS_SING, 1.5 * ctx.h))
    raw = zs
    zs = _snap(ctx, zs, root)
    on_ir = _on_ir(ctx, zs)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        im1 = np.imag(eval_R1(spec, zs))
    regular = np.nonzero(~root)[0]
    gam = _gamma_batch(ctx, zs[regular])
    dl = _delta_batch(ctx, zs[regular], on_ir[regular])
    out = []
    k = 0
    for i, z in enumerate(zs):
        z = complex(z)
        side = (InflectionSide.ON if on_ir[i]
                else InflectionSide.PLUS if im1[i] > 0 else InflectionSide.MINUS)
        if root[i]:
            out.append(BoundaryPoint(z, bool(on_ir[i]), None, True, [], PointType.ROOT_PQ, side, z))
            continue
        g, hits = gam[k], dl[k]
        k += 1
        kind = None
        if on_ir[i]:
            kind = _locus_kind(ctx, z)
            if kind is LocusKind.SINGULAR:
                t = PointType.IR_SINGULAR
            elif kind in (LocusKind.TANGENCY_ISOLATED, LocusKind.TANGENCY_LINE):
                t = PointType.IR_TANGENCY
            else:
                t = _decide(g.nonempty, hits, True)
        else:
            t = _decide(g.nonempty, hits, False)
        out.append(BoundaryPoint(z, bool(on_ir[i]), kind, g.nonempty, hits, t, side, g.hit))
    _fan_rescue(ctx, out, raw)
    return out


def _fan_rescue(ctx: _Context, pts: list, raw: np.ndarray, n: int = 4) -> None:
    """Look for the ray witness of points with empty Gamma and no Delta hit.

    A boundary point of the set has Gamma or Delta nonempty, so such a point
    is a global point whose sample sits too far outside the set for its
    own ray to be accurate.  Rays from points moved towards the nearest set
    point are tried instead.
    """
    if ctx.tree is None:
        return
    bad = [i for i, p in enumerate(pts)
           if p.type is PointType.UNRESOLVED and p.gamma_nonempty is False and not p.on_IR]
    if not bad:
        return
    z0 = raw[bad]
    _, k = ctx.tree.query(np.column_stack([z0.real, z0.imag]))
    target = ctx.result.inner_points[k]
    frac = np.arange(1, n + 1) / n
    cand = (z0[:, None] + frac[None, :] * (target - z0)[:, None]).ravel()
    hits = _delta_batch(ctx, cand, np.zeros(cand.size, dtype=bool))
    for j, i in enumerate(bad):
        for q in range(n):
            solid = [d for d in hits[j * n + q] if not d.grazing]
            if solid:
                pts[i].delta = solid
                pts[i].type = PointType.GLOBAL
                break


def classify_point(spec: OperatorSpec, z: complex, result: MinSetResult) -> BoundaryPoint:
    """Type of a single boundary point."""
    return classify_points(spec, np.array([complex(z)]), result)[0]


# --------------------------------------------------------------------------
# extruding point refinement
# --------------------------------------------------------------------------

def _crosses(ctx: _Context, z: np.ndarray) -> np.ndarray:
    d = _unit(ctx.spec, z)
    L = _exit_distance(z, d, ctx.window)
    return np.array([c.size > 0 for c in ctx.ray_crossings(z, d, 2 * ctx.h, L)])


def refine_extruding(spec: OperatorSpec, result: MinSetResult, z_local: complex,
                     direction, length: float, iters: int = 40) -> Optional[complex]:
    """First point along the integral curve from ``z_local`` whose ray meets the inner set.

    ``z_local`` must lie on a local arc (its own ray misses the set).  The
    curve is traced in ``direction`` for ``length`` and the switch of the
    ray-crossing predicate is located by bisection in arclength.
    """
    ctx = _context(spec, result)
    h = ctx.h
    stop = StopRule(window=ctx.window, h=0.25 * h, max_arclength=length, closure=False)
    c = integral_curves(spec, [complex(z_local)], direction, stop)[0]
    v, s = c.vertices, c.meta["s"]
    flags = _crosses(ctx, v)
    if flags[0]:
        return None
    on = np.nonzero(flags)[0]
    if on.size == 0:
        return None
    j = int(on[0])
    lo, hi = s[j - 1], s[j]
    za = v[j - 1]
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        sub = StopRule(window=ctx.window, h=0.25 * h, max_arclength=max(mid - s[j - 1], 1e-15),
                       closure=False)
        zm = integral_curves(spec, [za], direction, sub)[0].vertices[-1]
        if _crosses(ctx, np.array([zm]))[0]:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-9:
            break
    sub = StopRule(window=ctx.window, h=0.25 * h, max_arclength=max(hi - s[j - 1], 1e-15),
                   closure=False)
    return complex(integral_curves(spec, [za], direction, sub)[0].vertices[-1])


# --------------------------------------------------------------------------
# segmentation
# --------------------------------------------------------------------------

def _resample(v: np.ndarray, spacing: float, closed: bool) -> np.ndarray:
    if closed and v[0] != v[-1]:
        v = np.append(v, v[0])
    seg = np.abs(np.diff(v))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total <= 0:
        return v[:1]
    n = max(int(round(total / spacing)), 2)
    if closed:
        t = np.linspace(0.0, total, n, endpoint=False)
    else:
        t = np.linspace(0.0, total, n + 1)
    return np.interp(t, s, v.real) + 1j * np.interp(t, s, v.imag)


def _on_frame(ctx: _Context, z: np.ndarray) -> np.ndarray:
    x0, y0, x1, y1 = ctx.window
    m = 1.01 * ctx.h
    return (z.real <= x0 + m) | (z.real >= x1 - m) | (z.imag <= y0 + m) | (z.imag >= y1 - m)


def _label(p: BoundaryPoint) -> str:
    if p.type in _SPECIAL:
        return "S"
    if p.type is PointType.IR_TANGENCY:
        return "T" if p.locus_kind is LocusKind.TANGENCY_LINE else "S"
    if p.type is PointType.EXTRUDING:
        return "E"
    if p.type is PointType.LOCAL:
        return "L"
    if p.type is PointType.GLOBAL:
        return "G"
    return "U"


def _runs(labels: list) -> list[tuple[int, int, str]]:
    out = []
    i = 0
    while i < len(labels):
        j = i
        while j + 1 < len(labels) and labels[j + 1] == labels[i]:
            j += 1
        out.append((i, j + 1, labels[i]))
        i = j + 1
    return out


def _smooth(labels: list, min_run: int) -> list:
    """Absorb short L/G/E runs and every U run into their neighbours.

    S, T and F runs are kept.  Extruding samples are isolated by nature;
    the extruding points that matter are located by refinement instead.
    """
    labels = list(labels)
    for _ in range(6):
        changed = False
        runs = _runs(labels)
        for k, (a, b, lab) in enumerate(runs):
            if lab in "SFT" or (b - a >= min_run and lab != "U"):
                continue
            left = runs[k - 1][2] if k > 0 else None
            right = runs[k + 1][2] if k + 1 < len(runs) else None
            cands = [x for x in (left, right) if x in ("L", "G")]
            if not cands:
                continue
            if len(cands) == 2 and cands[0] != cands[1]:
                lb = runs[k - 1][1] - runs[k - 1][0]
                rb = runs[k + 1][1] - runs[k + 1][0]
                new = cands[0] if lb >= rb else cands[1]
            else:
                new = cands[0]
            for i in range(a, b):
                labels[i] = new
            changed = True
        if not changed:
            break
    return labels


def _local_deviation(ctx: _Context, v: np.ndarray, mid: complex) -> float:
    """Max distance from ``v`` to the integral curve through ``mid``."""
    length = float(np.sum(np.abs(np.diff(v)))) + 4 * ctx.h
    stop = StopRule(window=ctx.window, h=0.5 * ctx.h, max_arclength=length, closure=False)
    parts = []
    for dirn in (Direction.FORWARD, Direction.BACKWARD):
        try:
            parts.append(integral_curves(ctx.spec, [mid], dirn, stop)[0].vertices)
        except Exception:
            return math.inf
    curve = np.concatenate([parts[1][::-1], parts[0]])
    from .minset import point_to_polylines
    return float(np.max(point_to_polylines(v, [curve])))


def _chord_deviation(v: np.ndarray) -> float:
    a, b = v[0], v[-1]
    d = b - a
    if abs(d) == 0:
        return float(np.max(np.abs(v - a)))
    return float(np.max(np.abs(np.imag((v - a) * np.conj(d) / abs(d)))))


def _sigma_monotone(spec: OperatorSpec, v: np.ndarray) -> tuple[int, bool]:
    with np.errstate(invalid="ignore", divide="ignore"):
        sig = np.unwrap(np.angle(eval_R(spec, v)))
    sig = sig[np.isfinite(sig)]
    if sig.size < 2:
        return 1, True
    orient = 1 if sig[-1] >= sig[0] else -1
    ss = orient * sig
    backtrack = float(np.max(np.maximum.accumulate(ss) - ss))
    span = float(ss[-1] - ss[0])
    return orient, (backtrack <= 1e-2 and span <= math.pi + 1e-2)


def _field_orientation(spec: OperatorSpec, v: np.ndarray) -> int:
    tang = np.diff(v)
    with np.errstate(invalid="ignore", divide="ignore"):
        f = _unit(spec, 0.5 * (v[1:] + v[:-1]))
    dots = np.real(tang * np.conj(f))
    dots = dots[np.isfinite(dots)]
    return 1 if np.sum(dots) >= 0 else -1


def _turning(v: np.ndarray, i: int, w: int) -> float:
    n = v.size
    a, b, c = v[(i - w) % n], v[i], v[(i + w) % n]
    if abs(b - a) == 0 or abs(c - b) == 0:
        return 0.0
    return float(abs(np.angle((c - b) / (b - a))))


def segment_boundary(spec: OperatorSpec, result: MinSetResult, spacing: Optional[float] = None,
                     min_run: int = 4) -> BoundaryReport:
    """Classify boundary samples and cut the boundary into local, global and straight arcs."""
    ctx = _context(spec, result)
    h = ctx.h
    spacing = h if spacing is None else spacing
    segments: list[ArcSegment] = []
    specials: list[BoundaryPoint] = []
    all_points: list[BoundaryPoint] = []
    corners: list = []
    flags: list[str] = []
    run_points: list[list] = []
    for comp in result.boundary:
        closed = comp.closed
        v = _resample(comp.vertices, spacing, closed)
        if v.size < 3:
            continue
        frame = _on_frame(ctx, v)
        pts: list[Optional[BoundaryPoint]] = [None] * v.size
        cls = classify_points(spec, v[~frame], result)
        for i, p in zip(np.nonzero(~frame)[0], cls):
            pts[i] = p
        all_points.extend(cls)
        labels = ["F" if p is None else _label(p) for p in pts]
        labels = _smooth(labels, min_run)
        for a, b, lab in _runs(labels):
            if lab == "T" and b - a < min_run:
                labels[a:b] = ["S"] * (b - a)
        runs = _runs(labels)
        if closed and len(runs) > 1 and runs[0][2] == runs[-1][2]:
            # rotate so that no run wraps around the seam
            shift = runs[-1][1] - runs[-1][0]
            v = np.roll(v, shift)
            pts = pts[-shift:] + pts[:-shift]
            labels = labels[-shift:] + labels[:-shift]
            runs = _runs(labels)
        for k, (a, b, lab) in enumerate(runs):
            if lab == "F":
                continue
            if lab in "SE":
                group = [p for p in pts[a:b] if p is not None]
                rep = _representative(group)
                specials.append(rep)
                w = max(2, int(round(4 * h / spacing)))
                j = a + int(np.argmin([abs(q.z - rep.z) for q in group]))
                if v.size > 2 * w and _turning(v, j, w) > 0.5:
                    zc = rep.z
                    if ctx.zpq.size and np.min(np.abs(ctx.zpq - zc)) <= 1.5 * h:
                        zc = complex(ctx.zpq[int(np.argmin(np.abs(ctx.zpq - zc)))])
                    corners.append((zc, corner_admissibility(spec, zc)))
                continue
            lo = a - 1 if a > 0 else (v.size - 1 if closed else a)
            hi = b if b < v.size else (0 if closed else b - 1)
            if closed and len(runs) == 1:
                seg_v = np.append(v, v[0])
            else:
                ids = np.arange(a - 1, b + 1)
                if not closed:
                    ids = ids[(ids >= 0) & (ids < v.size)]
                seg_v = v[ids % v.size]
            ends = (pts[lo], pts[hi % v.size])
            segments.append(_make_segment(ctx, lab, seg_v, ends, pts[a:b]))
            run_points.append([p for p in pts[a:b] if p is not None])
    # refine extruding points at the ends of local arcs
    for seg, rp in zip(list(segments), run_points):
        if seg.kind is not ArcKind.LOCAL_ARC:
            continue
        local = [p for p in rp if p.type is PointType.LOCAL]
        if not local:
            continue
        for end_idx, z_end in ((0, seg.polyline.vertices[0]), (1, seg.polyline.vertices[-1])):
            ep = seg.endpoints[end_idx]
            if ep is not None and ep.type not in (PointType.EXTRUDING, PointType.GLOBAL,
                                                  PointType.UNRESOLVED):
                continue
            # a sample well inside the arc whose trajectory was seen to follow it
            k = min(10, len(local) // 2)
            inward = local[k].z if end_idx == 0 else local[len(local) - 1 - k].z
            towards = (z_end - inward)
            f = _unit(spec, np.array([inward]))[0]
            dirn = Direction.FORWARD if np.real(towards * np.conj(f)) >= 0 else Direction.BACKWARD
            try:
                ze = refine_extruding(spec, result, inward, dirn, ctx.radius)
            except Exception:
                ze = None
            if ze is None:
                continue
            hits = [d for d in _delta_batch(ctx, np.array([ze]), np.array([False]))[0]
                    if not d.grazing]
            if not hits:
                continue
            with np.errstate(invalid="ignore", divide="ignore"):
                im1 = float(np.imag(eval_R1(spec, np.array([ze])))[0])
            side = InflectionSide.PLUS if im1 > 0 else InflectionSide.MINUS
            bp = BoundaryPoint(ze, False, None, True, hits, PointType.EXTRUDING, side, ze)
            specials = [p for p in specials
                        if not (p.type is PointType.EXTRUDING and abs(p.z - ze) <= 10 * h)]
            specials.append(bp)
            eps = list(seg.endpoints)
            eps[end_idx] = bp
            seg.endpoints = tuple(eps)
    n = len(all_points)
    unresolved = sum(1 for p in all_points if p.type is PointType.UNRESOLVED)
    frac = unresolved / n if n else 0.0
    for z, verdict in corners:
        if verdict is CornerVerdict.VIOLATION:
            flags.append(f"corner_violation at ({z.real:.6g}, {z.imag:.6g})")
    specials.sort(key=lambda p: (round(p.z.real, 9), round(p.z.imag, 9)))
    return BoundaryReport(all_points, segments, specials, frac, flags, corners)


def _representative(group: list) -> BoundaryPoint:
    prio = [PointType.ROOT_PQ, PointType.IR_SINGULAR, PointType.EXTRUDING, PointType.SWITCH,
            PointType.BOUNCING, PointType.C1_INFLECTION, PointType.C2_INFLECTION,
            PointType.IR_TANGENCY]
    for t in prio:
        sel = [p for p in group if p.type is t]
        if sel:
            return sel[len(sel) // 2]
    return group[len(group) // 2]


def _make_segment(ctx: _Context, lab: str, v: np.ndarray, ends: tuple, pts: list) -> ArcSegment:
    spec, h = ctx.spec, ctx.h
    seg_flags = []
    length = float(np.sum(np.abs(np.diff(v))))
    straight = v.size >= 3 and _chord_deviation(v) <= 0.5 * h and length >= 10 * h
    if lab == "T" or (straight and lab != "L"):
        kind = ArcKind.LINE_SEGMENT
        orient = _field_orientation(spec, v)
    elif lab == "L":
        live = [p for p in pts if p is not None]
        mid = live[len(live) // 2].z if live else v[v.size // 2]
        dev = _local_deviation(ctx, v, mid)
        if dev <= 3 * h:
            kind = ArcKind.LOCAL_ARC
        else:
            kind = ArcKind.GLOBAL_ARC
            seg_flags.append(f"local_labels_but_deviation={dev:.3g}")
        orient = _field_orientation(spec, v)
    else:
        kind = ArcKind.GLOBAL_ARC
        if lab == "U":
            seg_flags.append("unresolved_run")
    if kind is ArcKind.GLOBAL_ARC:
        zs = np.array([p.z for p in pts if p is not None]) if len(pts) >= 2 else v
        orient, mono = _sigma_monotone(spec, zs)
        if not mono:
            seg_flags.append("sigma_not_monotone")
    if kind is ArcKind.LOCAL_ARC:
        sides = {p.inflection_side for p in pts if p is not None}
        if {InflectionSide.PLUS, InflectionSide.MINUS} <= sides:
            seg_flags.append("inflection_sign_change")
    return ArcSegment(kind, Polyline(v, CurveTag.BOUNDARY, {"label": lab}), ends, int(orient),
                      tuple(seg_flags))


# --------------------------------------------------------------------------
# corners and convexity
# --------------------------------------------------------------------------

def corner_admissibility(spec: OperatorSpec, z: complex, tol: float = 1e-6) -> CornerVerdict:
    """Whether a corner of the boundary may sit at ``z``."""
    z = complex(z)
    for c in spec.common:
        if abs(c.alpha - z) <= 1e-6 * (1.0 + abs(z)) and c.mult_P == c.mult_Q:
            return CornerVerdict.ADMISSIBLE
    pts = spec.zpq.points
    if pts.size == 0 or np.min(np.abs(pts - z)) > 1e-6 * (1.0 + abs(z)):
        return CornerVerdict.VIOLATION
    loc = local_expansion(spec, z)
    if loc.m_alpha == 1 and abs(loc.phi_alpha) <= tol:
        return CornerVerdict.ADMISSIBLE
    return CornerVerdict.VIOLATION


def _half_plane_supported(ctx: _Context, z: complex) -> bool:
    g = ctx.result.grid
    h = ctx.h
    pts = [c for c in ctx.result.boundary]
    if not pts:
        return False
    bv = np.concatenate([c.vertices for c in pts])
    near = bv[np.abs(bv - z) <= 3 * h]
    if near.size < 3:
        return False
    X = np.column_stack([near.real - near.real.mean(), near.imag - near.imag.mean()])
    _, _, vt = np.linalg.svd(X, full_matrices=False)
    nrm = complex(vt[1, 0], vt[1, 1])
    c = g.centers()[g.member()]
    c = c[np.abs(c - z) <= 5 * h]
    if c.size == 0:
        return False
    side = np.real((c - z) * np.conj(nrm))
    return bool(np.all(side >= -h) or np.all(side <= h))


def convexity_check(spec: OperatorSpec, z: complex, result: MinSetResult,
                    point: Optional[BoundaryPoint] = None) -> ConvexityVerdict:
    """Necessary conditions at a locally convex boundary point."""
    ctx = _context(spec, result)
    z = complex(z)
    if not _half_plane_supported(ctx, z):
        return ConvexityVerdict(False, "", None, "not locally half-plane supported")
    p = point if point is not None else classify_point(spec, z, result)
    t = p.type
    if t is PointType.ROOT_PQ:
        zr = ctx.zpq[int(np.argmin(np.abs(ctx.zpq - z)))]
        for c in spec.common:
            if abs(c.alpha - zr) <= 1e-6 * (1 + abs(zr)) and c.mult_P == c.mult_Q:
                return ConvexityVerdict(True, t.value, True, "common root, equal multiplicities")
        loc = local_expansion(spec, zr)
        if loc.m_alpha == -1:
            return ConvexityVerdict(True, t.value, True, "simple pole")
        if loc.m_alpha == 1 and abs(loc.phi_alpha) <= 1e-6:
            return ConvexityVerdict(True, t.value, True, "simple zero with phi = 0")
        return ConvexityVerdict(True, t.value, False, f"m = {loc.m_alpha}, phi = {loc.phi_alpha:.3g}")
    if t is PointType.LOCAL:
        return ConvexityVerdict(True, t.value, True, "local type")
    if t is PointType.SWITCH:
        return ConvexityVerdict(True, t.value, True, "switch type on the curve of inflections")
    if t in (PointType.IR_SINGULAR, PointType.IR_TANGENCY, PointType.UNRESOLVED):
        return ConvexityVerdict(True, t.value, None, "category not covered")
    if t is PointType.GLOBAL:
        zz = np.array([z])
        R, R1, R2 = (complex(eval_R(spec, zz)[0]), complex(eval_R1(spec, zz)[0]),
                     complex(eval_R2(spec, zz)[0]))
        solid = [d for d in p.delta if not d.grazing]
        u = min(solid, key=lambda d: d.param).u
        if isinstance(u, AtInfinity):
            f = R2 * R / (R1 * R1)
        else:
            d = u - z
            f = (R2 * d * d + 2 * R1 * d + 2 * R) * d / (R1 * d + R) ** 2
        tol = 1e-9 * (1.0 + abs(f))
        ok = abs(f.imag) <= tol or np.sign(f.imag) != np.sign(R1.imag)
        return ConvexityVerdict(True, t.value, bool(ok), f"Im f = {f.imag:.3g}, Im R' = {R1.imag:.3g}")
    return ConvexityVerdict(True, t.value, False, "type not allowed at a convex point")
