"""Curves attached to the field R(z) d/dz.

Integral curves, root trails by continuation, the curve of inflections
{Im R' = 0} with its singular/tangency/transverse decomposition, its
directions at infinity, the horizontal locus, and the slope and concavity
formulas for root trails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _contour
from ._ode import StopRule, integrate_batch
from .errors import (DegenerateTrail, NotOnTrail, PreconditionViolated,
                     StartAtSingularity, WrongRegime)
from .field import (Line, OperatorSpec, derivatives_R, eval_R, eval_R1, eval_R2,
                    invariant_lines)
from .poly import Polynomial, aberth, aberth_batch, eval_batch, roots

__all__ = [
    "AtInfinity", "Concavity", "CurveSet", "CurveTag", "Direction", "LocusKind",
    "LocusPoint", "LocusReport", "Polyline", "SlopeReport", "StopRule",
    "count_components", "horizontal_locus", "inflection_curve", "inflection_function",
    "inflection_infinity", "integral_curve", "integral_curves", "locus_decomposition",
    "root_trail", "special_line", "trail_concavity", "trail_slope", "trails_batch",
]

EPS_SING = 1e-6


class CurveTag(str, Enum):
    INTEGRAL = "INTEGRAL"
    TRAIL = "TRAIL"
    INFLECTION = "INFLECTION"
    HORIZONTAL = "HORIZONTAL"
    BOUNDARY = "BOUNDARY"


class Direction(str, Enum):
    FORWARD = "FORWARD"
    BACKWARD = "BACKWARD"


class LocusKind(str, Enum):
    SINGULAR = "SINGULAR"
    TANGENCY_ISOLATED = "TANGENCY_ISOLATED"
    TANGENCY_LINE = "TANGENCY_LINE"
    TRANSVERSE = "TRANSVERSE"


class Concavity(str, Enum):
    SAME_SIDE = "SAME_SIDE"
    OPPOSITE_SIDE = "OPPOSITE_SIDE"
    TRAIL_INFLECTION = "TRAIL_INFLECTION"


@dataclass(frozen=True)
class AtInfinity:
    """A point of the circle at infinity, given by its direction angle."""

    direction: float


@dataclass
class Polyline:
    vertices: np.ndarray
    tag: CurveTag
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.complex128).ravel()
        if self.vertices.size == 1:
            self.vertices = np.repeat(self.vertices, 2)
        if self.vertices.size < 2:
            raise ValueError("a polyline needs at least two vertices")

    def __len__(self):
        return self.vertices.size

    @property
    def closed(self) -> bool:
        return bool(self.meta.get("closed", False)) or (
            self.vertices.size > 2 and self.vertices[0] == self.vertices[-1])

    def length(self) -> float:
        return float(np.sum(np.abs(np.diff(self.vertices))))


@dataclass
class CurveSet:
    curves: list = field(default_factory=list)

    def __len__(self):
        return len(self.curves)

    def __iter__(self):
        return iter(self.curves)

    def __getitem__(self, i):
        return self.curves[i]

    def points(self) -> np.ndarray:
        if not self.curves:
            return np.zeros(0, dtype=np.complex128)
        return np.concatenate([c.vertices for c in self.curves])

    def canonical(self) -> "CurveSet":
        """Deterministic ordering: lexicographic by first vertex."""
        key = lambda c: (round(c.vertices[0].real, 12), round(c.vertices[0].imag, 12), c.vertices.size)
        return CurveSet(sorted(self.curves, key=key))


@dataclass(frozen=True)
class LocusPoint:
    z: complex
    kind: LocusKind
    branch_count: int = 1


@dataclass
class LocusReport:
    points: list
    vertex_kinds: list


@dataclass(frozen=True)
class SlopeReport:
    slopes: tuple
    m: int
    on_IR: bool
    fan: bool


# --------------------------------------------------------------------------
# integral curves
# --------------------------------------------------------------------------

def _sign(direction) -> float:
    d = Direction(direction) if not isinstance(direction, Direction) else direction
    return 1.0 if d is Direction.FORWARD else -1.0


def integral_curves(spec: OperatorSpec, z0s: Sequence[complex], direction,
                    stop: StopRule) -> list[Polyline]:
    """Batch version of :func:`integral_curve`; start points at a singularity are rejected."""
    z0s = np.asarray(z0s, dtype=np.complex128).ravel()
    sing = spec.zpq.points
    if sing.size and z0s.size:
        d = np.min(np.abs(z0s[:, None] - sing[None, :]), axis=1)
        if np.any(d < stop.eps_sing):
            raise StartAtSingularity(f"start point within {stop.eps_sing} of Z(PQ)")
    raw = integrate_batch(spec.Qr, spec.Pr, sing, z0s, _sign(direction), stop)
    out = []
    for rc in raw:
        meta = {"s": rc.arclength, "stop": rc.stop, "closed": rc.closed,
                "direction": Direction(direction).value}
        if rc.hit is not None:
            meta["hit"] = rc.hit
        out.append(Polyline(rc.vertices, CurveTag.INTEGRAL, meta))
    return out


def integral_curve(spec: OperatorSpec, z0: complex, direction, stop: StopRule) -> Polyline:
    """Adaptive 5(4) integration of dz/ds = +-R/|R| in arclength."""
    return integral_curves(spec, [z0], direction, stop)[0]


# --------------------------------------------------------------------------
# curve of inflections
# --------------------------------------------------------------------------

def inflection_function(spec: OperatorSpec):
    """z -> Im(N1(z) conj(P(z)^2)), a positive multiple of Im R'(z)."""
    N1, Pr = spec.N1, spec.Pr

    def G(z):
        pz = Pr(z)
        return np.imag(N1(z) * np.conj(pz * pz))
    return G


def inflection_identically_zero(spec: OperatorSpec) -> bool:
    """True when Im R' vanishes everywhere (R' a real constant)."""
    if spec.N1.is_zero():
        return True
    from .poly import im_conj_product
    G = im_conj_product(spec.N1, spec.Pr * spec.Pr)
    scale = max((abs(c) for c in G.coeffs.values()), default=0.0)
    return G.is_zero(1e-12 * max(scale, 1.0)) or scale == 0.0


def inflection_curve(spec: OperatorSpec, window, h: float) -> CurveSet:
    """Marching squares on the inflection numerator, refined along grid edges."""
    if h <= 0:
        raise ValueError("h must be positive")
    if inflection_identically_zero(spec):
        return CurveSet([])
    polys = _contour.zero_curves(inflection_function(spec), window, h)
    curves = [Polyline(v, CurveTag.INFLECTION, {"h": h}) for v in polys]
    return CurveSet(curves).canonical()


def count_components(curves: CurveSet, h: float) -> int:
    """Connected components, merging pieces that come within 2h of each other."""
    if len(curves) == 0:
        return 0
    return len(_contour.merge_components([c.vertices for c in curves], 2.0 * h))


# --------------------------------------------------------------------------
# loci on the curve of inflections
# --------------------------------------------------------------------------

def _tangency_function(spec: OperatorSpec):
    def T(z):
        return np.imag(eval_R2(spec, z) * eval_R(spec, z))
    return T


def singular_points(spec: OperatorSpec, tol: float = 1e-7) -> list[LocusPoint]:
    """Poles of R and critical points of R' lying on the curve of inflections."""
    pts = []
    for a, k in (roots(spec.Pr) if spec.Pr.degree >= 1 else ()):
        pts.append(LocusPoint(complex(a), LocusKind.SINGULAR, k + 1))
    if spec.N2.degree >= 1:
        for a, k in roots(spec.N2):
            r1 = complex(eval_R1(spec, np.array([a]))[0])
            if np.isfinite(r1) and abs(r1.imag) <= tol * (1.0 + abs(r1)):
                pts.append(LocusPoint(complex(a), LocusKind.SINGULAR, k + 1))
    return pts


def _max_chord_deviation(v: np.ndarray) -> float:
    a, b = v[0], v[-1]
    d = b - a
    if abs(d) == 0:
        return float(np.max(np.abs(v - a)))
    return float(np.max(np.abs(np.imag((v - a) * np.conj(d) / abs(d)))))


def locus_decomposition(spec: OperatorSpec, curves: CurveSet, h: Optional[float] = None) -> LocusReport:
    """Singular points, tangency points/lines and per-vertex kinds along the given curves."""
    if len(curves) == 0:
        return LocusReport([], [])
    if h is None:
        h = float(curves[0].meta.get("h", 0.05))
    sing = singular_points(spec)
    sing_z = np.array([p.z for p in sing], dtype=np.complex128)
    lines = invariant_lines(spec) if not spec.reduced_constant else []
    T = _tangency_function(spec)
    points: list[LocusPoint] = list(sing)
    kinds_all = []
    line_reported: set = set()
    for c in curves:
        v = c.vertices
        kinds = np.full(v.size, LocusKind.TRANSVERSE.value, dtype=object)
        near_sing = np.zeros(v.size, dtype=bool)
        if sing_z.size:
            near_sing = np.min(np.abs(v[:, None] - sing_z[None, :]), axis=1) <= h
        on_line = np.zeros(v.size, dtype=bool)
        for li, L in enumerate(lines):
            hit = L.distance(v) <= 0.5 * h
            if np.count_nonzero(hit) >= 2:
                on_line |= hit
                if li not in line_reported:
                    line_reported.add(li)
                    j = int(np.nonzero(hit)[0][np.count_nonzero(hit) // 2])
                    points.append(LocusPoint(complex(v[j]), LocusKind.TANGENCY_LINE, 1))
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            tv = T(v)
            mag = np.abs(eval_R2(spec, v) * eval_R(spec, v))
        straight = (v.size >= 3 and _max_chord_deviation(v) < h / 10
                    and np.all(np.abs(tv[~near_sing]) <= 1e-3 * (mag[~near_sing] + 1e-300)))
        if straight and not np.all(on_line):
            on_line[:] = True
            points.append(LocusPoint(complex(v[v.size // 2]), LocusKind.TANGENCY_LINE, 1))
        kinds[on_line] = LocusKind.TANGENCY_LINE.value
        # isolated tangencies: sign changes of Im(R''R) between admissible vertices
        adm = ~(near_sing | on_line) & np.isfinite(tv)
        sgn = np.sign(tv)
        for i in range(v.size - 1):
            if adm[i] and adm[i + 1] and sgn[i] * sgn[i + 1] < 0:
                zt = _contour.bisect_segments(T, np.array([v[i]]), np.array([v[i + 1]]))[0]
                points.append(LocusPoint(complex(zt), LocusKind.TANGENCY_ISOLATED, 1))
                j = i if abs(v[i] - zt) <= abs(v[i + 1] - zt) else i + 1
                kinds[j] = LocusKind.TANGENCY_ISOLATED.value
        kinds[near_sing] = LocusKind.SINGULAR.value
        kinds_all.append(kinds)
    return LocusReport(points, kinds_all)


def inflection_infinity(spec: OperatorSpec) -> list[float]:
    """Asymptotic directions (radians in [0, 2pi)) of the curve of inflections."""
    g = spec.gap
    two_pi = 2.0 * math.pi
    if g == 1 and abs(spec.lam.imag) > 1e-12 * abs(spec.lam):
        return []
    if g == -1:
        dirs = [spec.phi_inf / 2 + k * math.pi / 2 for k in range(4)]
    elif g in (0, 1):
        if spec.kappa is None or spec.mu == 0:
            return []
        k = spec.kappa + 1
        base = float(np.angle(-spec.mu))
        dirs = [(base + j * math.pi) / k for j in range(2 * k)]
    else:
        k = abs(g - 1)
        dirs = [(-spec.phi_inf + j * math.pi) / (g - 1) for j in range(2 * k)]
    out = sorted({round(d % two_pi, 14) for d in dirs})
    return [float(d) for d in out]


# --------------------------------------------------------------------------
# horizontal locus (deg Q - deg P = -1)
# --------------------------------------------------------------------------

def _require_gap_minus_one(spec: OperatorSpec):
    if spec.gap != -1:
        raise WrongRegime("defined only for deg Q - deg P = -1")


def horizontal_function(spec: OperatorSpec):
    _require_gap_minus_one(spec)
    theta = (spec.phi_inf + math.pi) / 2
    rot = complex(math.cos(theta), -math.sin(theta))
    Qr, Pr = spec.Qr, spec.Pr

    def H(z):
        return np.imag(rot * Qr(z) * np.conj(Pr(z)))
    return H


def horizontal_locus(spec: OperatorSpec, window, h: float) -> CurveSet:
    """Points where arg R equals (arg lambda +- pi)/2."""
    H = horizontal_function(spec)
    polys = _contour.zero_curves(H, window, h)
    return CurveSet([Polyline(v, CurveTag.HORIZONTAL, {"h": h}) for v in polys]).canonical()


def special_line(spec: OperatorSpec) -> Line:
    """Asymptotic line of the horizontal locus: b + a*t with a^2 = -lambda, b = mu/lambda."""
    _require_gap_minus_one(spec)
    a = complex(np.sqrt(-spec.lam + 0j))
    b = spec.mu / spec.lam
    return Line(b, a)


# --------------------------------------------------------------------------
# root trails
# --------------------------------------------------------------------------

def _trail_coeffs(spec: OperatorSpec, us: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Rows of ascending coefficients of t Q_r + (z - u) P_r."""
    qc = spec.Qr.coeffs
    pc = spec.Pr.coeffs
    n = max(qc.size, pc.size + 1)
    C = np.zeros((us.size, n), dtype=np.complex128)
    C[:, : qc.size] += t[:, None] * qc[None, :]
    C[:, 1: pc.size + 1] += pc[None, :]
    C[:, : pc.size] -= us[:, None] * pc[None, :]
    return C


def _check_trail_degenerate(spec: OperatorSpec, u: complex):
    if spec.Pr.degree == 0 and spec.Qr.degree == 1:
        lam = spec.Qr.lead / spec.Pr.lead
        root = -spec.Qr.coeffs[0] / spec.Qr.coeffs[1]
        if abs(lam.imag) <= 1e-12 * abs(lam) and lam.real < 0 and abs(root - u) <= 1e-12 * (1 + abs(u)):
            raise DegenerateTrail("F_t vanishes identically at t = -1/lambda")


def _rowwise_sep(Z: np.ndarray) -> np.ndarray:
    n = Z.shape[1]
    if n < 2:
        return np.full(Z.shape, np.inf)
    d = np.abs(Z[:, :, None] - Z[:, None, :])
    d[:, np.eye(n, dtype=bool)] = np.inf
    return np.min(d, axis=2)


@dataclass
class TrailBatch:
    """Result of :func:`trails_batch`: vertices per member and branch."""

    us: np.ndarray
    branches: list  # branches[i] = list of (vertices, t_values, flags)
    static_roots: tuple


def trails_batch(spec: OperatorSpec, us, t_max: float = 1e6, n_steps: int = 60,
                 max_move: float = 0.05, escape_radius: Optional[float] = None,
                 t_min: Optional[float] = None, window=None) -> TrailBatch:
    """Continue the roots of t Q + (z - u) P for many u at once.

    Euler predictor in t, warm-started Aberth corrector, per-member
    adaptive steps in log t.  A step is accepted when every branch moves by
    at most ``max_move`` and by at most 0.3 of its distance to the nearest
    other root (or less than ``max_move``/8 anyway).  Only vertices inside
    ``window`` are recorded and constrain the step; a branch that leaves and
    re-enters starts a new piece.
    """
    us = np.asarray(us, dtype=np.complex128).ravel()
    M = us.size
    for u in us:
        _check_trail_degenerate(spec, complex(u))
    pts = spec.zpq.points
    scale = 1.0 + max(float(np.max(np.abs(pts), initial=0.0)), float(np.max(np.abs(us), initial=0.0)))
    if escape_radius is None:
        escape_radius = 1e3 * scale
    if window is None:
        c0 = complex(np.mean(np.concatenate([pts, us])))
        r0 = 10.0 * scale
        window = (c0.real - r0, c0.imag - r0, c0.real + r0, c0.imag + r0)
    wx0, wy0, wx1, wy1 = window

    def inside(Zs):
        return (Zs.real >= wx0) & (Zs.real <= wx1) & (Zs.imag >= wy0) & (Zs.imag <= wy1)
    static = tuple((c.alpha, min(c.mult_P, c.mult_Q)) for c in spec.common)
    if M == 0:
        return TrailBatch(us, [], static)
    pn = max(spec.Pr.norm(), 1e-300)
    qn = max(spec.Qr.norm(), 1e-300)
    t0 = 1e-10 * pn / qn if t_min is None else t_min
    C0 = _trail_coeffs(spec, us, np.full(M, t0))
    n = C0.shape[1] - 1
    # seeds at t = 0: u together with the zeros of the reduced P
    zp = roots(spec.Pr).expanded() if spec.Pr.degree >= 1 else np.zeros(0, dtype=np.complex128)
    seeds = np.concatenate([us[:, None], np.repeat(np.asarray(zp)[None, :], M, axis=0)], axis=1)
    Z = np.empty((M, n), dtype=np.complex128)
    for i in range(M):
        Z[i], _ = aberth(C0[i])
    # match initial roots to the seeds
    first = np.full((M, n), np.nan + 0j)
    for i in range(M):
        if seeds.shape[1]:
            cost = np.abs(Z[i][:, None] - seeds[i][None, :])
            r, c = linear_sum_assignment(cost)
            first[i, r] = seeds[i, c]
    t = np.full(M, t0)
    dlog = np.full(M, (math.log(t_max) - math.log(t0)) / max(n_steps, 1))
    dlog = np.minimum(dlog, 1.0)
    active = np.ones(M, dtype=bool)
    halv = np.zeros(M, dtype=int)
    escaped = np.abs(Z) > escape_radius
    rec = [[[[]] for _ in range(n)] for _ in range(M)]
    flags = [[set() for _ in range(n)] for _ in range(M)]
    ins0 = inside(Z)
    for i in range(M):
        for j in range(n):
            if np.isfinite(first[i, j]):
                rec[i][j][-1].append((first[i, j], 0.0))
            if escaped[i, j]:
                flags[i][j].add("ESCAPED")
            elif ins0[i, j]:
                rec[i][j][-1].append((Z[i, j], t0))
    dQ = spec.Qr.derivative()
    dP = spec.Pr.derivative()
    guard = 0
    while np.any(active) and guard < 100000:
        guard += 1
        idx = np.nonzero(active)[0]
        ti = t[idx]
        tn = np.minimum(ti * np.exp(dlog[idx]), t_max)
        Zi = Z[idx]
        ui = us[idx][:, None]
        Fz = ti[:, None] * dQ(Zi) + spec.Pr(Zi) + (Zi - ui) * dP(Zi)
        with np.errstate(divide="ignore", invalid="ignore"):
            vel = -spec.Qr(Zi) / Fz
        vel = np.where(np.isfinite(vel), vel, 0.0)
        step = (tn - ti)[:, None] * vel
        big = np.abs(step) > max_move
        step = np.where(big, step / np.maximum(np.abs(step), 1e-300) * max_move, step)
        # a tiny asymmetric kick keeps the corrector off symmetry-invariant sets
        Zp = Zi + step + 1e-4 * max_move * np.exp(1j * (2.4 * np.arange(n) + 1.0))[None, :]
        Cn = _trail_coeffs(spec, us[idx], tn)
        Zc = aberth_batch(Cn, Zp, iters=10)
        live = ~escaped[idx] & (np.abs(Zc) <= escape_radius)
        watched = live & (inside(Zc) | inside(Zi))
        move = np.where(watched, np.abs(Zc - Zi), 0.0)
        sep = _rowwise_sep(Zi)
        res = np.abs(eval_batch(Cn, Zc))
        nrm = np.linalg.norm(Cn, axis=1)[:, None] * np.maximum(1.0, np.abs(Zc)) ** n
        res_ok = np.all((res <= 1e-10 * nrm) | ~live, axis=1)
        ok_move = np.all((move <= max_move) & (move <= np.maximum(0.3 * sep, max_move / 8)), axis=1)
        accept = ok_move & res_ok & np.all(np.isfinite(Zc), axis=1)
        forced = (~accept) & (halv[idx] >= 40)
        take = accept | forced
        # rejected: halve the step
        rej = idx[~take]
        dlog[rej] *= 0.5
        halv[rej] += 1
        for kk in np.nonzero(take)[0]:
            i = idx[kk]
            Znew = Zc[kk]
            if forced[kk]:
                Znew, _ = aberth(Cn[kk])
                cost = np.abs(Zi[kk][:, None] - Znew[None, :])
                r, c = linear_sum_assignment(cost)
                Znew = Znew[c[np.argsort(r)]]
            newly = (np.abs(Znew) > escape_radius) & ~escaped[i]
            ins = inside(Znew)
            for j in range(n):
                if escaped[i, j]:
                    continue
                if newly[j]:
                    flags[i][j].add("ESCAPED")
                    continue
                if ins[j]:
                    rec[i][j][-1].append((Znew[j], tn[kk]))
                elif rec[i][j][-1]:
                    flags[i][j].add("LEFT_WINDOW")
                    rec[i][j].append([])
                if forced[kk]:
                    flags[i][j].add("SPLIT")
            escaped[i] |= newly
            mv = float(np.max(move[kk])) if move[kk].size else 0.0
            Z[i] = Znew
            t[i] = tn[kk]
            halv[i] = 0
            if mv < max_move / 3:
                dlog[i] = min(dlog[i] * 1.6, 1.0)
            if t[i] >= t_max * (1 - 1e-12) or np.all(escaped[i]):
                active[i] = False
            elif t[i] > 1e3 * pn / qn and not np.any(ins & ~escaped[i]):
                active[i] = False
            elif t[i] > 1e3 * pn / qn and dlog[i] >= 1.0 and mv < 1e-4 * max_move:
                active[i] = False
    branches = []
    for i in range(M):
        bl = []
        for j in range(n):
            for piece in rec[i][j]:
                if len(piece) == 0:
                    continue
                v = np.array([p[0] for p in piece], dtype=np.complex128)
                tv = np.array([p[1] for p in piece])
                bl.append((v, tv, tuple(sorted(flags[i][j]))))
        branches.append(bl)
    return TrailBatch(us, branches, static)


def root_trail(spec: OperatorSpec, u: complex, t_max: float = 1e6, n_steps: int = 60,
               max_move: float = 0.05, window=None) -> CurveSet:
    """All branches of the root trail of a finite point u, clipped to ``window``."""
    tb = trails_batch(spec, [u], t_max=t_max, n_steps=n_steps, max_move=max_move, window=window)
    curves = []
    for v, tv, fl in tb.branches[0]:
        curves.append(Polyline(v, CurveTag.TRAIL, {"u": complex(u), "t": tv, "flags": fl,
                                                    "static_roots": tb.static_roots}))
    return CurveSet(curves)


# --------------------------------------------------------------------------
# slope and concavity of root trails
# --------------------------------------------------------------------------

def _on_IR(r1: complex, tol: float) -> bool:
    return abs(r1.imag) <= tol * (1.0 + abs(r1))


def _fan(ders: np.ndarray, ref: complex, start: int, tol: float):
    """Smallest m >= start with a nonzero m-th derivative, and theta0."""
    scale = max(abs(ref), 1e-300)
    for m in range(start, ders.size):
        if abs(ders[m]) > tol * scale * math.factorial(m):
            return m, float(np.angle(ref / ders[m]))
    raise PreconditionViolated("all available derivatives vanish at z0")


def _check_regular_point(spec: OperatorSpec, z0: complex):
    pts = spec.zpq.points
    if pts.size and np.min(np.abs(pts - z0)) < EPS_SING:
        raise PreconditionViolated("z0 lies in Z(PQ)")


def trail_slope(spec: OperatorSpec, u: Union[complex, AtInfinity], z0: complex,
                tol: float = 1e-7) -> SlopeReport:
    """Tangent slopes (mod pi) of the root trail of u through z0."""
    z0 = complex(z0)
    _check_regular_point(spec, z0)
    nder = max(spec.p, spec.q) + 4
    if isinstance(u, AtInfinity):
        R, R1 = complex(eval_R(spec, z0)), complex(eval_R1(spec, z0))
        w = R * complex(math.cos(u.direction), -math.sin(u.direction))
        if abs(w.imag) > 1e-6 * abs(w) or w.real <= 0:
            raise NotOnTrail("arg R(z0) differs from the direction at infinity")
        if abs(R1) > tol * (abs(R) + 1e-300):
            return SlopeReport((float(np.angle(R / R1)) % math.pi,), 1, _on_IR(R1, 1e-6), False)
        ders = derivatives_R(spec, z0, nder)
        m, th0 = _fan(ders, R, 2, tol)
    else:
        u = complex(u)
        if abs(u - z0) == 0:
            raise NotOnTrail("z0 equals u")
        R, R1 = complex(eval_R(spec, z0)), complex(eval_R1(spec, z0))
        w = R / (u - z0)
        if abs(w.imag) > 1e-6 * abs(w) or w.real <= 0:
            raise NotOnTrail("R(z0)/(u - z0) is not a positive real")
        D = R + (u - z0) * R1
        if abs(D) > tol * (abs(R) + abs(u - z0) * abs(R1)):
            return SlopeReport((float(np.angle(R * R / D)) % math.pi,), 1, _on_IR(R1, 1e-6), False)
        # derivatives of F(z) = R(z)/(u - z) from the Taylor series of R
        c = derivatives_R(spec, z0, nder) / np.array([math.factorial(k) for k in range(nder + 1)])
        g = np.array([1.0 / (u - z0) ** (k + 1) for k in range(nder + 1)])  # 1/(u-z0-w) series
        f = np.array([np.sum(c[: k + 1] * g[k::-1]) for k in range(nder + 1)])
        ders = f * np.array([math.factorial(k) for k in range(nder + 1)], dtype=float)
        m, th0 = _fan(ders, ders[0], 2, tol)
    slopes = tuple(sorted(((th0 + k * math.pi) / m) % math.pi for k in range(m)))
    on = _on_IR(R1, 1e-6)
    if not on:
        raise PreconditionViolated("branch fan detected off the curve of inflections")
    return SlopeReport(slopes, m, True, True)


def trail_concavity(spec: OperatorSpec, u: Union[complex, AtInfinity], z0: complex,
                    tol_IR: float = 1e-9, tol: float = 1e-12) -> dict:
    """Which side of its tangent the trail of u bends to at z0.

    Off the curve of inflections the answer is relative to the associated
    ray of z0; on its transverse part it is relative to the forward germ of
    the integral curve through z0.
    """
    z0 = complex(z0)
    _check_regular_point(spec, z0)
    R, R1, R2 = (complex(eval_R(spec, z0)), complex(eval_R1(spec, z0)), complex(eval_R2(spec, z0)))
    at_inf = isinstance(u, AtInfinity)
    if not at_inf:
        u = complex(u)
        if abs(u - z0) == 0:
            raise PreconditionViolated("z0 equals u")
        w = R / (u - z0)
        if abs(w.imag) > 1e-6 * abs(w) or w.real <= 0:
            raise PreconditionViolated("z0 is not on the trail of u")
    if not _on_IR(R1, tol_IR):
        if at_inf:
            f = R2 * R / (R1 * R1)
        else:
            d = u - z0
            f = (R2 * d * d + 2 * R1 * d + 2 * R) * d / (R1 * d + R) ** 2
        if abs(f.imag) <= tol * (1.0 + abs(f)):
            verdict = Concavity.TRAIL_INFLECTION
        elif np.sign(f.imag) != np.sign(R1.imag):
            verdict = Concavity.SAME_SIDE
        else:
            verdict = Concavity.OPPOSITE_SIDE
        return {"verdict": verdict, "reference": "ray", "f": f, "im_R1": R1.imag}
    if abs((R2 * R).imag) <= 1e-9 * (abs(R2 * R) + 1e-300):
        raise PreconditionViolated("z0 is a tangency point, not on the transverse locus")
    if at_inf:
        s = R1.real
        if abs(R1) == 0:
            raise PreconditionViolated("R'(z0) = 0")
    else:
        if abs(R + R1 * (u - z0)) <= 1e-12 * (abs(R) + 1e-300):
            raise PreconditionViolated("R(z0) + R'(z0)(u - z0) = 0")
        s = (R1 + R / (u - z0)).real
    if s < 0:
        verdict = Concavity.SAME_SIDE
    elif s > 0:
        verdict = Concavity.OPPOSITE_SIDE
    else:
        raise PreconditionViolated("the side function vanishes")
    return {"verdict": verdict, "reference": "forward_trajectory", "s": s}
