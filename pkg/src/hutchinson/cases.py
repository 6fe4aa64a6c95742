"""Closed-form case engines and parametric oracles for worked examples."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NonClosure, PreconditionViolated, StartAtSingularity, WrongCase, WrongRegime
from .field import OperatorSpec, RegimeTag, derivatives_R, eval_R1, gap_shape, local_expansion, regime
from .poly import Polynomial
from .trace import (CurveSet, CurveTag, Direction, Polyline, StopRule, horizontal_locus,
                    integral_curve)


# --------------------------------------------------------------------------
# constant field: parallel half-lines
# --------------------------------------------------------------------------

def _default_window(spec: OperatorSpec, factor: float = 10.0):
    pts = spec.zpq.points
    c = complex(np.mean(pts)) if pts.size else 0j
    r = factor * max(1.0, float(np.max(np.abs(pts - c), initial=0.0)))
    return (c.real - r, c.imag - r, c.real + r, c.imag + r)


def _ray_exit(z: complex, d: complex, window) -> float:
    x0, y0, x1, y1 = window
    ts = []
    if d.real > 0:
        ts.append((x1 - z.real) / d.real)
    elif d.real < 0:
        ts.append((x0 - z.real) / d.real)
    if d.imag > 0:
        ts.append((y1 - z.imag) / d.imag)
    elif d.imag < 0:
        ts.append((y0 - z.imag) / d.imag)
    return max(min(ts), 0.0) if ts else 0.0


def halflines_set(spec: OperatorSpec, window=None) -> CurveSet:
    """Half-lines z + lambda * [0, inf) from each zero of PQ, cut at the window."""
    if not spec.reduced_constant:
        raise WrongCase("R is not constant")
    pts = spec.zpq.points
    if pts.size == 0:
        raise WrongCase("P and Q are both constant: there are no zeros to start from")
    lam = spec.Qr.lead / spec.Pr.lead
    d = lam / abs(lam)
    if window is None:
        window = _default_window(spec)
    curves = []
    for z in pts:
        L = _ray_exit(complex(z), d, window)
        curves.append(Polyline(np.array([z, z + L * d]), CurveTag.INTEGRAL,
                               {"start": complex(z), "direction": complex(d)}))
    return CurveSet(curves).canonical()


# --------------------------------------------------------------------------
# deg Q - deg P = -1: strip hull and hyperbolic envelope
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StripHull:
    direction: complex
    y_minus: float
    y_plus: float
    normalization: tuple  # (a, b) with z = a w + b
    envelope_B: float

    def to_w(self, z):
        a, b = self.normalization
        return (np.asarray(z) - b) / a

    def to_z(self, w):
        a, b = self.normalization
        return a * np.asarray(w) + b

    def contains(self, z, tol: float = 0.0) -> np.ndarray:
        w = self.to_w(z)
        return (w.imag >= self.y_minus - tol) & (w.imag <= self.y_plus + tol)


def _normalized_field(spec: OperatorSpec, a: complex, b: complex):
    def Rt(w):
        z = a * w + b
        with np.errstate(divide="ignore", invalid="ignore"):
            return spec.Qr(z) / spec.Pr(z) / a
    return Rt


def _envelope_ok(Rt, B: float, y_top: float, n: int = 125) -> bool:
    """Rays from points between the hyperbola and the edge stay above the hyperbola."""
    if y_top == 0.0:
        return True
    sgn = 1.0 if y_top > 0 else -1.0
    yt = abs(y_top)

    def g(x):
        return 0.5 * yt * (np.abs(x) + B) / np.abs(x)
    frac = np.linspace(0.05, 1.0, 5)
    tt = B * (1.0 + np.geomspace(1e-2, 50.0, max(n // 5, 2)))
    s = np.concatenate([[0.0], np.geomspace(1e-3, 1e4, 200)]) * B
    for side in (-1.0, 1.0):
        t = side * np.repeat(tt, frac.size)
        y = g(t) + np.tile(frac, tt.size) * (yt - g(t))
        w = t + 1j * sgn * y
        d = Rt(w)
        d = d / np.abs(d)
        # reflect the lower half into the upper one
        d = np.where(sgn > 0, d, np.conj(d))
        w = np.where(sgn > 0, w, np.conj(w))
        pts = w[:, None] + s[None, :] * d[:, None]
        x = pts.real
        inside_b = np.abs(x) <= B
        need = np.where(inside_b, yt, g(np.where(inside_b, 1.0, x)))
        if np.any(pts.imag < need - 1e-12 * yt):
            return False
    return True


def strip_hull(spec: OperatorSpec, window=None, h: Optional[float] = None) -> StripHull:
    """Smallest strip holding the horizontal locus and Z(PQ), in normalised coordinates."""
    if spec.gap != -1:
        raise WrongRegime("the strip hull needs deg Q - deg P = -1")
    if regime(spec).tag is RegimeTag.TRIVIAL_PLANE:
        raise WrongRegime("the minimal set is the whole plane")
    a = complex(np.sqrt(-spec.lam + 0j))
    b = spec.mu / spec.lam
    if window is None:
        window = _default_window(spec, 3.0)
    if h is None:
        h = max(window[2] - window[0], window[3] - window[1]) / 400.0
    pts = [spec.zpq.points]
    hl = horizontal_locus(spec, window, h)
    if len(hl):
        pts.append(hl.points())
    w = (np.concatenate(pts) - b) / a
    ym = float(min(np.min(w.imag), 0.0))
    yp = float(max(np.max(w.imag), 0.0))
    # snap rounding noise on the special line to zero
    scale = max(1.0, float(np.max(np.abs(w), initial=1.0)))
    ym = 0.0 if abs(ym) < 1e-9 * scale else ym
    yp = 0.0 if abs(yp) < 1e-9 * scale else yp
    Rt = _normalized_field(spec, a, b)
    lo, hi = 0.0, 1.0
    found = False
    for _ in range(40):
        if _envelope_ok(Rt, hi, yp) and _envelope_ok(Rt, hi, ym):
            found = True
            break
        lo, hi = hi, hi * 2.0
    if found:
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            if _envelope_ok(Rt, mid, yp) and _envelope_ok(Rt, mid, ym):
                hi = mid
            else:
                lo = mid
    B = hi if found else math.inf
    return StripHull(a / abs(a), ym, yp, (a, b), float(B))


# --------------------------------------------------------------------------
# Re(lambda) = 0: first closed leaf from infinity
# --------------------------------------------------------------------------

def _winding(poly: np.ndarray, p: complex) -> float:
    v = poly - p
    ang = np.angle(v[1:] / v[:-1])
    return float(np.sum(ang) / (2 * math.pi))


def periodic_boundary(spec: OperatorSpec, anchor_angle: float = 1.0, tol: float = 1e-6,
                      eps: float = 1e-7) -> Polyline:
    """Outermost closed leaf that meets Z(PQ) or the curve of inflections."""
    if spec.gap != 1 or abs(spec.lam.real) > 1e-9 * max(1.0, abs(spec.lam)):
        raise WrongCase("needs deg Q - deg P = 1 with Re(lambda) = 0")
    if regime(spec).tag is not RegimeTag.COMPACT:
        raise WrongCase(f"regime is {regime(spec).tag.value}, not COMPACT")
    pts = spec.zpq.points
    c = complex(np.mean(pts))
    r0 = max(float(np.max(np.abs(pts - c))), 1e-3)
    e = complex(math.cos(anchor_angle), math.sin(anchor_angle))

    def leaf(s: float):
        z0 = c + s * e
        L = 2 * math.pi * (abs(z0) + r0) * 20 + 50.0 * r0
        stop = StopRule(window=None, h=0.01 * r0, max_arclength=L,
                        closure=True, eps_sing=eps)
        return integral_curve(spec, z0, Direction.FORWARD, stop)

    def outer(s: float) -> tuple[bool, Optional[Polyline]]:
        try:
            pl = leaf(s)
        except StartAtSingularity:
            return False, None
        stop = pl.meta["stop"]
        if stop == "singular":
            return False, pl
        if stop != "closed":
            raise NonClosure(f"leaf through anchor s={s:.6g} did not close ({stop})")
        v = pl.vertices
        d = np.min(np.abs(v[:, None] - pts[None, :]))
        if d <= 10 * eps:
            return False, pl
        r1 = eval_R1(spec, v)
        im = np.imag(r1)
        band = 1e-3 * (1.0 + np.abs(r1))
        if np.any(np.abs(im) <= band) or (np.max(im) > 0 and np.min(im) < 0):
            return False, pl
        enclosed = all(abs(_winding(v, p)) > 0.5 for p in pts)
        return enclosed, pl

    s_in = 0.0
    if not np.any(np.abs(pts - c) < 1e-12):
        ok, _ = outer(0.0)
        if ok:
            raise PreconditionViolated("leaf through the anchor centre already encloses Z(PQ)")
    s_out = 2.0 * r0
    best = None
    for _ in range(40):
        ok, pl = outer(s_out)
        if ok:
            best = pl
            break
        s_in, s_out = s_out, 2.0 * s_out
    if best is None:
        raise NonClosure("no outer closed leaf found")
    while s_out - s_in > tol * max(1.0, s_out):
        mid = 0.5 * (s_in + s_out)
        ok, pl = outer(mid)
        if ok:
            s_out, best = mid, pl
        else:
            s_in = mid
    meta = dict(best.meta)
    meta.update({"closed": True, "anchor": c + s_out * e, "s": s_out})
    return Polyline(best.vertices, CurveTag.BOUNDARY, meta)


# --------------------------------------------------------------------------
# deg Q - deg P = 1 with real positive residues: convex hull of Z(Q)
# --------------------------------------------------------------------------

def convex_hull(points) -> np.ndarray:
    """Counter-clockwise hull vertices (Andrew's monotone chain, collinear points dropped)."""
    p = np.unique(np.asarray(points, dtype=np.complex128).ravel())
    if p.size <= 2:
        return p
    pts = sorted(p.tolist(), key=lambda z: (z.real, z.imag))

    def cross(o, a, b):
        return (a.real - o.real) * (b.imag - o.imag) - (a.imag - o.imag) * (b.real - o.real)
    lower: list = []
    for z in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], z) <= 0:
            lower.pop()
        lower.append(z)
    upper: list = []
    for z in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], z) <= 0:
            upper.pop()
        upper.append(z)
    return np.array(lower[:-1] + upper[:-1], dtype=np.complex128)


def residue_hull(spec: OperatorSpec, tol: float = 1e-8) -> np.ndarray:
    """Convex hull of Z(Q) when each simple root has Q'(a)/P(a) real positive."""
    if spec.gap != 1:
        raise PreconditionViolated("needs deg Q - deg P = 1")
    bad = []
    for a, m in spec.zq:
        if m != 1:
            bad.append((complex(a), "multiple root of Q"))
            continue
        pa = spec.P(a)
        if abs(pa) <= tol * max(1.0, spec.P.norm()):
            bad.append((complex(a), "P vanishes"))
            continue
        r = spec.Q.derivative()(a) / pa
        if abs(r.imag) > tol * abs(r) or r.real <= 0:
            bad.append((complex(a), f"Q'/P = {r:.6g} is not positive real"))
    if bad:
        raise PreconditionViolated("; ".join(f"{a:.6g}: {why}" for a, why in bad))
    return convex_hull(spec.zq.points)


def point_in_polygon(poly: np.ndarray, z, tol: float = 0.0) -> np.ndarray:
    """Membership in a convex CCW polygon (segments and points allowed), within tol."""
    z = np.asarray(z, dtype=np.complex128)
    poly = np.asarray(poly, dtype=np.complex128)
    if poly.size == 1:
        return np.abs(z - poly[0]) <= tol
    if poly.size == 2:
        a, b = poly
        d = b - a
        t = np.clip(np.real((z - a) * np.conj(d)) / abs(d) ** 2, 0, 1)
        return np.abs(a + t * d - z) <= tol
    ok = np.ones(z.shape, dtype=bool)
    for a, b in zip(poly, np.roll(poly, -1)):
        d = b - a
        side = np.imag(np.conj(d) * (z - a)) / abs(d)
        ok &= side >= -tol
    return ok


# --------------------------------------------------------------------------
# parametric oracles
# --------------------------------------------------------------------------

@dataclass
class OracleCurve:
    name: str
    sampler: Callable
    domain: tuple
    special_points: list = field(default_factory=list)

    def sample(self, n: int = 2000, cutoff: float = 50.0) -> np.ndarray:
        """Vertices on the domain; infinite ends are cut at +-cutoff."""
        lo, hi = self.domain
        lo = max(lo, -cutoff)
        hi = min(hi, cutoff)
        t = np.linspace(lo, hi, n)
        return np.asarray(self.sampler(t), dtype=np.complex128)

    def polyline(self, n: int = 2000, cutoff: float = 50.0) -> Polyline:
        return Polyline(self.sample(n, cutoff), CurveTag.BOUNDARY, {"oracle": self.name})


def hyperbola_operator(alpha: complex, k: int = 1) -> tuple[Polynomial, Polynomial]:
    """P = z (z - alpha)^k, Q = -(z - alpha)^k, so that R = -1/z."""
    base = Polynomial.from_roots([alpha] * k)
    return Polynomial.z() * base, -base


def oracle_hyperbola(alpha: complex) -> list[OracleCurve]:
    """Boundary pieces of the set generated by a common root alpha of R = -1/z."""
    x0, y0 = float(alpha.real), float(alpha.imag)
    if x0 <= 0 or y0 <= 0:
        raise PreconditionViolated("needs Re(alpha) > 0 and Im(alpha) > 0")
    c = 3.0 + 2.0 * math.sqrt(2.0)
    xe, ye = c * x0, y0 / c
    ext = complex(xe, ye)

    def f1(t):
        return t + 1j * (y0 * t / (2 * t - x0))

    def f2(t):
        return t + 1j * (x0 * y0 / t)

    def f3(t):
        return t + 1j * (x0 * y0 * t / (2 * np.sqrt(x0 * t) + x0) ** 2)

    def f4(t):
        return t + 1j * (y0 * t / (2 * t - x0))

    sp = [("alpha", complex(alpha)), ("extruding", ext)]
    return [
        OracleCurve("real_axis", lambda t: t + 0j, (-math.inf, math.inf), [("origin", 0j)]),
        OracleCurve("f1_global", f1, (x0, math.inf), sp[:1]),
        OracleCurve("f2_local", f2, (x0, xe), sp),
        OracleCurve("f3_global", f3, (0.0, xe), [("origin", 0j), ("f3_at_x0", complex(x0, y0 / 9)),
                                                 ("extruding", ext)]),
        OracleCurve("f4_global", f4, (-math.inf, 0.0), [("origin", 0j)]),
    ]


def oracle_strip_segment(y0: float) -> Callable:
    """Membership predicate of the set generated by a common root at i*y0."""
    if y0 <= 0:
        raise PreconditionViolated("needs y0 > 0")

    def member(z, tol: float = 1e-12):
        z = np.asarray(z, dtype=np.complex128)
        strip = (z.imag >= -tol) & (z.imag <= y0 / 2 + tol)
        seg = (np.abs(z.real) <= tol) & (z.imag >= y0 / 2 - tol) & (z.imag <= y0 + tol)
        return strip | seg
    return member


def spiral_operator(lam: complex) -> tuple[Polynomial, Polynomial]:
    """P = z - 1, Q = lambda z (z - 1): R = lambda z with a common root at 1."""
    P = Polynomial.from_roots([1.0])
    return P, lam * Polynomial.z() * P


def _segment_crossings(a: np.ndarray, b: np.ndarray) -> list[tuple[int, int, float, float]]:
    """Index pairs (i, j) and fractions where segment a_i a_{i+1} meets b_j b_{j+1}."""
    p, r = a[:-1], np.diff(a)
    q, s = b[:-1], np.diff(b)
    out = []
    for i in range(p.size):
        den = np.imag(np.conj(r[i]) * s)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.imag(np.conj(q - p[i]) * s) / den
            u = np.imag(np.conj(q - p[i]) * r[i]) / den
        hit = np.nonzero((den != 0) & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1))[0]
        for j in hit:
            out.append((i, int(j), float(t[j]), float(u[j])))
    return out


def spiral_first_intersection(lam: complex, tol: float = 1e-13) -> tuple[float, float, complex]:
    """(t0, t1, z) with exp(-lam t0) = 1/(1 + lam t1), smallest positive parameters."""
    lam = complex(lam)

    def gam(t):
        return np.exp(-lam * t)

    def alp(t):
        return 1.0 / (1.0 + lam * t)
    # gamma winds around 0; alpha runs along a circle arc from 1 to 0
    T0 = 40.0 / lam.real
    t_g = np.concatenate([np.linspace(0, 1 / abs(lam), 400)[1:], np.linspace(1 / abs(lam), T0, 40000)])
    t_a = np.concatenate([np.linspace(0, 1 / abs(lam), 400)[1:], np.geomspace(1 / abs(lam), 1e6, 40000)])
    cands = _segment_crossings(gam(t_g), alp(t_a))
    if not cands:
        raise NonClosure("the two spiral arcs do not cross")
    best = None
    for i, j, fi, fj in cands:
        tg = t_g[i] + fi * (t_g[i + 1] - t_g[i])
        ta = t_a[j] + fj * (t_a[j + 1] - t_a[j])
        # Newton on gamma(tg) - alpha(ta) = 0 (two real unknowns)
        for _ in range(50):
            F = gam(tg) - alp(ta)
            dg = -lam * gam(tg)
            da = -lam / (1.0 + lam * ta) ** 2
            J = np.array([[dg.real, -da.real], [dg.imag, -da.imag]])
            step = np.linalg.solve(J, [-F.real, -F.imag])
            tg += step[0]
            ta += step[1]
            if abs(step[0]) + abs(step[1]) < tol:
                break
        key = (ta, tg)
        if best is None or key < best[:2]:
            best = (ta, tg)
    ta, tg = best
    return float(tg), float(ta), complex(gam(tg))


def oracle_spiral(lam: complex) -> list[OracleCurve]:
    """Local arc exp(-lam t) and global arc 1/(1 + lam t), cut at their first crossing."""
    lam = complex(lam)
    if lam.real <= 0 or lam.imag == 0:
        raise PreconditionViolated("needs Re(lambda) > 0 and Im(lambda) != 0")
    t0, t1, z = spiral_first_intersection(lam)
    sp = [("root", 1 + 0j), ("crossing", z)]
    return [
        OracleCurve("gamma_local", lambda t: np.exp(-lam * np.asarray(t)), (0.0, t0), sp),
        OracleCurve("alpha_global", lambda t: 1.0 / (1.0 + lam * np.asarray(t)), (0.0, t1), sp),
    ]


def unitdisk_operator(k: int) -> tuple[Polynomial, Polynomial]:
    """P = z^k + 1, Q = z (z^k - 1)."""
    zk = Polynomial([0] * k + [1])
    return zk + 1, Polynomial.z() * (zk - 1)


@dataclass
class UnitDiskOracle:
    k: int
    circle: OracleCurve

    def field(self, z):
        z = np.asarray(z, dtype=np.complex128)
        w = z ** self.k
        return z * (w - 1) / (w + 1)

    def ray_point(self, z, t):
        """Point z + t R(z) of the associated ray."""
        return np.asarray(z) + np.asarray(t) * self.field(z)

    def ratio_sq(self, r, theta, t):
        """|f|^2 / |z|^2 for z = r^(1/k) exp(i theta) from the closed form."""
        c = np.cos(self.k * np.asarray(theta))
        num = np.asarray(t) * (2 * (r ** 2 - 1) + t * ((r - c) ** 2 + (1 - c ** 2)))
        return 1.0 + num / ((r + c) ** 2 + (1 - c ** 2))

    def ray_exterior(self, z, t) -> np.ndarray:
        """True where the ray point at t stays strictly outside the closed unit disk."""
        z = np.asarray(z, dtype=np.complex128)
        r = np.abs(z) ** self.k
        theta = np.angle(z)
        return np.abs(z) ** 2 * self.ratio_sq(r, theta, t) > 1.0

    def first_integral(self, z):
        z = np.asarray(z, dtype=np.complex128)
        w = z ** self.k
        return np.log((1 - w) ** 2 / w) / self.k


def oracle_unitdisk(k: int) -> UnitDiskOracle:
    if k < 1:
        raise PreconditionViolated("k must be a positive integer")
    roots_ = [complex(math.cos(2 * math.pi * j / k), math.sin(2 * math.pi * j / k)) for j in range(k)]
    circle = OracleCurve("unit_circle", lambda t: np.exp(1j * np.asarray(t)), (0.0, 2 * math.pi),
                         [("origin", 0j)] + [(f"root_{j}", z) for j, z in enumerate(roots_)])
    return UnitDiskOracle(k, circle)


def periodic_operator(lam: complex = 1j) -> tuple[Polynomial, Polynomial]:
    """P = z - 1, Q = lambda z (z - 1): R = lambda z, zeros of PQ at 0 and 1."""
    return spiral_operator(lam)


ORACLES = {
    "hyperbola": oracle_hyperbola,
    "spiral": oracle_spiral,
    "unitdisk": oracle_unitdisk,
    "strip_segment": oracle_strip_segment,
}
