"""The rational field R = Q/P attached to an operator Q(z) d/dz + P(z).

``analyze`` builds an immutable :class:`OperatorSpec` that keeps the raw
coefficients (common roots of P and Q are part of the zero set) together
with reduced copies in which common factors are cancelled; every
evaluation of R and its derivatives goes through the reduced copies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import BothZero, DegenerateOperator, PoleAt
from .poly import Polynomial, RootSet, derivative, roots

COEFF_CUTOFF = 1e-12
REAL_TOL = 1e-8
LINE_TOL = 1e-9
MATCH_TOL = 1e-7


class RegimeTag(str, Enum):
    TRIVIAL_PLANE = "TRIVIAL_PLANE"
    COMPACT = "COMPACT"
    STRIP_LIKE = "STRIP_LIKE"
    CONE_LIKE = "CONE_LIKE"
    FULLY_IRREGULAR = "FULLY_IRREGULAR"
    NO_MINIMAL = "NO_MINIMAL"


@dataclass(frozen=True)
class Regime:
    tag: RegimeTag
    detail: str = ""


@dataclass(frozen=True)
class CommonRoot:
    alpha: complex
    mult_P: int
    mult_Q: int


@dataclass(frozen=True)
class OperatorSpec:
    P: Polynomial
    Q: Polynomial
    p: int
    q: int
    p_inf: complex
    q_inf: complex
    lam: complex
    phi_inf: float
    gap: int
    mu: complex
    kappa: Optional[int]
    asym_A: complex
    zp: RootSet
    zq: RootSet
    zpq: RootSet
    common: tuple
    Pr: Polynomial
    Qr: Polynomial
    N1: Polynomial = field(repr=False)
    N2: Polynomial = field(repr=False)
    laurent: tuple = field(repr=False, default=())

    @property
    def singular_points(self) -> np.ndarray:
        """Distinct points of Z(PQ)."""
        return self.zpq.points

    @property
    def reduced_constant(self) -> bool:
        return self.Pr.degree == 0 and self.Qr.degree == 0


@dataclass(frozen=True)
class LocalData:
    alpha: complex
    m_alpha: int
    r_alpha: complex
    phi_alpha: float

    def d_alpha(self, theta):
        """Affine circle map theta -> phi_alpha + m_alpha * theta."""
        return self.phi_alpha + self.m_alpha * np.asarray(theta)


@dataclass(frozen=True)
class Line:
    point: complex
    direction: complex

    def __post_init__(self):
        d = complex(self.direction)
        if d == 0:
            raise ValueError("line direction must be nonzero")
        object.__setattr__(self, "direction", d / abs(d))

    @property
    def theta(self) -> float:
        return math.atan2(self.direction.imag, self.direction.real)

    def distance(self, z) -> np.ndarray:
        w = (np.asarray(z) - self.point) * np.conj(self.direction)
        return np.abs(np.imag(w))

    def coordinate(self, z) -> np.ndarray:
        return np.real((np.asarray(z) - self.point) * np.conj(self.direction))


@dataclass(frozen=True)
class BoundsReport:
    d: int
    singular_max: int
    tangency_isolated_max: int
    transverse_components_max: int
    tangency_lines_max: int
    switch_bound: float
    switch_bound_log10: float
    inflection_bound_lhs_max: float
    local_arcs_bound: float
    local_arcs_bound_log10: float
    components_max: int
    inflection_components_max: int
    degenerate: bool
    flags: tuple = ()


# --------------------------------------------------------------------------
# analysis
# --------------------------------------------------------------------------

def _match_roots(a: RootSet, b: RootSet) -> list[CommonRoot]:
    out = []
    for ra, ma in a:
        for rb, mb in b:
            if abs(ra - rb) <= MATCH_TOL * (1.0 + abs(ra)):
                out.append(CommonRoot(complex(0.5 * (ra + rb)), ma, mb))
                break
    return out


def _merge_rootsets(a: RootSet, b: RootSet) -> RootSet:
    acc: list[list] = [[r, m] for r, m in a]
    for rb, mb in b:
        for item in acc:
            if abs(item[0] - rb) <= MATCH_TOL * (1.0 + abs(rb)):
                item[1] += mb
                break
        else:
            acc.append([rb, mb])
    acc.sort(key=lambda x: (round(x[0].real, 10), round(x[0].imag, 10)))
    return RootSet(tuple((complex(r), int(m)) for r, m in acc))


def _rebuild(lead: complex, rs: RootSet, drop: dict) -> Polynomial:
    pts = []
    for r, m in rs:
        k = m
        for c, cm in drop.items():
            if abs(c - r) <= MATCH_TOL * (1.0 + abs(r)):
                k = m - cm
                break
        pts.extend([r] * k)
    return Polynomial.from_roots(pts, lead)


def laurent_at_infinity(P: Polynomial, Q: Polynomial, nterms: int) -> np.ndarray:
    """Coefficients s_j with R = sum_j s_j z^(gap - j) as z -> infinity."""
    ph = P.coeffs[::-1]
    qh = Q.coeffs[::-1]
    s = np.zeros(nterms, dtype=np.complex128)
    for j in range(nterms):
        acc = qh[j] if j < qh.size else 0.0
        for k in range(1, min(j, ph.size - 1) + 1):
            acc -= ph[k] * s[j - k]
        s[j] = acc / ph[0]
    return s


def analyze(P: Polynomial, Q: Polynomial) -> OperatorSpec:
    """Derive every invariant of the operator Q d/dz + P."""
    if P.is_zero() and Q.is_zero():
        raise BothZero("P and Q are both identically zero")
    if P.is_zero():
        raise DegenerateOperator("P is identically zero: R = Q/P is undefined")
    if Q.is_zero():
        raise DegenerateOperator("Q is identically zero: the field R vanishes")
    p, q = P.degree, Q.degree
    gap = q - p
    lam = Q.lead / P.lead
    zp = roots(P) if p >= 1 else RootSet(())
    zq = roots(Q) if q >= 1 else RootSet(())
    common = _match_roots(zp, zq)
    if common:
        drop = {c.alpha: min(c.mult_P, c.mult_Q) for c in common}
        Pr = _rebuild(P.lead, zp, drop)
        Qr = _rebuild(Q.lead, zq, drop)
    else:
        Pr, Qr = P, Q
    zpq = _merge_rootsets(zp, zq)

    s = laurent_at_infinity(Pr, Qr, max(p, q) + 8)
    cut = COEFF_CUTOFF * max(1.0, abs(lam))
    mu: complex = 0j
    kappa: Optional[int] = None
    A: complex = 0j
    if gap == 1:
        A = complex(s[1]) if abs(s[1]) > cut else 0j
        for j in range(2, s.size):
            if abs(s[j]) > cut:
                mu, kappa = complex(s[j]), j - 1
                break
    elif gap == 0:
        for j in range(1, s.size):
            if abs(s[j]) > cut:
                mu, kappa = complex(s[j]), j
                break
    elif gap == -1:
        mu, kappa = (complex(s[1]) if abs(s[1]) > cut else 0j), 1

    dP, dQ = derivative(Pr), derivative(Qr)
    N1 = dQ * Pr - Qr * dP
    N2 = (derivative(dQ) * Pr - Qr * derivative(dP)) * Pr - 2 * dP * N1
    return OperatorSpec(
        P=P, Q=Q, p=p, q=q, p_inf=P.lead, q_inf=Q.lead, lam=complex(lam),
        phi_inf=float(np.angle(lam)), gap=gap, mu=mu, kappa=kappa, asym_A=A,
        zp=zp, zq=zq, zpq=zpq, common=tuple(common), Pr=Pr, Qr=Qr, N1=N1, N2=N2,
        laurent=tuple(complex(x) for x in s),
    )


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def _check_pole(spec: OperatorSpec, z, den):
    if np.isscalar(z) and abs(den) <= 1e-14 * max(spec.Pr.abs_eval(z), 1e-300):
        raise PoleAt(complex(z))


def eval_R(spec: OperatorSpec, z):
    """R = Q/P. Arrays pass through (poles give inf); scalars raise PoleAt."""
    den = spec.Pr(z)
    _check_pole(spec, z, den)
    with np.errstate(divide="ignore", invalid="ignore"):
        return spec.Qr(z) / den


def eval_R1(spec: OperatorSpec, z):
    den = spec.Pr(z)
    _check_pole(spec, z, den)
    with np.errstate(divide="ignore", invalid="ignore"):
        return spec.N1(z) / (den * den)


def eval_R2(spec: OperatorSpec, z):
    den = spec.Pr(z)
    _check_pole(spec, z, den)
    with np.errstate(divide="ignore", invalid="ignore"):
        return spec.N2(z) / (den * den * den)


def taylor_R(spec: OperatorSpec, z0: complex, n: int) -> np.ndarray:
    """Taylor coefficients c_k of R(z0 + w); R^(k)(z0) = k! c_k."""
    qs = spec.Qr.shift(z0).coeffs
    ps = spec.Pr.shift(z0).coeffs
    if ps.size == 0 or abs(ps[0]) == 0:
        raise PoleAt(complex(z0))
    c = np.zeros(n + 1, dtype=np.complex128)
    for j in range(n + 1):
        acc = qs[j] if j < qs.size else 0.0
        for k in range(1, min(j, ps.size - 1) + 1):
            acc -= ps[k] * c[j - k]
        c[j] = acc / ps[0]
    return c


def derivatives_R(spec: OperatorSpec, z0: complex, n: int) -> np.ndarray:
    """R(z0), R'(z0), ..., R^(n)(z0)."""
    c = taylor_R(spec, z0, n)
    return c * np.array([math.factorial(k) for k in range(n + 1)], dtype=float)


def _mult_at(rs: RootSet, alpha: complex) -> int:
    best = 0
    bestd = np.inf
    for r, m in rs:
        d = abs(r - alpha)
        if d <= 1e-6 * (1.0 + abs(alpha)) and d < bestd:
            best, bestd = m, d
    return best


def local_expansion(spec: OperatorSpec, alpha: complex) -> LocalData:
    """Leading local term r (z - alpha)^m of R at alpha."""
    alpha = complex(alpha)
    mp = _mult_at(spec.zp, alpha)
    mq = _mult_at(spec.zq, alpha)
    qs = spec.Q.shift(alpha).coeffs
    ps = spec.P.shift(alpha).coeffs
    r = complex(qs[mq] / ps[mp])
    return LocalData(alpha, mq - mp, r, float(np.angle(r)))


# --------------------------------------------------------------------------
# R-invariant lines and irregularity
# --------------------------------------------------------------------------

def _line_is_invariant(spec: OperatorSpec, line: Line, npts: int = 20) -> bool:
    s = np.linspace(-3.0, 3.0, npts) * (1.0 + np.max(np.abs(spec.zpq.points), initial=0.0))
    s = s + 0.137  # keep off the anchor point, which is usually a root
    z = line.point + s * line.direction
    den = spec.Pr(z)
    num = spec.Qr(z)
    ok = np.abs(den) > 1e-9 * spec.Pr.abs_eval(z)
    if np.count_nonzero(ok) < npts // 2:
        return False
    Rv = num[ok] / den[ok]
    im = np.imag(np.conj(line.direction) * Rv)
    return bool(np.all(np.abs(im) <= LINE_TOL * (1.0 + np.abs(Rv))))


def _same_line(a: Line, b: Line) -> bool:
    cross = abs(np.imag(a.direction * np.conj(b.direction)))
    if cross > 1e-7:
        return False
    return float(a.distance(b.point)) <= 1e-7 * (1.0 + abs(b.point))


def invariant_lines(spec: OperatorSpec) -> list[Line]:
    """R-invariant lines supported by root pairs or by a root with a special direction."""
    pts = spec.zpq.points
    cands: list[Line] = []
    for i in range(pts.size):
        for j in range(i + 1, pts.size):
            cands.append(Line(pts[i], pts[j] - pts[i]))
    angles = [spec.phi_inf, 0.0, math.pi / 2]
    angles += [spec.phi_inf / 2 + k * math.pi / 2 for k in range(4)]
    g = spec.gap
    if g != 1:
        angles += [(-spec.phi_inf + k * math.pi) / (g - 1) for k in range(2 * abs(g - 1))]
    for a in pts:
        dirs = list(angles)
        loc = local_expansion(spec, a)
        if loc.m_alpha != 1:
            k1 = loc.m_alpha - 1
            dirs += [(-loc.phi_alpha + k * math.pi) / k1 for k in range(2 * abs(k1))]
        if spec.gap == 1:
            dirs.append(float(np.angle(spec.lam * a + spec.asym_A)))
        for th in dirs:
            cands.append(Line(a, complex(math.cos(th), math.sin(th))))
    out: list[Line] = []
    for c in cands:
        if any(_same_line(c, o) for o in out):
            continue
        if _line_is_invariant(spec, c):
            out.append(c)
    out.sort(key=lambda L: (round(L.point.real, 9), round(L.point.imag, 9), round(L.theta % math.pi, 9)))
    return out


def _is_linear_field(spec: OperatorSpec) -> bool:
    return spec.Pr.degree == 0 and spec.Qr.degree == 1


def _interlacing_on(spec: OperatorSpec, line: Line) -> bool:
    if spec.common:
        return False
    for rs in (spec.zp, spec.zq):
        if any(m != 1 for _, m in rs):
            return False
    labels = []
    for rs, lab in ((spec.zp, 0), (spec.zq, 1)):
        for r, _ in rs:
            if float(line.distance(r)) > REAL_TOL * (1.0 + abs(r)):
                return False
            labels.append((float(line.coordinate(r)), lab))
    labels.sort()
    return all(labels[i][1] != labels[i + 1][1] for i in range(len(labels) - 1))


def fully_irregular(spec: OperatorSpec) -> Optional[str]:
    """Case letter 'a'-'d' of the irregularity theorem, or None."""
    lam = spec.lam
    lam_pos_real = abs(lam.imag) <= REAL_TOL * abs(lam) and lam.real > 0
    lam_neg_real = abs(lam.imag) <= REAL_TOL * abs(lam) and lam.real < 0
    if spec.reduced_constant:
        return "a"
    if _is_linear_field(spec):
        if spec.q == 1 and not lam_neg_real:
            return "b"
        if spec.q >= 2 and lam_pos_real:
            return "c"
    if abs(spec.gap) <= 1 and (spec.gap != 1 or lam_pos_real):
        for line in invariant_lines(spec):
            if _interlacing_on(spec, line):
                return "d"
    return None


def irregular_line(spec: OperatorSpec) -> Optional[Line]:
    """The line carrying the set in irregularity case (d)."""
    for line in invariant_lines(spec):
        if _interlacing_on(spec, line):
            return line
    return None


def gap_shape(spec: OperatorSpec) -> RegimeTag:
    """Regime implied by the degree gap and lambda alone."""
    if spec.p == 0 and spec.q == 0:
        return RegimeTag.NO_MINIMAL
    if abs(spec.gap) >= 2 or (spec.gap == 1 and spec.lam.real < 0):
        return RegimeTag.TRIVIAL_PLANE
    return {1: RegimeTag.COMPACT, 0: RegimeTag.CONE_LIKE, -1: RegimeTag.STRIP_LIKE}[spec.gap]


def regime(spec: OperatorSpec) -> Regime:
    """Exactly one regime tag; irregularity takes precedence over the gap shape."""
    shape = gap_shape(spec)
    if shape is RegimeTag.NO_MINIMAL:
        return Regime(shape, "P and Q are both constant")
    case = fully_irregular(spec)
    if case is not None:
        return Regime(RegimeTag.FULLY_IRREGULAR, f"case ({case}); gap shape {shape.value}")
    if shape is RegimeTag.TRIVIAL_PLANE:
        why = "|deg Q - deg P| >= 2" if abs(spec.gap) >= 2 else "gap 1 with Re(lambda) < 0"
        return Regime(shape, why)
    return Regime(shape, f"gap {spec.gap}")


# --------------------------------------------------------------------------
# closed-form bounds
# --------------------------------------------------------------------------

def bounds(spec: OperatorSpec) -> BoundsReport:
    p, q = spec.p, spec.q
    d = max(3 * p + q - 1, 0)
    flags = []
    degenerate = p + q <= 1
    if degenerate:
        flags.append("degenerate, deg P+deg Q <= 1")
    if d >= 2:
        sw_log = 16 * d * math.log10(d)
        loc_log = sw_log
    else:
        sw_log = loc_log = 0.0 if d == 1 else -math.inf
    sw_extra = 46 * d ** 3
    loc_extra = d * (2 * d + 1)
    try:
        sw = float(d) ** (16 * d) + sw_extra
    except OverflowError:
        sw = math.inf
    try:
        la = float(d) ** (16 * d) + loc_extra
    except OverflowError:
        la = math.inf
    if math.isfinite(sw):
        sw_log = math.log10(sw) if sw > 0 else -math.inf
    if math.isfinite(la):
        loc_log = math.log10(la) if la > 0 else -math.inf
    return BoundsReport(
        d=d,
        singular_max=max(4 * p + q - 2, 0),
        tangency_isolated_max=2 * d * d,
        transverse_components_max=2 * d * d + 6 * d + 2,
        tangency_lines_max=max(p, q) + 1,
        switch_bound=sw,
        switch_bound_log10=sw_log,
        inflection_bound_lhs_max=sw,
        local_arcs_bound=la,
        local_arcs_bound_log10=loc_log,
        components_max=(p + q) // 2 if spec.gap == 0 else 1,
        inflection_components_max=d,
        degenerate=degenerate,
        flags=tuple(flags),
    )


def spec_summary(spec: OperatorSpec) -> dict:
    """JSON-friendly description of the derived invariants."""
    def c(z):
        return [float(np.real(z)), float(np.imag(z))]
    return {
        "P": [c(x) for x in spec.P.coeffs],
        "Q": [c(x) for x in spec.Q.coeffs],
        "deg_P": spec.p,
        "deg_Q": spec.q,
        "gap": spec.gap,
        "lambda": c(spec.lam),
        "phi_inf": spec.phi_inf,
        "mu": c(spec.mu),
        "kappa": spec.kappa,
        "A": c(spec.asym_A),
        "zeros_P": [{"z": c(r), "mult": m} for r, m in spec.zp],
        "zeros_Q": [{"z": c(r), "mult": m} for r, m in spec.zq],
        "common_roots": [{"z": c(cr.alpha), "mult_P": cr.mult_P, "mult_Q": cr.mult_Q}
                         for cr in spec.common],
    }
