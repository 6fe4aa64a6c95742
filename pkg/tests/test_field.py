import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from hutchinson.errors import BothZero, DegenerateOperator, PoleAt
from hutchinson.field import (RegimeTag, analyze, bounds, derivatives_R, eval_R, eval_R1, eval_R2,
                              fully_irregular, invariant_lines, laurent_at_infinity,
                              local_expansion, regime, spec_summary)
from hutchinson.poly import Polynomial as Pn

Z = sp.symbols("z")


def _sym(p: Pn):
    return sum((complex(c).real + sp.I * complex(c).imag) * Z ** k for k, c in enumerate(p.coeffs))


def test_gap_and_lambda_examples():
    s = analyze(Pn([1]), Pn([0, 0, 1]))
    assert s.gap == 2 and s.lam == 1
    s = analyze(Pn([0, 1]), Pn([-1]))
    assert s.gap == -1 and s.lam == -1 and s.phi_inf == pytest.approx(math.pi)


def test_asymptotic_constants_against_series():
    P, Q = Pn([1, 1]), Pn([0, -1, 1])
    s = analyze(P, Q)
    # independent oracle: series of Q/P at infinity via w = 1/z
    w = sp.symbols("w")
    expr = sp.series((_sym(Q) / _sym(P)).subs(Z, 1 / w) * w, w, 0, 4).removeO()
    coeffs = [complex(expr.coeff(w, k)) for k in range(4)]
    assert np.allclose(s.laurent[:4], coeffs)
    assert s.gap == 1 and s.lam == 1
    assert s.asym_A == pytest.approx(-2) and s.mu == pytest.approx(2) and s.kappa == 1


def test_laurent_at_infinity_monomial():
    c = laurent_at_infinity(Pn([0, 1]), Pn([-1]), 3)
    assert np.allclose(c, [-1, 0, 0])


def test_eval_R_examples():
    s = analyze(Pn([0, 1]), Pn([-1]))
    assert eval_R(s, 2.0) == pytest.approx(-0.5)
    lam = 1 + 6j
    s = analyze(Pn([1]), Pn([0, lam]))
    assert eval_R1(s, 0.3 + 0.1j) == pytest.approx(lam)
    assert eval_R2(s, -2.0) == pytest.approx(0)


def test_pole_raises_for_scalar():
    s = analyze(Pn([0, 1]), Pn([-1]))
    with pytest.raises(PoleAt):
        eval_R(s, 0.0)


def test_derivatives_match_sympy():
    P, Q = Pn([1, 1]), Pn([0, -1, 1])
    s = analyze(P, Q)
    z0 = 2j
    f = _sym(Q) / _sym(P)
    ref = [complex(sp.diff(f, Z, k).subs(Z, z0).evalf()) for k in range(4)]
    got = derivatives_R(s, z0, 3)
    assert np.allclose(got, ref, rtol=1e-10)
    h = 1e-4
    fd1 = (eval_R(s, z0 + h) - eval_R(s, z0 - h)) / (2 * h)
    fd2 = (eval_R(s, z0 + h) - 2 * eval_R(s, z0) + eval_R(s, z0 - h)) / h ** 2
    assert abs(eval_R1(s, z0) - fd1) <= 1e-5
    assert abs(eval_R2(s, z0) - fd2) <= 1e-5


def test_local_expansion_examples():
    le = local_expansion(analyze(Pn([0, 1]), Pn([-1])), 0)
    assert le.m_alpha == -1 and le.r_alpha == pytest.approx(-1) and le.phi_alpha == pytest.approx(math.pi)
    lam = 2 + 1j
    le = local_expansion(analyze(Pn([1]), Pn([0, lam])), 0)
    assert le.m_alpha == 1 and le.r_alpha == pytest.approx(lam)
    le = local_expansion(analyze(Pn([-1, 1]), Pn.from_roots([1, 1, 0])), 1)
    assert le.m_alpha == 1 and le.r_alpha == pytest.approx(1) and le.phi_alpha == pytest.approx(0)


@pytest.mark.parametrize("P,Q", [
    (Pn([1, 1]), Pn([0, -1, 1])),
    (Pn.from_roots([1j, -1j]), Pn.from_roots([0, 2])),
    (Pn([-1, 1]), Pn.from_roots([1, 1, 0]) * (1 + 6j)),
])
def test_local_expansion_reproduces_R(P, Q):
    s = analyze(P, Q)
    for alpha in np.concatenate([s.zp.points, s.zq.points]):
        le = local_expansion(s, alpha)
        errs = []
        for r in (1e-2, 1e-3, 1e-4):
            z = alpha + r * np.exp(0.7j)
            errs.append(abs(eval_R(s, z) - le.r_alpha * (z - alpha) ** le.m_alpha) / r ** le.m_alpha)
        assert errs[2] < errs[0] or errs[2] < 1e-10
        assert errs[2] < 1e-2 * max(1.0, abs(le.r_alpha))


def test_regime_examples():
    assert regime(analyze(Pn([1]), Pn([0, 0, 1]))).tag is RegimeTag.TRIVIAL_PLANE
    assert regime(analyze(Pn([-1, 1]), Pn.from_roots([1, 0]) * (1 + 6j))).tag is RegimeTag.COMPACT
    assert regime(analyze(Pn([1]), Pn([1]))).tag is RegimeTag.NO_MINIMAL


def test_strip_like_with_common_root():
    from hutchinson.cases import hyperbola_operator
    assert regime(analyze(*hyperbola_operator(1 + 0.8j))).tag is RegimeTag.STRIP_LIKE


def test_irregular_cases():
    assert fully_irregular(analyze(Pn([1]), Pn([1]))) == "a"
    assert fully_irregular(analyze(Pn([1]), Pn([0, 1]))) == "b"
    assert fully_irregular(analyze(Pn([0, 1]), Pn([-1, 0, 1]))) == "d"
    assert fully_irregular(analyze(Pn([-1, 1]), Pn.from_roots([1, 0]) * 2)) == "c"
    assert fully_irregular(analyze(Pn([-1, 1]), Pn.from_roots([1, 0]) * (1 + 6j))) is None


def test_invariant_lines():
    lines = invariant_lines(analyze(Pn([0, 1]), Pn([-1])))
    thetas = sorted(round(abs(math.sin(l.theta)), 9) for l in lines)
    assert thetas == [0.0, 1.0]
    assert invariant_lines(analyze(Pn([1]), Pn([0, 1 + 1j]))) == []
    lines = invariant_lines(analyze(Pn([0, 1]), Pn([-1, 0, 1])))
    assert any(abs(math.sin(l.theta)) < 1e-9 and l.distance(0.0) < 1e-9 for l in lines)


def test_invariant_lines_by_sampling():
    s = analyze(Pn([0, 1]), Pn([-1]))
    for line in invariant_lines(s):
        t = np.linspace(0.3, 3, 7)
        z = line.point + t * line.direction
        assert np.all(line.distance(z + eval_R(s, z)) < 1e-12)


def test_bounds_examples():
    b = bounds(analyze(Pn([0, 1]), Pn([1, 0, 1])))
    assert (b.d, b.singular_max, b.tangency_isolated_max, b.transverse_components_max) == (4, 4, 32, 58)
    b = bounds(analyze(Pn([1]), Pn([0, 1])))
    assert b.d == 0 and b.degenerate and any("degenerate" in f for f in b.flags)
    assert bounds(analyze(Pn([1, 0, 1]), Pn([2, 0, 1]))).components_max == 2


@given(st.integers(0, 4), st.integers(0, 4))
def test_bounds_d_formula(p, q):
    if p + q == 0:
        return
    P = Pn.from_roots(np.arange(p) + 0.5) if p else Pn([1])
    Q = Pn.from_roots(-np.arange(q) - 0.25j) if q else Pn([2])
    b = bounds(analyze(P, Q))
    assert b.d == max(3 * p + q - 1, 0)
    assert b.inflection_components_max == b.d


def test_analyze_rejects_zero_polynomials():
    with pytest.raises(BothZero):
        analyze(Pn([]), Pn([]))
    with pytest.raises(DegenerateOperator):
        analyze(Pn([]), Pn([1]))


def test_common_roots_cancelled():
    s = analyze(Pn([-1, 1]), Pn.from_roots([1, 0]) * (1 + 6j))
    assert len(s.common) == 1 and s.common[0].alpha == pytest.approx(1)
    assert s.Pr.degree == 0 and s.Qr.degree == 1


def test_spec_summary_is_json_ready():
    import json
    d = spec_summary(analyze(Pn([1, 1]), Pn([0, -1, 1])))
    json.dumps(d)
    assert d["gap"] == 1 and d["deg_P"] == 1
