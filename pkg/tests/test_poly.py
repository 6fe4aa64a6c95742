import cmath

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hutchinson.poly import (Polynomial, aberth, derivative, eval, eval_batch, im_conj_eval,
                             im_conj_product, poly_from_sequence, roots)

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
cplx = st.builds(complex, finite, finite)


def test_eval_at_root_of_z2_plus_1():
    assert abs(eval(Polynomial([1, 0, 1]), 1j)) == 0.0


def test_zero_polynomial_evaluates_to_zero():
    p = Polynomial([])
    assert p.is_zero()
    assert p.degree == -1
    assert eval(p, 5) == 0


def test_double_root_near_one():
    p = Polynomial.from_roots([1, 1])
    eps = 1e-3
    assert abs(eval(p, 1 + eps) - 1e-6) <= 1e-12


def test_trailing_zeros_trimmed():
    p = Polynomial([1, 2, 0, 0])
    assert p.degree == 1
    assert p == Polynomial([1, 2])


def test_derivative_examples():
    assert derivative(Polynomial([-1, 0, 0, 1])) == Polynomial([0, 0, 3])
    assert derivative(Polynomial([7])).is_zero()


def test_derivative_matches_central_difference():
    p = Polynomial.from_roots([1, 1, -2])
    h = 1e-5
    fd = (eval(p, h) - eval(p, -h)) / (2 * h)
    assert abs(eval(derivative(p), 0) - fd) <= 1e-6


def test_roots_simple_examples():
    rs = roots(Polynomial([1, 0, 1]))
    pts = sorted(rs.points, key=lambda z: z.imag)
    assert np.allclose(pts, [-1j, 1j])
    assert list(rs.multiplicities) == [1, 1]
    cube = roots(Polynomial([-1, 0, 0, 1]))
    assert all(abs(z ** 3 - 1) < 1e-12 for z in cube.points)


def test_roots_cluster_multiplicity():
    # (z-1)^2 (z+2) = z^3 - 3z + 2
    rs = roots(Polynomial([2, -3, 0, 1]))
    found = {round(z.real, 9): m for z, m in rs}
    assert found == {1.0: 2, -2.0: 1}
    assert rs.multiplicity_of(1.0) == 2


@given(st.lists(cplx, min_size=1, max_size=6, unique=True))
def test_roots_recover_well_separated_roots(rts):
    rts = np.array(rts)
    sep = np.min(np.abs(rts[:, None] - rts[None, :]) + np.eye(rts.size) * 10)
    if rts.size > 1 and sep < 0.2:
        return
    found = roots(Polynomial.from_roots(rts)).expanded()
    assert found.size == rts.size
    for r in rts:
        assert np.min(np.abs(found - r)) < 1e-7 * (1 + abs(r))


@given(st.lists(cplx, min_size=1, max_size=7), cplx)
def test_eval_matches_numpy(coeffs, z):
    p = Polynomial(coeffs)
    ref = np.polynomial.polynomial.polyval(z, np.array(coeffs, dtype=complex))
    assert abs(eval(p, z) - ref) <= 1e-9 * (1 + abs(ref))


@given(st.lists(cplx, min_size=1, max_size=5), st.lists(cplx, min_size=1, max_size=5), cplx)
def test_ring_operations_pointwise(a, b, z):
    A, B = Polynomial(a), Polynomial(b)
    for got, ref in ((A + B, A(z) + B(z)), (A - B, A(z) - B(z)), (A * B, A(z) * B(z))):
        assert abs(got(z) - ref) <= 1e-9 * (1 + abs(ref))


def test_aberth_against_numpy_roots():
    c = np.array([3 - 1j, 0.5, -2j, 1, 1 + 1j], dtype=complex)
    z, _ = aberth(c)
    ref = np.roots(c[::-1])
    for r in ref:
        assert np.min(np.abs(z - r)) < 1e-10


def test_eval_batch_rows():
    C = np.array([[1, 0, 1], [0, 1, 0]], dtype=complex)
    Z = np.array([[1j, 2.0], [3.0, -1.0]])
    out = eval_batch(C, Z)
    assert np.allclose(out, [[0, 5], [3, -1]])


def test_im_conj_product_examples():
    assert im_conj_product(Polynomial([1]), Polynomial([1])).is_zero()
    G = im_conj_product(Polynomial([0, 1]), Polynomial([1]))
    assert G(0.3, -0.7) == pytest.approx(-0.7)


def test_im_conj_product_axes_for_minus_one_over_z():
    # A = Q'P - QP', B = P^2 for P = z, Q = -1 gives A = 1, B = z^2
    P, Q = Polynomial([0, 1]), Polynomial([-1])
    A = Q.derivative() * P - Q * P.derivative()
    G = im_conj_product(A, P * P)
    xs = np.linspace(-2, 2, 9)
    for x in xs:
        assert G(x, 0.0) == pytest.approx(0.0, abs=1e-12)
        assert G(0.0, x) == pytest.approx(0.0, abs=1e-12)
    # proportional to -2xy
    assert np.sign(G(1.0, 1.0)) == np.sign(-2.0)


@given(st.lists(cplx, min_size=1, max_size=4), st.lists(cplx, min_size=1, max_size=4), cplx)
def test_im_conj_product_matches_direct(a, b, z):
    A, B = Polynomial(a), Polynomial(b)
    ref = (A(z) * np.conj(B(z))).imag
    got = im_conj_product(A, B)(z.real, z.imag)
    assert got == pytest.approx(ref, abs=1e-8 * (1 + abs(A(z)) * abs(B(z))))
    assert im_conj_eval(A, B, z) == pytest.approx(ref, abs=1e-8 * (1 + abs(A(z)) * abs(B(z))))


def test_shift_and_deflate():
    p = Polynomial.from_roots([2, 2, -1])
    assert p.deflate(2, 2) == Polynomial.from_roots([-1])
    s = p.shift(1.0)
    for z in (0.3, 1 + 2j):
        assert cmath.isclose(s(z), p(z + 1.0), rel_tol=1e-12)


def test_poly_from_sequence_pairs():
    assert poly_from_sequence([[1, 0], [0, 1]]) == Polynomial([1, 1j])
