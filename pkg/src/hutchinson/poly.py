"""Dense complex polynomials, simultaneous root finding and real bivariate parts.

Coefficients are stored in ascending order (``coeffs[k]`` multiplies ``z**k``).
Degrees in this package stay small, so a dense representation is used
throughout and every evaluation is a vectorised Horner scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Iterable, Sequence

import numpy as np

from .errors import NonConvergence, PreconditionError

_EPS = np.finfo(float).eps


def _as_coeffs(values: Iterable[complex]) -> np.ndarray:
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values,
                     dtype=np.complex128).ravel()
    if not np.all(np.isfinite(arr)):
        raise PreconditionError("polynomial coefficients must be finite")
    nz = np.nonzero(arr)[0]
    if nz.size == 0:
        return np.zeros(0, dtype=np.complex128)
    return arr[: nz[-1] + 1].copy()


class Polynomial:
    """Complex polynomial with ascending dense coefficients.

    The zero polynomial has an empty coefficient array and degree -1.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable[complex] = ()):
        self.coeffs = _as_coeffs(coeffs)
        self.coeffs.setflags(write=False)

    # construction -------------------------------------------------------
    @classmethod
    def from_roots(cls, roots: Iterable[complex], lead: complex = 1.0) -> "Polynomial":
        c = np.array([lead], dtype=np.complex128)
        for r in roots:
            c = np.convolve(c, np.array([-r, 1.0], dtype=np.complex128))
        return cls(c)

    @classmethod
    def constant(cls, value: complex) -> "Polynomial":
        return cls([value])

    @classmethod
    def z(cls) -> "Polynomial":
        return cls([0.0, 1.0])

    # basic properties ---------------------------------------------------
    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    def is_zero(self) -> bool:
        return self.coeffs.size == 0

    @property
    def lead(self) -> complex:
        return complex(self.coeffs[-1]) if self.coeffs.size else 0j

    def norm(self) -> float:
        """Euclidean norm of the coefficient vector."""
        return float(np.linalg.norm(self.coeffs)) if self.coeffs.size else 0.0

    # evaluation ---------------------------------------------------------
    def __call__(self, z):
        return eval(self, z)

    def abs_eval(self, z):
        """Horner evaluation of sum |c_k| |z|^k (the rounding-error scale)."""
        r = np.abs(np.asarray(z, dtype=np.complex128))
        acc = np.zeros_like(r)
        for c in np.abs(self.coeffs[::-1]):
            acc = acc * r + c
        return acc

    # arithmetic ---------------------------------------------------------
    def __add__(self, other):
        other = _coerce(other)
        n = max(self.coeffs.size, other.coeffs.size)
        c = np.zeros(n, dtype=np.complex128)
        c[: self.coeffs.size] += self.coeffs
        c[: other.coeffs.size] += other.coeffs
        return Polynomial(c)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(-self.coeffs)

    def __sub__(self, other):
        return self + (-_coerce(other))

    def __rsub__(self, other):
        return _coerce(other) - self

    def __mul__(self, other):
        other = _coerce(other)
        if self.is_zero() or other.is_zero():
            return Polynomial()
        return Polynomial(np.convolve(self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = Polynomial([1.0])
        for _ in range(int(k)):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.coeffs.shape == other.coeffs.shape and bool(np.all(self.coeffs == other.coeffs))

    def __hash__(self):
        return hash(self.coeffs.tobytes())

    def __repr__(self):
        return f"Polynomial({[complex(c) for c in self.coeffs]})"

    def derivative(self, order: int = 1) -> "Polynomial":
        p = self
        for _ in range(order):
            p = derivative(p)
        return p

    def shift(self, a: complex) -> "Polynomial":
        """Coefficients of p(a + w) as a polynomial in w (Taylor shift)."""
        c = self.coeffs
        if c.size == 0:
            return Polynomial()
        out = np.zeros(c.size, dtype=np.complex128)
        # Horner in polynomial arithmetic: out = out*(w + a) + c_k
        for ck in c[::-1]:
            out = np.concatenate(([0.0], out[:-1])) + a * out
            out[0] += ck
        return Polynomial(out)

    def deflate(self, root: complex, times: int = 1) -> "Polynomial":
        """Divide by (z - root)**times by synthetic division, dropping remainders."""
        c = self.coeffs.copy()
        for _ in range(times):
            if c.size <= 1:
                break
            n = c.size - 1
            q = np.zeros(n, dtype=np.complex128)
            acc = c[n]
            for k in range(n - 1, -1, -1):
                q[k] = acc
                acc = c[k] + root * acc
            c = q
        return Polynomial(c)

    def scaled(self, s: complex) -> "Polynomial":
        return Polynomial(self.coeffs * s)


def _coerce(x) -> Polynomial:
    if isinstance(x, Polynomial):
        return x
    return Polynomial([complex(x)])


def eval(p: Polynomial, z):
    """Horner evaluation; accepts scalars or arrays of complex points."""
    c = p.coeffs
    scalar = np.isscalar(z)
    zz = np.asarray(z, dtype=np.complex128)
    if c.size == 0:
        out = np.zeros_like(zz)
    else:
        out = np.full_like(zz, c[-1])
        for ck in c[-2::-1]:
            out = out * zz + ck
    return complex(out) if scalar else out


def derivative(p: Polynomial) -> Polynomial:
    c = p.coeffs
    if c.size <= 1:
        return Polynomial()
    return Polynomial(c[1:] * np.arange(1, c.size))


# --------------------------------------------------------------------------
# roots
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RootSet:
    """Distinct roots with multiplicities."""

    roots: tuple = ()

    @property
    def points(self) -> np.ndarray:
        return np.array([r for r, _ in self.roots], dtype=np.complex128)

    @property
    def multiplicities(self) -> np.ndarray:
        return np.array([m for _, m in self.roots], dtype=int)

    @property
    def degree(self) -> int:
        return int(sum(m for _, m in self.roots))

    def expanded(self) -> np.ndarray:
        return np.array([r for r, m in self.roots for _ in range(m)], dtype=np.complex128)

    def multiplicity_of(self, z: complex, tol: float = 1e-6) -> int:
        for r, m in self.roots:
            if abs(r - z) <= tol * (1.0 + abs(z)):
                return m
        return 0

    def __len__(self):
        return len(self.roots)

    def __iter__(self):
        return iter(self.roots)


def _initial_guesses(a: np.ndarray) -> np.ndarray:
    n = a.size - 1
    radius = 1.0 + float(np.max(np.abs(a[:-1] / a[-1]))) if n > 0 else 1.0
    k = np.arange(n)
    # offset angle and a mild radial modulation avoid symmetric stalls
    ang = 2.0 * np.pi * k / n + 0.4
    return radius * (1.0 + 0.03 * np.cos(3.0 * k + 1.0)) * np.exp(1j * ang)


def aberth(coeffs: np.ndarray, z0: np.ndarray | None = None, maxiter: int = 200):
    """Aberth-Ehrlich simultaneous iteration on ascending coefficients.

    Returns ``(roots, converged)``; a root counts as converged once its
    correction is at rounding level or its residual is below the
    evaluation error bound.
    """
    a = np.asarray(coeffs, dtype=np.complex128)
    n = a.size - 1
    if n < 1:
        return np.zeros(0, dtype=np.complex128), True
    if n == 1:
        return np.array([-a[0] / a[1]]), True
    z = _initial_guesses(a) if z0 is None else np.array(z0, dtype=np.complex128)
    da = a[1:] * np.arange(1, n + 1)
    absa = np.abs(a)
    active = np.ones(n, dtype=bool)
    for _ in range(maxiter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        zi = z[idx]
        p = np.full(zi.shape, a[-1])
        for c in a[-2::-1]:
            p = p * zi + c
        dp = np.full(zi.shape, da[-1])
        for c in da[-2::-1]:
            dp = dp * zi + c
        r = np.abs(zi)
        bound = np.zeros(zi.shape)
        for c in absa[::-1]:
            bound = bound * r + c
        done = np.abs(p) <= 4.0 * _EPS * bound
        diff = zi[:, None] - z[None, :]
        diff[np.arange(idx.size), idx] = np.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.sum(1.0 / diff, axis=1)
            w = p / dp
            corr = w / (1.0 - w * s)
        bad = ~np.isfinite(corr)
        corr[bad] = 1e-3 * (1.0 + r[bad])
        z[idx] = zi - np.where(done, 0.0, corr)
        small = np.abs(corr) <= 2.0 * _EPS * (1.0 + np.abs(z[idx]))
        active[idx[done | small]] = False
    return z, not np.any(active)


def aberth_batch(C: np.ndarray, Z: np.ndarray, iters: int = 12) -> np.ndarray:
    """Warm-started Aberth iterations for a stack of polynomials.

    ``C`` has shape (M, n+1) with ascending coefficients and a nonzero last
    column; ``Z`` has shape (M, n) with current root estimates.  Runs a
    fixed number of sweeps and freezes roots whose residual reaches the
    rounding level.
    """
    C = np.asarray(C, dtype=np.complex128)
    Z = np.array(Z, dtype=np.complex128)
    M, n1 = C.shape
    n = n1 - 1
    if n < 1:
        return Z
    dC = C[:, 1:] * np.arange(1, n1)
    absC = np.abs(C)
    eye = np.eye(n, dtype=bool)
    if n > 1:
        # coincident estimates are a fixed point of the iteration: split them
        gap = np.abs(Z[:, :, None] - Z[:, None, :])
        gap[:, eye] = np.inf
        tight = np.min(gap, axis=2) < 1e-9 * (1.0 + np.abs(Z))
        if np.any(tight):
            kick = 1e-7 * (1.0 + np.abs(Z)) * np.exp(2.4j * np.arange(n))[None, :]
            Z = np.where(tight, Z + kick, Z)
    for _ in range(iters):
        p = np.repeat(C[:, -1:], n, axis=1)
        for k in range(n - 1, -1, -1):
            p = p * Z + C[:, k:k + 1]
        dp = np.repeat(dC[:, -1:], n, axis=1)
        for k in range(n - 2, -1, -1):
            dp = dp * Z + dC[:, k:k + 1]
        r = np.abs(Z)
        bound = np.repeat(absC[:, -1:], n, axis=1)
        for k in range(n - 1, -1, -1):
            bound = bound * r + absC[:, k:k + 1]
        done = np.abs(p) <= 4.0 * _EPS * bound
        if np.all(done):
            break
        diff = Z[:, :, None] - Z[:, None, :]
        diff[:, eye] = np.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.sum(1.0 / diff, axis=2)
            w = p / dp
            corr = w / (1.0 - w * s)
        corr = np.where(np.isfinite(corr) & ~done, corr, 0.0)
        Z = Z - corr
    return Z


def eval_batch(C: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Evaluate row i of ``C`` at every entry of row i of ``Z``."""
    C = np.asarray(C, dtype=np.complex128)
    out = np.repeat(C[:, -1:], Z.shape[1], axis=1)
    for k in range(C.shape[1] - 2, -1, -1):
        out = out * Z + C[:, k:k + 1]
    return out


def _cluster(z: np.ndarray, tol: float) -> list[list[int]]:
    """Agglomerative fusion: clusters of size m fuse within 10 tol^(1/m)."""
    clusters = [[i] for i in range(z.size)]
    while len(clusters) > 1:
        cents = np.array([z[c].mean() for c in clusters])
        best = None
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                m = len(clusters[i]) + len(clusters[j])
                thr = 10.0 * tol ** (1.0 / m) * max(1.0, abs(cents[i]), abs(cents[j]))
                d = abs(cents[i] - cents[j])
                if d <= thr and (best is None or d < best[0]):
                    best = (d, i, j)
        if best is None:
            break
        _, i, j = best
        clusters[i] = clusters[i] + clusters[j]
        del clusters[j]
    return clusters


def _polish_multiple(p: Polynomial, z: complex, m: int, radius: float) -> complex:
    """Newton on p^(m-1), whose root at an m-fold root of p is simple."""
    q = p.derivative(m - 1)
    dq = derivative(q)
    z0 = z
    for _ in range(8):
        d = eval(dq, z)
        if d == 0:
            break
        step = eval(q, z) / d
        z = z - step
        if abs(step) <= 2 * _EPS * (1 + abs(z)):
            break
    if not np.isfinite(z) or abs(z - z0) > max(radius, 1e-12):
        return z0
    return z


def roots(p: Polynomial, tol: float = 1e-12) -> RootSet:
    """Roots of ``p`` with multiplicities.

    Uses Aberth-Ehrlich iteration (cap 200) and fuses clusters.
    Raises NonConvergence if some root misses the residual target
    ``|p(r)| <= tol * ||p||`` after the cap.
    """
    if p.degree < 1:
        raise PreconditionError("roots() needs degree >= 1")
    a = p.coeffs / p.lead
    # exact zero roots are split off first: they are common and structural
    nzero = int(np.argmax(np.abs(a) > 0))
    a_red = a[nzero:]
    found = []
    if a_red.size > 1:
        z, _ = aberth(a_red)
        found = list(z)
    zs = np.array(found, dtype=np.complex128)
    pn = Polynomial(a)
    resid = np.abs(eval(Polynomial(a_red), zs)) if zs.size else np.zeros(0)
    scale = max(Polynomial(a_red).norm(), 1e-300)
    if zs.size and np.any(resid > max(tol, 64 * _EPS) * scale * np.maximum(1.0, np.abs(zs)) ** a_red.size):
        raise NonConvergence("Aberth iteration did not reach the residual target")
    out = []
    if nzero:
        out.append((0j, nzero))
    for cl in _cluster(zs, tol):
        m = len(cl)
        c = complex(zs[cl].mean())
        if m > 1:
            c = _polish_multiple(pn, c, m, 10.0 * tol ** (1.0 / m) * max(1.0, abs(c)))
        out.append((c, m))
    # merge a fused cluster with the exact zero root if they coincide
    out.sort(key=lambda rm: (round(rm[0].real, 12), round(rm[0].imag, 12)))
    return RootSet(tuple(out))


# --------------------------------------------------------------------------
# bivariate real parts
# --------------------------------------------------------------------------

@dataclass
class BivariatePoly:
    """Real polynomial sum c_ij x^i y^j stored as a map of exponent pairs."""

    coeffs: dict = field(default_factory=dict)

    @property
    def total_degree(self) -> int:
        nz = [i + j for (i, j), c in self.coeffs.items() if c != 0.0]
        return max(nz) if nz else -1

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for (i, j), c in self.coeffs.items():
            out = out + c * x ** i * y ** j
        return out

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(c) <= tol for c in self.coeffs.values())


def _real_imag_parts(p: Polynomial) -> tuple[np.ndarray, np.ndarray]:
    """Matrices U[i,j], V[i,j] with p(x+iy) = sum (U + iV)[i,j] x^i y^j."""
    n = max(p.degree, 0)
    U = np.zeros((n + 1, n + 1))
    V = np.zeros((n + 1, n + 1))
    ipow = [1, 1j, -1, -1j]
    for k, ck in enumerate(p.coeffs):
        for j in range(k + 1):
            term = ck * comb(k, j) * ipow[j % 4]
            U[k - j, j] += term.real
            V[k - j, j] += term.imag
    return U, V


def _conv2(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    out = np.zeros((A.shape[0] + B.shape[0] - 1, A.shape[1] + B.shape[1] - 1))
    for i in range(A.shape[0]):
        for j in range(A.shape[1]):
            if A[i, j] != 0.0:
                out[i:i + B.shape[0], j:j + B.shape[1]] += A[i, j] * B
    return out


def im_conj_product(A: Polynomial, B: Polynomial) -> BivariatePoly:
    """G(x, y) = Im(A(x+iy) * conj(B(x+iy))) as a real bivariate polynomial."""
    if A.is_zero() or B.is_zero():
        return BivariatePoly({})
    UA, VA = _real_imag_parts(A)
    UB, VB = _real_imag_parts(B)
    G = _conv2(VA, UB) - _conv2(UA, VB)
    scale = max(float(np.max(np.abs(G))), 1e-300)
    coeffs = {(i, j): float(G[i, j]) for i in range(G.shape[0]) for j in range(G.shape[1])
              if abs(G[i, j]) > 1e-15 * scale}
    return BivariatePoly(coeffs)


def im_conj_eval(A: Polynomial, B: Polynomial, z):
    """Fast complex-arithmetic evaluation of Im(A conj(B)) at points z."""
    return np.imag(eval(A, z) * np.conj(eval(B, z)))


def poly_from_sequence(seq: Sequence) -> Polynomial:
    """Build a polynomial from ``[[re, im], ...]`` or plain numbers."""
    vals = []
    for item in seq:
        if isinstance(item, (list, tuple)):
            vals.append(complex(float(item[0]), float(item[1])))
        else:
            vals.append(complex(item))
    return Polynomial(vals)
