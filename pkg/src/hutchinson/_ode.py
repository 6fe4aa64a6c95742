"""Batched Dormand-Prince integration of the normalised field in arclength.

Each curve solves dz/ds = sign * R(z)/|R(z)| with its own adaptive step.
All active curves advance together in one vectorised stage evaluation,
which is the reason for not using ``scipy.integrate.solve_ivp`` here: that
solver handles one trajectory at a time and its event machinery does not
cover the per-curve stopping rules needed below.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_BS = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _BS


@dataclass
class StopRule:
    """Stopping configuration shared by every traced curve."""

    window: Optional[tuple] = None
    h: float = 0.05
    eps_sing: float = 1e-6
    max_arclength: float = 100.0
    closure: bool = True
    tol: float = 1e-10
    max_turn: float = 0.05
    max_steps: int = 200_000


@dataclass
class RawCurve:
    vertices: np.ndarray
    arclength: np.ndarray
    stop: str
    closed: bool = False
    hit: Optional[complex] = None
    meta: dict = field(default_factory=dict)


def unit_field(Qr, Pr, z: np.ndarray, sign: float) -> np.ndarray:
    """sign * R/|R| evaluated as Q conj(P) / |Q conj(P)|, finite at poles."""
    w = Qr(z) * np.conj(Pr(z))
    a = np.abs(w)
    with np.errstate(invalid="ignore", divide="ignore"):
        return sign * w / a


def _exit_point(z0: np.ndarray, z1: np.ndarray, window) -> np.ndarray:
    """Point where segment z0 -> z1 leaves the rectangle (z0 inside)."""
    x0, y0, x1, y1 = window
    d = z1 - z0
    t = np.ones(z0.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        for lo, hi, p, q in ((x0, x1, z0.real, d.real), (y0, y1, z0.imag, d.imag)):
            tt = np.where(q > 0, (hi - p) / q, np.where(q < 0, (lo - p) / q, np.inf))
            t = np.minimum(t, np.where(np.isfinite(tt), tt, 1.0))
    return z0 + np.clip(t, 0.0, 1.0) * d


def _inside(z: np.ndarray, window) -> np.ndarray:
    x0, y0, x1, y1 = window
    return (z.real >= x0) & (z.real <= x1) & (z.imag >= y0) & (z.imag <= y1)


def _seg_dist(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> np.ndarray:
    d = b - a
    L2 = np.abs(d) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.clip(np.real((p - a) * np.conj(d)) / L2, 0.0, 1.0)
    t = np.where(L2 > 0, t, 0.0)
    return np.abs(a + t * d - p)


def _rk_step(Qr, Pr, z: np.ndarray, hh: np.ndarray, sign: float) -> np.ndarray:
    K = np.empty((7, z.size), dtype=np.complex128)
    K[0] = unit_field(Qr, Pr, z, sign)
    for st in range(1, 7):
        acc = z.copy()
        for j, a in enumerate(_A[st]):
            if a != 0.0:
                acc = acc + hh * a * K[j]
        K[st] = unit_field(Qr, Pr, acc, sign)
    return z + hh * np.tensordot(_B, K, axes=1)


def integrate_batch(Qr, Pr, sing: np.ndarray, z0s, sign: float, stop: StopRule) -> list[RawCurve]:
    """Trace every start point in ``z0s`` until its own stop rule fires."""
    z = np.array(z0s, dtype=np.complex128).ravel().copy()
    n = z.size
    start = z.copy()
    s = np.zeros(n)
    hstep = np.full(n, stop.h * 0.25)
    active = np.ones(n, dtype=bool)
    reason = np.array(["cap"] * n, dtype=object)
    closed = np.zeros(n, dtype=bool)
    hit = np.full(n, np.nan + 0j)
    rec_idx = [np.arange(n)]
    rec_z = [z.copy()]
    rec_s = [s.copy()]
    sing = np.asarray(sing, dtype=np.complex128).ravel()

    def nearest_sing(pts):
        if sing.size == 0:
            return np.full(pts.shape, np.inf), np.zeros(pts.shape, dtype=int)
        dd = np.abs(pts[:, None] - sing[None, :])
        k = np.argmin(dd, axis=1)
        return dd[np.arange(pts.size), k], k

    if stop.window is not None:
        out = ~_inside(z, stop.window)
        active &= ~out
        reason[out] = "window"
    d0, k0 = nearest_sing(z)
    at = d0 < stop.eps_sing
    active &= ~at
    reason[at] = "singular"
    hit[at] = sing[k0[at]] if sing.size else np.nan
    k1_all = unit_field(Qr, Pr, z, sign)
    bad = ~np.isfinite(k1_all)
    reason[bad & active] = "degenerate"
    active &= ~bad

    steps = 0
    while np.any(active) and steps < stop.max_steps:
        steps += 1
        idx = np.nonzero(active)[0]
        zi = z[idx]
        dsing, ksing = nearest_sing(zi)
        hcap = np.minimum(hstep[idx], stop.h)
        hcap = np.minimum(hcap, np.maximum(0.5 * dsing, 0.25 * stop.eps_sing))
        hcap = np.minimum(hcap, np.maximum(stop.max_arclength - s[idx], 1e-15))
        K = np.empty((7, idx.size), dtype=np.complex128)
        K[0] = unit_field(Qr, Pr, zi, sign)
        for st in range(1, 7):
            acc = zi.copy()
            for j, a in enumerate(_A[st]):
                if a != 0.0:
                    acc = acc + hcap * a * K[j]
            K[st] = unit_field(Qr, Pr, acc, sign)
        znew = zi + hcap * np.tensordot(_B, K, axes=1)
        err = np.abs(hcap * np.tensordot(_E, K, axes=1))
        with np.errstate(invalid="ignore"):
            turn = np.abs(np.angle(K[6] * np.conj(K[0])))
        finite = np.isfinite(znew) & np.isfinite(err) & np.all(np.isfinite(K), axis=0)
        ok = finite & (err <= stop.tol) & (turn <= stop.max_turn)
        # step size update
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = 0.9 * (stop.tol / np.maximum(err, 1e-300)) ** 0.2
        fac = np.where(np.isfinite(fac), fac, 0.2)
        fac = np.where(turn > stop.max_turn, np.minimum(fac, 0.5), fac)
        newh = np.where(ok, hcap * np.clip(fac, 0.2, 5.0), hcap * np.clip(fac, 0.1, 0.5))
        newh = np.where(finite, newh, hcap * 0.25)
        hstep[idx] = newh
        stall = (~ok) & (newh < 1e-13)
        if np.any(stall):
            reason[idx[stall]] = "degenerate"
            active[idx[stall]] = False
        acc_idx = idx[ok]
        if acc_idx.size == 0:
            continue
        zo = zi[ok]
        zn = znew[ok]
        sn = s[acc_idx] + hcap[ok]
        done = np.zeros(acc_idx.size, dtype=bool)
        rsn = np.array(["cap"] * acc_idx.size, dtype=object)
        if stop.window is not None:
            out = ~_inside(zn, stop.window)
            if np.any(out):
                ze = _exit_point(zo[out], zn[out], stop.window)
                frac = np.abs(ze - zo[out]) / np.maximum(np.abs(zn[out] - zo[out]), 1e-300)
                hh = frac * hcap[ok][out]
                ze = _rk_step(Qr, Pr, zo[out], hh, sign)
                sn[out] = s[acc_idx[out]] + hh
                zn[out] = ze
                done |= out
                rsn[out] = "window"
        if stop.closure:
            near = (~done) & (sn > 10 * stop.h) & (_seg_dist(zo, zn, start[acc_idx]) < stop.h)
            if np.any(near):
                # close the curve exactly at its start point
                sn[near] = s[acc_idx[near]] + np.abs(start[acc_idx[near]] - zo[near])
                zn[near] = start[acc_idx[near]]
                closed[acc_idx[near]] = True
                done |= near
                rsn[near] = "closed"
        dn, kn = nearest_sing(zn)
        sg = (~done) & (dn < stop.eps_sing)
        if np.any(sg):
            hit[acc_idx[sg]] = sing[kn[sg]]
            done |= sg
            rsn[sg] = "singular"
        capd = (~done) & (sn >= stop.max_arclength * (1 - 1e-12))
        done |= capd
        z[acc_idx] = zn
        s[acc_idx] = sn
        rec_idx.append(acc_idx)
        rec_z.append(zn)
        rec_s.append(sn)
        fin = acc_idx[done]
        reason[fin] = rsn[done]
        active[fin] = False
    reason[active] = "max_steps"

    all_idx = np.concatenate(rec_idx)
    all_z = np.concatenate(rec_z)
    all_s = np.concatenate(rec_s)
    order = np.argsort(all_idx, kind="stable")
    all_idx, all_z, all_s = all_idx[order], all_z[order], all_s[order]
    bounds_ = np.searchsorted(all_idx, np.arange(n + 1))
    out_curves = []
    for i in range(n):
        v = all_z[bounds_[i]:bounds_[i + 1]]
        a = all_s[bounds_[i]:bounds_[i + 1]]
        if v.size == 1:
            v = np.array([v[0], v[0]])
            a = np.array([a[0], a[0]])
        h = complex(hit[i]) if np.isfinite(hit[i]) else None
        out_curves.append(RawCurve(v, a, str(reason[i]), bool(closed[i]), h))
    return out_curves
