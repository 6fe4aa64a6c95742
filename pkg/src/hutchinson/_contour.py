"""Zero-level curve extraction on a rectangular grid.

Marching squares comes from scikit-image; every vertex it returns lies on
a grid edge and is then refined by bisection of the exact function along
that edge.  Node values that are exactly zero count as positive so that a
curve passing through grid nodes is still seen as a sign change.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from skimage.measure import find_contours

Window = tuple  # (x0, y0, x1, y1)


def grid_axes(window: Window, h: float) -> tuple[np.ndarray, np.ndarray]:
    x0, y0, x1, y1 = window
    nx = max(int(math.ceil((x1 - x0) / h)) + 1, 2)
    ny = max(int(math.ceil((y1 - y0) / h)) + 1, 2)
    return np.linspace(x0, x1, nx), np.linspace(y0, y1, ny)


def _signed(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=float)
    out[out == 0.0] = np.finfo(float).tiny
    return out


def bisect_segments(fn: Callable, za: np.ndarray, zb: np.ndarray, iters: int = 48) -> np.ndarray:
    """Vectorised bisection for a sign change of ``fn`` on segments [za, zb]."""
    fa = _signed(fn(za)) > 0
    lo = np.zeros(za.shape)
    hi = np.ones(za.shape)
    d = zb - za
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = _signed(fn(za + mid * d)) > 0
        same = fm == fa
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return za + 0.5 * (lo + hi) * d


def zero_curves(fn: Callable, window: Window, h: float, refine: bool = True) -> list[np.ndarray]:
    """Polylines (complex vertex arrays) approximating ``{fn = 0}`` in the window.

    ``fn`` maps a complex array to a real array of the same shape.
    """
    xs, ys = grid_axes(window, h)
    Z = xs[None, :] + 1j * ys[:, None]
    F = _signed(fn(Z))
    finite = np.isfinite(F)
    if not np.any(F[finite] > 0) or not np.any(F[finite] < 0):
        return []
    scale = np.max(np.abs(F[finite]))
    F = np.where(finite, F / scale, np.nan)
    out = []
    for c in find_contours(F, 0.0):
        r, col = c[:, 0], c[:, 1]
        rr = np.rint(r)
        on_row = np.abs(r - rr) < 1e-9
        ri = np.clip(np.where(on_row, rr, np.floor(r)), 0, ys.size - 1).astype(int)
        ci = np.clip(np.floor(col), 0, xs.size - 1).astype(int)
        cr = np.clip(np.rint(col), 0, xs.size - 1).astype(int)
        # endpoints of the supporting edge
        za = np.where(on_row, xs[ci] + 1j * ys[ri], xs[cr] + 1j * ys[ri])
        zb = np.where(on_row,
                      xs[np.minimum(ci + 1, xs.size - 1)] + 1j * ys[ri],
                      xs[cr] + 1j * ys[np.minimum(ri + 1, ys.size - 1)])
        lin = np.interp(col, np.arange(xs.size), xs) + 1j * np.interp(r, np.arange(ys.size), ys)
        if refine:
            fa = _signed(fn(za)) > 0
            fb = _signed(fn(zb)) > 0
            ok = (fa != fb) & (za != zb)
            z = lin.copy()
            if np.any(ok):
                z[ok] = bisect_segments(fn, za[ok], zb[ok])
        else:
            z = lin
        if z.size >= 2:
            out.append(z)
    return out


def merge_components(curves: list[np.ndarray], radius: float) -> list[list[int]]:
    """Group polylines whose vertices come within ``radius`` of each other."""
    from scipy.spatial import cKDTree

    n = len(curves)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    trees = [cKDTree(np.column_stack([c.real, c.imag])) for c in curves]
    for i in range(n):
        for j in range(i + 1, n):
            if find(i) == find(j):
                continue
            d, _ = trees[j].query(np.column_stack([curves[i].real, curves[i].imag]), k=1,
                                  distance_upper_bound=radius)
            if np.any(np.isfinite(d)):
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())
