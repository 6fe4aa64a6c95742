"""Two-sided numerical approximation of the minimal invariant set.

Inner side: points that provably belong to the set, namely the zeros of
P and Q, root trails of set points and backward integral curves of set
points.  Outer side: a cell raster started all-IN, from which a cell is
removed once the associated rays from its centre and corners provably
avoid the remaining set and leave the window through a certified
exterior exit.  The removal rule is monotone, so sweeping until nothing
changes reaches the greatest fixed point.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.spatial import cKDTree
from skimage.measure import find_contours

from .errors import DegenerateTrail, NoProgress, WrongRegime
from .field import OperatorSpec, RegimeTag, gap_shape, local_expansion, regime
from .trace import (CurveSet, CurveTag, Direction, Polyline, StopRule, _check_trail_degenerate,
                    integral_curves, trails_batch)

Window = tuple  # (x0, y0, x1, y1)


class CellState(IntEnum):
    OUT = 0
    IN = 1
    PINNED = 2


@dataclass
class Grid:
    origin: complex
    h: float
    nx: int
    ny: int
    state: np.ndarray  # shape (ny, nx), values of CellState

    @classmethod
    def from_window(cls, window: Window, h: float) -> "Grid":
        x0, y0, x1, y1 = window
        nx = max(int(math.ceil((x1 - x0) / h - 1e-9)), 1)
        ny = max(int(math.ceil((y1 - y0) / h - 1e-9)), 1)
        return cls(complex(x0, y0), h, nx, ny, np.full((ny, nx), CellState.IN, dtype=np.int8))

    @property
    def window(self) -> Window:
        return (self.origin.real, self.origin.imag,
                self.origin.real + self.nx * self.h, self.origin.imag + self.ny * self.h)

    def centers(self) -> np.ndarray:
        xs = self.origin.real + (np.arange(self.nx) + 0.5) * self.h
        ys = self.origin.imag + (np.arange(self.ny) + 0.5) * self.h
        return xs[None, :] + 1j * ys[:, None]

    def cell_index(self, z) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(ix, iy, inside) for points z."""
        z = np.asarray(z)
        fx = (z.real - self.origin.real) / self.h
        fy = (z.imag - self.origin.imag) / self.h
        ix = np.floor(fx).astype(np.int64)
        iy = np.floor(fy).astype(np.int64)
        inside = (ix >= 0) & (ix < self.nx) & (iy >= 0) & (iy < self.ny)
        return np.clip(ix, 0, self.nx - 1), np.clip(iy, 0, self.ny - 1), inside

    def member(self) -> np.ndarray:
        """Boolean raster of IN or PINNED cells."""
        return self.state != CellState.OUT

    def state_at(self, z) -> np.ndarray:
        ix, iy, inside = self.cell_index(z)
        out = self.state[iy, ix].astype(int)
        return np.where(inside, out, -1)

    def counts(self) -> dict:
        return {s.name: int(np.count_nonzero(self.state == s)) for s in CellState}


@dataclass
class FarField:
    """Exterior certificate for rays leaving the window."""

    kind: str
    params: dict = field(default_factory=dict)

    def certify(self, exit_pts: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        if self.kind == "COMPACT":
            return np.ones(exit_pts.shape, dtype=bool)
        if self.kind == "STRIP":
            a, b = self.params["a"], self.params["b"]
            ym, yp = self.params["y_minus"], self.params["y_plus"]
            w = (exit_pts - b) / a
            dw = dirs / a
            return ((w.imag > yp) & (dw.imag > 0)) | ((w.imag < ym) & (dw.imag < 0))
        if self.kind == "CONE":
            c = self.params["apex"]
            axis = self.params["axis"]
            half = self.params["half_angle"]
            reach = self.params["reach"]
            ok = np.ones(exit_pts.shape, dtype=bool)
            for t in np.concatenate([[0.0], reach * 2.0 ** np.arange(0, 40)]):
                p = exit_pts + t * dirs - c
                ang = np.abs(np.angle(p * np.exp(-1j * axis)))
                ok &= ang >= half
            return ok
        return np.zeros(exit_pts.shape, dtype=bool)

    def describe(self) -> dict:
        out = {"kind": self.kind}
        for k, v in self.params.items():
            out[k] = [v.real, v.imag] if isinstance(v, complex) else v
        return out


@dataclass
class MinSetResult:
    grid: Grid
    inner_points: np.ndarray
    boundary: CurveSet
    window: Window
    far_field: FarField
    sweeps: int
    diagnostics: dict = field(default_factory=dict)
    inner_curves: list = field(default_factory=list, repr=False)
    _dist: Optional[np.ndarray] = field(default=None, repr=False)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def distance_to_set(self, z) -> np.ndarray:
        """Approximate distance from z to the IN/PINNED cells (0 inside them)."""
        if self._dist is None:
            self._dist = distance_transform_edt(~self.grid.member()) * self.grid.h
        g = self.grid
        z = np.asarray(z, dtype=np.complex128)
        fx = (z.real - g.origin.real) / g.h - 0.5
        fy = (z.imag - g.origin.imag) / g.h - 0.5
        ix = np.clip(np.rint(fx), 0, g.nx - 1).astype(int)
        iy = np.clip(np.rint(fy), 0, g.ny - 1).astype(int)
        d = self._dist[iy, ix]
        # cell-centre distances overestimate by up to half a cell
        d = np.maximum(d - 0.5 * g.h, 0.0)
        outside = (fx < -0.5) | (fx > g.nx - 0.5) | (fy < -0.5) | (fy > g.ny - 0.5)
        return np.where(outside, d + np.hypot(np.maximum(np.abs(fx - np.clip(fx, -0.5, g.nx - 0.5)), 0),
                                              np.maximum(np.abs(fy - np.clip(fy, -0.5, g.ny - 0.5)), 0)) * g.h, d)


# --------------------------------------------------------------------------
# window selection
# --------------------------------------------------------------------------

def _box(center: complex, half_x: float, half_y: float) -> Window:
    return (center.real - half_x, center.imag - half_y, center.real + half_x, center.imag + half_y)


def choose_window(spec: OperatorSpec, probe: bool = True) -> Window:
    """Window that should contain the interesting part of the set."""
    tag = regime(spec).tag
    shape = gap_shape(spec)
    if tag in (RegimeTag.TRIVIAL_PLANE, RegimeTag.NO_MINIMAL) or shape in (
            RegimeTag.TRIVIAL_PLANE, RegimeTag.NO_MINIMAL):
        raise WrongRegime(f"no bounded picture for regime {tag.value}")
    pts = spec.zpq.points
    c = complex(np.mean(pts)) if pts.size else 0j
    r0 = float(np.max(np.abs(pts - c))) if pts.size else 0.0
    if shape is RegimeTag.COMPACT:
        half = 2.0 * max(r0, 1.0)
        win = _box(c, half, half)
        if probe:
            for _ in range(6):
                if _frame_clears(spec, win):
                    break
                half *= 1.5
                win = _box(c, half, half)
        return win
    if shape is RegimeTag.STRIP_LIKE:
        from .cases import strip_hull
        hull = strip_hull(spec, None, None)
        a, b = hull.normalization
        ym, yp = hull.y_minus, hull.y_plus
        length = max(20.0, 10.0 * r0) * abs(a)
        pad = max(0.75 * (yp - ym), 0.6) * abs(a)
        corners = []
        for s in (-length, length):
            for y in (ym * abs(a) - pad, yp * abs(a) + pad):
                corners.append(b + a / abs(a) * (s + 1j * y))
        corners = np.array(corners)
        return (float(corners.real.min()), float(corners.imag.min()),
                float(corners.real.max()), float(corners.imag.max()))
    half = 3.0 * max(r0, 1.0)
    return _box(c, half, half)


def _frame_clears(spec: OperatorSpec, win: Window) -> bool:
    x0, y0, x1, y1 = win
    h = max(x1 - x0, y1 - y0) / 40.0
    inner = inner_approximation(spec, budget=2000, window=win, h=h, max_levels=1)
    grid = outer_approximation(spec, win, h, inner, raise_no_progress=False)
    st = grid.state
    ring = np.concatenate([st[0], st[-1], st[:, 0], st[:, -1]])
    return bool(np.all(ring == CellState.OUT))


def far_field_for(spec: OperatorSpec, window: Window) -> FarField:
    shape = gap_shape(spec)
    if shape is RegimeTag.COMPACT:
        return FarField("COMPACT")
    if shape is RegimeTag.STRIP_LIKE:
        from .cases import strip_hull
        hull = strip_hull(spec, window, None)
        a, b = hull.normalization
        return FarField("STRIP", {"a": complex(a), "b": complex(b),
                                  "y_minus": float(hull.y_minus), "y_plus": float(hull.y_plus)})
    if shape is RegimeTag.CONE_LIKE:
        x0, y0, x1, y1 = window
        return FarField("CONE", {"apex": complex(0.5 * (x0 + x1), 0.5 * (y0 + y1)),
                                 "axis": float(spec.phi_inf + math.pi),
                                 "half_angle": math.pi / 4,
                                 "reach": float(math.hypot(x1 - x0, y1 - y0))})
    return FarField("NONE")


# --------------------------------------------------------------------------
# inner approximation
# --------------------------------------------------------------------------

def _clip(z: np.ndarray, window: Window) -> np.ndarray:
    x0, y0, x1, y1 = window
    m = (z.real >= x0) & (z.real <= x1) & (z.imag >= y0) & (z.imag <= y1)
    return z[m]


def _densify(v: np.ndarray, spacing: float) -> np.ndarray:
    if v.size < 2:
        return v
    seg = np.abs(np.diff(v))
    k = np.maximum(np.ceil(seg / spacing).astype(int), 1)
    if np.all(k == 1):
        return v
    parts = [v[:1]]
    starts = np.repeat(v[:-1], k)
    steps = np.repeat(np.diff(v) / k, k)
    offs = np.concatenate([np.arange(1, kk + 1) for kk in k])
    parts.append(starts + steps * offs)
    return np.concatenate(parts)


def incoming_directions(spec: OperatorSpec, alpha: complex) -> list[float]:
    """Directions along which forward trajectories arrive at alpha."""
    loc = local_expansion(spec, alpha)
    m, phi = loc.m_alpha, loc.phi_alpha
    if m == 1:
        return [2 * math.pi * k / 8 for k in range(8)] if loc.r_alpha.real < 0 else []
    k = abs(1 - m)
    return [(phi - math.pi + 2 * math.pi * j) / (1 - m) for j in range(k)]


def _farthest_point_sample(cands: np.ndarray, taken: np.ndarray, k: int,
                           rng: np.random.Generator) -> np.ndarray:
    if cands.size == 0 or k <= 0:
        return np.zeros(0, dtype=np.complex128)
    if cands.size > 20000:
        cands = cands[rng.choice(cands.size, 20000, replace=False)]
    if taken.size:
        tree = cKDTree(np.column_stack([taken.real, taken.imag]))
        d, _ = tree.query(np.column_stack([cands.real, cands.imag]))
    else:
        d = np.full(cands.size, np.inf)
        d[rng.integers(cands.size)] = -1.0
    chosen = []
    for _ in range(min(k, cands.size)):
        i = int(np.argmax(d))
        if d[i] <= 0 and chosen:
            break
        chosen.append(cands[i])
        d = np.minimum(d, np.abs(cands - cands[i]))
    return np.array(chosen, dtype=np.complex128)


def _clip_runs(v: np.ndarray, window: Window) -> list[np.ndarray]:
    """Maximal runs of consecutive vertices inside the window."""
    x0, y0, x1, y1 = window
    m = (v.real >= x0) & (v.real <= x1) & (v.imag >= y0) & (v.imag <= y1)
    if not np.any(m):
        return []
    if np.all(m):
        return [v]
    edges = np.flatnonzero(np.diff(np.concatenate([[0], m.astype(np.int8), [0]])))
    return [v[i:j] for i, j in zip(edges[::2], edges[1::2])]


def _trail_safe(spec: OperatorSpec, us: np.ndarray) -> np.ndarray:
    keep = []
    for u in us:
        try:
            _check_trail_degenerate(spec, complex(u))
            keep.append(u)
        except DegenerateTrail:
            pass
    return np.array(keep, dtype=np.complex128)


def inner_curves(spec: OperatorSpec, budget: int, window: Optional[Window] = None,
                 h: Optional[float] = None, seed: int = 0, max_levels: int = 50,
                 batch: int = 48) -> list[np.ndarray]:
    """Polylines inside the minimal set, in the order they were generated.

    The first entry holds the zeros of PQ as isolated vertices.  Level 1
    adds their root trails and the backward curves arriving at them; later
    levels trace the same two kinds of curves from farthest-point samples
    of everything found so far.  Vertices are spaced at most h/4 apart and
    clipped to the window.
    """
    zpq = spec.zpq.points.copy()
    curves: list[np.ndarray] = [zpq]
    if budget <= 0:
        return curves
    if window is None:
        window = choose_window(spec, probe=False)
    x0, y0, x1, y1 = window
    if h is None:
        h = max(x1 - x0, y1 - y0) / 100.0
    rng = np.random.default_rng(seed)
    diag = math.hypot(x1 - x0, y1 - y0)
    stop = StopRule(window=window, h=h / 2, max_arclength=20.0 * diag, closure=True)
    spacing = h / 4
    eps = max(1e-5, 1e-3 * h)
    total = zpq.size

    def grow(seeds: np.ndarray, back_starts: np.ndarray) -> int:
        nonlocal total
        new: list[np.ndarray] = []
        seeds = _trail_safe(spec, seeds)
        if seeds.size:
            tb = trails_batch(spec, seeds, max_move=h / 2, window=window)
            for bl in tb.branches:
                for v, _, _ in bl:
                    new.extend(_clip_runs(_densify(v, spacing), window))
        if back_starts.size:
            for c in integral_curves(spec, back_starts, Direction.BACKWARD, stop):
                new.extend(_clip_runs(_densify(c.vertices, spacing), window))
        if not new:
            return 0
        old = np.concatenate(curves)
        cat = np.concatenate(new)
        d, _ = cKDTree(np.column_stack([old.real, old.imag])).query(np.column_stack([cat.real, cat.imag]))
        curves.extend(new)
        total += cat.size
        return int(np.count_nonzero(d > h / 2))

    starts = []
    for a in zpq:
        for th in incoming_directions(spec, a):
            starts.append(a + eps * complex(math.cos(th), math.sin(th)))
    grow(zpq, np.array(starts, dtype=np.complex128))
    used = zpq.copy()
    level = 1
    while total < budget and level < max_levels:
        level += 1
        allp = np.concatenate(curves)
        seeds = _farthest_point_sample(allp, used, batch, rng)
        if seeds.size == 0:
            break
        sing = spec.zpq.points
        back = seeds
        if sing.size:
            back = seeds[np.min(np.abs(seeds[:, None] - sing[None, :]), axis=1) > 10 * stop.eps_sing]
        fresh = grow(seeds, back)
        used = np.concatenate([used, seeds])
        if fresh == 0:
            break
    # earlier levels come first, so truncation keeps the zeros and their trails
    out, n = [], 0
    for c in curves:
        if n >= budget and out:
            break
        take = c[:max(budget - n, 0)] if c is not zpq else c
        if take.size:
            out.append(take)
            n += take.size
    return out


def inner_approximation(spec: OperatorSpec, budget: int, window: Optional[Window] = None,
                        h: Optional[float] = None, seed: int = 0, max_levels: int = 50,
                        batch: int = 48) -> np.ndarray:
    """Points of the minimal set: Z(PQ), then trails and backward curves of set points."""
    return np.concatenate(inner_curves(spec, budget, window, h, seed, max_levels, batch))


# --------------------------------------------------------------------------
# outer approximation
# --------------------------------------------------------------------------

def _unit_dirs(spec: OperatorSpec, z: np.ndarray) -> np.ndarray:
    w = spec.Qr(z) * np.conj(spec.Pr(z))
    a = np.abs(w)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(a > 0, w / a, np.nan)


def _exit_distance(z: np.ndarray, d: np.ndarray, window: Window) -> np.ndarray:
    x0, y0, x1, y1 = window
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.where(d.real > 0, (x1 - z.real) / d.real, np.where(d.real < 0, (x0 - z.real) / d.real, np.inf))
        ty = np.where(d.imag > 0, (y1 - z.imag) / d.imag, np.where(d.imag < 0, (y0 - z.imag) / d.imag, np.inf))
    return np.maximum(np.minimum(tx, ty), 0.0)


@dataclass
class _RayTable:
    origins: np.ndarray
    dirs: np.ndarray
    static_blocked: np.ndarray
    indptr: np.ndarray
    cells: np.ndarray


_FINE = 8
# static blocking: pin radius around inner points and the start of the hot zone
_R_PIN = 0.3
_S_HOT = 1.0 / 3.0


def _inner_raster(grid: Grid, inner: np.ndarray) -> np.ndarray:
    """Distance to the nearest inner point on a raster of spacing h/8."""
    h = grid.h
    x0, y0, _, _ = grid.window
    hf = h / _FINE
    fnx, fny = grid.nx * _FINE + 1, grid.ny * _FINE + 1
    ip = _clip(inner, grid.window)
    if ip.size == 0:
        return np.full((fny, fnx), np.inf)
    occ = np.zeros((fny, fnx), dtype=bool)
    fx = np.clip(np.rint((ip.real - x0) / hf), 0, fnx - 1).astype(int)
    fy = np.clip(np.rint((ip.imag - y0) / hf), 0, fny - 1).astype(int)
    occ[fy, fx] = True
    return distance_transform_edt(~occ) * hf


def _skip_length(h: float, window: Window) -> float:
    x0, y0, x1, y1 = window
    return max(4.0 * h, math.sqrt(4.0 * h * 0.5 * math.hypot(x1 - x0, y1 - y0)))


def _build_rays(spec: OperatorSpec, grid: Grid, inner: np.ndarray, far: FarField,
                chunk: int = 3_000_000) -> tuple[_RayTable, dict]:
    h = grid.h
    window = grid.window
    x0, y0, x1, y1 = window
    nx, ny = grid.nx, grid.ny
    # fine raster for distances to inner points and to pinned squares
    f = _FINE
    hf = h / f
    fnx, fny = nx * f + 1, ny * f + 1
    d_inner = _inner_raster(grid, inner)
    pinned = grid.state == CellState.PINNED
    pin_f = np.zeros((fny, fnx), dtype=bool)
    if np.any(pinned):
        big = np.kron(pinned, np.ones((f, f), dtype=bool))
        pin_f[:-1, :-1] |= big
        pin_f[1:, 1:] |= big
        pin_f[:-1, 1:] |= big
        pin_f[1:, :-1] |= big
        d_pin = distance_transform_edt(~pin_f) * hf
    else:
        d_pin = np.full((fny, fnx), np.inf)

    xs = x0 + np.arange(nx + 1) * h
    ys = y0 + np.arange(ny + 1) * h
    corners = xs[None, :] + 1j * ys[:, None]
    centers = grid.centers()
    dc = _unit_dirs(spec, corners)
    dm = _unit_dirs(spec, centers)
    # angular spread between neighbouring sample rays
    def angdiff(a, b):
        with np.errstate(invalid="ignore"):
            return np.abs(np.angle(a * np.conj(b)))
    sp_c = np.zeros((ny, nx))
    for sl in ((slice(0, ny), slice(0, nx)), (slice(1, ny + 1), slice(0, nx)),
               (slice(0, ny), slice(1, nx + 1)), (slice(1, ny + 1), slice(1, nx + 1))):
        sp_c = np.fmax(sp_c, angdiff(dm, dc[sl]))
    sp_k = np.zeros((ny + 1, nx + 1))
    for oy, ox in ((0, 0), (1, 0), (0, 1), (1, 1)):
        sub = np.zeros((ny + 1, nx + 1))
        sub[oy:oy + ny, ox:ox + nx] = sp_c
        sp_k = np.fmax(sp_k, sub)
    origins = np.concatenate([centers.ravel(), corners.ravel()])
    dirs = np.concatenate([dm.ravel(), dc.ravel()])
    spread = np.concatenate([sp_c.ravel(), sp_k.ravel()])
    spread = np.where(np.isfinite(spread), np.minimum(spread, math.pi / 2), math.pi / 2)
    sin_sp = np.sin(spread)
    nr = origins.size
    bad = ~np.isfinite(dirs)
    dirs = np.where(bad, 1.0 + 0j, dirs)

    ds = h / 2
    s_hot = _S_HOT * h
    r_pin = _R_PIN * h
    L_skip = _skip_length(h, window)
    L = _exit_distance(origins, dirs, window)
    exit_pts = origins + L * dirs
    certified = far.certify(exit_pts, dirs)
    static = bad | ~certified
    nsamp = np.ceil(L / ds).astype(np.int64) + 1

    indptr = np.zeros(nr + 1, dtype=np.int64)
    cell_chunks = []
    counts = np.zeros(nr, dtype=np.int64)
    order = np.arange(nr)
    start = 0
    while start < nr:
        tot = np.cumsum(nsamp[start:])
        stop_i = start + max(int(np.searchsorted(tot, chunk)), 1)
        ids = order[start:stop_i]
        start = stop_i
        ids = ids[~static[ids]]
        if ids.size == 0:
            continue
        ns = nsamp[ids]
        rid = np.repeat(np.arange(ids.size), ns)
        first = np.cumsum(ns) - ns
        k = np.arange(rid.size) - np.repeat(first, ns)
        s = np.minimum(k * ds, np.repeat(L[ids], ns))
        z = origins[ids][rid] + s * dirs[ids][rid]
        fx = np.clip(np.rint((z.real - x0) / hf), 0, fnx - 1).astype(np.int64)
        fy = np.clip(np.rint((z.imag - y0) / hf), 0, fny - 1).astype(np.int64)
        hot = (s >= s_hot) & (d_inner[fy, fx] <= r_pin + 0.5 * s * sin_sp[ids][rid])
        blk = np.zeros(ids.size, dtype=bool)
        np.logical_or.at(blk, rid, hot)
        static[ids[blk]] = True
        keep = (~blk[rid]) & (s >= L_skip)
        cx = np.clip(np.floor((z.real - x0) / h), 0, nx - 1).astype(np.int64)
        cy = np.clip(np.floor((z.imag - y0) / h), 0, ny - 1).astype(np.int64)
        cid = cy * nx + cx
        cid_k = cid[keep]
        rid_k = rid[keep]
        if cid_k.size:
            newrun = np.ones(cid_k.size, dtype=bool)
            newrun[1:] = (cid_k[1:] != cid_k[:-1]) | (rid_k[1:] != rid_k[:-1])
            cid_k = cid_k[newrun]
            rid_k = rid_k[newrun]
            # drop pinned cells: they are handled statically
            cell_chunks.append((ids[rid_k], cid_k))
            np.add.at(counts, ids[rid_k], 1)
    indptr[1:] = np.cumsum(counts)
    cells = np.zeros(indptr[-1], dtype=np.int64)
    fill = indptr[:-1].copy()
    for rids, cids in cell_chunks:
        # rows arrive in ray order within each chunk
        o = np.argsort(rids, kind="stable")
        rids, cids = rids[o], cids[o]
        first_pos = np.searchsorted(rids, rids)
        pos = fill[rids] + (np.arange(rids.size) - first_pos)
        cells[pos] = cids
        np.add.at(fill, rids, 1)
    info = {"L_skip": L_skip, "rays": int(nr), "static_blocked": int(np.count_nonzero(static)),
            "certified_exits": int(np.count_nonzero(certified))}
    return _RayTable(origins, dirs, static, indptr, cells), info


def outer_approximation(spec: OperatorSpec, window: Window, h: float, inner: np.ndarray,
                        far_field: Optional[FarField] = None, raise_no_progress: bool = True,
                        max_sweeps: Optional[int] = None, diagnostics: Optional[dict] = None) -> Grid:
    """Greatest fixed point of the ray-exclusion rule on a cell raster."""
    inner = np.asarray(inner, dtype=np.complex128)
    if inner.size == 0:
        raise ValueError("inner approximation must be nonempty")
    grid = Grid.from_window(window, h)
    ix, iy, inside = grid.cell_index(inner)
    grid.state[iy[inside], ix[inside]] = CellState.PINNED
    far = far_field if far_field is not None else far_field_for(spec, grid.window)
    rays, info = _build_rays(spec, grid, inner, far)
    nx, ny = grid.nx, grid.ny
    ncell = nx * ny
    # ray ids of the five samples of each cell
    cid = np.arange(ncell)
    cy, cx = np.divmod(cid, nx)
    k00 = ncell + cy * (nx + 1) + cx
    five = np.stack([cid, k00, k00 + 1, k00 + nx + 1, k00 + nx + 2])
    state = grid.state.ravel()
    ptr = rays.indptr[:-1].copy()
    end = rays.indptr[1:]
    free = np.zeros(rays.origins.size, dtype=bool)
    cand = np.nonzero(~rays.static_blocked)[0]
    sweeps = 0
    flipped_total = 0
    history = []
    limit = max_sweeps if max_sweeps is not None else ncell
    while sweeps < limit:
        sweeps += 1
        # advance each candidate ray past cells that are already OUT
        work = cand[~free[cand]]
        while work.size:
            live = ptr[work] < end[work]
            free[work[~live]] = True
            work = work[live]
            if work.size == 0:
                break
            is_out = state[rays.cells[ptr[work]]] == CellState.OUT
            ptr[work[is_out]] += 1
            work = work[is_out]
        ok = np.all(free[five], axis=0) & (state == CellState.IN)
        nflip = int(np.count_nonzero(ok))
        history.append(nflip)
        if nflip == 0:
            break
        state[ok] = CellState.OUT
        flipped_total += nflip
    grid.state = state.reshape(ny, nx)
    if raise_no_progress and flipped_total == 0 and np.any(grid.state == CellState.IN):
        raise NoProgress("first sweep removed nothing; enlarge the window or refine h")
    if diagnostics is not None:
        diagnostics.update(info)
        diagnostics["sweeps"] = sweeps
        diagnostics["flips_per_sweep"] = history
        diagnostics["far_field"] = far.describe()
    grid.sweeps = sweeps  # type: ignore[attr-defined]
    return grid


def _angdiff(a, b):
    with np.errstate(invalid="ignore"):
        return np.abs(np.angle(a * np.conj(b)))


def _sublattice(grid: Grid, iy: np.ndarray, ix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Corners and centres of the 2x2 sub-cells of each listed cell, with their ray spread.

    Returns origins and spreads of shape (ncells, 13): nine sub-corners then
    four sub-centres.
    """
    h = grid.h
    x0, y0, _, _ = grid.window
    a = np.arange(3)
    kx, ky = np.meshgrid(a, a)
    cz = (x0 + (ix[:, None] + kx.ravel()[None, :] / 2) * h
          + 1j * (y0 + (iy[:, None] + ky.ravel()[None, :] / 2) * h))
    mz = (x0 + (ix[:, None] + np.array([0.25, 0.75, 0.25, 0.75])[None, :]) * h
          + 1j * (y0 + (iy[:, None] + np.array([0.25, 0.25, 0.75, 0.75])[None, :]) * h))
    return cz, mz


def _refine_border(spec: OperatorSpec, grid: Grid, inner: np.ndarray, far: FarField,
                   max_rounds: int = 50, chunk: int = 4_000_000) -> int:
    """Second exclusion pass on border cells with a 2x finer ray lattice.

    A non-pinned IN cell next to an OUT cell is released when all 13 rays of
    its sub-lattice are free under the same rules as the main sweep.  The
    halved spacing halves the angular spread that widens the blocking cone,
    which matters next to simple zeros where the ray direction turns fast.
    Returns the number of released cells.
    """
    h = grid.h
    window = grid.window
    x0, y0, _, _ = window
    nx, ny = grid.nx, grid.ny
    d_inner = _inner_raster(grid, inner)
    hf = h / _FINE
    fny, fnx = d_inner.shape
    L_skip = _skip_length(h, window)
    ds = h / 2
    # which sub-corners bound each sub-cell (row-major 3x3 lattice)
    sub_corners = np.array([[0, 1, 3, 4], [1, 2, 4, 5], [3, 4, 6, 7], [4, 5, 7, 8]])
    released = 0
    tried = np.zeros((ny, nx), dtype=bool)
    for _ in range(max_rounds):
        st = grid.state
        out = st == CellState.OUT
        nb = np.zeros_like(out)
        nb[1:, :] |= out[:-1, :]
        nb[:-1, :] |= out[1:, :]
        nb[:, 1:] |= out[:, :-1]
        nb[:, :-1] |= out[:, 1:]
        cand = (st == CellState.IN) & nb & ~tried
        iy, ix = np.nonzero(cand)
        if iy.size == 0:
            break
        tried |= cand
        cz, mz = _sublattice(grid, iy, ix)
        cd, md = _unit_dirs(spec, cz), _unit_dirs(spec, mz)
        sp_m = np.zeros(md.shape)
        for j in range(4):
            sp_m = np.fmax(sp_m, _angdiff(md, cd[:, sub_corners[:, j]]))
        sp_c = np.zeros(cd.shape)
        for k in range(4):
            for j in range(4):
                sp_c[:, sub_corners[k, j]] = np.fmax(sp_c[:, sub_corners[k, j]], sp_m[:, k])
        origins = np.concatenate([cz, mz], axis=1).ravel()
        dirs = np.concatenate([cd, md], axis=1).ravel()
        spread = np.concatenate([sp_c, sp_m], axis=1).ravel()
        spread = np.where(np.isfinite(spread), np.minimum(spread, math.pi / 2), math.pi / 2)
        sin_sp = np.sin(spread)
        bad = ~np.isfinite(dirs)
        dirs = np.where(bad, 1.0 + 0j, dirs)
        L = _exit_distance(origins, dirs, window)
        blocked = bad | ~far.certify(origins + L * dirs, dirs)
        nsamp = np.ceil(L / ds).astype(np.int64) + 1
        ids_all = np.nonzero(~blocked)[0]
        start = 0
        while start < ids_all.size:
            tot = np.cumsum(nsamp[ids_all[start:]])
            stop_i = start + max(int(np.searchsorted(tot, chunk)), 1)
            ids = ids_all[start:stop_i]
            start = stop_i
            ns = nsamp[ids]
            rid = np.repeat(np.arange(ids.size), ns)
            first = np.cumsum(ns) - ns
            k = np.arange(rid.size) - np.repeat(first, ns)
            sv = np.minimum(k * ds, np.repeat(L[ids], ns))
            z = origins[ids][rid] + sv * dirs[ids][rid]
            fx = np.clip(np.rint((z.real - x0) / hf), 0, fnx - 1).astype(np.int64)
            fy = np.clip(np.rint((z.imag - y0) / hf), 0, fny - 1).astype(np.int64)
            hot = (sv >= _S_HOT * h) & (d_inner[fy, fx] <= _R_PIN * h + 0.5 * sv * sin_sp[ids][rid])
            cx = np.clip(np.floor((z.real - x0) / h), 0, nx - 1).astype(np.int64)
            cy = np.clip(np.floor((z.imag - y0) / h), 0, ny - 1).astype(np.int64)
            hot |= (sv >= L_skip) & (st[cy, cx] != CellState.OUT)
            blk = np.zeros(ids.size, dtype=bool)
            np.logical_or.at(blk, rid, hot)
            blocked[ids[blk]] = True
        ok = ~np.any(blocked.reshape(iy.size, 13), axis=1)
        if not np.any(ok):
            continue
        grid.state[iy[ok], ix[ok]] = CellState.OUT
        released += int(np.count_nonzero(ok))
        # released cells may free rays of cells already tried
        tried[:] = False
    return released


# --------------------------------------------------------------------------
# boundary and distances
# --------------------------------------------------------------------------

def boundary(grid: Grid) -> CurveSet:
    """Level-1/2 contour of the membership indicator at cell resolution."""
    ind = grid.member().astype(float)
    if np.all(ind == 1.0) or np.all(ind == 0.0):
        return CurveSet([])
    curves = []
    for c in find_contours(ind, 0.5):
        z = (grid.origin.real + (c[:, 1] + 0.5) * grid.h) + 1j * (grid.origin.imag + (c[:, 0] + 0.5) * grid.h)
        if z.size >= 2:
            curves.append(Polyline(z, CurveTag.BOUNDARY, {"closed": bool(np.allclose(z[0], z[-1]))}))
    return CurveSet(curves).canonical()


def _as_vertices(A) -> tuple[np.ndarray, list]:
    """Flatten a Polyline, CurveSet or vertex array into (points, segment list)."""
    if isinstance(A, Polyline):
        parts = [A.vertices]
    elif isinstance(A, CurveSet):
        parts = [c.vertices for c in A]
    else:
        parts = [np.asarray(A, dtype=np.complex128).ravel()]
    return np.concatenate(parts), parts


def point_to_polylines(p: np.ndarray, parts: list, chunk: int = 2_000_000) -> np.ndarray:
    """Distance from each point to the union of polylines (segment projection)."""
    a = np.concatenate([v[:-1] for v in parts if v.size >= 2] or [np.zeros(0, complex)])
    b = np.concatenate([v[1:] for v in parts if v.size >= 2] or [np.zeros(0, complex)])
    singles = np.concatenate([v for v in parts if v.size == 1] or [np.zeros(0, complex)])
    a = np.concatenate([a, singles])
    b = np.concatenate([b, singles])
    out = np.full(p.size, np.inf)
    if a.size == 0:
        return out
    # prefilter with a KD-tree on segment midpoints
    mids = 0.5 * (a + b)
    half = 0.5 * np.abs(b - a)
    tree = cKDTree(np.column_stack([mids.real, mids.imag]))
    d0, _ = tree.query(np.column_stack([p.real, p.imag]))
    radius = d0 + half.max() + 1e-12
    d_ab = b - a
    L2 = np.abs(d_ab) ** 2
    for i in range(p.size):
        idx = tree.query_ball_point([p[i].real, p[i].imag], radius[i])
        if not idx:
            continue
        idx = np.asarray(idx)
        aa, dd, ll = a[idx], d_ab[idx], L2[idx]
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.clip(np.real((p[i] - aa) * np.conj(dd)) / ll, 0.0, 1.0)
        t = np.where(ll > 0, t, 0.0)
        out[i] = float(np.min(np.abs(aa + t * dd - p[i])))
    return out


def hausdorff(A, B) -> float:
    """Symmetric Hausdorff distance between polylines (vertices projected on segments)."""
    pa, parts_a = _as_vertices(A)
    pb, parts_b = _as_vertices(B)
    if pa.size == 0 or pb.size == 0:
        raise ValueError("hausdorff needs two nonempty inputs")
    return float(max(np.max(point_to_polylines(pa, parts_b)), np.max(point_to_polylines(pb, parts_a))))


# --------------------------------------------------------------------------
# pipeline and post-hoc checks
# --------------------------------------------------------------------------

def compute_minset(spec: OperatorSpec, window: Optional[Window] = None, h: float = 0.05,
                   budget: int = 20000, seed: int = 0, inner: Optional[np.ndarray] = None) -> MinSetResult:
    """Inner points, outer raster and boundary in one call."""
    if window is None:
        window = choose_window(spec)
    curves: list = []
    if inner is None:
        curves = inner_curves(spec, budget, window=window, h=h, seed=seed)
        inner = np.concatenate(curves)
    diag: dict = {}
    far = far_field_for(spec, window)
    grid = outer_approximation(spec, window, h, inner, far_field=far, diagnostics=diag)
    diag["refined"] = _refine_border(spec, grid, inner, far)
    bnd = boundary(grid)
    diag["counts"] = grid.counts()
    diag["inner_points"] = int(inner.size)
    return MinSetResult(grid, inner, bnd, grid.window, far, int(diag.get("sweeps", 0)), diag,
                        inner_curves=curves)


def sample_cells(grid: Grid, mask: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """n uniform random points inside cells selected by mask (with replacement)."""
    iy, ix = np.nonzero(mask)
    if iy.size == 0:
        return np.zeros(0, dtype=np.complex128)
    k = rng.integers(iy.size, size=n)
    u = rng.random(n)
    v = rng.random(n)
    return (grid.origin.real + (ix[k] + u) * grid.h) + 1j * (grid.origin.imag + (iy[k] + v) * grid.h)


def check_exterior_rays(spec: OperatorSpec, result: MinSetResult, n: int = 1000, seed: int = 0,
                        step: Optional[float] = None) -> dict:
    """Rays of random exterior points (at least 2h from the set) must miss every PINNED cell."""
    g = result.grid
    rng = np.random.default_rng(seed)
    far_cells = (distance_transform_edt(~g.member()) * g.h) >= 2.0 * g.h + 0.5 * g.h * math.sqrt(2)
    far_cells &= g.state == CellState.OUT
    pts = sample_cells(g, far_cells, n, rng)
    if pts.size == 0:
        return {"checked": 0, "violations": 0}
    step = g.h / 4 if step is None else step
    d = _unit_dirs(spec, pts)
    L = _exit_distance(pts, d, g.window)
    viol = 0
    for z, dz, l in zip(pts, d, L):
        if not np.isfinite(dz):
            continue
        s = np.arange(0.0, l + step, step)
        st = g.state_at(z + np.minimum(s, l) * dz)
        if np.any(st == CellState.PINNED):
            viol += 1
    return {"checked": int(pts.size), "violations": int(viol)}


def check_backward_containment(spec: OperatorSpec, result: MinSetResult, n: int = 200,
                               seed: int = 0) -> dict:
    """Backward curves from deep interior points stay in the h-dilated set."""
    g = result.grid
    rng = np.random.default_rng(seed)
    depth = distance_transform_edt(g.member()) * g.h
    deep = depth >= 2.0 * g.h + 0.5 * g.h
    pts = sample_cells(g, deep, n, rng)
    sing = spec.zpq.points
    if sing.size and pts.size:
        pts = pts[np.min(np.abs(pts[:, None] - sing[None, :]), axis=1) > 1e-5]
    if pts.size == 0:
        return {"checked": 0, "violations": 0}
    x0, y0, x1, y1 = g.window
    stop = StopRule(window=g.window, h=g.h / 2, max_arclength=10.0 * math.hypot(x1 - x0, y1 - y0))
    curves = integral_curves(spec, pts, Direction.BACKWARD, stop)
    viol = 0
    worst = 0.0
    for c in curves:
        dist = result.distance_to_set(c.vertices)
        worst = max(worst, float(np.max(dist)))
        if np.any(dist > g.h * (1 + 1e-9)):
            viol += 1
    return {"checked": int(pts.size), "violations": int(viol), "max_excursion": worst}


def grid_to_csv(grid: Grid) -> str:
    """Raster of cell states, one row per grid row from the bottom up."""
    buf = io.StringIO()
    buf.write(f"# origin_x={grid.origin.real!r},origin_y={grid.origin.imag!r},h={grid.h!r},"
              f"nx={grid.nx},ny={grid.ny},states=OUT:0|IN:1|PINNED:2\n")
    for row in grid.state:
        buf.write(",".join(str(int(v)) for v in row))
        buf.write("\n")
    return buf.getvalue()


def curves_to_csv(curves: CurveSet) -> str:
    """x,y per row, blank line between polylines."""
    buf = io.StringIO()
    buf.write("x,y\n")
    for i, c in enumerate(curves):
        if i:
            buf.write("\n")
        for z in c.vertices:
            buf.write(f"{z.real!r},{z.imag!r}\n")
    return buf.getvalue()
