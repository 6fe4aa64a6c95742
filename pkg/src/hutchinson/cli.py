"""Command-line interface.

Operators are read from a JSON object ``{"P": [[re, im], ...], "Q": [...]}``
with ascending coefficients, or from the short form ``P=<expr>; Q=<expr>``
where ``<expr>`` is ordinary arithmetic in ``z`` and ``i``, e.g.
``P=z^2+1; Q=(1+6i)z``.  JSON values may also be such expression strings.

Every subcommand writes deterministic artifacts.  Without ``--out`` the main
artifact goes to stdout; with ``--out DIR`` all artifacts of the selected
formats are written there atomically.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import math
import os
import re
import sys
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import acceptance
from .cases import ORACLES, periodic_boundary, residue_hull, unitdisk_operator
from .classify import ArcKind, BoundaryReport, PointType, segment_boundary
from .errors import BothZero, HutchinsonError, ParseError, VerificationFailure, WrongCase
from .field import analyze, bounds, regime, spec_summary
from .minset import (CellState, MinSetResult, compute_minset, curves_to_csv, grid_to_csv,
                     hausdorff)
from .poly import Polynomial
from .trace import (CurveSet, count_components, horizontal_locus, inflection_curve,
                    inflection_infinity, locus_decomposition, root_trail)

__all__ = ["RunConfig", "build_parser", "main", "parse_expression", "parse_operator", "run"]


# --------------------------------------------------------------------------
# operator parsing
# --------------------------------------------------------------------------

def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<sym>[zZijIJ+\-*^()]))")


def _tokenize(text: str, base: int) -> list[tuple[str, str, int]]:
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[bad]!r}", base + _byte_offset(text, bad))
        if m.group("num") is not None:
            toks.append(("num", m.group("num"), m.start("num")))
        else:
            toks.append(("sym", m.group("sym").lower(), m.start("sym")))
        pos = m.end()
    return toks


class _ExprParser:
    """Recursive descent over + - * ^ and parentheses; juxtaposition multiplies."""

    def __init__(self, text: str, base: int):
        self.text = text
        self.base = base
        self.toks = _tokenize(text, base)
        self.k = 0

    def _err(self, msg: str, pos: Optional[int] = None):
        if pos is None:
            pos = self.toks[self.k][2] if self.k < len(self.toks) else len(self.text)
        raise ParseError(msg, self.base + _byte_offset(self.text, pos))

    def _peek(self):
        return self.toks[self.k] if self.k < len(self.toks) else None

    def _take(self):
        t = self._peek()
        self.k += 1
        return t

    def parse(self) -> Polynomial:
        if not self.toks:
            self._err("empty expression", 0)
        p = self._expr()
        if self._peek() is not None:
            self._err(f"unexpected {self._peek()[1]!r}")
        return p

    def _expr(self) -> Polynomial:
        p = self._term()
        while (t := self._peek()) is not None and t[1] in "+-" and t[0] == "sym":
            self._take()
            q = self._term()
            p = p + q if t[1] == "+" else p - q
        return p

    def _starts_atom(self, t) -> bool:
        return t is not None and (t[0] == "num" or t[1] in ("z", "i", "j", "("))

    def _term(self) -> Polynomial:
        p = self._unary()
        while True:
            t = self._peek()
            if t is not None and t[0] == "sym" and t[1] == "*":
                self._take()
                p = p * self._unary()
            elif self._starts_atom(t):
                p = p * self._power()
            else:
                return p

    def _unary(self) -> Polynomial:
        t = self._peek()
        if t is not None and t[0] == "sym" and t[1] in "+-":
            self._take()
            p = self._unary()
            return -p if t[1] == "-" else p
        return self._power()

    def _power(self) -> Polynomial:
        p = self._atom()
        t = self._peek()
        if t is not None and t[1] == "^":
            self._take()
            e = self._take()
            if e is None or e[0] != "num" or not e[1].isdigit():
                self._err("exponent must be a nonnegative integer",
                          e[2] if e is not None else len(self.text))
            p = p ** int(e[1])
        return p

    def _atom(self) -> Polynomial:
        t = self._take()
        if t is None:
            self._err("unexpected end of expression", len(self.text))
        kind, val, pos = t
        if kind == "num":
            return Polynomial([float(val)])
        if val == "z":
            return Polynomial([0, 1])
        if val in ("i", "j"):
            return Polynomial([1j])
        if val == "(":
            p = self._expr()
            c = self._take()
            if c is None or c[1] != ")":
                self._err("missing ')'", c[2] if c is not None else len(self.text))
            return p
        self._err(f"unexpected {val!r}", pos)


def parse_expression(text: str, base: int = 0) -> Polynomial:
    """Polynomial in z from an arithmetic expression such as ``(1+6i)z - 2z^3``."""
    return _ExprParser(text, base).parse()


def _skip_ws(text: str, pos: int) -> int:
    while pos < len(text) and text[pos] in " \t\r\n":
        pos += 1
    return pos


def _value_positions(text: str) -> dict:
    """Start offsets of each top-level value and of the items of array values."""
    dec = json.JSONDecoder()
    pos = _skip_ws(text, 0) + 1
    out = {}
    while True:
        pos = _skip_ws(text, pos)
        if text[pos] == "}":
            return out
        key, pos = dec.raw_decode(text, pos)
        pos = _skip_ws(text, pos) + 1  # ':'
        start = _skip_ws(text, pos)
        items = []
        if text[start] == "[":
            p = _skip_ws(text, start + 1)
            while text[p] != "]":
                items.append(p)
                _, p = dec.raw_decode(text, p)
                p = _skip_ws(text, p)
                if text[p] == ",":
                    p = _skip_ws(text, p + 1)
            pos = p + 1
        else:
            _, pos = dec.raw_decode(text, start)
        out[key] = (start, items)
        pos = _skip_ws(text, pos)
        if text[pos] == ",":
            pos += 1


def _is_real(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _parse_json(text: str) -> tuple[Polynomial, Polynomial]:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", _byte_offset(text, exc.pos)) from None
    if not isinstance(obj, dict):
        raise ParseError("operator must be a JSON object with keys P and Q",
                         _byte_offset(text, _skip_ws(text, 0)))
    where = _value_positions(text)
    polys = []
    for key in ("P", "Q"):
        if key not in obj:
            raise ParseError(f"missing key {key!r}", _byte_offset(text, len(text.rstrip()) - 1))
        val = obj[key]
        start, items = where[key]
        if isinstance(val, str):
            polys.append(parse_expression(val, _byte_offset(text, start + 1)))
            continue
        if not isinstance(val, list):
            raise ParseError(f"{key} must be a list of [re, im] pairs or a string",
                             _byte_offset(text, start))
        coeffs = []
        for item, ipos in zip(val, items):
            if isinstance(item, list) and len(item) == 2 and all(_is_real(x) for x in item):
                coeffs.append(complex(item[0], item[1]))
            elif _is_real(item):
                coeffs.append(complex(item))
            else:
                raise ParseError(f"{key} coefficient must be a pair [re, im]",
                                 _byte_offset(text, ipos))
        polys.append(Polynomial(coeffs))
    return polys[0], polys[1]


_SHORT = re.compile(r"\s*P\s*=(?P<P>[^;]*);\s*Q\s*=(?P<Q>.*)$", re.S)


def parse_operator(text: str) -> tuple[Polynomial, Polynomial]:
    """Parse an operator description into ``(P, Q)`` with trailing zeros trimmed.

    Raises :class:`ParseError` (with a byte offset) on malformed input and
    :class:`BothZero` when both polynomials vanish identically.
    """
    stripped = text.lstrip()
    if stripped.startswith("{"):
        P, Q = _parse_json(text)
    else:
        m = _SHORT.match(text)
        if m is None:
            raise ParseError("expected a JSON object or 'P=<expr>; Q=<expr>'",
                             _byte_offset(text, len(text) - len(stripped)))
        P = parse_expression(m.group("P"), _byte_offset(text, m.start("P")))
        Q = parse_expression(m.group("Q"), _byte_offset(text, m.start("Q")))
    if P.is_zero() and Q.is_zero():
        raise BothZero("P and Q are both identically zero")
    return P, Q


def _parse_complex(s: str) -> complex:
    try:
        return complex(s.strip().replace(" ", "").replace("i", "j"))
    except ValueError:
        raise ParseError(f"not a complex number: {s!r}", 0) from None


def _parse_window(s: str) -> tuple:
    parts = s.split(",")
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError:
        vals = ()
    if len(vals) != 4 or not (vals[0] < vals[2] and vals[1] < vals[3]):
        raise ParseError(f"window must be x0,y0,x1,y1 with x0 < x1 and y0 < y1: {s!r}", 0)
    return vals


# --------------------------------------------------------------------------
# configuration and serialization
# --------------------------------------------------------------------------

@dataclass
class RunConfig:
    command: str
    operator: Optional[str] = None
    window: Optional[tuple] = None
    grid_h: float = 0.05
    budget: int = 20000
    seed: int = 0
    out_dir: Optional[str] = None
    formats: tuple = ()
    tolerances: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.grid_h > 0:
            raise ParseError("--grid-h must be positive", 0)


def _plain(x):
    if isinstance(x, Enum):
        return x.value
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if dataclasses.is_dataclass(x) and not isinstance(x, type):
        return {f.name: _plain(getattr(x, f.name)) for f in dataclasses.fields(x)}
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def to_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def write_atomic(path: str, content: str) -> None:
    """Write via a temporary file in the same directory and rename into place."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# SVG rendering
# --------------------------------------------------------------------------

COLORS = {
    "fill": "#c8c8c8",
    "boundary": "#555555",
    ArcKind.LOCAL_ARC.value: "#d62728",
    ArcKind.GLOBAL_ARC.value: "#1f4fd6",
    ArcKind.LINE_SEGMENT.value: "#2ca02c",
    "inflection": "#000000",
    "horizontal": "#9467bd",
    "special": "#ff7f0e",
    "trail": "#8c564b",
}


class _Svg:
    def __init__(self, window: tuple, width: int = 800):
        x0, y0, x1, y1 = window
        self.window = window
        self.scale = width / (x1 - x0)
        self.width = width
        self.height = max(1, int(round((y1 - y0) * self.scale)))
        self.parts: list[str] = []
        self.legend: list[tuple[str, str]] = []

    def xy(self, z: complex) -> tuple[float, float]:
        x0, _, _, y1 = self.window
        return (z.real - x0) * self.scale, (y1 - z.imag) * self.scale

    def fill_grid(self, result: MinSetResult, color: str):
        g = result.grid
        mem = g.member()
        s = g.h * self.scale
        for iy in range(g.ny):
            row = mem[iy]
            if not row.any():
                continue
            edges = np.flatnonzero(np.diff(np.concatenate([[0], row.astype(np.int8), [0]])))
            for a, b in zip(edges[::2], edges[1::2]):
                x, y = self.xy(complex(g.origin.real + a * g.h, g.origin.imag + (iy + 1) * g.h))
                self.parts.append(f'<rect x="{x:.3f}" y="{y:.3f}" width="{(b - a) * s:.3f}" '
                                  f'height="{s:.3f}" fill="{color}" stroke="none"/>')

    def polyline(self, v: np.ndarray, color: str, width: float = 1.5):
        if v.size < 2:
            return
        pts = " ".join("{:.3f},{:.3f}".format(*self.xy(z)) for z in v)
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                          f'stroke-width="{width}"/>')

    def dot(self, z: complex, color: str, r: float = 3.0):
        x, y = self.xy(z)
        self.parts.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="{r}" fill="{color}"/>')

    def add_legend(self, label: str, color: str):
        if (label, color) not in self.legend:
            self.legend.append((label, color))

    def render(self) -> str:
        lh = 16
        leg_h = lh * len(self.legend) + 8
        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
               f'height="{self.height + leg_h}" viewBox="0 0 {self.width} {self.height + leg_h}">',
               f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="white" '
               f'stroke="#000000"/>']
        out += self.parts
        out.append('<g id="legend" font-family="sans-serif" font-size="12">')
        for k, (label, color) in enumerate(self.legend):
            y = self.height + 4 + k * lh
            out.append(f'<rect x="6" y="{y}" width="12" height="12" fill="{color}"/>')
            out.append(f'<text x="24" y="{y + 10}">{label}</text>')
        out.append("</g>")
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _clip_to(v: np.ndarray, window: tuple) -> list[np.ndarray]:
    x0, y0, x1, y1 = window
    ok = (v.real >= x0) & (v.real <= x1) & (v.imag >= y0) & (v.imag <= y1)
    runs, cur = [], []
    for z, k in zip(v, ok):
        if k:
            cur.append(z)
        elif cur:
            runs.append(np.array(cur))
            cur = []
    if cur:
        runs.append(np.array(cur))
    return runs


def render_minset(spec, result: MinSetResult, report: Optional[BoundaryReport] = None,
                  inflection: Optional[CurveSet] = None) -> str:
    svg = _Svg(result.window)
    svg.fill_grid(result, COLORS["fill"])
    svg.add_legend("minimal set (outer approximation)", COLORS["fill"])
    if inflection is not None:
        for c in inflection:
            for run in _clip_to(c.vertices, result.window):
                svg.polyline(run, COLORS["inflection"], 1.0)
        svg.add_legend("curve of inflections", COLORS["inflection"])
    if report is None:
        for c in result.boundary:
            svg.polyline(c.vertices, COLORS["boundary"])
        svg.add_legend("boundary", COLORS["boundary"])
    else:
        for s in report.segments:
            svg.polyline(np.asarray(s.polyline), COLORS[s.kind.value], 2.0)
        for kind, label in ((ArcKind.LOCAL_ARC, "local arc"), (ArcKind.GLOBAL_ARC, "global arc"),
                            (ArcKind.LINE_SEGMENT, "line segment")):
            if report.count(kind):
                svg.add_legend(label, COLORS[kind.value])
        if report.special_points:
            for p in report.special_points:
                svg.dot(p.z, COLORS["special"])
            svg.add_legend("special boundary point", COLORS["special"])
    for z in spec.zpq.points:
        svg.dot(complex(z), "#000000", 2.0)
    svg.add_legend("zeros of PQ", "#000000")
    return svg.render()


def render_curves(window: tuple, layers: list[tuple[str, str, CurveSet]]) -> str:
    svg = _Svg(window)
    for label, color, curves in layers:
        for c in curves:
            for run in _clip_to(c.vertices, window):
                svg.polyline(run, color, 1.2)
        svg.add_legend(label, color)
    return svg.render()


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _read_operator(arg: Optional[str]) -> tuple[Polynomial, Polynomial]:
    if arg is None:
        raise ParseError("an operator is required", 0)
    if arg == "-":
        text = sys.stdin.read()
    elif os.path.isfile(arg):
        with open(arg, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = arg
    return parse_operator(text)


def _window(cfg: RunConfig, spec) -> tuple:
    if cfg.window is not None:
        return cfg.window
    from .minset import choose_window
    return choose_window(spec)


def _reference_k(P: Polynomial, Q: Polynomial) -> Optional[int]:
    """k when (P, Q) is a scalar multiple of the unit-disk operator of order k."""
    k = P.degree
    if k < 1:
        return None
    P0, Q0 = unitdisk_operator(k)
    c = P.lead / P0.lead
    if P == P0 * c and Q == Q0 * c:
        return k
    return None


def _cmd_analyze(cfg: RunConfig, spec) -> dict:
    rg = regime(spec)
    report = {"operator": spec_summary(spec), "regime": rg.tag.value, "why": rg.detail,
              "bounds": bounds(spec)}
    return {"analyze.json": to_json(report)}


def _cmd_curves(cfg: RunConfig, spec) -> dict:
    win = _window(cfg, spec)
    infl = inflection_curve(spec, win, cfg.grid_h)
    loci = locus_decomposition(spec, infl, cfg.grid_h)
    info = {"window": list(win), "components": count_components(infl, cfg.grid_h),
            "loci": [{"z": p.z, "kind": p.kind, "branches": p.branch_count} for p in loci.points]}
    layers = [("curve of inflections", COLORS["inflection"], infl)]
    try:
        info["infinity_directions"] = list(inflection_infinity(spec))
    except HutchinsonError as exc:
        info["infinity_directions"] = None
        info["infinity_note"] = str(exc)
    csv = {"inflection.csv": curves_to_csv(infl)}
    try:
        hor = horizontal_locus(spec, win, cfg.grid_h)
        csv["horizontal.csv"] = curves_to_csv(hor)
        layers.append(("horizontal locus", COLORS["horizontal"], hor))
    except WrongCase:
        pass
    return {"curves.json": to_json(info), **csv, "curves.svg": render_curves(win, layers)}


def _cmd_trail(cfg: RunConfig, spec) -> dict:
    us = cfg.extra.get("u") or []
    if not us:
        raise ParseError("trail needs at least one --u value", 0)
    t_max = cfg.extra.get("t_max", 1e6)
    buf = io.StringIO()
    buf.write("u_re,u_im,branch,t,x,y\n")
    meta = []
    layers = []
    for u in us:
        cs = root_trail(spec, u, t_max=t_max, window=cfg.window)
        for b, c in enumerate(cs):
            for z, t in zip(c.vertices.tolist(), np.asarray(c.meta["t"], dtype=float).tolist()):
                buf.write(f"{u.real!r},{u.imag!r},{b},{t!r},{z.real!r},{z.imag!r}\n")
            meta.append({"u": u, "branch": b, "flags": sorted(c.meta["flags"]),
                         "vertices": int(c.vertices.size)})
        layers.append((f"trail of {u}", COLORS["trail"], cs))
    out = {"trail.csv": buf.getvalue(), "trail.json": to_json(meta)}
    if cfg.window is not None:
        out["trail.svg"] = render_curves(cfg.window, layers)
    return out


def _minset(cfg: RunConfig, spec) -> MinSetResult:
    return compute_minset(spec, window=cfg.window, h=cfg.grid_h, budget=cfg.budget, seed=cfg.seed)


def _cmd_minset(cfg: RunConfig, spec) -> dict:
    res = _minset(cfg, spec)
    diag = dict(res.diagnostics)
    diag["window"] = list(res.window)
    diag["h"] = res.grid.h
    k = cfg.extra.get("reference_k")
    if k:
        from .cases import oracle_unitdisk
        diag["hausdorff_to_unit_circle"] = hausdorff(res.boundary,
                                                     oracle_unitdisk(k).circle.polyline(4000))
    try:
        infl = inflection_curve(spec, res.window, res.grid.h)
    except HutchinsonError:
        infl = None
    return {"minset.json": to_json(diag), "minset_grid.csv": grid_to_csv(res.grid),
            "minset_boundary.csv": curves_to_csv(res.boundary),
            "minset.svg": render_minset(spec, res, inflection=infl)}


def _cmd_classify(cfg: RunConfig, spec) -> dict:
    res = _minset(cfg, spec)
    rep = segment_boundary(spec, res)
    try:
        infl = inflection_curve(spec, res.window, res.grid.h)
    except HutchinsonError:
        infl = None
    return {"classify.json": to_json(rep.to_dict()),
            "classify.svg": render_minset(spec, res, report=rep, inflection=infl)}


def _cmd_oracle(cfg: RunConfig) -> dict:
    name = cfg.extra.get("name")
    param = cfg.extra.get("param")
    n = int(cfg.extra.get("samples", 2000))
    if name == "periodic":
        from .cases import periodic_operator
        spec = analyze(*periodic_operator(param if param is not None else 1j))
        leaf = periodic_boundary(spec)
        cs = CurveSet([leaf])
        return {"oracle.csv": curves_to_csv(cs),
                "oracle.json": to_json({"name": name, "closed": leaf.closed,
                                        "vertices": int(leaf.vertices.size)})}
    if name == "residue":
        if cfg.operator is None:
            raise ParseError("oracle residue needs an operator", 0)
        hull = residue_hull(analyze(*_read_operator(cfg.operator)))
        return {"oracle.json": to_json({"name": name, "hull": hull})}
    if name not in ORACLES:
        raise ParseError(f"unknown oracle {name!r}; choose from "
                         f"{', '.join(sorted(ORACLES) + ['periodic', 'residue'])}", 0)
    if name == "unitdisk":
        o = ORACLES[name](int((param or 1).real))
        curves = [o.circle]
    elif name == "strip_segment":
        y0 = float((param if param is not None else 1.0).real)
        ORACLES[name](y0)  # validates y0
        return {"oracle.json": to_json({"name": name, "strip": [0.0, y0 / 2],
                                        "segment": [complex(0, y0 / 2), complex(0, y0)]})}
    else:
        curves = ORACLES[name](param if param is not None else (1 + 0.8j if name == "hyperbola"
                                                                  else 1 + 6j))
    cs = CurveSet([c.polyline(n) for c in curves])
    info = {"name": name, "curves": [{"name": c.name, "domain": list(c.domain),
                                      "special_points": [{"name": a, "z": z}
                                                         for a, z in c.special_points]}
                                     for c in curves]}
    return {"oracle.csv": curves_to_csv(cs), "oracle.json": to_json(info)}


def _cmd_verify(cfg: RunConfig) -> tuple[dict, bool]:
    nums = cfg.extra.get("criteria")
    results = acceptance.run(nums)
    table = acceptance.format_table(results)
    report = [{"number": r.number, "title": r.title, "passed": r.passed, "details": r.details}
              for r in results]
    return {"verify.txt": table + "\n", "verify.json": to_json(report)}, all(r.passed for r in results)


_PRIMARY = {"analyze": "analyze.json", "curves": "curves.json", "trail": "trail.csv",
            "minset": "minset.json", "classify": "classify.json", "oracle": "oracle.json",
            "verify": "verify.txt"}


def run(cfg: RunConfig, stdout=None) -> int:
    """Execute one command; returns the process exit code."""
    stdout = stdout if stdout is not None else sys.stdout
    ok = True
    if cfg.command == "verify":
        arts, ok = _cmd_verify(cfg)
    elif cfg.command == "oracle":
        arts = _cmd_oracle(cfg)
    else:
        P, Q = _read_operator(cfg.operator)
        spec = analyze(P, Q)
        if cfg.command == "minset" and "reference_k" not in cfg.extra:
            cfg.extra["reference_k"] = _reference_k(P, Q)
        handler = {"analyze": _cmd_analyze, "curves": _cmd_curves, "trail": _cmd_trail,
                   "minset": _cmd_minset, "classify": _cmd_classify}[cfg.command]
        arts = handler(cfg, spec)
    if cfg.formats:
        arts = {k: v for k, v in arts.items()
                if k.rsplit(".", 1)[-1] in cfg.formats or k.endswith(".txt")}
    if cfg.out_dir is not None:
        for name in sorted(arts):
            write_atomic(os.path.join(cfg.out_dir, name), arts[name])
            print(f"wrote {os.path.join(cfg.out_dir, name)}", file=stdout)
        if cfg.command == "verify":
            stdout.write(arts["verify.txt"])
        if cfg.command == "minset" and "minset.json" in arts:
            diag = json.loads(arts["minset.json"])
            print(f"counts {diag['counts']}  sweeps {diag['sweeps']}", file=stdout)
            if "hausdorff_to_unit_circle" in diag:
                print(f"hausdorff to unit circle {diag['hausdorff_to_unit_circle']:.6g}", file=stdout)
    else:
        primary = _PRIMARY[cfg.command]
        if primary not in arts:
            primary = sorted(arts)[0] if arts else None
        if primary is not None:
            stdout.write(arts[primary])
    if not ok:
        raise VerificationFailure("one or more acceptance criteria failed")
    return 0


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--window", type=str, default=None, help="x0,y0,x1,y1")
    common.add_argument("--grid-h", type=float, default=0.05, dest="grid_h")
    common.add_argument("--budget", type=int, default=20000)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=str, default=None, help="output directory")
    common.add_argument("--format", action="append", choices=("json", "csv", "svg"),
                        dest="formats", help="restrict artifacts to these formats (repeatable)")

    ap = argparse.ArgumentParser(prog="hutchinson", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    op_help = "operator: JSON file, '-' for stdin, inline JSON, or 'P=...; Q=...'"
    for name, hlp in (("analyze", "derived invariants, regime and bounds"),
                      ("curves", "curve of inflections, loci and horizontal locus"),
                      ("minset", "two-sided grid approximation of the minimal set"),
                      ("classify", "boundary classification report")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("operator", help=op_help)
        if name == "minset":
            p.add_argument("--reference-k", type=int, default=None, dest="reference_k",
                           help="print the Hausdorff distance to the unit circle")
    p = sub.add_parser("trail", parents=[common], help="root trails of given points")
    p.add_argument("operator", help=op_help)
    p.add_argument("--u", action="append", default=[], help="start point, e.g. 0.3+0.2i")
    p.add_argument("--t-max", type=float, default=1e6, dest="t_max")
    p = sub.add_parser("oracle", parents=[common], help="closed-form reference cases")
    p.add_argument("name", help="hyperbola, spiral, unitdisk, strip_segment, periodic or residue")
    p.add_argument("--param", type=str, default=None, help="case parameter (complex)")
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--operator", type=str, default=None, help="operator for the residue hull")
    p = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    p.add_argument("--criteria", type=str, default=None, help="comma-separated numbers")
    return ap


def _config(ns: argparse.Namespace) -> RunConfig:
    extra: dict = {}
    if ns.command == "trail":
        extra["u"] = [_parse_complex(u) for u in ns.u]
        extra["t_max"] = ns.t_max
    elif ns.command == "oracle":
        extra["name"] = ns.name
        extra["param"] = _parse_complex(ns.param) if ns.param is not None else None
        extra["samples"] = ns.samples
    elif ns.command == "verify" and ns.criteria:
        try:
            extra["criteria"] = [int(x) for x in ns.criteria.split(",")]
        except ValueError:
            raise ParseError(f"bad criteria list {ns.criteria!r}", 0) from None
        bad = [k for k in extra["criteria"] if k not in acceptance.CRITERIA]
        if bad:
            raise ParseError(f"unknown criteria {bad}", 0)
    elif ns.command == "minset" and ns.reference_k is not None:
        extra["reference_k"] = ns.reference_k
    return RunConfig(command=ns.command, operator=getattr(ns, "operator", None),
                     window=_parse_window(ns.window) if ns.window else None, grid_h=ns.grid_h,
                     budget=ns.budget, seed=ns.seed, out_dir=ns.out,
                     formats=tuple(ns.formats or ()), extra=extra)


def main(argv: Optional[Sequence[str]] = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return run(_config(ns))
    except HutchinsonError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
