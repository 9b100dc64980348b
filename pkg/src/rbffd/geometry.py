"""Planar domains bounded by straight and circular-arc segments.

Boundary pieces are stored once in ``Domain.segments``; ``loops`` lists the
closed curves (outer boundary, counterclockwise) and ``slits`` the open,
two-sided chains that cut into the domain.  All query functions are pure and
accept either a single point or an ``(n, 2)`` array where noted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
ON_BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class Segment:
    """A straight segment or a circular arc parameterized over ``t`` in [0, 1].

    For arcs, ``theta0`` is the start angle and ``sweep`` the signed angular
    extent (positive = counterclockwise); the parameter is proportional to
    the angle and therefore to arc length.
    """

    kind: str
    start: tuple[float, float]
    end: tuple[float, float]
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 0.0
    theta0: float = 0.0
    sweep: float = 0.0

    @staticmethod
    def line(a: Sequence[float], b: Sequence[float]) -> "Segment":
        a = (float(a[0]), float(a[1]))
        b = (float(b[0]), float(b[1]))
        if math.hypot(b[0] - a[0], b[1] - a[1]) == 0.0:
            raise ValueError("straight segment has zero length")
        return Segment("line", a, b)

    @staticmethod
    def arc(center: Sequence[float], radius: float, theta0: float, sweep: float) -> "Segment":
        if radius <= 0.0 or sweep == 0.0:
            raise ValueError("arc needs positive radius and nonzero sweep")
        cx, cy = float(center[0]), float(center[1])
        start = (cx + radius * math.cos(theta0), cy + radius * math.sin(theta0))
        end = (cx + radius * math.cos(theta0 + sweep), cy + radius * math.sin(theta0 + sweep))
        return Segment("arc", start, end, (cx, cy), float(radius), float(theta0), float(sweep))

    @staticmethod
    def arc_between(center: Sequence[float], a: Sequence[float], b: Sequence[float],
                    ccw: bool) -> "Segment":
        """Arc of the circle about ``center`` through ``a`` and ``b``.

        The radius is taken from ``a``; ``b`` must lie on the same circle.
        """
        cx, cy = float(center[0]), float(center[1])
        r = math.hypot(a[0] - cx, a[1] - cy)
        t0 = math.atan2(a[1] - cy, a[0] - cx)
        t1 = math.atan2(b[1] - cy, b[0] - cx)
        sweep = (t1 - t0) % TWO_PI
        if not ccw:
            sweep -= TWO_PI
        seg = Segment.arc((cx, cy), r, t0, sweep)
        # keep the exact endpoints supplied by the caller
        return Segment("arc", (float(a[0]), float(a[1])), (float(b[0]), float(b[1])),
                       seg.center, seg.radius, seg.theta0, seg.sweep)

    @property
    def is_straight(self) -> bool:
        return self.kind == "line"

    @property
    def length(self) -> float:
        if self.is_straight:
            return math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1])
        return self.radius * abs(self.sweep)

    def point(self, t: float) -> np.ndarray:
        if t <= 0.0:
            return np.array(self.start)
        if t >= 1.0:
            return np.array(self.end)
        if self.is_straight:
            return np.array([self.start[0] + t * (self.end[0] - self.start[0]),
                             self.start[1] + t * (self.end[1] - self.start[1])])
        th = self.theta0 + t * self.sweep
        return np.array([self.center[0] + self.radius * math.cos(th),
                         self.center[1] + self.radius * math.sin(th)])

    def points(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape + (2,))
        if self.is_straight:
            out[..., 0] = self.start[0] + t * (self.end[0] - self.start[0])
            out[..., 1] = self.start[1] + t * (self.end[1] - self.start[1])
        else:
            th = self.theta0 + t * self.sweep
            out[..., 0] = self.center[0] + self.radius * np.cos(th)
            out[..., 1] = self.center[1] + self.radius * np.sin(th)
        out[t <= 0.0] = self.start
        out[t >= 1.0] = self.end
        return out

    def closest(self, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Distance from each row of ``p`` to the segment and the parameter of the foot point."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        if self.is_straight:
            a = np.array(self.start)
            d = np.array(self.end) - a
            t = np.clip(((p - a) @ d) / (d @ d), 0.0, 1.0)
            foot = a + t[:, None] * d
            return np.hypot(*(p - foot).T), t
        c = np.array(self.center)
        q = p - c
        rho = np.hypot(q[:, 0], q[:, 1])
        ang = np.arctan2(q[:, 1], q[:, 0])
        if self.sweep > 0:
            rel = np.mod(ang - self.theta0, TWO_PI)
        else:
            rel = np.mod(self.theta0 - ang, TWO_PI)
        t = rel / abs(self.sweep)
        on_arc = t <= 1.0
        dist = np.abs(rho - self.radius)
        d0 = np.hypot(p[:, 0] - self.start[0], p[:, 1] - self.start[1])
        d1 = np.hypot(p[:, 0] - self.end[0], p[:, 1] - self.end[1])
        end_t = np.where(d0 <= d1, 0.0, 1.0)
        t = np.where(on_arc, t, end_t)
        dist = np.where(on_arc, dist, np.minimum(d0, d1))
        return dist, t

    def residual(self, p: Sequence[float]) -> float:
        """How far ``p`` is from satisfying the segment's defining equation."""
        return float(self.closest(np.asarray(p, dtype=float))[0][0])

    def intersects(self, a: np.ndarray, b: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        """Whether the open segments ``a[i] b[i]`` meet this piece.

        ``a`` and ``b`` are ``(n, 2)``.  Intersections within ``tol`` (relative
        to the segment ab) of its endpoints are ignored.
        """
        a = np.atleast_2d(a)
        b = np.atleast_2d(b)
        d = b - a
        lo, hi = tol, 1.0 - tol
        if self.is_straight:
            p = np.array(self.start)
            e = np.array(self.end) - p
            den = d[:, 0] * e[1] - d[:, 1] * e[0]
            w = p - a
            with np.errstate(divide="ignore", invalid="ignore"):
                s = (w[:, 0] * e[1] - w[:, 1] * e[0]) / den
                t = (w[:, 0] * d[:, 1] - w[:, 1] * d[:, 0]) / den
            ok = (np.abs(den) > 1e-300) & (s > lo) & (s < hi) & (t >= -tol) & (t <= 1.0 + tol)
            return ok
        c = np.array(self.center)
        f = a - c
        A = np.einsum("ij,ij->i", d, d)
        B = 2.0 * np.einsum("ij,ij->i", f, d)
        C = np.einsum("ij,ij->i", f, f) - self.radius ** 2
        disc = B * B - 4.0 * A * C
        hit = np.zeros(len(a), dtype=bool)
        good = (disc >= 0.0) & (A > 0.0)
        if not good.any():
            return hit
        sq = np.sqrt(np.where(good, disc, 0.0))
        for sign in (-1.0, 1.0):
            with np.errstate(divide="ignore", invalid="ignore"):
                s = (-B + sign * sq) / (2.0 * A)
            x = a + np.nan_to_num(s)[:, None] * d
            dist, _ = self.closest(x)
            on = dist <= 1e-9 * max(1.0, self.radius)
            hit |= good & (s > lo) & (s < hi) & on
        return hit


@dataclass(frozen=True)
class Curve:
    """Ordered chain of segment ids, closed (a loop) or open (a slit)."""

    segment_ids: tuple[int, ...]
    closed: bool


@dataclass(frozen=True)
class Domain:
    segments: tuple[Segment, ...]
    curves: tuple[Curve, ...]
    convex: bool = False
    inside: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    name: str = ""

    def __post_init__(self):
        for curve in self.curves:
            ids = curve.segment_ids
            for i, j in zip(ids, ids[1:] + ((ids[0],) if curve.closed else ())):
                e = self.segments[i].end
                s = self.segments[j].start
                if math.hypot(e[0] - s[0], e[1] - s[1]) > 1e-12:
                    raise ValueError(f"segments {i} and {j} do not connect")

    @property
    def loops(self) -> list[Curve]:
        return [c for c in self.curves if c.closed]

    @property
    def slits(self) -> list[Curve]:
        return [c for c in self.curves if not c.closed]

    def slit_segment_ids(self) -> list[int]:
        return [i for c in self.slits for i in c.segment_ids]

    def bounding_box(self) -> tuple[float, float, float, float]:
        pts = []
        for seg in self.segments:
            pts.append(seg.points(np.linspace(0.0, 1.0, 65)))
        pts = np.vstack(pts)
        return pts[:, 0].min(), pts[:, 0].max(), pts[:, 1].min(), pts[:, 1].max()

    def diameter(self) -> float:
        x0, x1, y0, y1 = self.bounding_box()
        return math.hypot(x1 - x0, y1 - y0)

    def curve_length(self, curve: int) -> float:
        return sum(self.segments[i].length for i in self.curves[curve].segment_ids)


def polygon(vertices: Sequence[Sequence[float]], name: str = "", convex: bool = False,
            inside=None) -> Domain:
    segs = tuple(Segment.line(vertices[i], vertices[(i + 1) % len(vertices)])
                 for i in range(len(vertices)))
    return Domain(segs, (Curve(tuple(range(len(segs))), True),), convex=convex,
                  inside=inside, name=name)


def box(x0: float, x1: float, y0: float, y1: float, name: str = "") -> Domain:
    def inside(p):
        return (p[:, 0] > x0) & (p[:, 0] < x1) & (p[:, 1] > y0) & (p[:, 1] < y1)

    return polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], name=name, convex=True,
                   inside=inside)


def from_description(items: Sequence[dict], name: str = "custom") -> Domain:
    """Build a domain from a declarative segment list.

    Each item is ``{"kind": "line", "start": [x, y], "end": [x, y]}`` or
    ``{"kind": "arc", "center": [x, y], "start": [x, y], "end": [x, y],
    "ccw": bool}``, plus an optional ``"curve"`` label.  Items sharing a label
    form one curve, in the given order; a curve whose last end meets its first
    start is a loop, otherwise a slit.
    """
    segs: list[Segment] = []
    groups: dict[str, list[int]] = {}
    for item in items:
        if item["kind"] == "line":
            seg = Segment.line(item["start"], item["end"])
        elif item["kind"] == "arc":
            seg = Segment.arc_between(item["center"], item["start"], item["end"],
                                      bool(item.get("ccw", True)))
        else:
            raise ValueError(f"unknown segment kind {item['kind']!r}")
        groups.setdefault(str(item.get("curve", "0")), []).append(len(segs))
        segs.append(seg)
    curves = []
    for ids in groups.values():
        a, b = segs[ids[-1]].end, segs[ids[0]].start
        curves.append(Curve(tuple(ids), math.hypot(a[0] - b[0], a[1] - b[1]) <= 1e-12))
    return Domain(tuple(segs), tuple(curves), name=name)


# ---------------------------------------------------------------- queries


def dist_to_boundary(domain: Domain, p) -> np.ndarray | float:
    """Exact Euclidean distance from ``p`` to the nearest boundary piece (slits included)."""
    arr = np.asarray(p, dtype=float)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr)
    best = np.full(len(pts), np.inf)
    for seg in domain.segments:
        best = np.minimum(best, seg.closest(pts)[0])
    return float(best[0]) if single else best


def _monotone_pieces(seg: Segment) -> list[tuple[float, float, float]]:
    """Split an arc at its vertical extrema: (theta_a, theta_b, sign of cos)."""
    lo = min(seg.theta0, seg.theta0 + seg.sweep)
    hi = max(seg.theta0, seg.theta0 + seg.sweep)
    cuts = [lo]
    k = math.ceil((lo - math.pi / 2) / math.pi)
    while math.pi / 2 + k * math.pi < hi:
        cuts.append(math.pi / 2 + k * math.pi)
        k += 1
    cuts.append(hi)
    out = []
    for ta, tb in zip(cuts, cuts[1:]):
        if tb - ta > 0.0:
            out.append((ta, tb, 1.0 if math.cos(0.5 * (ta + tb)) >= 0.0 else -1.0))
    return out


def _crossing_parity(domain: Domain, pts: np.ndarray) -> np.ndarray:
    """Even-odd rule for a ray towards +x, counting only closed loops."""
    odd = np.zeros(len(pts), dtype=bool)
    x, y = pts[:, 0], pts[:, 1]
    for curve in domain.loops:
        for sid in curve.segment_ids:
            seg = domain.segments[sid]
            if seg.is_straight:
                (x0, y0), (x1, y1) = seg.start, seg.end
                cond = (y0 > y) != (y1 > y)
                with np.errstate(divide="ignore", invalid="ignore"):
                    xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
                odd ^= cond & (xc > x)
                continue
            cx, cy = seg.center
            r = seg.radius
            for ta, tb, side in _monotone_pieces(seg):
                ya = cy + r * math.sin(ta)
                yb = cy + r * math.sin(tb)
                cond = (ya > y) != (yb > y)
                h = np.sqrt(np.clip(r * r - (y - cy) ** 2, 0.0, None))
                odd ^= cond & (cx + side * h > x)
    return odd


def contains(domain: Domain, p) -> np.ndarray | bool:
    """True where ``p`` lies strictly inside the domain (boundary and slit points excluded)."""
    arr = np.asarray(p, dtype=float)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr)
    if domain.inside is not None:
        inside = np.asarray(domain.inside(pts), dtype=bool)
    else:
        inside = _crossing_parity(domain, pts)
    if inside.any():
        idx = np.flatnonzero(inside)
        inside[idx] = dist_to_boundary(domain, pts[idx]) > ON_BOUNDARY_TOL
    return bool(inside[0]) if single else inside


def blocked_many(domain: Domain, a, b) -> np.ndarray:
    """``segment_blocked`` for one point ``a`` against each row of ``b`` (or paired rows)."""
    b = np.atleast_2d(np.asarray(b, dtype=float))
    a = np.asarray(a, dtype=float)
    a = np.broadcast_to(a, b.shape) if a.ndim == 1 else a
    hit = np.zeros(len(b), dtype=bool)
    if domain.convex and not domain.slits:
        return hit
    for seg in domain.segments:
        todo = ~hit
        if not todo.any():
            break
        hit[todo] = seg.intersects(a[todo], b[todo])
    return hit


def segment_blocked(domain: Domain, a, b) -> bool:
    """True iff the open segment ab crosses the boundary, slits included."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.array_equal(a, b):
        return False
    return bool(blocked_many(domain, a, b[None, :])[0])


def boundary_midpoint(segment: Segment, t1: float, t2: float) -> np.ndarray:
    return segment.point(0.5 * (t1 + t2))


# ------------------------------------------------------------ curve positions


def curve_offsets(domain: Domain, curve: int) -> list[float]:
    """Cumulative arc length at the start of each segment of a curve."""
    out, acc = [], 0.0
    for sid in domain.curves[curve].segment_ids:
        out.append(acc)
        acc += domain.segments[sid].length
    return out


def curve_point(domain: Domain, curve: int, s: float) -> tuple[np.ndarray, int, float]:
    """Point at arc length ``s`` along a curve with the segment id and parameter there."""
    ids = domain.curves[curve].segment_ids
    total = domain.curve_length(curve)
    if domain.curves[curve].closed:
        s = s % total
    acc = 0.0
    for sid in ids:
        L = domain.segments[sid].length
        if s <= acc + L or sid == ids[-1]:
            t = min(max((s - acc) / L, 0.0), 1.0)
            return domain.segments[sid].point(t), sid, t
        acc += L
    raise AssertionError("unreachable")


def curve_positions(domain: Domain, pts: np.ndarray, tol: float = 1e-9) -> list[list[tuple[int, int, float]]]:
    """For each point, every (curve, point index, arc-length position) it lies on.

    Corner points sit on two segments of one curve; only one position per curve
    is kept (the smaller arc length; closed curves report positions in [0, L)).
    """
    pts = np.atleast_2d(pts)
    found: list[dict[int, float]] = [dict() for _ in range(len(pts))]
    for ci, curve in enumerate(domain.curves):
        offsets = curve_offsets(domain, ci)
        total = domain.curve_length(ci)
        for off, sid in zip(offsets, curve.segment_ids):
            seg = domain.segments[sid]
            d, t = seg.closest(pts)
            for i in np.flatnonzero(d <= tol):
                s = off + t[i] * seg.length
                if curve.closed and s >= total - tol:
                    s = 0.0
                prev = found[i].get(ci)
                if prev is None or s < prev:
                    found[i][ci] = s
    return [[(ci, i, s) for ci, s in sorted(f.items())] for i, f in enumerate(found)]
