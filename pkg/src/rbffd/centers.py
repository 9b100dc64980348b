"""Discretization centers: storage, neighbor queries and the initial point set."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Domain, blocked_many, contains, dist_to_boundary

INTERIOR = "interior"
BOUNDARY = "boundary"


@dataclass
class CenterSet:
    """Centers with interior/boundary flags.

    For boundary centers ``segment`` and ``param`` give the boundary piece and
    its parameter; both are -1 / nan for interior centers.  Treated as
    immutable once built: refinement returns a new set.
    """

    points: np.ndarray
    boundary: np.ndarray
    segment: np.ndarray
    param: np.ndarray
    _tree: Optional[cKDTree] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=float).reshape(-1, 2)
        self.boundary = np.asarray(self.boundary, dtype=bool)
        self.segment = np.asarray(self.segment, dtype=int)
        self.param = np.asarray(self.param, dtype=float)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.points)
        return self._tree

    @property
    def interior_ids(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @property
    def boundary_ids(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    @property
    def n_interior(self) -> int:
        return int((~self.boundary).sum())

    def kinds(self) -> list[str]:
        return [BOUNDARY if b else INTERIOR for b in self.boundary]

    def extended(self, pts: np.ndarray, boundary: np.ndarray, segment: np.ndarray,
                 param: np.ndarray) -> "CenterSet":
        """A new set with the given points appended (ids of existing points unchanged)."""
        if len(pts) == 0:
            return CenterSet(self.points.copy(), self.boundary.copy(), self.segment.copy(),
                             self.param.copy())
        return CenterSet(np.vstack([self.points, pts]),
                         np.concatenate([self.boundary, boundary]),
                         np.concatenate([self.segment, segment]),
                         np.concatenate([self.param, param]))


def _needs_visibility(domain: Optional[Domain]) -> bool:
    return domain is not None and not (domain.convex and not domain.slits)


def knn(cs: CenterSet, zeta, count: int, domain: Optional[Domain] = None) -> np.ndarray:
    """Ids of the ``count`` nearest centers to ``zeta``, nearest first.

    ``zeta`` is a center id (excluded from the result) or a point.  Distance
    ties are broken by id.  With a non-convex ``domain``, centers hidden behind
    the boundary are skipped; fewer than ``count`` ids come back when the set
    runs out.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    n = len(cs)
    if isinstance(zeta, (int, np.integer)):
        self_id = int(zeta)
        p = cs.points[self_id]
    else:
        self_id = -1
        p = np.asarray(zeta, dtype=float)
    check = _needs_visibility(domain)
    q = min(n, count + 8)
    while True:
        d, idx = cs.tree.query(p, k=q)
        d = np.atleast_1d(d)
        idx = np.atleast_1d(idx)
        keep = (idx != self_id) & (idx < n)
        reach = d[-1] if len(d) else 0.0
        idx = idx[keep]
        # rank on hypot distances so exact ties resolve by id regardless of tree rounding
        d = np.hypot(cs.points[idx, 0] - p[0], cs.points[idx, 1] - p[1])
        order = np.lexsort((idx, d))
        d, idx = d[order], idx[order]
        if check and len(idx):
            vis = ~blocked_many(domain, p, cs.points[idx])
            dv, iv = d[vis], idx[vis]
        else:
            dv, iv = d, idx
        complete = q >= n
        if complete:
            return iv[:count]
        if len(iv) >= count and reach > dv[count - 1] * (1.0 + 1e-12) + 1e-300:
            return iv[:count]
        q = min(n, 2 * q)


def knn_bruteforce(cs: CenterSet, zeta, count: int, domain: Optional[Domain] = None) -> np.ndarray:
    """O(N) reference for :func:`knn`."""
    if isinstance(zeta, (int, np.integer)):
        self_id = int(zeta)
        p = cs.points[self_id]
    else:
        self_id = -1
        p = np.asarray(zeta, dtype=float)
    ids = np.array([i for i in range(len(cs)) if i != self_id], dtype=int)
    d = np.hypot(*(cs.points[ids] - p).T)
    if _needs_visibility(domain):
        vis = np.array([not blocked_many(domain, p, cs.points[i][None, :])[0] for i in ids],
                       dtype=bool) if len(ids) else np.zeros(0, bool)
        ids, d = ids[vis], d[vis]
    order = np.lexsort((ids, d))
    return ids[order][:count]


def _boundary_samples(domain: Domain, h0: float):
    pts, segs, params = [], [], []
    for curve in domain.curves:
        ids = curve.segment_ids
        for pos, sid in enumerate(ids):
            seg = domain.segments[sid]
            n = max(1, math.ceil(seg.length / h0 - 1e-9))
            last = (not curve.closed) and pos == len(ids) - 1
            for j in range(n + (1 if last else 0)):
                t = j / n
                pts.append(seg.point(t))
                segs.append(sid)
                params.append(t)
    pts = np.array(pts)
    # drop repeats (slit/loop junctions, shared endpoints)
    keep = []
    tree = cKDTree(pts)
    seen = np.zeros(len(pts), dtype=bool)
    for i in range(len(pts)):
        if seen[i]:
            continue
        for j in tree.query_ball_point(pts[i], 1e-12):
            seen[j] = True
        keep.append(i)
    keep = np.array(keep)
    return pts[keep], np.array(segs)[keep], np.array(params)[keep]


def initial_centers(domain: Domain, h0: float, slit_clearance: Optional[float] = None) -> CenterSet:
    """Deterministic starting set: boundary sampled at arc-length spacing <= h0
    (all segment endpoints included) plus a triangular lattice of spacing h0
    kept at distance >= h0/2 from the boundary.

    Interior points closer than ``slit_clearance`` (default h0/4) to a slit are
    discarded.
    """
    if h0 <= 0.0:
        raise ValueError("h0 must be positive")
    bpts, bseg, bpar = _boundary_samples(domain, h0)
    x0, x1, y0, y1 = domain.bounding_box()
    dy = h0 * math.sqrt(3.0) / 2.0
    rows = []
    for j in range(int(math.floor((y1 - y0) / dy)) + 1):
        y = y0 + j * dy
        shift = 0.5 * h0 if j % 2 else 0.0
        xs = x0 + shift + h0 * np.arange(int(math.floor((x1 - x0 - shift) / h0)) + 1)
        rows.append(np.column_stack([xs, np.full(len(xs), y)]))
    lattice = np.vstack(rows)
    lattice = lattice[contains(domain, lattice)]
    lattice = lattice[dist_to_boundary(domain, lattice) >= 0.5 * h0]
    clearance = 0.25 * h0 if slit_clearance is None else slit_clearance
    slit_ids = domain.slit_segment_ids()
    if slit_ids and len(lattice):
        ds = np.min([domain.segments[i].closest(lattice)[0] for i in slit_ids], axis=0)
        lattice = lattice[ds >= clearance]
    if len(lattice) == 0:
        raise ValueError("h0 too large: no interior centers")
    n_b, n_i = len(bpts), len(lattice)
    return CenterSet(np.vstack([bpts, lattice]),
                     np.concatenate([np.ones(n_b, bool), np.zeros(n_i, bool)]),
                     np.concatenate([bseg, -np.ones(n_i, int)]),
                     np.concatenate([bpar, np.full(n_i, np.nan)]))


def locate_on_boundary(domain: Domain, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closest boundary segment id and parameter for each point."""
    pts = np.atleast_2d(pts)
    best = np.full(len(pts), np.inf)
    seg = np.full(len(pts), -1, dtype=int)
    par = np.full(len(pts), np.nan)
    for sid, s in enumerate(domain.segments):
        d, t = s.closest(pts)
        better = d < best
        best[better], seg[better], par[better] = d[better], sid, t[better]
    return seg, par


def from_points(domain: Domain, pts: np.ndarray, boundary: np.ndarray) -> CenterSet:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    boundary = np.asarray(boundary, dtype=bool)
    seg = -np.ones(len(pts), dtype=int)
    par = np.full(len(pts), np.nan)
    if boundary.any():
        s, t = locate_on_boundary(domain, pts[boundary])
        seg[boundary], par[boundary] = s, t
    return CenterSet(pts, boundary, seg, par)


def write_csv(path, cs: CenterSet, u_hat=None, u_exact=None) -> None:
    n = len(cs)
    u_hat = np.full(n, np.nan) if u_hat is None else u_hat
    u_exact = np.full(n, np.nan) if u_exact is None else u_exact
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "kind", "u_hat", "u_exact"])
        for (x, y), kind, a, b in zip(cs.points, cs.kinds(), u_hat, u_exact):
            w.writerow([repr(float(x)), repr(float(y)), kind, repr(float(a)), repr(float(b))])


def read_csv(path, domain: Domain) -> CenterSet:
    pts, bnd = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            pts.append((float(row["x"]), float(row["y"])))
            if row["kind"] not in (INTERIOR, BOUNDARY):
                raise ValueError(f"bad kind {row['kind']!r}")
            bnd.append(row["kind"] == BOUNDARY)
    return from_points(domain, np.array(pts), np.array(bnd))
