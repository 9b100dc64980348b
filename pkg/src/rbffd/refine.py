"""Edge error indicators and adaptive insertion of centers.

An edge is a pair (zeta, xi) with zeta interior and xi one of its stencil
neighbors.  Edges whose indicator reaches a fraction of the largest one are
refined by proposing the edge midpoint and two points offset perpendicular to
the edge; proposals are accepted only if they keep the local separation of the
center set.  Edges ending on the boundary may also split the adjacent boundary
intervals.  The threshold is lowered until enough interior centers have been
added.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .centers import CenterSet
from .geometry import Domain, contains, curve_point, curve_positions, dist_to_boundary
from .stencil import Stencil

log = logging.getLogger(__name__)

INDICATORS = ("eps0", "eps1")


class RefinementStalled(RuntimeError):
    pass


@dataclass(frozen=True)
class RefineParams:
    gamma: float = 0.5
    mu: float = 0.8
    n_percent: float = 15.0
    indicator: str = "eps1"
    reduce_threshold: bool = False
    max_rounds: int = 30

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0 and 0.0 < self.mu < 1.0):
            raise ValueError("gamma and mu must lie in (0, 1)")
        if self.n_percent <= 0.0:
            raise ValueError("n_percent must be positive")
        if self.indicator not in INDICATORS:
            raise ValueError(f"indicator must be one of {INDICATORS}")


@dataclass(frozen=True)
class LinearFit:
    a: float
    b: np.ndarray

    def __call__(self, x, zeta) -> np.ndarray:
        x = np.atleast_2d(x)
        return self.a + (x - np.asarray(zeta)) @ self.b


# --------------------------------------------------------------- indicators


def linear_fit(stencil: Stencil, u_hat: np.ndarray) -> LinearFit:
    """Least-squares linear polynomial a + b.(x - zeta) through the stencil data."""
    X = stencil.points - stencil.points[0]
    M = np.column_stack([np.ones(len(X)), X])
    y = np.asarray(u_hat)[list(stencil.ids)]
    sv = np.linalg.svd(X - X.mean(axis=0), compute_uv=False)
    if len(X) < 3 or sv[-1] <= 1e-12 * max(sv[0], 1e-300):
        raise ValueError(f"stencil of center {stencil.center} is collinear")
    coef, *_ = np.linalg.lstsq(M, y, rcond=None)
    return LinearFit(float(coef[0]), coef[1:])


def eps0(u_zeta: float, u_xi: float) -> float:
    return abs(u_zeta - u_xi)


def eps1(zeta, xi, u_zeta: float, u_xi: float, fit: LinearFit) -> float:
    """|(u_zeta - u_xi) - (l(zeta) - l(xi))| with l(zeta) - l(xi) = b.(zeta - xi)."""
    dl = float(fit.b @ (np.asarray(zeta, float) - np.asarray(xi, float)))
    return abs((u_zeta - u_xi) - dl)


def edge_indicators(stencils: Sequence[Stencil], u_hat: np.ndarray, kind: str = "eps1") -> list[np.ndarray]:
    """Indicator value for every edge, grouped per stencil in neighbor order."""
    u_hat = np.asarray(u_hat)
    out: list[np.ndarray] = [None] * len(stencils)  # type: ignore[list-item]
    by_size: dict[int, list[int]] = {}
    for i, s in enumerate(stencils):
        by_size.setdefault(len(s.points), []).append(i)
    for _, idx in by_size.items():
        P = np.stack([stencils[i].points for i in idx])
        U = np.stack([u_hat[list(stencils[i].ids)] for i in idx])
        du = U[:, :1] - U[:, 1:]
        if kind == "eps0":
            vals = np.abs(du)
        else:
            X = P - P[:, :1, :]
            M = np.concatenate([np.ones(X.shape[:2] + (1,)), X], axis=2)
            coef = np.einsum("sij,sj->si", np.linalg.pinv(M), U)
            dl = -np.einsum("sij,sj->si", X[:, 1:, :], coef[:, 1:])
            vals = np.abs(du - dl)
        for j, i in enumerate(idx):
            out[i] = vals[j]
    return out


# ---------------------------------------------------------- growing point set


class _GrowingCloud:
    """Nearest-neighbor queries on a point set that only grows."""

    REBUILD = 256

    def __init__(self, pts: np.ndarray):
        self._base = np.asarray(pts, dtype=float)
        self._tree = cKDTree(self._base)
        self._extra = np.empty((0, 2))
        self._pending: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self._base) + len(self._extra) + len(self._pending)

    def add(self, p) -> None:
        self._pending.append(np.asarray(p, dtype=float).reshape(2))
        if len(self._extra) + len(self._pending) > self.REBUILD:
            self._flush()
            self._base = np.vstack([self._base, self._extra])
            self._extra = np.empty((0, 2))
            self._tree = cKDTree(self._base)

    def _flush(self):
        if self._pending:
            self._extra = np.vstack([self._extra] + [p[None, :] for p in self._pending])
            self._pending = []

    def all_points(self) -> np.ndarray:
        self._flush()
        return np.vstack([self._base, self._extra])

    def nearest(self, q: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Distances and indices of the k nearest points to each row of q.

        Ranked on hypot distances with ties broken by index, as in knn; the
        tree is asked for a few spare candidates so tied points are not lost.
        """
        self._flush()
        q = np.atleast_2d(q)
        nb = len(self._base)
        kb = min(k + 8, nb)
        _, i = self._tree.query(q, k=kb)
        i = i.reshape(len(q), kb)
        b = self._base[i]
        d = np.hypot(q[:, None, 0] - b[..., 0], q[:, None, 1] - b[..., 1])
        if len(self._extra):
            ie = np.broadcast_to(nb + np.arange(len(self._extra)), (len(q), len(self._extra)))
            de = np.hypot(q[:, None, 0] - self._extra[None, :, 0], q[:, None, 1] - self._extra[None, :, 1])
            i = np.concatenate([i, ie], axis=1)
            d = np.concatenate([d, de], axis=1)
        order = np.lexsort((i, d), axis=1)[:, :k]
        return np.take_along_axis(d, order, axis=1), np.take_along_axis(i, order, axis=1)

    def separation_terms(self, p: np.ndarray) -> tuple[float, float]:
        """(dist(p, set), local separation: mean nearest-neighbor distance of the 4 closest points)."""
        d, i = self.nearest(p, 4)
        d, i = d[0], i[0]
        nb = len(self._base)
        pts = np.array([self._base[j] if j < nb else self._extra[j - nb] for j in i])
        dd, _ = self.nearest(pts, 2)
        sep = float(dd[:, 1].mean()) if dd.shape[1] > 1 else 0.0
        return float(d[0]), sep


# ----------------------------------------------------------------- refinement


@dataclass
class Insertion:
    """Audit record for one accepted interior center."""

    point: np.ndarray
    edge: tuple[int, int]
    set_size: int  # |Xi'| when the predicate was evaluated
    d: float
    dist_boundary: float
    dist_set: float
    separation: float
    boundary_edge: bool


@dataclass
class RefineResult:
    centers: CenterSet
    threshold: float
    eps_max: float
    edges_marked: int
    interior_added: int
    boundary_added: int
    rounds: int
    short: bool = False
    insertions: list[Insertion] = field(default_factory=list)

    def __iter__(self):
        yield self.centers
        yield self.threshold


def _boundary_neighbors(domain: Domain, cs: CenterSet):
    """For each boundary center: list of (curve, own position, [(nbr id, nbr pos, direction)])."""
    bids = cs.boundary_ids
    pos = curve_positions(domain, cs.points[bids])
    per_curve: dict[int, list[tuple[float, int]]] = {}
    for b, plist in zip(bids, pos):
        for ci, _, s in plist:
            per_curve.setdefault(ci, []).append((s, int(b)))
    out: dict[int, list] = {int(b): [] for b in bids}
    for ci, items in per_curve.items():
        items.sort()
        closed = domain.curves[ci].closed
        n = len(items)
        for j, (s, b) in enumerate(items):
            nbrs = []
            if n > 1:
                if j > 0 or closed:
                    ps, pb = items[j - 1]
                    nbrs.append((pb, ps, -1))
                if j < n - 1 or closed:
                    ns, nb = items[(j + 1) % n]
                    nbrs.append((nb, ns, +1))
            out[b].append((ci, s, nbrs))
    return out


def _curve_midpoint(domain: Domain, ci: int, s0: float, s1: float, direction: int):
    total = domain.curve_length(ci)
    if domain.curves[ci].closed:
        gap = (s1 - s0) % total if direction > 0 else (s0 - s1) % total
        s = s0 + direction * 0.5 * gap
    else:
        s = 0.5 * (s0 + s1)
    return curve_point(domain, ci, s)


def _suppressed(xi, mid, pm, pp, d):
    """Which of the two boundary midpoints to skip to limit boundary oversampling."""
    n = np.linalg.norm
    close = n(xi - pm) + n(xi - pp) <= 2.0 * n(pp - pm)
    skip_m = (n(pm - mid) >= n(pp - mid) and n(pm - xi) <= min(d, 2.0 * n(pp - xi)) and close)
    skip_p = (n(pp - mid) >= n(pm - mid) and n(pp - xi) <= min(d, 2.0 * n(pm - xi)) and close)
    return skip_m, skip_p


def refine(cs: CenterSet, stencils: Sequence[Stencil], u_hat: np.ndarray,
           params: RefineParams, domain: Domain, prev_threshold: Optional[float] = None,
           indicators: Optional[Sequence[np.ndarray]] = None) -> RefineResult:
    """One adaptive refinement step; returns the enlarged center set and the threshold used."""
    if indicators is None:
        indicators = edge_indicators(stencils, u_hat, params.indicator)
    eps_max = max((float(v.max()) for v in indicators if len(v)), default=0.0)
    scale = max(1.0, float(np.nanmax(np.abs(u_hat))))
    if not eps_max > 1e-12 * scale:
        raise RefinementStalled("refinement stalled: error indicators vanish")
    thr = params.gamma * eps_max
    if params.reduce_threshold and prev_threshold is not None and prev_threshold < thr:
        thr = 0.5 * prev_threshold

    pts0 = cs.points
    n_int = cs.n_interior
    needed = params.n_percent / 100.0 * n_int
    cloud = _GrowingCloud(pts0)
    bnbrs = _boundary_neighbors(domain, cs)
    new_pts: list[np.ndarray] = []
    new_bnd: list[bool] = []
    new_seg: list[int] = []
    new_par: list[float] = []
    done_pairs: set = set()
    insertions: list[Insertion] = []
    added_int = added_bnd = 0
    marked_total = 0
    rounds = 0
    mu = params.mu

    while True:
        rounds += 1
        marked = 0
        for st, vals in zip(stencils, indicators):
            z = st.center
            pz = pts0[z]
            for xi, val, px in zip(st.neighbors, vals, st.points[1:]):
                if val < thr:
                    continue
                marked += 1
                mid = 0.5 * (pz + px)
                e = px - pz
                L = math.hypot(e[0], e[1])
                d = 0.5 * L
                nu = np.array([-e[1], e[0]]) / L
                cands = np.array([mid, mid + d * nu, mid - d * nu])
                db = dist_to_boundary(domain, cands)
                inside = contains(domain, cands)
                size = len(cloud)
                accepted = []
                boundary_edge = bool(cs.boundary[xi])
                for cp, dbi, ins in zip(cands, db, inside):
                    if not ins or dbi < 0.5 * d:
                        continue
                    dset, sep = cloud.separation_terms(cp)
                    ok = dset >= 0.5 * d if boundary_edge else dset >= mu * sep
                    if ok:
                        accepted.append(cp)
                        insertions.append(Insertion(cp.copy(), (z, xi), size, d, float(dbi),
                                                    dset, sep, boundary_edge))
                bpts = []
                if boundary_edge and (accepted or db[0] < 0.5 * d):
                    for ci, s0, nbrs in bnbrs.get(int(xi), []):
                        mids = []
                        for nb, s1, direction in nbrs:
                            # interval keyed by its endpoints in curve direction
                            key = (ci, int(xi), nb) if direction > 0 else (ci, nb, int(xi))
                            p, sid, t = _curve_midpoint(domain, ci, s0, s1, direction)
                            mids.append((key, p, sid, t))
                        if len(mids) == 2:
                            skip_m, skip_p = _suppressed(px, mid, mids[0][1], mids[1][1], d)
                            mids = [m for m, skip in zip(mids, (skip_m, skip_p)) if not skip]
                        for key, p, sid, t in mids:
                            if key in done_pairs:
                                continue
                            done_pairs.add(key)
                            bpts.append((p, sid, t))
                for cp in accepted:
                    cloud.add(cp)
                    new_pts.append(cp)
                    new_bnd.append(False)
                    new_seg.append(-1)
                    new_par.append(np.nan)
                added_int += len(accepted)
                for p, sid, t in bpts:
                    cloud.add(p)
                    new_pts.append(np.asarray(p))
                    new_bnd.append(True)
                    new_seg.append(sid)
                    new_par.append(t)
                added_bnd += len(bpts)
        marked_total = marked
        if added_int >= needed:
            break
        if rounds >= params.max_rounds:
            if added_int == 0:
                raise RefinementStalled(
                    f"refinement stalled: no interior center accepted after {rounds} threshold reductions")
            log.warning("refinement added %d interior centers (< %.1f%% of %d) after %d rounds",
                        added_int, params.n_percent, n_int, rounds)
            break
        thr *= params.gamma

    if new_pts:
        out = cs.extended(np.array(new_pts), np.array(new_bnd), np.array(new_seg, dtype=int),
                          np.array(new_par))
    else:
        out = cs.extended(np.empty((0, 2)), np.empty(0, bool), np.empty(0, int), np.empty(0))
    return RefineResult(out, thr, eps_max, marked_total, added_int, added_bnd, rounds,
                        short=added_int < needed, insertions=insertions)
