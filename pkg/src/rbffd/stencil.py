"""Stencil support selection with angle/distance balancing.

Starting from the k nearest visible centers, farther candidates are swapped in
whenever that makes the angular distribution of the stencil more even (as
measured by the sum of squared angles), until either the angles are balanced
enough or the next candidate is too far away.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .centers import CenterSet, knn
from .geometry import TWO_PI, Domain

log = logging.getLogger(__name__)

STOP_ANGLE = "angle"
STOP_DISTANCE = "distance"
STOP_EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class StencilParams:
    k: int = 6
    v: float = 2.5
    c: float = 3.0
    m: int = 50
    # Remark on boundary-heavy stencils: stop at the distance test is
    # suppressed while more than `straight_limit` stencil points share one
    # straight boundary segment, unless the candidate index reaches `straight_cutoff`.
    straight_limit: int = 3
    straight_cutoff: int = 50

    def __post_init__(self):
        if self.k < 1 or self.m <= self.k:
            raise ValueError("need k >= 1 and m > k")
        if self.v <= 1.0 or self.c <= 1.0:
            raise ValueError("tolerances v and c must exceed 1")


@dataclass(frozen=True)
class Stencil:
    center: int
    neighbors: tuple[int, ...]
    angles: tuple[float, ...]
    points: np.ndarray  # row 0 is the center, then neighbors in ccw order
    stop: str = STOP_ANGLE
    warning: bool = False

    @property
    def ids(self) -> tuple[int, ...]:
        return (self.center,) + self.neighbors

    @property
    def angle_quotient(self) -> float:
        lo = min(self.angles)
        return math.inf if lo <= 0.0 else max(self.angles) / lo

    @property
    def distance_quotient(self) -> float:
        return distance_quotient(self.points[0], self.points[1:])


def polar_angle(zeta, p) -> float:
    a = math.atan2(p[1] - zeta[1], p[0] - zeta[0])
    return a + TWO_PI if a < 0.0 else a


def cyclic_gaps(thetas: Sequence[float]) -> list[float]:
    n = len(thetas)
    if n == 1:
        return [TWO_PI]
    gaps = [thetas[i + 1] - thetas[i] for i in range(n - 1)]
    gaps.append(thetas[0] + TWO_PI - thetas[-1])
    return gaps


def ccw_order(zeta, pts, ids: Optional[Sequence[int]] = None):
    """Sort ``pts`` counterclockwise around ``zeta`` starting from angle 0.

    Returns the permutation and the cyclic angle gaps (summing to 2*pi).
    Equal polar angles are ordered by distance, then by id.
    """
    zeta = np.asarray(zeta, dtype=float)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if ids is None:
        ids = range(len(pts))
    keys = []
    for j, (p, i) in enumerate(zip(pts, ids)):
        keys.append((polar_angle(zeta, p), math.hypot(p[0] - zeta[0], p[1] - zeta[1]), i, j))
    keys.sort()
    perm = [key[3] for key in keys]
    return perm, cyclic_gaps([key[0] for key in keys])


def mu_measure(angles: Sequence[float]) -> float:
    return float(sum(a * a for a in angles))


def distance_quotient(zeta, nbrs) -> float:
    """Farthest neighbor distance over the mean of (radius + chord to the ccw successor)."""
    zeta = np.asarray(zeta, dtype=float)
    nbrs = np.atleast_2d(nbrs)
    n = len(nbrs)
    radii = np.hypot(*(nbrs - zeta).T)
    nxt = np.roll(nbrs, -1, axis=0)
    chords = np.hypot(*(nxt - nbrs).T)
    return float(radii.max() / ((radii.sum() + chords.sum()) / (2.0 * n)))


def straight_memberships(domain: Domain, cs: CenterSet, tol: float = 1e-9) -> dict[int, tuple[int, ...]]:
    """For each boundary center, the straight boundary segments it lies on."""
    out: dict[int, list[int]] = {}
    bids = cs.boundary_ids
    if len(bids) == 0:
        return {}
    pts = cs.points[bids]
    for sid, seg in enumerate(domain.segments):
        if not seg.is_straight:
            continue
        d, _ = seg.closest(pts)
        for i in np.flatnonzero(d <= tol):
            out.setdefault(int(bids[i]), []).append(sid)
    return {i: tuple(v) for i, v in out.items()}


def _crowded(current, memberships, limit) -> bool:
    counts: dict[int, int] = {}
    for entry in current:
        for sid in memberships.get(entry[2], ()):
            counts[sid] = counts.get(sid, 0) + 1
            if counts[sid] > limit:
                return True
    return False


def select_stencil(cs: CenterSet, zeta: int, params: StencilParams = StencilParams(),
                   domain: Optional[Domain] = None,
                   memberships: Optional[dict[int, tuple[int, ...]]] = None) -> Stencil:
    """Choose k neighbors of center ``zeta`` (see module docstring).

    ``memberships`` maps boundary center ids to the straight segments they lie
    on; it is computed from ``domain`` when omitted.
    """
    k = params.k
    if memberships is None:
        memberships = straight_memberships(domain, cs) if domain is not None else {}
    z = cs.points[zeta]
    zx, zy = float(z[0]), float(z[1])
    m = params.m
    cloud = knn(cs, zeta, m, domain)
    pts = cs.points

    def entry(idx):
        px, py = float(pts[idx, 0]), float(pts[idx, 1])
        a = math.atan2(py - zy, px - zx)
        if a < 0.0:
            a += TWO_PI
        return (a, math.hypot(px - zx, py - zy), int(idx), px, py)

    if len(cloud) < k:
        log.warning("center %d: only %d visible neighbors", zeta, len(cloud))
        current = sorted(entry(i) for i in cloud)
        return _finish(zeta, z, current, STOP_EXHAUSTED, True)

    current = sorted(entry(i) for i in cloud[:k])
    cur_angles = cyclic_gaps([e[0] for e in current])
    cur_mu = mu_measure(cur_angles)
    i = k  # zero-based position of the candidate in the cloud
    while True:
        if i >= len(cloud):
            if len(cloud) < m:
                log.warning("center %d: candidate cloud exhausted", zeta)
                return _finish(zeta, z, current, STOP_EXHAUSTED, True)
            m *= 2
            cloud = knn(cs, zeta, m, domain)
            if i >= len(cloud):
                log.warning("center %d: candidate cloud exhausted", zeta)
                return _finish(zeta, z, current, STOP_EXHAUSTED, True)
        cand = entry(cloud[i])

        # distance test against the current stencil
        total = 0.0
        for j in range(k):
            a, b = current[j], current[(j + 1) % k]
            total += a[1] + math.hypot(a[3] - b[3], a[4] - b[4])
        if cand[1] >= params.c / (2.0 * k) * total:
            suppress = (i + 1 < params.straight_cutoff
                        and _crowded(current, memberships, params.straight_limit))
            if not suppress:
                return _finish(zeta, z, current, STOP_DISTANCE, False)

        # angle test on the extended set
        ext = list(current)
        q = bisect.bisect_left(ext, cand)
        ext.insert(q, cand)
        n1 = k + 1
        gaps = cyclic_gaps([e[0] for e in ext])
        amin = min(gaps)
        if gaps[q - 1] > amin and gaps[q] > amin:
            j = gaps.index(amin)
            p = j if gaps[j - 1] < gaps[(j + 1) % n1] else (j + 1) % n1
            trial = ext[:p] + ext[p + 1:]
            trial_angles = cyclic_gaps([e[0] for e in trial])
            trial_mu = mu_measure(trial_angles)
            if trial_mu < cur_mu:
                current, cur_angles, cur_mu = trial, trial_angles, trial_mu
                if max(cur_angles) <= params.v * min(cur_angles):
                    return _finish(zeta, z, current, STOP_ANGLE, False)
        i += 1


def _finish(zeta, z, current, stop, warning) -> Stencil:
    angles = tuple(cyclic_gaps([e[0] for e in current])) if current else ()
    pts = np.array([[z[0], z[1]]] + [[e[3], e[4]] for e in current])
    return Stencil(int(zeta), tuple(e[2] for e in current), angles, pts, stop, warning)


def select_stencils(cs: CenterSet, params: StencilParams = StencilParams(),
                    domain: Optional[Domain] = None) -> list[Stencil]:
    """Stencils for every interior center, in id order."""
    memberships = straight_memberships(domain, cs) if domain is not None else {}
    return [select_stencil(cs, int(z), params, domain, memberships) for z in cs.interior_ids]


def uniformity_stats(stencils: Sequence[Stencil]) -> tuple[float, float, float, float]:
    """(v_max, v_aver, c_max, c_aver) over a collection of stencils."""
    if not stencils:
        raise ValueError("no stencils")
    v = np.array([s.angle_quotient for s in stencils])
    c = np.array([s.distance_quotient for s in stencils])
    return float(v.max()), float(v.mean()), float(c.max()), float(c.mean())
