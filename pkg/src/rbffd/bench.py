"""Benchmark problems with point singularities and the rms error measures.

Every problem is posed as Lu = Laplacian(u) + c(x) u = f in the domain with
u = g on the boundary, where g is the exact solution restricted to the
boundary.  Problem ids: ``tp1``, ``tp2``, ``tp3@omega=<val>``, ``tp4``,
``tp5@alpha=<val>``, ``tp6a``, ``tp6b``.  Parameter values may use ``pi``,
e.g. ``tp3@omega=5*pi/4``.
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import Delaunay

from .centers import CenterSet
from .geometry import (TWO_PI, Curve, Domain, Segment, blocked_many, box, contains)

Field = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TestProblem:
    __test__ = False  # not a pytest class

    id: str
    domain: Domain
    u: Field
    f: Field
    c: Field
    params: dict = field(default_factory=dict)
    # singular points: used to keep finite-difference checks at a safe distance
    singular_points: tuple = ()
    # refinement defaults used for this problem in the reference experiments
    n_percent: float = 15.0
    reduce_threshold: bool = False

    def g(self, p):
        return self.u(p)


def _pts(p):
    return np.atleast_2d(np.asarray(p, dtype=float))


def _zero(p):
    return np.zeros(len(_pts(p)))


# ---------------------------------------------------------------- domains


def sector_domain(radius: float = 1.0, half_angle: float = 0.75 * math.pi) -> Domain:
    a = (radius * math.cos(-half_angle), radius * math.sin(-half_angle))
    arc = Segment.arc((0.0, 0.0), radius, -half_angle, 2.0 * half_angle)
    segs = (Segment.line((0.0, 0.0), a), arc, Segment.line(arc.end, (0.0, 0.0)))

    def inside(p):
        r = np.hypot(p[:, 0], p[:, 1])
        phi = np.arctan2(p[:, 1], p[:, 0])
        return (r < radius) & (np.abs(phi) < half_angle)

    return Domain(segs, (Curve((0, 1, 2), True),), convex=half_angle <= math.pi / 2,
                  inside=inside, name="sector")


def _angle_2pi(p):
    phi = np.arctan2(p[:, 1], p[:, 0])
    return np.where(phi < 0.0, phi + TWO_PI, phi)


def reentrant_domain(omega: float) -> Domain:
    """(-1, 1)^2 intersected with the wedge 0 < phi < omega; omega = 2*pi gives a slit."""
    if not 0.0 < omega <= TWO_PI + 1e-15:
        raise ValueError("omega must lie in (0, 2*pi]")

    def inside(p):
        phi = _angle_2pi(p)
        sq = (np.abs(p[:, 0]) < 1.0) & (np.abs(p[:, 1]) < 1.0)
        return sq & (phi > 0.0) & (phi < omega)

    corners = [((1.0, 1.0), math.pi / 4), ((-1.0, 1.0), 3 * math.pi / 4),
               ((-1.0, -1.0), 5 * math.pi / 4), ((1.0, -1.0), 7 * math.pi / 4)]
    if abs(omega - TWO_PI) < 1e-12:
        verts = [(1.0, 0.0)] + [c for c, _ in corners]
        segs = [Segment.line(verts[i], verts[(i + 1) % 5]) for i in range(5)]
        segs.append(Segment.line((0.0, 0.0), (1.0, 0.0)))
        return Domain(tuple(segs), (Curve((0, 1, 2, 3, 4), True), Curve((5,), False)),
                      inside=inside, name="slit")
    verts = [(0.0, 0.0), (1.0, 0.0)]
    end = None
    for c, ang in corners:
        if abs(ang - omega) < 1e-12:
            end = c
            break
        if ang < omega:
            verts.append(c)
    if end is None:
        dx, dy = math.cos(omega), math.sin(omega)
        s = 1.0 / max(abs(dx), abs(dy))
        end = (dx * s, dy * s)
    verts.append(end)
    segs = tuple(Segment.line(verts[i], verts[(i + 1) % len(verts)]) for i in range(len(verts)))
    return Domain(segs, (Curve(tuple(range(len(segs))), True),), convex=omega <= math.pi,
                  inside=inside, name="reentrant")


def curved_slit_domain() -> Domain:
    """(-1, 1)^2 minus the arc about (1, -0.75), radius 1.25, from (0, 0) to (1, 0.5)."""
    verts = [(-1.0, -1.0), (1.0, -1.0), (1.0, 0.5), (1.0, 1.0), (-1.0, 1.0)]
    segs = [Segment.line(verts[i], verts[(i + 1) % 5]) for i in range(5)]
    segs.append(Segment.arc_between((1.0, -0.75), (0.0, 0.0), (1.0, 0.5), ccw=False))

    def inside(p):
        return (np.abs(p[:, 0]) < 1.0) & (np.abs(p[:, 1]) < 1.0)

    return Domain(tuple(segs), (Curve((0, 1, 2, 3, 4), True), Curve((5,), False)),
                  inside=inside, name="curved-slit")


# ---------------------------------------------------------------- problems


def tp1() -> TestProblem:
    def u(p):
        p = _pts(p)
        r = np.hypot(p[:, 0], p[:, 1])
        phi = np.arctan2(p[:, 1], p[:, 0])
        return r ** (2.0 / 3.0) * np.cos(2.0 * phi / 3.0)

    return TestProblem("tp1", sector_domain(), u, _zero, _zero, {},
                       ((0.0, 0.0),), n_percent=5.0, reduce_threshold=True)


def tp2() -> TestProblem:
    def u(p):
        p = _pts(p)
        return np.log(p[:, 0] ** 2 + p[:, 1] ** 2)

    return TestProblem("tp2", box(0.01, 1.01, 0.01, 1.01, name="shifted-square"), u, _zero,
                       _zero, {}, ((0.0, 0.0),), n_percent=5.0, reduce_threshold=True)


def tp3(omega: float) -> TestProblem:
    alpha = math.pi / omega

    def u(p):
        p = _pts(p)
        r = np.hypot(p[:, 0], p[:, 1])
        return r ** alpha * np.sin(alpha * _angle_2pi(p))

    slit = abs(omega - TWO_PI) < 1e-12
    return TestProblem(f"tp3@omega={omega!r}", reentrant_domain(omega), u, _zero, _zero,
                       {"omega": omega, "alpha": alpha}, ((0.0, 0.0),), n_percent=5.0,
                       reduce_threshold=not slit)


def tp4() -> TestProblem:
    def u(p):
        p = _pts(p)
        z = p[:, 0] + 1j * p[:, 1]
        return np.sqrt((3.0 - 4.0j) * z / (z - 2.0)).real

    return TestProblem("tp4", curved_slit_domain(), u, _zero, _zero, {}, ((0.0, 0.0),),
                       n_percent=5.0, reduce_threshold=False)


def tp5(alpha: float = 1.0 / (10.0 * math.pi)) -> TestProblem:
    """Oscillatory problem; the Helmholtz-type operator -Lap(u) - u/(alpha+r)^4
    is written with the opposite sign, i.e. c = 1/(alpha+r)^4 and f = Lap(u) + c u."""

    def u(p):
        p = _pts(p)
        r = np.hypot(p[:, 0], p[:, 1])
        return np.sin(1.0 / (alpha + r))

    def c(p):
        p = _pts(p)
        r = np.hypot(p[:, 0], p[:, 1])
        return 1.0 / (alpha + r) ** 4

    def f(p):
        # Lap(u) = u'' + u'/r for the radial u = sin(1/(alpha+r)); the sin terms
        # of u'' cancel against c*u.  The u'/r term is unbounded at r = 0, a
        # corner of the domain where f is never sampled; nan is returned there.
        p = _pts(p)
        r = np.hypot(p[:, 0], p[:, 1])
        s = alpha + r
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.cos(1.0 / s) * (2.0 / s ** 3 - 1.0 / (r * s ** 2))
        return np.where(r > 0.0, out, np.nan)

    return TestProblem(f"tp5@alpha={alpha!r}", box(0.0, 1.0, 0.0, 1.0, name="unit-square"),
                       u, f, c, {"alpha": alpha}, ((0.0, 0.0),), n_percent=15.0)


def tp6(alpha: float, x0: tuple[float, float], pid: str = "tp6") -> TestProblem:
    x0 = (float(x0[0]), float(x0[1]))

    def rho2(p):
        p = _pts(p)
        return (p[:, 0] - x0[0]) ** 2 + (p[:, 1] - x0[1]) ** 2

    def u(p):
        return np.exp(-alpha * rho2(p))

    def f(p):
        r2 = rho2(p)
        return np.exp(-alpha * r2) * (4.0 * alpha ** 2 * r2 - 4.0 * alpha)

    return TestProblem(pid, box(0.0, 1.0, 0.0, 1.0, name="unit-square"), u, f, _zero,
                       {"alpha": alpha, "x0": x0}, (x0,), n_percent=15.0)


def tp6a() -> TestProblem:
    return tp6(1000.0, (0.5, 0.5), "tp6a")


def tp6b() -> TestProblem:
    return tp6(100000.0, (0.51, 0.117), "tp6b")


_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.Pow: operator.pow}


def parse_value(text: str) -> float:
    """Evaluate a numeric literal or simple arithmetic in ``pi``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        raise ValueError(f"unsupported expression {text!r}")

    return ev(ast.parse(text.strip(), mode="eval"))


def get_problem(spec: str) -> TestProblem:
    name, _, rest = spec.strip().partition("@")
    kw = {}
    if rest:
        for part in rest.split(","):
            key, _, val = part.partition("=")
            kw[key.strip()] = parse_value(val)
    name = name.lower()
    if name == "tp1":
        return tp1()
    if name == "tp2":
        return tp2()
    if name == "tp3":
        if "omega" not in kw:
            raise ValueError("tp3 needs omega, e.g. tp3@omega=5*pi/4")
        return tp3(kw["omega"])
    if name == "tp4":
        return tp4()
    if name == "tp5":
        return tp5(kw.get("alpha", 1.0 / (10.0 * math.pi)))
    if name == "tp6a":
        return tp6a()
    if name == "tp6b":
        return tp6b()
    raise ValueError(f"unknown problem {spec!r}")


ALL_PROBLEMS = ("tp1", "tp2", "tp3@omega=pi+0.01", "tp3@omega=5*pi/4", "tp3@omega=7*pi/4",
                "tp3@omega=2*pi", "tp4", "tp5@alpha=1/(10*pi)", "tp5@alpha=1/(50*pi)",
                "tp6a", "tp6b")


# ------------------------------------------------------------------ errors


def exact_u(problem: TestProblem, p):
    return problem.u(p)


def rhs_f(problem: TestProblem, p):
    return problem.f(p)


def e_c(cs: CenterSet, u_hat: np.ndarray, problem: TestProblem) -> float:
    """Root mean square error over the interior centers."""
    ids = cs.interior_ids
    err = np.asarray(u_hat)[ids] - problem.u(cs.points[ids])
    return float(np.sqrt(np.mean(err ** 2)))


@dataclass(frozen=True)
class GridError:
    rms: float
    n_points: int
    uncovered: int


def grid_points(domain: Domain, step: float) -> np.ndarray:
    x0, x1, y0, y1 = domain.bounding_box()
    xs = x0 + step * np.arange(int(math.floor((x1 - x0) / step + 1e-9)) + 1)
    ys = y0 + step * np.arange(int(math.floor((y1 - y0) / step + 1e-9)) + 1)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return pts[contains(domain, pts)]


def kept_triangles(cs: CenterSet, domain: Domain, tri: Delaunay) -> np.ndarray:
    """Mask of Delaunay triangles used for interpolation.

    A triangle is dropped if its centroid is outside the domain or one of its
    edges crosses the boundary (the latter matters only next to slits).
    """
    simp = tri.simplices
    cent = cs.points[simp].mean(axis=1)
    keep = contains(domain, cent)
    if not (domain.convex and not domain.slits):
        for a, b in ((0, 1), (1, 2), (2, 0)):
            idx = np.flatnonzero(keep)
            keep[idx] &= ~blocked_many(domain, cs.points[simp[idx, a]], cs.points[simp[idx, b]])
    return keep


def e_g(cs: CenterSet, u_hat: np.ndarray, problem: TestProblem, step: float = 0.005,
        grid: np.ndarray | None = None) -> GridError:
    """Rms error of the piecewise linear interpolant on a uniform grid.

    Grid points not covered by a kept triangle are excluded and counted.
    """
    tri = Delaunay(cs.points)
    keep = kept_triangles(cs, problem.domain, tri)
    pts = grid_points(problem.domain, step) if grid is None else grid
    simplex = tri.find_simplex(pts)
    ok = simplex >= 0
    ok[ok] = keep[simplex[ok]]
    P = pts[ok]
    s = simplex[ok]
    T = tri.transform[s]
    bary2 = np.einsum("nij,nj->ni", T[:, :2, :], P - T[:, 2, :])
    bary = np.column_stack([bary2, 1.0 - bary2.sum(axis=1)])
    vals = (np.asarray(u_hat)[tri.simplices[s]] * bary).sum(axis=1)
    err = vals - problem.u(P)
    rms = float(np.sqrt(np.mean(err ** 2))) if len(err) else float("nan")
    return GridError(rms, int(ok.sum()), int((~ok).sum()))
